#include "labguard/crutd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace labguard {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "IDLE";
    case Phase::Pending: return "PENDING";
    case Phase::Locked: return "LOCKED";
    case Phase::Simulated: return "SIMULATED";
    case Phase::Validated: return "VALIDATED";
    case Phase::Executed: return "EXECUTED";
    case Phase::Confirmed: return "CONFIRMED";
    case Phase::Aborted: return "ABORTED";
  }
  return "?";
}

std::string_view to_string(Event e) {
  switch (e) {
    case Event::CreateRequest: return "create_request";
    case Event::ReadLock: return "read_lock";
    case Event::UndergoSimulation: return "undergo_simulation";
    case Event::TestPass: return "test_pass";
    case Event::ValidationFail: return "validation_fail";
    case Event::ExecutionComplete: return "execution_complete";
    case Event::ExecutionFail: return "execution_fail";
    case Event::Confirmation: return "confirmation";
    case Event::ConfirmationFail: return "confirmation_fail";
    case Event::Release: return "release";
    case Event::Acknowledgment: return "acknowledgment";
  }
  return "?";
}

Phase phase_from_string(std::string_view s) {
  for (Phase p : kAllPhases) {
    if (to_string(p) == s) return p;
  }
  throw InvalidArgument("unknown phase: " + std::string(s));
}

std::optional<Phase> next_phase(Phase from, Event event) {
  switch (event) {
    case Event::CreateRequest: return from == Phase::Idle ? std::optional(Phase::Pending) : std::nullopt;
    case Event::ReadLock: return from == Phase::Pending ? std::optional(Phase::Locked) : std::nullopt;
    case Event::UndergoSimulation: return from == Phase::Locked ? std::optional(Phase::Simulated) : std::nullopt;
    case Event::TestPass: return from == Phase::Simulated ? std::optional(Phase::Validated) : std::nullopt;
    case Event::ValidationFail: return from == Phase::Simulated ? std::optional(Phase::Aborted) : std::nullopt;
    case Event::ExecutionComplete: return from == Phase::Validated ? std::optional(Phase::Executed) : std::nullopt;
    case Event::ExecutionFail: return from == Phase::Validated ? std::optional(Phase::Aborted) : std::nullopt;
    case Event::Confirmation: return from == Phase::Executed ? std::optional(Phase::Confirmed) : std::nullopt;
    case Event::ConfirmationFail: return from == Phase::Executed ? std::optional(Phase::Aborted) : std::nullopt;
    case Event::Release: return from == Phase::Confirmed ? std::optional(Phase::Idle) : std::nullopt;
    case Event::Acknowledgment: return from == Phase::Aborted ? std::optional(Phase::Idle) : std::nullopt;
  }
  return std::nullopt;
}

std::string_view to_string(AbortReason r) {
  switch (r) {
    case AbortReason::PredictedViolation: return "predicted_violation";
    case AbortReason::MonteCarloFail: return "monte_carlo_fail";
    case AbortReason::HumanReject: return "human_reject";
    case AbortReason::ApprovalExpired: return "approval_expired";
    case AbortReason::MidFlightMargin: return "mid_flight_margin";
    case AbortReason::FilterInfeasible: return "filter_infeasible";
    case AbortReason::PredictionDeviation: return "prediction_deviation";
    case AbortReason::EmergencyStop: return "emergency_stop";
    case AbortReason::ConfirmFail: return "confirm_fail";
    case AbortReason::ExecutorFault: return "executor_fault";
  }
  return "?";
}

bool is_safety_reason(AbortReason r) {
  switch (r) {
    case AbortReason::HumanReject:
    case AbortReason::ApprovalExpired:
    case AbortReason::EmergencyStop:
      return false;
    default:
      return true;
  }
}

namespace {

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json plan_json(const CommandPlan& plan) {
  Json segs = Json::array();
  for (const auto& s : plan.segments()) {
    segs.push_back({{"duration", s.duration}, {"u", std::vector<double>(s.u.data(), s.u.data() + s.u.size())}});
  }
  return {{"segments", segs}, {"hold", std::vector<double>(plan.hold().data(), plan.hold().data() + plan.hold().size())}};
}

Json verification_json(const Verification& v) {
  const auto& p = v.prediction;
  Json j{{"safe", p.safe()},
         {"violated_labels", p.violated_labels},
         {"min_normalized_margin", finite_or_null(p.min_normalized_margin())},
         {"steps", p.states.size()}};
  if (p.peak_violation) {
    j["peak_violation"] = {{"time", p.peak_violation->time},
                           {"label", p.peak_violation->label},
                           {"value", finite_or_null(p.peak_violation->value)}};
  }
  if (v.monte_carlo) {
    j["monte_carlo"] = {{"samples", v.monte_carlo->samples},
                        {"unsafe_samples", v.monte_carlo->unsafe_samples},
                        {"pass", v.monte_carlo->pass},
                        {"worst_margin", finite_or_null(v.monte_carlo->worst_margin)}};
  }
  return j;
}

std::string_view to_string(ApprovalKind k) {
  switch (k) {
    case ApprovalKind::Auto: return "auto";
    case ApprovalKind::HumanApproved: return "human_approved";
    case ApprovalKind::HumanRejected: return "human_rejected";
    case ApprovalKind::Expired: return "expired";
  }
  return "?";
}

}  // namespace

bool Transaction::reached(Phase p) const {
  return std::any_of(history.begin(), history.end(), [p](const PhaseRecord& r) { return r.phase == p; });
}

std::optional<Phase> Transaction::outcome() const {
  if (reached(Phase::Aborted)) return Phase::Aborted;
  if (reached(Phase::Confirmed)) return Phase::Confirmed;
  return std::nullopt;
}

Json Transaction::summary() const {
  Json hist = Json::array();
  for (const auto& r : history) {
    hist.push_back({{"phase", to_string(r.phase)}, {"event", to_string(r.event)}, {"t", r.time}});
  }
  Json j{{"id", id},
         {"request_id", request.request_id},
         {"target", request.target},
         {"planner", provenance.planner},
         {"reasoning", provenance.reasoning},
         {"phase", to_string(phase)},
         {"history", hist},
         {"locks", locks},
         {"withdrawn", withdrawn},
         {"actuations", actuations},
         {"plan", plan_json(request.plan)}};
  const auto out = this->outcome();
  j["outcome"] = out ? Json(to_string(*out)) : Json(nullptr);
  if (verification) j["verification"] = verification_json(*verification);
  if (approval) j["approval"] = {{"kind", to_string(approval->kind)}, {"actor", approval->actor}};
  if (abort_reason) {
    j["abort"] = {{"reason", to_string(*abort_reason)}, {"labels", abort_labels}, {"rollback_note", rollback_note}};
  }
  if (execution) {
    j["execution"] = {{"completed", execution->completed},
                      {"steps", execution->steps},
                      {"min_normalized_margin", finite_or_null(execution->min_normalized_margin)},
                      {"max_correction", finite_or_null(execution->max_correction)},
                      {"detail", execution->detail}};
  }
  if (acknowledged_by) j["acknowledged_by"] = *acknowledged_by;
  return j;
}

CrutdEngine::CrutdEngine(LayoutPtr state_layout, LayoutPtr input_layout, std::optional<std::string> mac_key)
    : state_layout_(std::move(state_layout)), input_layout_(std::move(input_layout)), audit_(std::move(mac_key)) {}

void CrutdEngine::set_time(double t) {
  if (!std::isfinite(t) || t < now_) throw InvalidArgument("engine clock cannot move backwards");
  now_ = t;
}

Transaction& CrutdEngine::find(const std::string& id) {
  auto it = txns_.find(id);
  if (it == txns_.end()) throw UnknownTransaction("unknown transaction: " + id);
  return it->second;
}

const Transaction& CrutdEngine::get(const std::string& id) const {
  auto it = txns_.find(id);
  if (it == txns_.end()) throw UnknownTransaction("unknown transaction: " + id);
  return it->second;
}

std::vector<std::string> CrutdEngine::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, t] : txns_) out.push_back(id);
  return out;
}

std::vector<std::string> CrutdEngine::active_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, t] : txns_) {
    if (!t.withdrawn && t.phase != Phase::Idle && t.phase != Phase::Aborted) out.push_back(id);
  }
  return out;
}

void CrutdEngine::require_running() const {
  if (halted_) throw IllegalTransition("kernel is halted by an emergency stop");
}

void CrutdEngine::transition(Transaction& t, Event e, Json details) {
  const auto next = next_phase(t.phase, e);
  if (!next) {
    throw IllegalTransition("event " + std::string(to_string(e)) + " is not allowed in phase " +
                            std::string(to_string(t.phase)));
  }
  details["from"] = to_string(t.phase);
  details["to"] = to_string(*next);
  details["t"] = now_;
  audit_.append(t.id, std::string(to_string(e)), details);
  t.phase = *next;
  t.history.push_back({*next, e, now_});
}

void CrutdEngine::release_locks(Transaction& t) {
  for (const auto& r : t.locks) locks_.erase(r);
  t.locks.clear();
}

void CrutdEngine::abort(Transaction& t, Event e, AbortReason reason, std::vector<std::string> labels, Json details) {
  std::string note = "locks released";
  if (t.actuations > 0) {
    note += "; " + std::to_string(t.actuations) + " actuation steps were applied and are not physically undone";
  }
  details["reason"] = to_string(reason);
  details["labels"] = labels;
  details["rollback_note"] = note;
  details["released"] = t.locks;
  transition(t, e, std::move(details));
  release_locks(t);
  t.abort_reason = reason;
  t.abort_labels = std::move(labels);
  t.rollback_note = std::move(note);
  aborted_requests_[t.request.request_id].insert(t.provenance.reasoning);
}

const Transaction& CrutdEngine::create(TxnRequest request, Provenance provenance) {
  require_running();
  if (request.request_id.empty()) throw MalformedRequest("request id is empty");
  if (!request.plan.input_layout()->same_as(*input_layout_)) {
    throw MalformedRequest("plan command dims do not match the plant inputs");
  }
  auto prior = aborted_requests_.find(request.request_id);
  if (prior != aborted_requests_.end() && prior->second.count(provenance.reasoning) != 0) {
    throw MalformedRequest("request " + request.request_id + " was aborted before; resubmission needs a new provenance note");
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "txn-%04zu", ++counter_);
  Transaction t(buf, std::move(request), std::move(provenance));
  Json details{{"request_id", t.request.request_id},
               {"target", t.request.target},
               {"resources", t.request.resources},
               {"planner", t.provenance.planner},
               {"reasoning", t.provenance.reasoning},
               {"plan", plan_json(t.request.plan)}};
  transition(t, Event::CreateRequest, std::move(details));
  auto [it, inserted] = txns_.emplace(t.id, std::move(t));
  return it->second;
}

const Transaction& CrutdEngine::read_lock(const std::string& id, const std::vector<std::string>& resources,
                                          const StateVector& snapshot) {
  require_running();
  Transaction& t = find(id);
  if (t.withdrawn || !next_phase(t.phase, Event::ReadLock)) {
    throw IllegalTransition("read_lock is not allowed in phase " + std::string(to_string(t.phase)));
  }
  require_same_layout(*state_layout_, *snapshot.layout(), "read_lock snapshot");
  std::vector<std::string> sorted(resources.begin(), resources.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& r : sorted) {
    auto held = locks_.find(r);
    if (held != locks_.end()) {
      audit_.append(t.id, "lock_conflict", {{"resource", r}, {"holder", held->second}, {"t", now_}});
      throw LockConflict(r, held->second);
    }
  }
  const std::vector<double> snap(snapshot.values().data(), snapshot.values().data() + snapshot.size());
  transition(t, Event::ReadLock, {{"resources", sorted}, {"snapshot", snap}});
  for (const auto& r : sorted) locks_[r] = t.id;
  t.locks = sorted;
  t.snapshot = snapshot;
  return t;
}

const Transaction& CrutdEngine::withdraw(const std::string& id, const std::string& actor) {
  Transaction& t = find(id);
  if (t.phase != Phase::Pending || t.withdrawn) {
    throw IllegalTransition("only a pending transaction can be withdrawn");
  }
  audit_.append(t.id, "withdraw", {{"actor", actor}, {"t", now_}});
  t.withdrawn = true;
  return t;
}

const Transaction& CrutdEngine::undergo(const std::string& id, const Predictor& predictor) {
  require_running();
  Transaction& t = find(id);
  if (!next_phase(t.phase, Event::UndergoSimulation)) {
    throw IllegalTransition("undergo is not allowed in phase " + std::string(to_string(t.phase)));
  }
  Verification v;
  try {
    v = predictor(t);
  } catch (const NumericalDivergence& e) {
    v.prediction = TrajectoryPrediction{};
    v.prediction.peak_violation = PeakViolation{now_, "divergence", 0.0};
    v.prediction.violated_labels = {"divergence"};
    v.prediction.diverged_at = e.step_index();
  }
  transition(t, Event::UndergoSimulation, verification_json(v));
  t.verification = std::move(v);
  return t;
}

TestFindings CrutdEngine::findings(const std::string& id) const {
  const Transaction& t = get(id);
  if (!t.verification) throw IllegalTransition("transaction has no verification attached");
  TestFindings f;
  const auto& p = t.verification->prediction;
  const bool odd_ok = std::all_of(p.odd_passes.begin(), p.odd_passes.end(), [](bool b) { return b; });
  if (!p.safe() || !odd_ok || p.states.empty()) {
    f.failure = AbortReason::PredictedViolation;
    f.labels = p.violated_labels;
    return f;
  }
  if (t.verification->monte_carlo && !t.verification->monte_carlo->pass) {
    f.failure = AbortReason::MonteCarloFail;
    f.labels = {"monte_carlo"};
    return f;
  }
  f.checks_pass = true;
  return f;
}

const Transaction& CrutdEngine::test(const std::string& id, const ApprovalOutcome& approval) {
  require_running();
  Transaction& t = find(id);
  if (t.phase != Phase::Simulated) {
    throw IllegalTransition("test is not allowed in phase " + std::string(to_string(t.phase)));
  }
  const TestFindings f = findings(id);
  if (!f.checks_pass) {
    abort(t, Event::ValidationFail, *f.failure, f.labels);
    return t;
  }
  t.approval = approval;
  const Json who{{"approval", to_string(approval.kind)}, {"actor", approval.actor}};
  if (approval.kind == ApprovalKind::HumanRejected) {
    abort(t, Event::ValidationFail, AbortReason::HumanReject, {}, who);
  } else if (approval.kind == ApprovalKind::Expired) {
    abort(t, Event::ValidationFail, AbortReason::ApprovalExpired, {}, who);
  } else {
    transition(t, Event::TestPass, who);
    t.validated_at = now_;
  }
  return t;
}

void CrutdEngine::begin_do(const std::string& id) {
  require_running();
  Transaction& t = find(id);
  if (t.phase != Phase::Validated || !t.validated_at || t.executing) {
    throw IllegalTransition("execution needs a validated transaction that is not already running");
  }
  audit_.append(t.id, "do_begin", {{"t", now_}});
  t.executing = true;
}

void CrutdEngine::actuate(const std::string& id) {
  Transaction& t = find(id);
  // Runtime guard: nothing reaches the plant without a validation on record.
  if (t.phase != Phase::Validated || !t.validated_at || !t.executing) {
    throw IllegalTransition("actuation without a validated, running transaction");
  }
  require_running();
  ++t.actuations;
}

const Transaction& CrutdEngine::end_do(const std::string& id, ExecutionOutcome outcome) {
  Transaction& t = find(id);
  if (!t.executing) throw IllegalTransition("transaction is not executing");
  t.executing = false;
  Json details{{"steps", outcome.steps},
               {"min_normalized_margin", finite_or_null(outcome.min_normalized_margin)},
               {"max_correction", finite_or_null(outcome.max_correction)},
               {"detail", outcome.detail}};
  if (outcome.final_state) {
    const auto& v = outcome.final_state->values();
    details["final_state"] = std::vector<double>(v.data(), v.data() + v.size());
  }
  const bool ok = outcome.completed;
  const AbortReason reason = outcome.failure.value_or(AbortReason::MidFlightMargin);
  t.execution = std::move(outcome);
  if (ok) {
    transition(t, Event::ExecutionComplete, std::move(details));
  } else {
    abort(t, Event::ExecutionFail, reason, {}, std::move(details));
  }
  return t;
}

const Transaction& CrutdEngine::do_execute(const std::string& id, const Executor& executor) {
  begin_do(id);
  PhysicalGate gate([this, id] { actuate(id); });
  ExecutionOutcome outcome;
  try {
    outcome = executor(get(id), gate);
  } catch (const Error& e) {
    outcome = ExecutionOutcome{};
    outcome.completed = false;
    outcome.failure = halted_ ? AbortReason::EmergencyStop : AbortReason::ExecutorFault;
    outcome.detail = e.what();
  }
  return end_do(id, std::move(outcome));
}

const Transaction& CrutdEngine::confirm(const std::string& id, const StateVector& observed,
                                        const Eigen::VectorXd& tolerance, TwinState& twin) {
  Transaction& t = find(id);
  if (t.phase != Phase::Executed) {
    throw IllegalTransition("confirm is not allowed in phase " + std::string(to_string(t.phase)));
  }
  const StateVector& predicted = t.verification->prediction.states.back();
  const ReconcileReport r = reconcile(twin, observed, predicted, tolerance, now_);
  const std::vector<double> dev(r.deviations.data(), r.deviations.data() + r.deviations.size());
  if (!r.divergent_dims.empty()) {
    abort(t, Event::ConfirmationFail, AbortReason::ConfirmFail, r.divergent_dims,
          {{"deviations", dev}, {"twin_restricted", twin.restricted}});
    return t;
  }
  transition(t, Event::Confirmation, {{"deviations", dev}, {"released", t.locks}});
  release_locks(t);
  transition(t, Event::Release);
  return t;
}

const Transaction& CrutdEngine::acknowledge(const std::string& id, const std::string& actor,
                                            const std::string& root_cause) {
  Transaction& t = find(id);
  if (t.phase != Phase::Aborted) {
    throw IllegalTransition("acknowledge is not allowed in phase " + std::string(to_string(t.phase)));
  }
  if (actor.empty() || root_cause.empty()) throw InvalidArgument("acknowledgment needs an actor and a root-cause note");
  transition(t, Event::Acknowledgment, {{"actor", actor}, {"root_cause", root_cause}});
  t.acknowledged_by = actor;
  return t;
}

std::vector<std::string> CrutdEngine::emergency_stop(const std::string& actor) {
  const std::vector<std::string> active = active_ids();
  audit_.append("kernel", "emergency_stop", {{"actor", actor}, {"t", now_}, {"active", active}});
  if (active.empty()) return {};
  halted_ = true;
  for (const auto& id : active) {
    Transaction& t = find(id);
    if (t.phase == Phase::Simulated) {
      abort(t, Event::ValidationFail, AbortReason::EmergencyStop, {}, {{"actor", actor}});
    } else if (t.phase == Phase::Validated && !t.executing) {
      abort(t, Event::ExecutionFail, AbortReason::EmergencyStop, {}, {{"actor", actor}});
    }
    // Running executions stop at their next actuation; PENDING, LOCKED and
    // EXECUTED transactions wait for resume.
  }
  return active;
}

void CrutdEngine::resume(const std::string& actor) {
  if (!halted_) return;
  audit_.append("kernel", "resume", {{"actor", actor}, {"t", now_}});
  halted_ = false;
}

}  // namespace labguard
