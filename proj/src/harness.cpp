#include "labguard/harness.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "labguard/crutd.hpp"
#include "labguard/twin.hpp"

namespace labguard {

Json ApprovalTicket::to_json() const {
  return {{"id", id},
          {"txn", txn},
          {"request_id", request_id},
          {"requirement", to_string(requirement)},
          {"summary", summary},
          {"created_at", created_at},
          {"expires_at", expires_at ? Json(*expires_at) : Json(nullptr)},
          {"decision", decision},
          {"decider", decider ? Json(*decider) : Json(nullptr)},
          {"decided_at", decided_at ? Json(*decided_at) : Json(nullptr)},
          {"expired", expired}};
}

const ApprovalTicket& ApprovalBoard::open(const std::string& txn, const std::string& request_id,
                                          ApprovalRequirement requirement, Json summary, double now,
                                          std::optional<double> window) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "apr-%04zu", ++counter_);
  ApprovalTicket t;
  t.id = buf;
  t.txn = txn;
  t.request_id = request_id;
  t.requirement = requirement;
  t.summary = std::move(summary);
  t.created_at = now;
  if (window) t.expires_at = now + *window;
  return tickets_.emplace(t.id, std::move(t)).first->second;
}

const ApprovalTicket& ApprovalBoard::decide(const std::string& id, bool approve, const std::string& actor,
                                            double now) {
  auto it = tickets_.find(id);
  if (it == tickets_.end()) throw UnknownTicket("unknown approval ticket: " + id);
  ApprovalTicket& t = it->second;
  if (t.expired) throw Expired("approval ticket " + id + " expired");
  if (t.decision != "pending") throw AlreadyDecided("approval ticket " + id + " is already " + t.decision);
  if (t.expires_at && now >= *t.expires_at) {
    expire(now);
    throw Expired("approval ticket " + id + " expired");
  }
  if (actor.empty()) throw InvalidArgument("a decision needs an actor");
  t.decision = approve ? "approved" : "rejected";
  t.decider = actor;
  t.decided_at = now;
  return t;
}

std::vector<std::string> ApprovalBoard::expire(double now) {
  std::vector<std::string> out;
  for (auto& [id, t] : tickets_) {
    if (t.decision == "pending" && t.expires_at && now >= *t.expires_at) {
      t.decision = "rejected";
      t.decider = "expiry";
      t.decided_at = now;
      t.expired = true;
      out.push_back(id);
    }
  }
  return out;
}

void ApprovalBoard::cancel(const std::string& id, const std::string& actor, double now) {
  auto it = tickets_.find(id);
  if (it == tickets_.end() || it->second.decision != "pending") return;
  it->second.decision = "rejected";
  it->second.decider = actor;
  it->second.decided_at = now;
}

const ApprovalTicket& ApprovalBoard::get(const std::string& id) const {
  auto it = tickets_.find(id);
  if (it == tickets_.end()) throw UnknownTicket("unknown approval ticket: " + id);
  return it->second;
}

std::vector<ApprovalTicket> ApprovalBoard::pending() const {
  std::vector<ApprovalTicket> out;
  for (const auto& [id, t] : tickets_) {
    if (t.decision == "pending") out.push_back(t);
  }
  return out;
}

bool CommandQueue::push(Command c) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (closed_) return false;
    q_.push_back(std::move(c));
  }
  cv_.notify_all();
  return true;
}

std::optional<Command> CommandQueue::try_pop() {
  std::lock_guard<std::mutex> lock(mu_);
  if (q_.empty()) return std::nullopt;
  Command c = std::move(q_.front());
  q_.pop_front();
  return c;
}

std::optional<Command> CommandQueue::wait_pop(std::chrono::milliseconds timeout) {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait_for(lock, timeout, [this] { return !q_.empty() || closed_; });
  if (q_.empty()) return std::nullopt;
  Command c = std::move(q_.front());
  q_.pop_front();
  return c;
}

void CommandQueue::close() {
  std::deque<Command> dropped;
  {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
    dropped.swap(q_);
  }
  for (auto& c : dropped) c.reply->set_exception(std::make_exception_ptr(IllegalTransition("session closed")));
  cv_.notify_all();
}

bool CommandQueue::closed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return closed_;
}

std::string events_jsonl(const std::vector<Json>& events) {
  std::string out;
  for (const auto& e : events) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

std::vector<Json> parse_events_jsonl(const std::string& text) {
  std::vector<Json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw InvalidArgument("event log line " + std::to_string(n) + " is not JSON: " + e.what());
    }
  }
  return out;
}

int exit_code_for(const RunResult& r) {
  if (r.status != "completed" || !r.audit_report.intact) return 1;
  return r.metrics.incidents > 0 ? 2 : 0;
}

namespace {

struct StopRun {};
struct StallRun {};

constexpr double kTimeEps = 1e-9;

Json named(const Layout& layout, const Eigen::VectorXd& v) {
  Json j = Json::object();
  for (std::size_t i = 0; i < layout.size(); ++i) j[layout.dim(i).name] = v(static_cast<Eigen::Index>(i));
  return j;
}

class Runner {
 public:
  Runner(const Scenario& s, const RunOptions& options, const RunHooks& hooks)
      : s_(s),
        options_(options),
        hooks_(hooks),
        a_(assemble(s)),
        truth_spec_(s.plant),
        truth_(make_model(s.plant)),
        engine_(a_.model.state_layout(), a_.model.input_layout()),
        governor_(s.autonomy.level, s.autonomy.policy),
        twin_{a_.x0, 0.0, false},
        seed_(options.seed.value_or(s.seed)),
        rng_(seed_),
        x_(a_.x0.values()),
        y_(x_),
        bias_(Eigen::VectorXd::Zero(x_.size())),
        noise_(Eigen::VectorXd::Zero(x_.size())) {
    const Layout& layout = *a_.model.state_layout();
    for (const auto& [dim, amp] : s.sensor_noise) noise_(static_cast<Eigen::Index>(layout.require(dim))) = amp;
    for (const auto* c : all_commands(s)) {
      if (c->safe_label) labels_[c->request_id] = *c->safe_label;
    }
  }

  RunResult run() {
    emit({{"type", "run_start"},
          {"scenario", s_.name},
          {"scenario_sha256", sha256_hex(canonical_json(s_.source))},
          {"seed", seed_},
          {"schema_version", s_.schema_version},
          {"level", governor_.level()},
          {"dt", s_.dt}});
    std::string status = "completed";
    try {
      apply_faults();
      y_ = measure();
      check_truth();
      frame();
      drive();
    } catch (const StopRun&) {
      status = "stopped";
    } catch (const StallRun&) {
      status = "stalled";
    } catch (const Error& e) {
      status = "fault";
      emit({{"type", "fault"}, {"what", e.what()}});
    }
    if (s_.procedure) {
      const SequenceVerdict v = validate_sequence(ProcedureSequence(confirmed_steps_, pipetting_alphabet()),
                                                  canonical_pipetting());
      emit({{"type", "procedure_check"},
            {"pass", v.pass},
            {"observed", confirmed_steps_},
            {"divergence_index", v.divergence_index ? Json(*v.divergence_index) : Json(nullptr)}});
    }
    const ChainReport chain = engine_.audit().verify();
    emit({{"type", "run_end"},
          {"status", status},
          {"audit_intact", chain.intact},
          {"audit_length", chain.length},
          {"audit_head", engine_.audit().size() ? Json(engine_.audit().entries().back().entry_hash) : Json(nullptr)},
          {"level", governor_.level()}});
    RunResult r{status, events_, compute_metrics(events_, labels_), engine_.audit(), chain};
    return r;
  }

 private:
  const SafeSet& safe() const { return *a_.odd.safe_set(); }
  const LayoutPtr& states() const { return a_.model.state_layout(); }

  // ---- event stream ----

  void emit(Json e) {
    e["seq"] = events_.size();
    if (!e.contains("t")) e["t"] = t_;
    events_.push_back(e);
    if (hooks_.on_event) hooks_.on_event(events_.back());
    publish();
  }

  void publish() {
    if (!hooks_.on_snapshot) return;
    Json txns = Json::array();
    for (const auto& id : engine_.ids()) txns.push_back(engine_.get(id).summary());
    Json approvals = Json::array();
    for (const auto& t : board_.pending()) approvals.push_back(t.to_json());
    const auto& rec = governor_.record();
    MetricsOptions mo;
    mo.allow_partial = true;
    hooks_.on_snapshot({{"t", t_},
                        {"scenario", s_.name},
                        {"transactions", txns},
                        {"approvals", approvals},
                        {"autonomy",
                         {{"level", rec.level},
                          {"hold", rec.hold},
                          {"incident_free_count", rec.incident_free_count},
                          {"confirms_at_level", rec.confirms_at_level}}},
                        {"halted", engine_.halted()},
                        {"metrics", compute_metrics(events_, labels_, mo).to_json()}});
  }

  void frame() {
    if (!hooks_.on_frame) return;
    const StateVector y(states(), y_);
    Json margins = Json::object();
    for (const auto& b : safe().barriers()) margins[b.label()] = b.value_raw(y_);
    const Margin m = safe_set_margin(safe(), y);
    const Margin nm = normalized_margin(safe(), y);
    std::string phase = "IDLE";
    if (!active_.empty()) phase = std::string(to_string(engine_.get(active_).phase));
    hooks_.on_frame({{"seq", frame_seq_++},
                     {"t", t_},
                     {"state", named(*states(), y_)},
                     {"margins", margins},
                     {"min_margin", m.value},
                     {"min_label", m.label},
                     {"normalized_margin", nm.value},
                     {"txn", active_.empty() ? Json(nullptr) : Json(active_)},
                     {"phase", phase},
                     {"level", governor_.level()}});
  }

  // Emits one event per phase change the engine recorded since the last call.
  void sync(const std::string& id) {
    const Transaction& t = engine_.get(id);
    std::size_t& seen = phases_seen_[id];
    Phase from = seen == 0 ? Phase::Idle : t.history[seen - 1].phase;
    for (; seen < t.history.size(); ++seen) {
      const PhaseRecord& r = t.history[seen];
      Json e{{"type", "phase"},
             {"txn", id},
             {"event", to_string(r.event)},
             {"from", to_string(from)},
             {"to", to_string(r.phase)},
             {"t", r.time}};
      if (r.phase == Phase::Aborted && t.abort_reason) {
        e["reason"] = to_string(*t.abort_reason);
        e["labels"] = t.abort_labels;
      }
      emit(std::move(e));
      from = r.phase;
    }
  }

  void audit(const std::string& subject, const std::string& event, Json payload) {
    payload["t"] = t_;
    engine_.audit_mut().append(subject, event, payload);
  }

  // ---- plant ----

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  Eigen::VectorXd measure() {
    Eigen::VectorXd y = x_ + bias_;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (noise_(i) > 0.0) y(i) += noise_(i) * (2.0 * uniform() - 1.0);
    }
    return y;
  }

  void apply_faults() {
    const Layout& layout = *states();
    while (next_fault_ < s_.faults.size() && s_.faults[next_fault_].at <= t_ + kTimeEps) {
      const FaultConfig& f = s_.faults[next_fault_++];
      Json e{{"type", "fault_injected"}, {"fault", to_string(f.type)}};
      switch (f.type) {
        case FaultType::ActuatorGain:
          gain_ = f.factor;
          e["factor"] = f.factor;
          break;
        case FaultType::ParameterShift:
          truth_spec_.params[f.parameter] *= f.factor;
          truth_ = make_model(truth_spec_);
          e["parameter"] = f.parameter;
          e["factor"] = f.factor;
          break;
        case FaultType::SensorBias:
          bias_(static_cast<Eigen::Index>(layout.require(f.dim))) += f.bias;
          e["dim"] = f.dim;
          e["bias"] = f.bias;
          break;
      }
      emit(std::move(e));
    }
  }

  // Ground truth, invisible to the kernel: margin of the real plant state.
  void check_truth() {
    const StateVector x(states(), x_);
    const Margin nm = normalized_margin(safe(), x);
    if (executing_) {
      exec_max_ = exec_max_.size() ? Eigen::VectorXd(exec_max_.cwiseMax(x_)) : x_;
      exec_min_margin_ = std::min(exec_min_margin_, nm.value);
    }
    if (in_safe_set(safe(), x)) {
      violation_open_ = false;
      return;
    }
    if (violation_open_) return;
    violation_open_ = true;
    if (!active_.empty()) txn_violation_ = true;
    emit({{"type", "true_violation"},
          {"txn", active_.empty() ? Json(nullptr) : Json(active_)},
          {"label", nm.label},
          {"normalized_margin", nm.value}});
  }

  void advance(const Eigen::VectorXd& u) {
    const Eigen::VectorXd next = rk4_step(truth_, x_, gain_ * u, s_.dt);
    if (!all_finite(next)) throw NumericalDivergence("plant state diverged", static_cast<std::size_t>(k_));
    x_ = next;
    ++k_;
    t_ = static_cast<double>(k_) * s_.dt;
    engine_.set_time(t_);
    apply_faults();
    y_ = measure();
    check_truth();
    if (k_ % s_.telemetry_decimation == 0) frame();
    if (hooks_.pace) hooks_.pace(t_);
  }

  void idle_step() { advance(a_.safe_hold); }

  void idle_for(double seconds) {
    const double until = t_ + seconds;
    while (t_ < until - kTimeEps) {
      poll();
      if (stop_) throw StopRun{};
      idle_step();
    }
  }

  // ---- commands ----

  void poll() {
    const auto& op = s_.operator_script;
    while (next_estop_ < op.estops.size() && op.estops[next_estop_] <= t_ + kTimeEps) {
      ++next_estop_;
      estop(op.name);
    }
    while (next_level_ < op.level_changes.size() && op.level_changes[next_level_].first <= t_ + kTimeEps) {
      const int level = op.level_changes[next_level_++].second;
      try {
        set_level(level, op.name);
      } catch (const InvalidArgument& e) {
        emit({{"type", "level_rejected"}, {"requested", level}, {"actor", op.name}, {"what", e.what()}});
      }
    }
    if (!hooks_.commands) return;
    while (auto c = hooks_.commands->try_pop()) handle(*c);
  }

  void handle(Command& c) {
    try {
      Json ack;
      switch (c.kind) {
        case Command::Kind::Decide:
          ack = decide(c.ticket, c.approve, c.actor);
          break;
        case Command::Kind::SetLevel:
          ack = set_level(c.level, c.actor);
          break;
        case Command::Kind::EmergencyStop:
          ack = estop(c.actor);
          break;
        case Command::Kind::Shutdown:
          stop_ = true;
          ack = {{"stopping", true}};
          break;
      }
      c.reply->set_value(ack);
    } catch (...) {
      c.reply->set_exception(std::current_exception());
    }
  }

  Json decide(const std::string& ticket, bool approve, const std::string& actor) {
    try {
      const ApprovalTicket& t = board_.decide(ticket, approve, actor, t_);
      audit(t.txn, "approval_decision", {{"ticket", t.id}, {"decision", t.decision}, {"actor", actor}});
      emit({{"type", "approval_decided"}, {"txn", t.txn}, {"ticket", t.id}, {"decision", t.decision},
            {"actor", actor}});
      return t.to_json();
    } catch (const Expired&) {
      announce_expired();
      throw;
    }
  }

  // Reports every ticket that has expired since the last call.
  void announce_expired() {
    for (const auto& id : open_tickets_) {
      const ApprovalTicket& t = board_.get(id);
      if (!t.expired || !announced_.insert(id).second) continue;
      audit(t.txn, "approval_expired", {{"ticket", t.id}});
      emit({{"type", "approval_expired"}, {"txn", t.txn}, {"ticket", t.id}});
    }
  }

  Json set_level(int level, const std::string& actor) {
    const int from = governor_.level();
    const auto change = governor_.set_level(level, actor);
    audit("governor", "level_set", {{"actor", actor}, {"from", from}, {"to", level}});
    emit({{"type", "level_change"}, {"from", from}, {"to", level}, {"reason", "operator"}, {"actor", actor}});
    (void)change;
    return {{"level", governor_.level()}};
  }

  Json estop(const std::string& actor) {
    const std::vector<std::string> active = engine_.emergency_stop(actor);
    emit({{"type", "estop"}, {"actor", actor}, {"active", active}});
    for (const auto& id : active) {
      sync(id);
      if (engine_.get(id).phase == Phase::Aborted) {
        for (const auto& tid : open_tickets_) {
          if (board_.get(tid).txn == id) board_.cancel(tid, actor, t_);
        }
      }
    }
    return {{"active", active}, {"halted", engine_.halted()}};
  }

  // ---- planner and transactions ----

  void drive() {
    std::size_t next = 0;
    std::shared_ptr<const PlannedCommand> fallback;
    while (true) {
      poll();
      if (stop_) throw StopRun{};
      const PlannedCommand* cmd = nullptr;
      if (fallback) {
        cmd = fallback.get();
      } else if (next < s_.planner.size() && *s_.planner[next].at <= t_ + kTimeEps) {
        cmd = &s_.planner[next++];
      }
      if (cmd) {
        if (t_ > s_.duration + kTimeEps) {
          emit({{"type", "planner_truncated"}, {"request_id", cmd->request_id}});
          break;
        }
        const auto keep = fallback;
        const bool rejected = run_command(*cmd);
        fallback = rejected ? cmd->on_rejection : nullptr;
        continue;
      }
      if (t_ >= s_.duration - kTimeEps) break;
      idle_step();
    }
  }

  Verification predict_for(const Transaction& t, const PlannedCommand& c) {
    Verification v;
    const double horizon = default_horizon(t.request.plan, s_.min_horizon);
    v.prediction = predict(a_.model, a_.odd, *t.snapshot, t.request.plan, horizon, s_.dt);
    if (s_.procedure) {
      std::vector<std::string> steps = confirmed_steps_;
      steps.push_back(*c.procedure_step);
      const std::vector<std::string> canon = canonical_pipetting().steps();
      bool ok = steps.size() <= canon.size();
      if (ok) {
        const std::vector<std::string> prefix(canon.begin(), canon.begin() + static_cast<std::ptrdiff_t>(steps.size()));
        ok = validate_sequence(ProcedureSequence(steps, pipetting_alphabet()),
                               ProcedureSequence(prefix, pipetting_alphabet()))
                 .pass;
      }
      if (!ok) {
        auto& p = v.prediction;
        if (!p.peak_violation) p.peak_violation = PeakViolation{0.0, "procedure_sequence", 0.0};
        p.violated_labels.push_back("procedure_sequence");
        std::sort(p.violated_labels.begin(), p.violated_labels.end());
      }
    }
    if (s_.uncertainty && v.prediction.safe()) {
      UncertainParameterSet family{s_.plant, s_.uncertainty->intervals, s_.uncertainty->samples};
      v.monte_carlo = monte_carlo(family, a_.odd, *t.snapshot, t.request.plan, horizon, s_.dt, seed_,
                                  s_.uncertainty->policy);
    }
    return v;
  }

  // Runs one planner command to completion. True when it did not confirm.
  bool run_command(const PlannedCommand& c) {
    Json label = c.safe_label ? Json(*c.safe_label ? "safe" : "unsafe") : Json(nullptr);
    Json submit{{"type", "submit"}, {"request_id", c.request_id}, {"label", label}, {"txn", nullptr}};
    if (c.procedure_step) submit["procedure_step"] = *c.procedure_step;
    if (twin_.restricted) {
      submit["refused"] = "twin_restricted";
      emit(std::move(submit));
      return true;
    }
    std::string id;
    try {
      id = engine_.create(TxnRequest{c.request_id, c.plan, c.target, c.resources},
                          Provenance{"scripted-planner", c.reasoning})
               .id;
    } catch (const MalformedRequest& e) {
      submit["refused"] = e.what();
      emit(std::move(submit));
      return true;
    }
    submit["txn"] = id;
    emit(std::move(submit));
    active_ = id;
    txn_violation_ = false;
    sync(id);

    try {
      engine_.read_lock(id, c.resources, StateVector(states(), y_));
    } catch (const LockConflict& e) {
      emit({{"type", "lock_conflict"}, {"txn", id}, {"resource", e.resource()}});
      engine_.withdraw(id, "kernel");
      governor_.record_outcome(Outcome::AbortedBenign, id, t_);
      active_.clear();
      return true;
    }
    sync(id);
    twin_.mirrored = StateVector(states(), y_);
    twin_.last_sync_time = t_;

    engine_.undergo(id, [&](const Transaction& t) { return predict_for(t, c); });
    sync(id);
    const TestFindings f = engine_.findings(id);
    const auto& pred = engine_.get(id).verification->prediction;
    if (!f.checks_pass) {
      Json h{{"type", "hazard"},
             {"txn", id},
             {"kind", *f.failure == AbortReason::MonteCarloFail ? "monte_carlo" : "predicted"},
             {"labels", f.labels}};
      if (pred.peak_violation) {
        h["peak"] = {{"time", pred.peak_violation->time},
                     {"label", pred.peak_violation->label},
                     {"value", pred.peak_violation->value}};
      }
      emit(std::move(h));
      engine_.test(id, ApprovalOutcome{ApprovalKind::Auto, "kernel"});
    } else {
      const double initial = pred.normalized_margins.front();
      const ApprovalRequirement req = governor_.approval_for(pred.min_normalized_margin(), initial);
      if (!needs_human(req)) {
        engine_.test(id, ApprovalOutcome{ApprovalKind::Auto, "governor"});
      } else {
        const ApprovalOutcome ao = await_approval(id, c, req);
        if (engine_.get(id).phase == Phase::Simulated) engine_.test(id, ao);
      }
    }
    sync(id);

    if (engine_.get(id).phase == Phase::Validated) {
      execute(id);
      if (engine_.get(id).phase == Phase::Executed) {
        const bool was_restricted = twin_.restricted;
        engine_.confirm(id, StateVector(states(), y_), confirm_tolerance(engine_.get(id)), twin_);
        sync(id);
        if (twin_.restricted && !was_restricted) {
          audit("twin", "restricted", {{"txn", id}});
          emit({{"type", "twin_restricted"}, {"txn", id}});
        }
      }
    }
    return finish(id, c);
  }

  Eigen::VectorXd confirm_tolerance(const Transaction& t) const {
    const Layout& layout = *states();
    const Eigen::VectorXd& predicted = t.verification->prediction.states.back().values();
    Eigen::VectorXd tol(predicted.size());
    for (Eigen::Index i = 0; i < tol.size(); ++i) {
      const std::string& dim = layout.dim(static_cast<std::size_t>(i)).name;
      auto it = s_.confirm_tolerance.find(dim);
      tol(i) = it != s_.confirm_tolerance.end() ? it->second
                                                : std::max(3.0 * noise_(i), 1e-6 * (1.0 + std::abs(predicted(i))));
    }
    return tol;
  }

  ApprovalOutcome await_approval(const std::string& id, const PlannedCommand& c, ApprovalRequirement req) {
    const Transaction& txn = engine_.get(id);
    const auto& pred = txn.verification->prediction;
    const std::optional<double> window =
        req == ApprovalRequirement::Escalate ? std::optional<double>(s_.autonomy.approval_window) : std::nullopt;
    const OddReport odd = odd_membership(a_.odd, *txn.snapshot);
    Json barriers = Json::object();
    for (const auto& b : odd.barriers) barriers[b.label] = b.value;
    Json summary{{"request_id", c.request_id},
                 {"target", c.target},
                 {"reasoning", c.reasoning},
                 {"predicted_min_normalized_margin", pred.min_normalized_margin()},
                 {"initial_normalized_margin", pred.normalized_margins.front()},
                 {"predicted_final_state", named(*states(), pred.states.back().values())},
                 {"horizon", pred.times.back() - pred.times.front()},
                 {"odd_pass", odd.pass},
                 {"odd_failing", odd.failing_labels()},
                 {"barrier_values", barriers}};
    const std::string ticket = board_.open(id, c.request_id, req, summary, t_, window).id;
    open_tickets_.push_back(ticket);
    audit(id, "approval_requested",
          {{"ticket", ticket}, {"requirement", to_string(req)},
           {"expires_at", window ? Json(t_ + *window) : Json(nullptr)}});
    emit({{"type", "approval_requested"},
          {"txn", id},
          {"ticket", ticket},
          {"requirement", to_string(req)},
          {"expires_at", window ? Json(t_ + *window) : Json(nullptr)}});

    auto resolved = [&] { return board_.get(ticket).decision != "pending"; };
    auto ended = [&] { return engine_.get(id).phase != Phase::Simulated; };
    auto step_waiting = [&] {
      poll();
      if (stop_ || resolved() || ended()) return;
      board_.expire(t_);
      announce_expired();
      if (!resolved()) idle_step();
    };

    if (!options_.external_approvals) {
      const auto& op = s_.operator_script;
      auto it = op.decisions.find(c.request_id);
      const Decision d = it == op.decisions.end() ? op.default_decision : it->second;
      const double decide_at = window ? t_ + op.response_delay : t_;
      while (!resolved() && !ended() && !stop_) {
        board_.expire(t_);
        announce_expired();
        if (resolved()) break;
        if (d != Decision::Ignore && t_ >= decide_at - kTimeEps) {
          decide(ticket, d == Decision::Approve, op.name);
          break;
        }
        if (!window) {
          emit({{"type", "approval_stalled"}, {"txn", id}, {"ticket", ticket}});
          throw StallRun{};
        }
        step_waiting();
      }
    } else {
      while (!resolved() && !ended() && !stop_) {
        if (window) {
          step_waiting();
          continue;
        }
        // Paused: simulated time stands still until someone decides.
        if (!hooks_.commands) {
          emit({{"type", "approval_stalled"}, {"txn", id}, {"ticket", ticket}});
          throw StallRun{};
        }
        if (auto cmd = hooks_.commands->wait_pop(std::chrono::milliseconds(50))) {
          handle(*cmd);
        } else if (hooks_.commands->closed()) {
          stop_ = true;
        }
      }
    }
    if (stop_ && !resolved()) board_.cancel(ticket, "shutdown", t_);
    if (ended() && !resolved()) board_.cancel(ticket, "kernel", t_);
    const ApprovalTicket& t = board_.get(ticket);
    if (t.expired || (stop_ && t.decider == "shutdown")) return {ApprovalKind::Expired, *t.decider};
    if (t.decision == "approved") return {ApprovalKind::HumanApproved, *t.decider};
    return {ApprovalKind::HumanRejected, t.decider.value_or("kernel")};
  }

  void hazard(const std::string& id, const std::string& kind, Json details) {
    details["type"] = "hazard";
    details["txn"] = id;
    details["kind"] = kind;
    emit(std::move(details));
  }

  void execute(const std::string& id) {
    const Layout& layout = *states();
    Eigen::VectorXd dev_tol = Eigen::VectorXd::Constant(x_.size(), std::numeric_limits<double>::infinity());
    for (const auto& [dim, v] : s_.monitor.deviation_tolerance) {
      dev_tol(static_cast<Eigen::Index>(layout.require(dim))) = v;
    }
    int interventions = 0;
    executing_ = true;
    exec_max_ = x_;
    exec_min_margin_ = normalized_margin(safe(), StateVector(states(), x_)).value;

    auto executor = [&](const Transaction& t, PhysicalGate& gate) {
      const auto& pred = t.verification->prediction;
      const CommandPlan& plan = t.request.plan;
      const std::size_t n = pred.states.size() - 1;
      ExecutionOutcome out;
      const double m0 = normalized_margin(safe(), StateVector(states(), y_)).value;
      const double floor = s_.monitor.abort_fraction * std::max(m0, 0.0);
      out.min_normalized_margin = m0;
      bool in_run = false;
      auto fail = [&](AbortReason r, std::string detail) {
        out.completed = false;
        out.failure = r;
        out.detail = std::move(detail);
        out.final_state = StateVector(states(), y_);
        return out;
      };
      for (std::size_t i = 0; i < n; ++i) {
        poll();
        if (stop_) return fail(AbortReason::EmergencyStop, "session shutdown");
        const StateVector y(states(), y_);
        const Eigen::VectorXd dev = (y_ - pred.states[i].values()).cwiseAbs();
        std::vector<std::string> drifted;
        for (Eigen::Index d = 0; d < dev.size(); ++d) {
          if (dev(d) > dev_tol(d)) drifted.push_back(layout.dim(static_cast<std::size_t>(d)).name);
        }
        if (!drifted.empty()) {
          hazard(t.id, "deviation", {{"dims", drifted}, {"step", i}});
          return fail(AbortReason::PredictionDeviation, "observed state left the predicted trajectory");
        }
        const Margin nm = normalized_margin(safe(), y);
        out.min_normalized_margin = std::min(out.min_normalized_margin, nm.value);
        if (nm.value < floor) {
          hazard(t.id, "margin", {{"label", nm.label}, {"normalized_margin", nm.value}, {"threshold", floor}});
          return fail(AbortReason::MidFlightMargin, "margin fell below the abort band on " + nm.label);
        }
        const ControlInput u_ref = plan.command_at(static_cast<double>(i) * s_.dt);
        const FilterResult fr = filter_control(a_.model, safe(), y, u_ref, a_.bounds, a_.filter);
        if (fr.status == FilterStatus::Infeasible) {
          hazard(t.id, "filter_infeasible", {{"normalized_margin", nm.value}});
          return fail(AbortReason::FilterInfeasible, "no admissible control satisfies every barrier");
        }
        out.max_correction = std::max(out.max_correction, fr.correction_norm);
        const bool corrected = fr.correction_norm > 1e-9 * (1.0 + u_ref.values().norm());
        if (corrected && !in_run) {
          ++interventions;
          emit({{"type", "filter_intervention"},
                {"txn", t.id},
                {"correction", fr.correction_norm},
                {"active", fr.active_labels}});
        }
        in_run = corrected;
        gate.actuate();
        advance(fr.u_star.values());
        ++out.steps;
      }
      out.completed = true;
      out.final_state = StateVector(states(), y_);
      return out;
    };
    engine_.do_execute(id, executor);
    executing_ = false;
    sync(id);
    const Transaction& t = engine_.get(id);
    emit({{"type", "execution"},
          {"txn", id},
          {"completed", t.execution->completed},
          {"steps", t.execution->steps},
          {"max_true_state", named(layout, exec_max_)},
          {"min_true_normalized_margin", exec_min_margin_},
          {"min_observed_normalized_margin", t.execution->min_normalized_margin},
          {"max_correction", t.execution->max_correction},
          {"interventions", interventions}});
    if (!t.execution->completed) emit({{"type", "safe_hold"}, {"txn", id}, {"u", named(*a_.model.input_layout(), a_.safe_hold)}});
  }

  bool finish(const std::string& id, const PlannedCommand& c) {
    const Transaction& t = engine_.get(id);
    const bool confirmed = t.outcome() == Phase::Confirmed;
    Outcome o = Outcome::AbortedBenign;
    if (confirmed && !txn_violation_) {
      o = Outcome::Confirmed;
    } else if (txn_violation_ || (t.abort_reason && is_safety_reason(*t.abort_reason))) {
      o = Outcome::AbortedSafety;
    }
    const int from = governor_.level();
    const auto change = governor_.record_outcome(o, id, t_, txn_violation_ ? "margin_violation" : "safety");
    if (o == Outcome::AbortedSafety) {
      const std::string reason = t.abort_reason ? std::string(to_string(*t.abort_reason)) : "margin_violation";
      audit("governor", "incident", {{"txn", id}, {"reason", reason}, {"hold", governor_.record().hold}});
      emit({{"type", "incident"}, {"txn", id}, {"reason", reason}});
    }
    if (change) {
      audit("governor", "level_change", {{"from", from}, {"to", change->to}, {"reason", change->reason}});
      emit({{"type", "level_change"}, {"from", from}, {"to", change->to}, {"reason", change->reason}});
    }
    if (confirmed && c.procedure_step) confirmed_steps_.push_back(*c.procedure_step);

    if (!confirmed) {
      const auto& op = s_.operator_script;
      idle_for(op.ack_delay);
      engine_.acknowledge(id, op.name, op.root_cause);
      sync(id);
      if (o == Outcome::AbortedSafety) {
        governor_.acknowledge_incident();
        audit("governor", "incident_acknowledged", {{"txn", id}, {"actor", op.name}, {"root_cause", op.root_cause}});
        emit({{"type", "hold_cleared"}, {"txn", id}, {"actor", op.name}});
      }
      if (twin_.restricted && op.reset_twin) {
        reset_restriction(twin_);
        audit("twin", "restriction_reset", {{"actor", op.name}});
        emit({{"type", "twin_reset"}, {"actor", op.name}});
      }
      if (engine_.halted()) {
        engine_.resume(op.name);
        emit({{"type", "resume"}, {"actor", op.name}});
      }
    }
    active_.clear();
    return !confirmed;
  }

  const Scenario& s_;
  RunOptions options_;
  RunHooks hooks_;
  Assembly a_;
  PlantSpec truth_spec_;
  ControlAffineModel truth_;
  CrutdEngine engine_;
  Governor governor_;
  TwinState twin_;
  ApprovalBoard board_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  Eigen::VectorXd x_;  // true plant state
  Eigen::VectorXd y_;  // latest measurement
  Eigen::VectorXd bias_;
  Eigen::VectorXd noise_;
  double gain_ = 1.0;
  std::int64_t k_ = 0;
  double t_ = 0.0;
  std::vector<Json> events_;
  std::map<std::string, bool> labels_;
  std::map<std::string, std::size_t> phases_seen_;
  std::vector<std::string> open_tickets_;
  std::set<std::string> announced_;
  std::vector<std::string> confirmed_steps_;
  std::size_t next_fault_ = 0;
  std::size_t next_estop_ = 0;
  std::size_t next_level_ = 0;
  std::string active_;
  bool txn_violation_ = false;
  bool violation_open_ = false;
  bool executing_ = false;
  Eigen::VectorXd exec_max_;
  double exec_min_margin_ = 0.0;
  bool stop_ = false;
  std::uint64_t frame_seq_ = 0;
};

}  // namespace

RunResult run_scenario(const Scenario& s, const RunOptions& options, const RunHooks& hooks) {
  Runner r(s, options, hooks);
  return r.run();
}

}  // namespace labguard
