#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "labguard/audit.hpp"
#include "labguard/twin.hpp"

namespace labguard {

enum class Phase { Idle, Pending, Locked, Simulated, Validated, Executed, Confirmed, Aborted };

enum class Event {
  CreateRequest,
  ReadLock,
  UndergoSimulation,
  TestPass,
  ValidationFail,
  ExecutionComplete,
  ExecutionFail,
  Confirmation,
  ConfirmationFail,
  Release,
  Acknowledgment,
};

inline constexpr Phase kAllPhases[] = {Phase::Idle,      Phase::Pending,  Phase::Locked,    Phase::Simulated,
                                       Phase::Validated, Phase::Executed, Phase::Confirmed, Phase::Aborted};
inline constexpr Event kAllEvents[] = {Event::CreateRequest,    Event::ReadLock,       Event::UndergoSimulation,
                                       Event::TestPass,         Event::ValidationFail, Event::ExecutionComplete,
                                       Event::ExecutionFail,    Event::Confirmation,   Event::ConfirmationFail,
                                       Event::Release,          Event::Acknowledgment};

std::string_view to_string(Phase p);
std::string_view to_string(Event e);
Phase phase_from_string(std::string_view s);

// The transaction state machine. Empty for pairs outside the table.
std::optional<Phase> next_phase(Phase from, Event event);

enum class AbortReason {
  PredictedViolation,
  MonteCarloFail,
  HumanReject,
  ApprovalExpired,
  MidFlightMargin,
  FilterInfeasible,
  PredictionDeviation,
  EmergencyStop,
  ConfirmFail,
  ExecutorFault,
};

std::string_view to_string(AbortReason r);
// Reasons that count as safety incidents for the autonomy governor.
bool is_safety_reason(AbortReason r);

struct TxnRequest {
  std::string request_id;
  CommandPlan plan;
  std::string target;  // free-text description of the intended end state
  std::vector<std::string> resources;
};

struct Provenance {
  std::string planner;
  std::string reasoning;
};

struct Verification {
  TrajectoryPrediction prediction;
  std::optional<MonteCarloVerdict> monte_carlo;
};

enum class ApprovalKind { Auto, HumanApproved, HumanRejected, Expired };

struct ApprovalOutcome {
  ApprovalKind kind = ApprovalKind::Auto;
  std::string actor;  // "governor" for automatic decisions
};

struct ExecutionOutcome {
  bool completed = false;
  std::optional<AbortReason> failure;
  std::string detail;
  std::optional<StateVector> final_state;
  std::size_t steps = 0;
  double min_normalized_margin = 0.0;
  double max_correction = 0.0;
};

struct PhaseRecord {
  Phase phase;
  Event event;
  double time;
};

struct Transaction {
  Transaction(std::string txn_id, TxnRequest req, Provenance prov)
      : id(std::move(txn_id)), request(std::move(req)), provenance(std::move(prov)) {}

  std::string id;
  TxnRequest request;
  Provenance provenance;
  Phase phase = Phase::Idle;
  std::vector<PhaseRecord> history;
  std::optional<StateVector> snapshot;
  std::vector<std::string> locks;
  std::optional<Verification> verification;
  std::optional<ApprovalOutcome> approval;
  std::optional<double> validated_at;
  bool executing = false;
  std::size_t actuations = 0;
  std::optional<ExecutionOutcome> execution;
  std::optional<AbortReason> abort_reason;
  std::vector<std::string> abort_labels;
  std::string rollback_note;
  std::optional<std::string> acknowledged_by;
  bool withdrawn = false;

  bool reached(Phase p) const;
  // Confirmed or Aborted once the transaction has finished, else empty.
  std::optional<Phase> outcome() const;
  Json summary() const;
};

struct TestFindings {
  bool checks_pass = false;
  std::optional<AbortReason> failure;
  std::vector<std::string> labels;  // violated barrier / constraint labels
};

// Handed to the executor; every physical actuation must go through it.
class PhysicalGate {
 public:
  explicit PhysicalGate(std::function<void()> on_actuate) : on_actuate_(std::move(on_actuate)) {}
  void actuate() { on_actuate_(); }

 private:
  std::function<void()> on_actuate_;
};

using Predictor = std::function<Verification(const Transaction&)>;
using Executor = std::function<ExecutionOutcome(const Transaction&, PhysicalGate&)>;

// Single-writer transaction engine with an all-or-nothing lock table and a
// hash-chained audit log. Every phase change appends exactly one audit entry.
class CrutdEngine {
 public:
  CrutdEngine(LayoutPtr state_layout, LayoutPtr input_layout, std::optional<std::string> mac_key = std::nullopt);

  // Simulation clock; must not go backwards.
  void set_time(double t);
  double time() const { return now_; }

  const Transaction& create(TxnRequest request, Provenance provenance);
  const Transaction& read_lock(const std::string& id, const std::vector<std::string>& resources,
                               const StateVector& snapshot);
  // Withdraws a transaction stuck in PENDING (after lock conflicts).
  const Transaction& withdraw(const std::string& id, const std::string& actor);
  const Transaction& undergo(const std::string& id, const Predictor& predictor);
  // Judges the attached verification without changing anything.
  TestFindings findings(const std::string& id) const;
  // Checks failing abort regardless of approval. Passing checks still need
  // an approving outcome.
  const Transaction& test(const std::string& id, const ApprovalOutcome& approval);

  void begin_do(const std::string& id);
  void actuate(const std::string& id);
  const Transaction& end_do(const std::string& id, ExecutionOutcome outcome);
  const Transaction& do_execute(const std::string& id, const Executor& executor);

  // Reconciles the observed state against the prediction's final state and
  // releases the transaction on success.
  const Transaction& confirm(const std::string& id, const StateVector& observed, const Eigen::VectorXd& tolerance,
                             TwinState& twin);
  const Transaction& acknowledge(const std::string& id, const std::string& actor, const std::string& root_cause);

  // Aborts whatever the table allows; transactions that cannot abort from
  // their phase halt the engine until resume().
  std::vector<std::string> emergency_stop(const std::string& actor);
  void resume(const std::string& actor);
  bool halted() const { return halted_; }

  const Transaction& get(const std::string& id) const;
  std::vector<std::string> ids() const;
  std::vector<std::string> active_ids() const;
  // Resource -> holder.
  const std::map<std::string, std::string>& lock_table() const { return locks_; }
  const AuditLog& audit() const { return audit_; }
  AuditLog& audit_mut() { return audit_; }
  const LayoutPtr& state_layout() const { return state_layout_; }
  const LayoutPtr& input_layout() const { return input_layout_; }

 private:
  Transaction& find(const std::string& id);
  void transition(Transaction& t, Event e, Json details = Json::object());
  void abort(Transaction& t, Event e, AbortReason reason, std::vector<std::string> labels, Json details = Json::object());
  void release_locks(Transaction& t);
  void require_running() const;

  LayoutPtr state_layout_;
  LayoutPtr input_layout_;
  AuditLog audit_;
  std::map<std::string, Transaction> txns_;
  std::map<std::string, std::string> locks_;
  // request id -> reasoning of the aborted attempt
  std::map<std::string, std::set<std::string>> aborted_requests_;
  std::size_t counter_ = 0;
  double now_ = 0.0;
  bool halted_ = false;
};

}  // namespace labguard
