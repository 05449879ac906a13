#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace labguard {

inline constexpr int kMaxRuntimeLevel = 4;

enum class ApprovalRequirement {
  PerStep,             // levels 0-1: a human approves every transaction
  HumanWithMonitoring, // level 2: a human approves, the run is monitored
  Auto,                // levels 3-4 with the prediction well inside the ODD
  Escalate,            // levels 3-4 near the boundary: hand to a human
};

std::string_view to_string(ApprovalRequirement r);
bool needs_human(ApprovalRequirement r);

struct GovernancePolicy {
  int advancement_threshold = 200;
  double escalation_fraction = 0.1;  // of the initial normalized margin
  int regression_drop = 1;

  void validate() const;
};

// Pure. `predicted_min_margin` and `initial_margin` are normalized margins.
ApprovalRequirement approval_required(int level, double predicted_min_margin, double initial_margin,
                                      const GovernancePolicy& policy);

enum class Outcome { Confirmed, AbortedSafety, AbortedBenign };

std::string_view to_string(Outcome o);

struct Incident {
  double time = 0.0;
  std::string txn;
  std::string severity;
};

struct CompetenceRecord {
  int level = 0;
  int incident_free_count = 0;  // confirms since the last safety incident
  int confirms_at_level = 0;    // confirms since the last level change
  bool hold = false;            // set by an incident, cleared by acknowledgment
  std::vector<Incident> incidents;
};

struct LevelChange {
  int from = 0;
  int to = 0;
  std::string reason;
};

class Governor {
 public:
  explicit Governor(int level = 0, GovernancePolicy policy = {});

  const CompetenceRecord& record() const { return record_; }
  const GovernancePolicy& policy() const { return policy_; }
  int level() const { return record_.level; }

  std::optional<LevelChange> record_outcome(Outcome outcome, const std::string& txn = {}, double time = 0.0,
                                            const std::string& severity = "safety");
  // Root-cause acknowledgment; clears the hold.
  void acknowledge_incident();
  // Operator override. Levels above 4 are rejected with InvalidArgument.
  std::optional<LevelChange> set_level(int level, const std::string& actor);

  ApprovalRequirement approval_for(double predicted_min_margin, double initial_margin) const {
    return approval_required(record_.level, predicted_min_margin, initial_margin, policy_);
  }

 private:
  GovernancePolicy policy_;
  CompetenceRecord record_;
};

}  // namespace labguard
