#include "labguard/autonomy.hpp"

#include <algorithm>
#include <cmath>

#include "labguard/error.hpp"

namespace labguard {

std::string_view to_string(ApprovalRequirement r) {
  switch (r) {
    case ApprovalRequirement::PerStep: return "per_step";
    case ApprovalRequirement::HumanWithMonitoring: return "human_with_monitoring";
    case ApprovalRequirement::Auto: return "auto";
    case ApprovalRequirement::Escalate: return "escalate";
  }
  return "?";
}

bool needs_human(ApprovalRequirement r) { return r != ApprovalRequirement::Auto; }

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Confirmed: return "confirmed";
    case Outcome::AbortedSafety: return "aborted_safety";
    case Outcome::AbortedBenign: return "aborted_benign";
  }
  return "?";
}

void GovernancePolicy::validate() const {
  if (advancement_threshold < 1) throw InvalidArgument("advancement threshold must be positive");
  if (!(escalation_fraction >= 0.0 && escalation_fraction <= 1.0)) {
    throw InvalidArgument("escalation fraction must lie in [0, 1]");
  }
  if (regression_drop < 1) throw InvalidArgument("regression drop must be at least one level");
}

ApprovalRequirement approval_required(int level, double predicted_min_margin, double initial_margin,
                                      const GovernancePolicy& policy) {
  if (level < 0 || level > kMaxRuntimeLevel) throw InvalidArgument("autonomy level must be within 0-4");
  if (level <= 1) return ApprovalRequirement::PerStep;
  if (level == 2) return ApprovalRequirement::HumanWithMonitoring;
  const double band = policy.escalation_fraction * initial_margin;
  const bool inside = std::isfinite(predicted_min_margin) && predicted_min_margin > 0.0 && predicted_min_margin >= band;
  return inside ? ApprovalRequirement::Auto : ApprovalRequirement::Escalate;
}

Governor::Governor(int level, GovernancePolicy policy) : policy_(policy) {
  policy_.validate();
  if (level < 0 || level > kMaxRuntimeLevel) throw InvalidArgument("autonomy level must be within 0-4");
  record_.level = level;
}

std::optional<LevelChange> Governor::record_outcome(Outcome outcome, const std::string& txn, double time,
                                                    const std::string& severity) {
  switch (outcome) {
    case Outcome::AbortedBenign:
      return std::nullopt;
    case Outcome::AbortedSafety: {
      record_.incidents.push_back({time, txn, severity});
      record_.incident_free_count = 0;
      record_.confirms_at_level = 0;
      record_.hold = true;
      const int from = record_.level;
      record_.level = std::max(0, from - policy_.regression_drop);
      if (record_.level == from) return std::nullopt;
      return LevelChange{from, record_.level, "safety incident"};
    }
    case Outcome::Confirmed:
      break;
  }
  ++record_.incident_free_count;
  ++record_.confirms_at_level;
  if (record_.hold || record_.level >= kMaxRuntimeLevel || record_.confirms_at_level < policy_.advancement_threshold) {
    return std::nullopt;
  }
  const int from = record_.level;
  ++record_.level;
  record_.confirms_at_level = 0;
  return LevelChange{from, record_.level, "competence threshold reached"};
}

void Governor::acknowledge_incident() { record_.hold = false; }

std::optional<LevelChange> Governor::set_level(int level, const std::string& actor) {
  if (level < 0 || level > kMaxRuntimeLevel) {
    throw InvalidArgument("autonomy level " + std::to_string(level) + " is not attainable (maximum 4)");
  }
  if (actor.empty()) throw InvalidArgument("level change needs an actor");
  if (level == record_.level) return std::nullopt;
  const int from = record_.level;
  record_.level = level;
  record_.confirms_at_level = 0;
  return LevelChange{from, level, "set by " + actor};
}

}  // namespace labguard
