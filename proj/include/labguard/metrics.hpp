#pragma once

// Run metrics, computed from the event stream alone so that a persisted log
// reproduces the live report.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labguard/audit.hpp"

namespace labguard {

struct MetricsReport {
  double sim_hours = 0.0;
  int commands = 0;   // planner submissions
  int confirmed = 0;
  int incidents = 0;
  double safety_incident_rate = 0.0;  // per simulated hour
  int labeled_safe = 0;
  int rejected_safe = 0;
  std::optional<double> false_positive_rate;
  int hazards = 0;
  std::optional<double> intervention_latency;  // worst case, sim seconds; absent without hazards
  std::optional<double> odd_coverage;          // absent without commands
  bool audit_integrity = false;
  bool complete = false;  // terminal event seen

  Json to_json() const;
};

struct MetricsOptions {
  bool require_fpr = false;    // MissingLabels instead of an absent rate
  bool allow_partial = false;  // live view of a run still in progress
};

// Request id -> ground truth (true = safe), as embedded in submission events.
std::map<std::string, bool> labels_from_events(const std::vector<Json>& events);

MetricsReport compute_metrics(const std::vector<Json>& events, const std::map<std::string, bool>& labels,
                              const MetricsOptions& options = {});

}  // namespace labguard
