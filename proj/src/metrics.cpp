#include "labguard/metrics.hpp"

#include <algorithm>
#include <set>

#include "labguard/crutd.hpp"
#include "labguard/error.hpp"

namespace labguard {

namespace {

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

bool is_safety_reason_name(const std::string& name) {
  static const std::set<std::string> safety = [] {
    std::set<std::string> s;
    for (auto r : {AbortReason::PredictedViolation, AbortReason::MonteCarloFail, AbortReason::HumanReject,
                   AbortReason::ApprovalExpired, AbortReason::MidFlightMargin, AbortReason::FilterInfeasible,
                   AbortReason::PredictionDeviation, AbortReason::EmergencyStop, AbortReason::ConfirmFail,
                   AbortReason::ExecutorFault}) {
      if (is_safety_reason(r)) s.insert(std::string(to_string(r)));
    }
    return s;
  }();
  return safety.count(name) != 0;
}

std::string type_of(const Json& e) { return e.value("type", std::string()); }

bool is_safety_abort(const Json& e) {
  return type_of(e) == "phase" && e.value("to", std::string()) == "ABORTED" &&
         is_safety_reason_name(e.value("reason", std::string()));
}

}  // namespace

Json MetricsReport::to_json() const {
  return {{"sim_hours", sim_hours},
          {"commands", commands},
          {"confirmed", confirmed},
          {"incidents", incidents},
          {"safety_incident_rate", safety_incident_rate},
          {"labeled_safe", labeled_safe},
          {"rejected_safe", rejected_safe},
          {"false_positive_rate", opt_json(false_positive_rate)},
          {"hazards", hazards},
          {"intervention_latency", opt_json(intervention_latency)},
          {"odd_coverage", opt_json(odd_coverage)},
          {"audit_integrity", audit_integrity},
          {"complete", complete}};
}

std::map<std::string, bool> labels_from_events(const std::vector<Json>& events) {
  std::map<std::string, bool> out;
  for (const auto& e : events) {
    if (type_of(e) != "submit") continue;
    const auto& l = e.at("label");
    if (l.is_string()) out[e.at("request_id").get<std::string>()] = l.get<std::string>() == "safe";
  }
  return out;
}

MetricsReport compute_metrics(const std::vector<Json>& events, const std::map<std::string, bool>& labels,
                              const MetricsOptions& options) {
  MetricsReport r;
  r.complete = !events.empty() && type_of(events.back()) == "run_end";
  if (!r.complete && !options.allow_partial) throw InvalidArgument("event log has no terminal run_end event");

  double t_end = 0.0;
  for (const auto& e : events) t_end = std::max(t_end, e.value("t", 0.0));
  r.sim_hours = t_end / 3600.0;

  // Incidents are counted per transaction: safety abort or any step outside
  // the safe set. Violations outside a transaction count once each.
  std::set<std::string> incident_txns;
  int loose = 0;
  std::set<std::string> safety_aborted;
  for (const auto& e : events) {
    const std::string type = type_of(e);
    if (is_safety_abort(e)) {
      incident_txns.insert(e.at("txn").get<std::string>());
      safety_aborted.insert(e.at("txn").get<std::string>());
    } else if (type == "true_violation") {
      const auto& txn = e.at("txn");
      if (txn.is_string()) {
        incident_txns.insert(txn.get<std::string>());
      } else {
        ++loose;
      }
    } else if (type == "phase" && e.value("to", std::string()) == "CONFIRMED") {
      ++r.confirmed;
    }
  }
  r.incidents = static_cast<int>(incident_txns.size()) + loose;
  r.safety_incident_rate = r.sim_hours > 0.0 ? r.incidents / r.sim_hours : 0.0;

  for (const auto& e : events) {
    if (type_of(e) != "submit") continue;
    ++r.commands;
    const std::string id = e.at("request_id").get<std::string>();
    auto l = labels.find(id);
    if (l == labels.end() || !l->second) continue;
    ++r.labeled_safe;
    const auto& txn = e.at("txn");
    // A submission the engine refused outright is a rejection as well.
    if (txn.is_null() || safety_aborted.count(txn.get<std::string>())) ++r.rejected_safe;
  }
  if (r.labeled_safe > 0) {
    r.false_positive_rate = static_cast<double>(r.rejected_safe) / r.labeled_safe;
  } else if (options.require_fpr) {
    throw MissingLabels("no ground-truth-safe commands are labeled");
  }
  if (r.commands > 0) r.odd_coverage = static_cast<double>(r.confirmed) / r.commands;

  // Latency: each hazard pairs with the first later protective action of the
  // same transaction. An unanswered hazard costs the rest of the run.
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (type_of(events[i]) != "hazard") continue;
    ++r.hazards;
    const double t0 = events[i].at("t").get<double>();
    const Json txn = events[i].at("txn");
    double latency = t_end - t0;
    for (std::size_t j = i; j < events.size(); ++j) {
      const Json& e = events[j];
      if (e.value("txn", Json()) != txn) continue;
      const bool protective = type_of(e) == "filter_intervention" ||
                              (type_of(e) == "phase" && e.value("to", std::string()) == "ABORTED");
      if (protective) {
        latency = e.at("t").get<double>() - t0;
        break;
      }
    }
    r.intervention_latency = std::max(r.intervention_latency.value_or(0.0), latency);
  }

  if (r.complete) r.audit_integrity = events.back().value("audit_intact", false);
  return r;
}

}  // namespace labguard
