#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labguard/plants.hpp"
#include "labguard/state.hpp"

namespace labguard {

struct PlanSegment {
  double duration = 0.0;  // s
  Eigen::VectorXd u;
};

// Piecewise-constant command schedule. After the last segment the plan
// applies `hold`.
class CommandPlan {
 public:
  CommandPlan(LayoutPtr input_layout, std::vector<PlanSegment> segments, Eigen::VectorXd hold);

  const LayoutPtr& input_layout() const { return input_layout_; }
  const std::vector<PlanSegment>& segments() const { return segments_; }
  const Eigen::VectorXd& hold() const { return hold_; }
  double duration() const { return duration_; }
  ControlInput command_at(double t) const;
  ControlPolicy policy() const;

 private:
  LayoutPtr input_layout_;
  std::vector<PlanSegment> segments_;
  Eigen::VectorXd hold_;
  double duration_ = 0.0;
};

// max(1.2 * plan duration, floor)
double default_horizon(const CommandPlan& plan, double floor = 0.0);

struct PeakViolation {
  double time = 0.0;
  std::string label;
  double value = 0.0;  // barrier h or constraint c at that time; 0 for divergence
};

struct TrajectoryPrediction {
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<double> margins;             // min_j h_j
  std::vector<double> normalized_margins;  // min_j h_j / scale_j
  std::vector<bool> odd_passes;
  std::optional<PeakViolation> peak_violation;
  std::vector<std::string> violated_labels;  // sorted, every label that failed at any step
  std::optional<std::size_t> diverged_at;

  bool safe() const { return !peak_violation.has_value(); }
  double min_normalized_margin() const;
};

// Open-loop simulation of the plan with the ODD evaluated at every step,
// including the initial state. The spec must carry a safe set.
TrajectoryPrediction predict(const ControlAffineModel& model, const OddSpec& spec, const StateVector& x0,
                             const CommandPlan& plan, double horizon, double dt);

enum class McPolicyKind { ZeroTolerance, Quantile };

struct McPolicy {
  McPolicyKind kind = McPolicyKind::ZeroTolerance;
  double max_unsafe_fraction = 0.0;  // Quantile only
};

struct MonteCarloVerdict {
  int samples = 0;
  int unsafe_samples = 0;
  bool pass = false;
  double worst_margin = 0.0;  // min normalized margin over all samples
};

// Deterministic parameter draws: Halton points (one prime base per
// interval, in key order) shifted by a seeded Cranley-Patterson rotation.
std::vector<ParamMap> sample_parameters(const UncertainParameterSet& family, std::uint64_t seed);

MonteCarloVerdict monte_carlo(const UncertainParameterSet& family, const OddSpec& spec, const StateVector& x0,
                              const CommandPlan& plan, double horizon, double dt, std::uint64_t seed = 0,
                              const McPolicy& policy = {});

struct TwinState {
  StateVector mirrored;
  double last_sync_time = 0.0;
  bool restricted = false;
};

struct ReconcileReport {
  Eigen::VectorXd deviations;  // observed - predicted
  std::vector<std::string> divergent_dims;
  bool restricted = false;
};

// Mirrors `observed` into the twin. Any |deviation| above its tolerance
// raises the restriction flag, which only reset_restriction clears.
ReconcileReport reconcile(TwinState& twin, const StateVector& observed, const StateVector& predicted,
                          const Eigen::VectorXd& tolerance_per_dim, double time);

void reset_restriction(TwinState& twin);

}  // namespace labguard
