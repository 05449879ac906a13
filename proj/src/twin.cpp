#include "labguard/twin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace labguard {

CommandPlan::CommandPlan(LayoutPtr input_layout, std::vector<PlanSegment> segments, Eigen::VectorXd hold)
    : input_layout_(std::move(input_layout)), segments_(std::move(segments)), hold_(std::move(hold)) {
  const auto m = static_cast<Eigen::Index>(input_layout_->size());
  if (hold_.size() != m || !hold_.allFinite()) throw DimensionMismatch("plan hold command has wrong size or is not finite");
  for (const auto& s : segments_) {
    if (!(s.duration > 0.0) || !std::isfinite(s.duration)) throw InvalidArgument("plan segment duration must be positive");
    if (s.u.size() != m || !s.u.allFinite()) throw DimensionMismatch("plan segment command has wrong size or is not finite");
    duration_ += s.duration;
  }
}

ControlInput CommandPlan::command_at(double t) const {
  // Boundaries are nudged so accumulated dt rounding does not shift a switch by one step.
  double end = 0.0;
  for (const auto& s : segments_) {
    end += s.duration;
    if (t < end - 1e-9) return ControlInput(input_layout_, s.u);
  }
  return ControlInput(input_layout_, hold_);
}

ControlPolicy CommandPlan::policy() const {
  return [plan = *this](double t, const StateVector&) { return plan.command_at(t); };
}

double default_horizon(const CommandPlan& plan, double floor) { return std::max(1.2 * plan.duration(), floor); }

double TrajectoryPrediction::min_normalized_margin() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : normalized_margins) m = std::min(m, v);
  return m;
}

namespace {

struct StepEval {
  double margin;
  double normalized;
  bool pass;
  // Most severe failing item. Barrier failures rank ahead of constraint
  // failures; within a kind severity is h/scale for barriers and -c for constraints.
  std::optional<std::pair<std::pair<int, double>, PeakViolation>> worst;
};

StepEval evaluate(const OddSpec& spec, const StateVector& x, double t, std::set<std::string>& violated) {
  const OddReport r = odd_membership(spec, x);
  StepEval e{r.margin->value, normalized_margin(*spec.safe_set(), x).value, r.pass, std::nullopt};
  auto consider = [&](std::pair<int, double> severity, const std::string& label, double value) {
    violated.insert(label);
    if (!e.worst || severity < e.worst->first) e.worst = {{severity, PeakViolation{t, label, value}}};
  };
  for (const auto& c : r.constraints) {
    if (!c.pass) consider({1, -c.value}, c.label, c.value);
  }
  const auto& barriers = spec.safe_set()->barriers();
  for (std::size_t j = 0; j < r.barriers.size(); ++j) {
    if (!r.barriers[j].pass) consider({0, r.barriers[j].value / barriers[j].scale()}, r.barriers[j].label, r.barriers[j].value);
  }
  return e;
}

}  // namespace

TrajectoryPrediction predict(const ControlAffineModel& model, const OddSpec& spec, const StateVector& x0,
                             const CommandPlan& plan, double horizon, double dt) {
  if (!spec.safe_set()) throw InvalidArgument("prediction needs an ODD spec with a safe set");
  require_same_layout(*model.state_layout(), *x0.layout(), "predict");
  require_same_layout(*model.input_layout(), *plan.input_layout(), "predict plan");
  if (!(horizon >= dt)) throw InvalidArgument("prediction horizon must be at least dt");
  const std::size_t steps = step_count(horizon, dt);

  TrajectoryPrediction p;
  std::set<std::string> violated;
  std::optional<std::pair<std::pair<int, double>, PeakViolation>> worst;
  auto record = [&](double t, StateVector x) {
    const StepEval e = evaluate(spec, x, t, violated);
    p.times.push_back(t);
    p.states.push_back(std::move(x));
    p.margins.push_back(e.margin);
    p.normalized_margins.push_back(e.normalized);
    p.odd_passes.push_back(e.pass);
    if (e.worst && (!worst || e.worst->first < worst->first)) worst = e.worst;
  };

  record(0.0, x0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    Eigen::VectorXd next = rk4_step(model, p.states.back().values(), plan.command_at(t).values(), dt);
    if (!next.allFinite()) {
      p.diverged_at = k + 1;
      violated.insert("divergence");
      worst = {{{-1, 0.0}, PeakViolation{static_cast<double>(k + 1) * dt, "divergence", 0.0}}};
      break;
    }
    record(static_cast<double>(k + 1) * dt, x0.with_values(std::move(next)));
  }
  if (worst) p.peak_violation = worst->second;
  p.violated_labels.assign(violated.begin(), violated.end());
  return p;
}

namespace {

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

std::uint64_t nth_prime(std::size_t n) {
  std::uint64_t candidate = 1;
  std::size_t found = 0;
  while (found <= n) {
    ++candidate;
    bool prime = true;
    for (std::uint64_t d = 2; d * d <= candidate; ++d) {
      if (candidate % d == 0) {
        prime = false;
        break;
      }
    }
    if (prime) ++found;
  }
  return candidate;
}

}  // namespace

std::vector<ParamMap> sample_parameters(const UncertainParameterSet& family, std::uint64_t seed) {
  family.validate();
  std::mt19937_64 gen(seed);
  std::vector<double> shift;
  for (std::size_t d = 0; d < family.intervals.size(); ++d) {
    shift.push_back(static_cast<double>(gen() >> 11) * 0x1.0p-53);
  }
  std::vector<ParamMap> out;
  out.reserve(static_cast<std::size_t>(family.sample_count));
  for (int i = 0; i < family.sample_count; ++i) {
    ParamMap params = family.base.params;
    std::size_t d = 0;
    for (const auto& [name, iv] : family.intervals) {
      double u = radical_inverse(static_cast<std::uint64_t>(i) + 1, nth_prime(d)) + shift[d];
      if (u >= 1.0) u -= 1.0;
      params[name] = iv.low == iv.high ? iv.low : iv.low + (iv.high - iv.low) * u;
      ++d;
    }
    out.push_back(std::move(params));
  }
  return out;
}

MonteCarloVerdict monte_carlo(const UncertainParameterSet& family, const OddSpec& spec, const StateVector& x0,
                              const CommandPlan& plan, double horizon, double dt, std::uint64_t seed,
                              const McPolicy& policy) {
  if (family.sample_count < 1) throw InvalidArgument("Monte Carlo needs at least one sample");
  MonteCarloVerdict v;
  v.worst_margin = std::numeric_limits<double>::infinity();
  for (const auto& params : sample_parameters(family, seed)) {
    PlantSpec ps = family.base;
    ps.params = params;
    const ControlAffineModel model = make_model(ps);
    const TrajectoryPrediction p = predict(model, spec, x0, plan, horizon, dt);
    ++v.samples;
    if (!p.safe()) ++v.unsafe_samples;
    v.worst_margin = std::min(v.worst_margin, p.diverged_at ? -std::numeric_limits<double>::infinity()
                                                            : p.min_normalized_margin());
  }
  if (policy.kind == McPolicyKind::ZeroTolerance) {
    v.pass = v.unsafe_samples == 0;
  } else {
    v.pass = v.unsafe_samples <= static_cast<int>(std::floor(policy.max_unsafe_fraction * v.samples));
  }
  return v;
}

ReconcileReport reconcile(TwinState& twin, const StateVector& observed, const StateVector& predicted,
                          const Eigen::VectorXd& tolerance_per_dim, double time) {
  require_same_layout(*observed.layout(), *predicted.layout(), "reconcile");
  require_same_layout(*twin.mirrored.layout(), *observed.layout(), "reconcile twin");
  if (tolerance_per_dim.size() != static_cast<Eigen::Index>(observed.size())) {
    throw DimensionMismatch("reconcile tolerance has wrong size");
  }
  ReconcileReport r;
  r.deviations = observed.values() - predicted.values();
  for (Eigen::Index i = 0; i < r.deviations.size(); ++i) {
    if (std::abs(r.deviations(i)) > tolerance_per_dim(i)) {
      r.divergent_dims.push_back(observed.layout()->dims()[static_cast<std::size_t>(i)].name);
    }
  }
  twin.mirrored = observed;
  twin.last_sync_time = time;
  if (!r.divergent_dims.empty()) twin.restricted = true;
  r.restricted = twin.restricted;
  return r;
}

void reset_restriction(TwinState& twin) { twin.restricted = false; }

}  // namespace labguard
