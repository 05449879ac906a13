#include <doctest.h>

#include "labguard/barriers.hpp"
#include "labguard/odd.hpp"
#include "labguard/twin.hpp"
#include "testing.hpp"

using namespace labguard;
using labguard::testing::nominal_reactor;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

const std::vector<Dim> kPassive{{"P", "kPa"}, {"C_volatile", "ppm"}};

OddSpec reactor_spec(const ControlAffineModel& model, const ThermalReactorParams& p) {
  OddTemplate t{Domain::Chemical, {{"T_max", 100.0}, {"P_burst_rated", 500.0}, {"C_PEL", 50.0}}};
  return build_chemical_odd(t, model.state_layout(),
                            {thermal_rate_barrier(model.state_layout(), p, 100.0, 100.0, 75.0),
                             catalyst_cap_barrier(model.state_layout(), 1.5)});
}

// Thermal barrier only, so violation is monotone in the heat of reaction.
OddSpec thermal_only(const ControlAffineModel& model) {
  return OddSpec({}, SafeSet({thermal_barrier(model.state_layout(), 100.0, 75.0)}), Domain::Chemical);
}

StateVector ambient(const ControlAffineModel& model) { return model.state(vec({25.0, 0.0, 101.0, 0.0})); }

CommandPlan single(const ControlAffineModel& model, double rate, double duration) {
  return CommandPlan(model.input_layout(), {{duration, vec({rate})}}, vec({0.0}));
}

}  // namespace

TEST_CASE("command plans") {
  auto model = reactor_model(nominal_reactor(), kPassive);
  CommandPlan plan(model.input_layout(), {{10.0, vec({0.1})}, {5.0, vec({0.2})}}, vec({0.0}));
  CHECK(plan.duration() == 15.0);
  CHECK(plan.command_at(0.0)[0] == 0.1);
  CHECK(plan.command_at(9.99)[0] == 0.1);
  CHECK(plan.command_at(10.0)[0] == 0.2);
  CHECK(plan.command_at(15.0)[0] == 0.0);
  CHECK(default_horizon(plan) == doctest::Approx(18.0));
  CHECK(default_horizon(plan, 300.0) == 300.0);
  CHECK_THROWS_AS(CommandPlan(model.input_layout(), {{0.0, vec({0.1})}}, vec({0.0})), InvalidArgument);
  CHECK_THROWS_AS(CommandPlan(model.input_layout(), {{1.0, vec({0.1, 0.2})}}, vec({0.0})), DimensionMismatch);
}

TEST_CASE("predict") {
  auto p = nominal_reactor();
  auto model = reactor_model(p, kPassive);
  auto spec = reactor_spec(model, p);

  SUBCASE("equilibrium keeps constant margins") {
    auto pred = predict(model, spec, ambient(model), single(model, 0.0, 10.0), 20.0, 0.1);
    CHECK(pred.safe());
    CHECK(pred.states.size() == 201);
    CHECK(pred.margins.size() == pred.states.size());
    CHECK(pred.odd_passes.size() == pred.states.size());
    for (double m : pred.margins) CHECK(m == pred.margins.front());
  }
  SUBCASE("bolus plan spikes past the thermal limit") {
    auto plan = single(model, 0.1, 10.0);
    auto pred = predict(model, spec, ambient(model), plan, default_horizon(plan, 300.0), 0.01);
    REQUIRE_FALSE(pred.safe());
    CHECK(std::count(pred.violated_labels.begin(), pred.violated_labels.end(), "thermal") == 1);
    double peak = 0.0;
    for (const auto& s : pred.states) peak = std::max(peak, s[0]);
    CHECK(peak > 250.0);
    CHECK(pred.peak_violation->label == "thermal_rate");
    CHECK(pred.peak_violation->value < 0.0);
  }
  SUBCASE("drop-wise plan over 30 minutes stays inside") {
    auto plan = single(model, 1.0 / 1800.0, 1800.0);
    auto pred = predict(model, spec, ambient(model), plan, default_horizon(plan), 0.01);
    CHECK(pred.safe());
    CHECK(pred.violated_labels.empty());
    CHECK(pred.min_normalized_margin() >= 0.05);
  }
  SUBCASE("pure and consistent with plant execution") {
    auto plan = single(model, 0.002, 60.0);
    auto a = predict(model, spec, ambient(model), plan, 100.0, 0.05);
    auto b = predict(model, spec, ambient(model), plan, 100.0, 0.05);
    auto traj = simulate(model, ambient(model), plan.policy(), 100.0, 0.05);
    REQUIRE(a.states.size() == traj.states.size());
    for (std::size_t k = 0; k < a.states.size(); ++k) {
      CHECK(a.states[k].values() == b.states[k].values());
      CHECK(a.states[k].values() == traj.states[k].values());
      CHECK(a.margins[k] == b.margins[k]);
    }
  }
  SUBCASE("divergence is a violation at the divergence step") {
    ControlAffineModel blowup(
        "blowup", make_layout({{"x", ""}}), make_layout({{"u", ""}}),
        [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array().square() * 1e300; },
        [](const Eigen::VectorXd&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Zero(1, 1); });
    OddSpec s({}, SafeSet({linear_barrier("cap", blowup.state_layout(), vec({-1.0}), 1e308)}));
    auto pred = predict(blowup, s, blowup.state(vec({1e3})), CommandPlan(blowup.input_layout(), {}, vec({0.0})), 1.0, 0.1);
    REQUIRE(pred.diverged_at.has_value());
    CHECK(pred.peak_violation->label == "divergence");
    CHECK(pred.states.size() == *pred.diverged_at);
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(predict(model, spec, ambient(model), single(model, 0.0, 1.0), 0.01, 0.1), InvalidArgument);
    OddSpec no_set({OddConstraint("c", model.state_layout(), [](const Eigen::VectorXd&) { return -1.0; })}, std::nullopt);
    CHECK_THROWS_AS(predict(model, no_set, ambient(model), single(model, 0.0, 1.0), 1.0, 0.1), InvalidArgument);
  }
}

TEST_CASE("monte carlo") {
  auto p = nominal_reactor();
  PlantSpec base{"reactor", p.to_params(), kPassive};
  auto model = make_model(base);
  auto spec = thermal_only(model);
  auto plan = single(model, 0.02, 10.0);  // 0.2 mol
  const double horizon = 300.0;
  const double dt = 0.05;

  SUBCASE("zero-width intervals reproduce predict") {
    UncertainParameterSet fam{base, {{"heat_of_reaction", {p.heat_of_reaction, p.heat_of_reaction}}}, 8};
    auto v = monte_carlo(fam, spec, ambient(model), plan, horizon, dt, 7);
    auto pred = predict(model, spec, ambient(model), plan, horizon, dt);
    CHECK(v.samples == 8);
    CHECK((v.unsafe_samples == 0 || v.unsafe_samples == 8));
    CHECK(v.unsafe_samples == (pred.safe() ? 0 : 8));
    CHECK(v.worst_margin == pred.min_normalized_margin());
  }
  SUBCASE("interval straddling the critical heat of reaction") {
    // Bisection oracle for the heat of reaction at which the peak touches T_max.
    auto unsafe_at = [&](double dh) {
      PlantSpec s = base;
      s.params["heat_of_reaction"] = dh;
      return !predict(make_model(s), spec, ambient(model), plan, horizon, dt).safe();
    };
    double lo = 1e5;
    double hi = 2e6;
    REQUIRE_FALSE(unsafe_at(lo));
    REQUIRE(unsafe_at(hi));
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + hi);
      (unsafe_at(mid) ? hi : lo) = mid;
    }
    const double critical = 0.5 * (lo + hi);
    PlantSpec centred = base;
    centred.params["heat_of_reaction"] = critical;
    UncertainParameterSet fam{centred, {{"heat_of_reaction", {0.8 * critical, 1.2 * critical}}}, 64};
    auto v = monte_carlo(fam, spec, ambient(model), plan, horizon, dt, 11);
    CHECK(v.unsafe_samples > 0);
    CHECK(v.unsafe_samples < v.samples);
    CHECK_FALSE(v.pass);
    int expected = 0;
    for (const auto& params : sample_parameters(fam, 11)) expected += params.at("heat_of_reaction") > critical ? 1 : 0;
    CHECK(v.unsafe_samples == expected);

    McPolicy lenient{McPolicyKind::Quantile, 1.0};
    CHECK(monte_carlo(fam, spec, ambient(model), plan, horizon, dt, 11, lenient).pass);
  }
  SUBCASE("samples are deterministic, in range and well spread") {
    UncertainParameterSet fam{base, {{"heat_of_reaction", {3e5, 4e5}}, {"cooling_coeff", {40.0, 60.0}}}, 64};
    auto a = sample_parameters(fam, 3);
    auto b = sample_parameters(fam, 3);
    auto c = sample_parameters(fam, 4);
    CHECK(a == b);
    CHECK(a != c);
    int low_half = 0;
    for (const auto& s : a) {
      CHECK(s.at("heat_of_reaction") >= 3e5);
      CHECK(s.at("heat_of_reaction") < 4e5);
      CHECK(s.at("cooling_coeff") >= 40.0);
      CHECK(s.at("cooling_coeff") < 60.0);
      low_half += s.at("heat_of_reaction") < 3.5e5 ? 1 : 0;
    }
    // Indices 1..64 in base 2 are 63 points on a 1/64 lattice plus 1/128, so
    // either half holds 31 to 33 of them under any rotation.
    CHECK(low_half >= 31);
    CHECK(low_half <= 33);
  }
}

TEST_CASE("reconcile") {
  auto model = reactor_model(nominal_reactor(), kPassive);
  TwinState twin{ambient(model), 0.0, false};
  const Eigen::VectorXd tol = vec({0.3, 0.01, 1.0, 1.0});
  auto predicted = model.state(vec({50.0, 0.1, 101.0, 0.0}));

  auto r = reconcile(twin, predicted, predicted, tol, 1.0);
  CHECK(r.divergent_dims.empty());
  CHECK_FALSE(twin.restricted);
  CHECK(twin.last_sync_time == 1.0);

  auto observed = model.state(vec({50.6, 0.1, 101.0, 0.0}));
  r = reconcile(twin, observed, predicted, tol, 2.0);
  CHECK(r.divergent_dims == std::vector<std::string>{"T"});
  CHECK(twin.restricted);
  CHECK(twin.mirrored.values() == observed.values());

  // A later agreeing sync does not clear the restriction.
  r = reconcile(twin, predicted, predicted, tol, 3.0);
  CHECK(r.restricted);
  reset_restriction(twin);
  CHECK_FALSE(twin.restricted);
  CHECK_THROWS_AS(reconcile(twin, predicted, predicted, vec({1.0}), 4.0), DimensionMismatch);
}
