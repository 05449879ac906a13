#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "labguard/plants.hpp"
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

// Exact solution of x' = A x + B u + c under constant u via the augmented
// matrix exponential; independent of the integrator under test.
Eigen::VectorXd affine_exact(const Eigen::MatrixXd& a, const Eigen::VectorXd& forcing, const Eigen::VectorXd& x0,
                             double t) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = a;
  aug.topRightCorner(n, 1) = forcing;
  Eigen::VectorXd z(n + 1);
  z.head(n) = x0;
  z(n) = 1.0;
  const Eigen::MatrixXd e = (aug * t).exp();
  return (e * z).head(n);
}

// Reactor (T, C) as an affine system for the exact oracle.
void reactor_affine(const ThermalReactorParams& p, double u, Eigen::MatrixXd& a, Eigen::VectorXd& c) {
  const double gain = p.rate_coeff * p.heat_of_reaction / (p.mass * p.heat_capacity);
  const double cool = p.cooling_coeff / (p.mass * p.heat_capacity);
  a.resize(2, 2);
  a << -cool, gain, 0.0, -p.catalyst_decay;
  c = vec({cool * p.coolant_temp, u});
}

ControlPolicy constant(const ControlAffineModel& model, Eigen::VectorXd u) {
  return [&model, u](double, const StateVector&) { return model.input(u); };
}

}  // namespace

TEST_CASE("reactor dynamics") {
  auto p = nominal_reactor();
  auto model = reactor_model(p);
  CHECK(model.n() == 2);
  CHECK(model.m() == 1);

  SUBCASE("equilibrium with no catalyst") {
    auto d = model.xdot(model.state(vec({p.coolant_temp, 0.0})), model.input(vec({0.0})));
    CHECK(d.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("adiabatic heating sign") {
    auto q = p;
    q.cooling_coeff = 0.0;
    auto adiabatic = reactor_model(q);
    auto d = adiabatic.xdot(adiabatic.state(vec({40.0, 0.3})), adiabatic.input(vec({0.0})));
    CHECK(d(0) == doctest::Approx(q.rate_coeff * 0.3 * q.heat_of_reaction / (q.mass * q.heat_capacity)));
    CHECK(d(0) > 0.0);
  }
  SUBCASE("injection feeds the catalyst channel only") {
    auto g = model.control_matrix(vec({30.0, 0.1}));
    CHECK(g(0, 0) == 0.0);
    CHECK(g(1, 0) == 1.0);
  }
  SUBCASE("passive dims have zero dynamics") {
    auto with_p = reactor_model(p, {{"P", "kPa"}});
    auto d = with_p.xdot(with_p.state(vec({60.0, 0.2, 101.0})), with_p.input(vec({0.01})));
    CHECK(d.size() == 3);
    CHECK(d(2) == 0.0);
  }
  SUBCASE("parameter validation") {
    auto bad = p;
    bad.mass = 0.0;
    CHECK_THROWS_AS(reactor_model(bad), InvalidArgument);
    CHECK_THROWS_AS(ThermalReactorParams::from_params({{"mass", 1.0}}), MissingParameter);
  }
}

TEST_CASE("bolus peak exceeds the limit, matching the exact solution") {
  auto p = nominal_reactor();
  auto model = reactor_model(p);
  const double dt = 0.01;
  // 1 mol of catalyst over 10 s, then nothing.
  auto policy = [&](double t, const StateVector&) { return model.input(vec({t < 10.0 - 1e-9 ? 0.1 : 0.0})); };
  auto traj = simulate(model, model.state(vec({25.0, 0.0})), policy, 300.0, dt);
  double peak = 0.0;
  for (const auto& s : traj.states) peak = std::max(peak, s[0]);
  CHECK(peak > 100.0);

  Eigen::MatrixXd a;
  Eigen::VectorXd c;
  reactor_affine(p, 0.1, a, c);
  const Eigen::VectorXd x10 = affine_exact(a, c, vec({25.0, 0.0}), 10.0);
  reactor_affine(p, 0.0, a, c);
  double exact_peak = 0.0;
  for (int k = 0; k <= 2900; ++k) exact_peak = std::max(exact_peak, affine_exact(a, c, x10, 0.1 * k)(0));
  CHECK(peak == doctest::Approx(exact_peak).epsilon(1e-6));
  CHECK(exact_peak > 250.0);
}

TEST_CASE("step") {
  SUBCASE("constant derivative is exact") {
    auto model = linear_model(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Identity(1, 1));
    auto next = step(model, model.state(vec({0.0})), model.input(vec({2.0})), 0.5);
    CHECK(next[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("cooling-only decay matches the closed form") {
    auto p = nominal_reactor();
    auto model = reactor_model(p);
    StateVector x = model.state(vec({90.0, 0.0}));
    const double dt = 0.01;
    for (int k = 0; k < 10000; ++k) x = step(model, x, model.input(vec({0.0})), dt);
    const double t = 100.0;
    const double exact = p.coolant_temp + (90.0 - p.coolant_temp) * std::exp(-p.cooling_coeff * t / (p.mass * p.heat_capacity));
    CHECK(std::abs(x[0] - exact) <= 1e-6);
  }
  SUBCASE("fourth-order convergence versus first-order Euler") {
    Eigen::MatrixXd a(2, 2);
    a << 0.0, 1.0, -4.0, -0.4;
    auto model = linear_model(a, Eigen::MatrixXd::Zero(2, 1));
    const Eigen::VectorXd x0 = vec({1.0, 0.0});
    const double horizon = 2.0;
    const Eigen::VectorXd exact = (a * horizon).exp() * x0;
    auto rk4_error = [&](double dt) {
      Eigen::VectorXd x = x0;
      for (std::size_t k = 0; k < step_count(horizon, dt); ++k) x = rk4_step(model, x, vec({0.0}), dt);
      return (x - exact).norm();
    };
    auto euler_error = [&](double dt) {
      Eigen::VectorXd x = x0;
      for (std::size_t k = 0; k < step_count(horizon, dt); ++k) x = x + dt * (a * x);
      return (x - exact).norm();
    };
    const double rk4_ratio = rk4_error(0.02) / rk4_error(0.01);
    const double euler_ratio = euler_error(0.02) / euler_error(0.01);
    CHECK(rk4_ratio == doctest::Approx(16.0).epsilon(0.1));
    CHECK(euler_ratio == doctest::Approx(2.0).epsilon(0.1));
    CHECK(rk4_error(0.01) < 1e-4 * euler_error(0.01));
  }
  SUBCASE("single-step error is fifth order against the matrix exponential") {
    Eigen::MatrixXd a(2, 2);
    a << -0.5, 2.0, -2.0, -0.5;
    auto model = linear_model(a, Eigen::MatrixXd::Zero(2, 1));
    const Eigen::VectorXd x0 = vec({1.0, -0.5});
    auto local = [&](double dt) { return (rk4_step(model, x0, vec({0.0}), dt) - (a * dt).exp() * x0).norm(); };
    CHECK(local(0.1) / local(0.05) == doctest::Approx(32.0).epsilon(0.1));
  }
  SUBCASE("divergence is reported") {
    ControlAffineModel blowup(
        "blowup", make_layout({{"x", ""}}), make_layout({{"u", ""}}),
        [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array().square() * 1e300; },
        [](const Eigen::VectorXd&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Zero(1, 1); });
    CHECK_THROWS_AS(step(blowup, blowup.state(vec({1e10})), blowup.input(vec({0.0})), 1.0), NumericalDivergence);
    try {
      simulate(blowup, blowup.state(vec({1e3})), constant(blowup, vec({0.0})), 1.0, 0.1);
      FAIL("expected divergence");
    } catch (const NumericalDivergence& e) {
      CHECK(e.step_index() >= 1);
    }
  }
  SUBCASE("bad dt") {
    auto model = robot_model({});
    CHECK_THROWS_AS(step(model, model.state(vec({1.0, 1.0})), model.input(vec({0.0, 0.0})), 0.0), InvalidArgument);
  }
}

TEST_CASE("simulate") {
  SUBCASE("zero dynamics stay constant") {
    auto model = linear_model(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(3, 1));
    auto traj = simulate(model, model.state(vec({1.0, -2.0, 3.0})), constant(model, vec({5.0})), 1.0, 0.1);
    CHECK(traj.states.size() == 11);
    for (const auto& s : traj.states) CHECK(s.values() == vec({1.0, -2.0, 3.0}));
  }
  SUBCASE("robot constant velocity") {
    auto model = robot_model({});
    auto traj = simulate(model, model.state(vec({0.5, -1.0})), constant(model, vec({1.0, 0.0})), 2.0, 0.1);
    CHECK(traj.states.size() == 21);
    CHECK(traj.controls.size() == 20);
    CHECK(traj.states.back()[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(traj.states.back()[1] == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("robot under zero policy is exactly constant") {
    auto model = robot_model({});
    auto traj = simulate(model, model.state(vec({0.25, 3.0})), constant(model, vec({0.0, 0.0})), 5.0, 0.01);
    for (const auto& s : traj.states) CHECK(s.values() == vec({0.25, 3.0}));
  }
  SUBCASE("reactor relaxes monotonically toward coolant temperature") {
    auto p = nominal_reactor();
    auto model = reactor_model(p);
    for (double t0 : {90.0, 5.0}) {
      auto traj = simulate(model, model.state(vec({t0, 0.0})), constant(model, vec({0.0})), 500.0, 0.05);
      for (std::size_t k = 1; k < traj.states.size(); ++k) {
        const double prev = std::abs(traj.states[k - 1][0] - p.coolant_temp);
        const double cur = std::abs(traj.states[k][0] - p.coolant_temp);
        CHECK(cur <= prev);
      }
    }
  }
  SUBCASE("step counts") {
    CHECK(step_count(0.3, 0.1) == 3);
    CHECK(step_count(1.0, 0.3) == 4);
    CHECK_THROWS_AS(step_count(0.05, 0.1), InvalidArgument);
  }
}

TEST_CASE("uncertain parameter sets") {
  UncertainParameterSet ups{{"reactor", nominal_reactor().to_params(), {}}, {{"heat_of_reaction", {3e5, 4e5}}}, 8};
  CHECK_NOTHROW(ups.validate());
  ups.intervals["heat_of_reaction"] = {3.4e5, 4e5};
  CHECK_THROWS_AS(ups.validate(), InvalidArgument);
  ups.intervals = {{"unknown", {0.0, 1.0}}};
  CHECK_THROWS_AS(ups.validate(), MissingParameter);
}
