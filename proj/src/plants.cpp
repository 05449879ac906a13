#include "labguard/plants.hpp"

#include <cmath>

namespace labguard {

ControlAffineModel::ControlAffineModel(std::string name, LayoutPtr state_layout, LayoutPtr input_layout,
                                       DriftFn drift, ControlMatrixFn control_matrix)
    : name_(std::move(name)),
      state_layout_(std::move(state_layout)),
      input_layout_(std::move(input_layout)),
      drift_(std::move(drift)),
      control_matrix_(std::move(control_matrix)) {
  if (!state_layout_ || !input_layout_) throw InvalidArgument("model '" + name_ + "' without layouts");
  if (!drift_ || !control_matrix_) throw InvalidArgument("model '" + name_ + "' without dynamics");
}

Eigen::VectorXd ControlAffineModel::derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return drift_(x) + control_matrix_(x) * u;
}

Eigen::VectorXd ControlAffineModel::xdot(const StateVector& x, const ControlInput& u) const {
  require_same_layout(*state_layout_, *x.layout(), "model state");
  require_same_layout(*input_layout_, *u.layout(), "model input");
  const Eigen::VectorXd f = drift_(x.values());
  const Eigen::MatrixXd g = control_matrix_(x.values());
  if (static_cast<std::size_t>(f.size()) != n() || static_cast<std::size_t>(g.rows()) != n() ||
      static_cast<std::size_t>(g.cols()) != m()) {
    throw DimensionMismatch("model '" + name_ + "' returned wrong shapes");
  }
  Eigen::VectorXd d = f + g * u.values();
  if (!d.allFinite()) throw NumericalDivergence("model '" + name_ + "' produced non-finite derivative");
  return d;
}

void ThermalReactorParams::validate() const {
  if (!(mass > 0.0)) throw InvalidArgument("reactor mass must be positive");
  if (!(heat_capacity > 0.0)) throw InvalidArgument("reactor heat capacity must be positive");
  if (!(cooling_coeff >= 0.0)) throw InvalidArgument("reactor cooling coefficient must be non-negative");
  if (!(catalyst_decay >= 0.0)) throw InvalidArgument("catalyst decay must be non-negative");
  for (double v : {rate_coeff, heat_of_reaction, coolant_temp}) {
    if (!std::isfinite(v)) throw InvalidArgument("reactor parameters must be finite");
  }
}

ParamMap ThermalReactorParams::to_params() const {
  return {{"mass", mass},
          {"heat_capacity", heat_capacity},
          {"rate_coeff", rate_coeff},
          {"heat_of_reaction", heat_of_reaction},
          {"cooling_coeff", cooling_coeff},
          {"coolant_temp", coolant_temp},
          {"catalyst_decay", catalyst_decay}};
}

namespace {

double need(const ParamMap& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) throw MissingParameter(key);
  return it->second;
}

double get_or(const ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

}  // namespace

ThermalReactorParams ThermalReactorParams::from_params(const ParamMap& p) {
  ThermalReactorParams r;
  r.mass = need(p, "mass");
  r.heat_capacity = need(p, "heat_capacity");
  r.rate_coeff = need(p, "rate_coeff");
  r.heat_of_reaction = need(p, "heat_of_reaction");
  r.cooling_coeff = need(p, "cooling_coeff");
  r.coolant_temp = need(p, "coolant_temp");
  r.catalyst_decay = get_or(p, "catalyst_decay", 0.0);
  r.validate();
  return r;
}

void PlanarRobotParams::validate() const {
  if (!(r_safe > 0.0)) throw InvalidArgument("r_safe must be positive");
  if (!obstacle.allFinite()) throw InvalidArgument("obstacle position must be finite");
  if (!(velocity_limit.minCoeff() > 0.0)) throw InvalidArgument("velocity limits must be positive");
}

ParamMap PlanarRobotParams::to_params() const {
  return {{"obstacle_x", obstacle.x()},
          {"obstacle_y", obstacle.y()},
          {"r_safe", r_safe},
          {"v_max_x", velocity_limit.x()},
          {"v_max_y", velocity_limit.y()}};
}

PlanarRobotParams PlanarRobotParams::from_params(const ParamMap& p) {
  PlanarRobotParams r;
  r.obstacle = {get_or(p, "obstacle_x", 0.0), get_or(p, "obstacle_y", 0.0)};
  r.r_safe = need(p, "r_safe");
  r.velocity_limit = {get_or(p, "v_max_x", 1.0), get_or(p, "v_max_y", 1.0)};
  r.validate();
  return r;
}

void GantryParams::validate() const {
  if (!(velocity_limit.minCoeff() > 0.0)) throw InvalidArgument("velocity limits must be positive");
}

ParamMap GantryParams::to_params() const {
  return {{"v_max_x", velocity_limit.x()}, {"v_max_y", velocity_limit.y()}, {"v_max_z", velocity_limit.z()}};
}

GantryParams GantryParams::from_params(const ParamMap& p) {
  GantryParams g;
  g.velocity_limit = {get_or(p, "v_max_x", 0.2), get_or(p, "v_max_y", 0.2), get_or(p, "v_max_z", 0.1)};
  g.validate();
  return g;
}

ControlAffineModel reactor_model(const ThermalReactorParams& params, const std::vector<Dim>& passive_dims) {
  params.validate();
  std::vector<Dim> dims{{"T", "degC"}, {"C_cat", "mol"}};
  dims.insert(dims.end(), passive_dims.begin(), passive_dims.end());
  auto state = make_layout(std::move(dims));
  auto input = make_layout({{"u_cat", "mol/s"}});
  const Eigen::Index n = static_cast<Eigen::Index>(state->size());
  const double gain = params.heating_gain();
  const double cool = params.cooling_rate();
  const double t_cool = params.coolant_temp;
  const double decay = params.catalyst_decay;
  auto drift = [=](const Eigen::VectorXd& x) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    f(0) = gain * x(1) - cool * (x(0) - t_cool);
    f(1) = -decay * x(1);
    return f;
  };
  auto g = [n](const Eigen::VectorXd&) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, 1);
    m(1, 0) = 1.0;
    return m;
  };
  return ControlAffineModel("reactor", state, input, drift, g);
}

ControlAffineModel robot_model(const PlanarRobotParams& params) {
  params.validate();
  auto state = make_layout({{"px", "m"}, {"py", "m"}});
  auto input = make_layout({{"vx", "m/s"}, {"vy", "m/s"}});
  return ControlAffineModel(
      "robot", state, input, [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(2); },
      [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(2, 2); });
}

ControlAffineModel gantry_model(const GantryParams& params) {
  params.validate();
  auto state = make_layout({{"px", "m"}, {"py", "m"}, {"pz", "m"}});
  auto input = make_layout({{"vx", "m/s"}, {"vy", "m/s"}, {"vz", "m/s"}});
  return ControlAffineModel(
      "gantry", state, input, [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(3); },
      [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(3, 3); });
}

ControlAffineModel linear_model(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) throw DimensionMismatch("linear model: A must be n x n, B n x m");
  std::vector<Dim> xs;
  std::vector<Dim> us;
  for (Eigen::Index i = 0; i < a.rows(); ++i) xs.push_back({"x" + std::to_string(i), ""});
  for (Eigen::Index j = 0; j < b.cols(); ++j) us.push_back({"u" + std::to_string(j), ""});
  return ControlAffineModel(
      "linear", make_layout(std::move(xs)), make_layout(std::move(us)),
      [a](const Eigen::VectorXd& x) -> Eigen::VectorXd { return a * x; },
      [b](const Eigen::VectorXd&) -> Eigen::MatrixXd { return b; });
}

ControlAffineModel make_model(const PlantSpec& spec) {
  if (spec.kind == "reactor") return reactor_model(ThermalReactorParams::from_params(spec.params), spec.passive_dims);
  if (spec.kind == "robot") {
    if (!spec.passive_dims.empty()) throw InvalidArgument("robot plant takes no passive dims");
    return robot_model(PlanarRobotParams::from_params(spec.params));
  }
  if (spec.kind == "gantry") {
    if (!spec.passive_dims.empty()) throw InvalidArgument("gantry plant takes no passive dims");
    return gantry_model(GantryParams::from_params(spec.params));
  }
  throw InvalidArgument("unknown plant kind: " + spec.kind);
}

void UncertainParameterSet::validate() const {
  if (sample_count < 1) throw InvalidArgument("sample_count must be >= 1");
  for (const auto& [name, iv] : intervals) {
    auto it = base.params.find(name);
    if (it == base.params.end()) throw MissingParameter(name);
    if (!(iv.low <= it->second && it->second <= iv.high)) {
      throw InvalidArgument("uncertain parameter '" + name + "' base outside [low, high]");
    }
  }
}

Eigen::VectorXd rk4_step(const ControlAffineModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         double dt) {
  const Eigen::VectorXd k1 = model.derivative(x, u);
  const Eigen::VectorXd k2 = model.derivative(x + 0.5 * dt * k1, u);
  const Eigen::VectorXd k3 = model.derivative(x + 0.5 * dt * k2, u);
  const Eigen::VectorXd k4 = model.derivative(x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

StateVector step(const ControlAffineModel& model, const StateVector& x, const ControlInput& u, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("step: dt must be positive");
  require_same_layout(*model.state_layout(), *x.layout(), "step state");
  require_same_layout(*model.input_layout(), *u.layout(), "step input");
  Eigen::VectorXd next = rk4_step(model, x.values(), u.values(), dt);
  if (!next.allFinite()) throw NumericalDivergence("integration produced non-finite state");
  return x.with_values(std::move(next));
}

std::size_t step_count(double horizon, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!(horizon >= dt * (1.0 - 1e-12))) throw InvalidArgument("horizon must be >= dt");
  // Guard against 0.3/0.1 = 2.9999999999999996 style ratios.
  return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

Trajectory simulate(const ControlAffineModel& model, const StateVector& x0, const ControlPolicy& policy,
                    double horizon, double dt) {
  const std::size_t steps = step_count(horizon, dt);
  require_same_layout(*model.state_layout(), *x0.layout(), "simulate");
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.controls.reserve(steps);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    ControlInput u = policy(t, traj.states.back());
    require_same_layout(*model.input_layout(), *u.layout(), "simulate policy");
    Eigen::VectorXd next = rk4_step(model, traj.states.back().values(), u.values(), dt);
    if (!next.allFinite()) {
      throw NumericalDivergence("simulation diverged at step " + std::to_string(k + 1), k + 1);
    }
    traj.controls.push_back(std::move(u));
    traj.states.push_back(x0.with_values(std::move(next)));
    traj.times.push_back(static_cast<double>(k + 1) * dt);
  }
  return traj;
}

}  // namespace labguard
