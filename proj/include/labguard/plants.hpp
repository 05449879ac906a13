#pragma once

// Control-affine plant models  x' = f(x) + g(x) u  and fixed-step integration.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "labguard/state.hpp"

namespace labguard {

using DriftFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using ControlMatrixFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

class ControlAffineModel {
 public:
  ControlAffineModel(std::string name, LayoutPtr state_layout, LayoutPtr input_layout, DriftFn drift,
                     ControlMatrixFn control_matrix);

  const std::string& name() const { return name_; }
  std::size_t n() const { return state_layout_->size(); }
  std::size_t m() const { return input_layout_->size(); }
  const LayoutPtr& state_layout() const { return state_layout_; }
  const LayoutPtr& input_layout() const { return input_layout_; }

  // Unchecked evaluation for inner loops.
  Eigen::VectorXd drift(const Eigen::VectorXd& x) const { return drift_(x); }
  Eigen::MatrixXd control_matrix(const Eigen::VectorXd& x) const { return control_matrix_(x); }
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

  // Checked x' with shape and finiteness validation.
  Eigen::VectorXd xdot(const StateVector& x, const ControlInput& u) const;

  StateVector state(Eigen::VectorXd values) const { return StateVector(state_layout_, std::move(values)); }
  ControlInput input(Eigen::VectorXd values) const { return ControlInput(input_layout_, std::move(values)); }

 private:
  std::string name_;
  LayoutPtr state_layout_;
  LayoutPtr input_layout_;
  DriftFn drift_;
  ControlMatrixFn control_matrix_;
};

using ParamMap = std::map<std::string, double>;

// Lumped exothermic reactor. Temperatures share one unit (degC in the shipped
// scenarios); only differences enter the heat balance.
struct ThermalReactorParams {
  double mass = 1.0;              // kg
  double heat_capacity = 4000.0;  // J/(kg K)
  double rate_coeff = 0.1;        // 1/s
  double heat_of_reaction = 0.0;  // J/mol, positive = exothermic
  double cooling_coeff = 0.0;     // W/K
  double coolant_temp = 25.0;
  double catalyst_decay = 0.0;    // 1/s

  void validate() const;
  ParamMap to_params() const;
  static ThermalReactorParams from_params(const ParamMap& p);

  // dT/dt with no injection, and the catalyst heating gain k*dH/(m c_p).
  double heating_gain() const { return rate_coeff * heat_of_reaction / (mass * heat_capacity); }
  double cooling_rate() const { return cooling_coeff / (mass * heat_capacity); }
};

struct PlanarRobotParams {
  Eigen::Vector2d obstacle = Eigen::Vector2d::Zero();  // m
  double r_safe = 0.5;                                 // m
  Eigen::Vector2d velocity_limit{1.0, 1.0};            // m/s per axis

  void validate() const;
  ParamMap to_params() const;
  static PlanarRobotParams from_params(const ParamMap& p);
};

struct GantryParams {
  Eigen::Vector3d velocity_limit{0.2, 0.2, 0.1};  // m/s per axis

  void validate() const;
  ParamMap to_params() const;
  static GantryParams from_params(const ParamMap& p);
};

// State (T, C_cat [, passive...]), input u_cat = catalyst injection rate.
// Passive dims are carried along with zero dynamics (monitored channels such
// as vessel pressure that the heat balance does not drive).
ControlAffineModel reactor_model(const ThermalReactorParams& params, const std::vector<Dim>& passive_dims = {});

// Single integrator p' = u on the plane.
ControlAffineModel robot_model(const PlanarRobotParams& params);

// Cartesian pipetting gantry, single integrator in (px, py, pz).
ControlAffineModel gantry_model(const GantryParams& params);

// x' = A x + B u over generic dims x0..x{n-1}, u0..u{m-1}.
ControlAffineModel linear_model(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct PlantSpec {
  std::string kind;  // reactor | robot | gantry
  ParamMap params;
  std::vector<Dim> passive_dims;
};

ControlAffineModel make_model(const PlantSpec& spec);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct UncertainParameterSet {
  PlantSpec base;
  std::map<std::string, Interval> intervals;
  int sample_count = 64;

  void validate() const;
};

// One classical RK4 step with u held constant over dt.
Eigen::VectorXd rk4_step(const ControlAffineModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         double dt);

// Checked RK4 step; throws NumericalDivergence on a non-finite result.
StateVector step(const ControlAffineModel& model, const StateVector& x, const ControlInput& u, double dt);

using ControlPolicy = std::function<ControlInput(double t, const StateVector& x)>;

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<ControlInput> controls;  // one per step, controls[k] applied on [t_k, t_k+1)
};

std::size_t step_count(double horizon, double dt);

Trajectory simulate(const ControlAffineModel& model, const StateVector& x0, const ControlPolicy& policy,
                    double horizon, double dt);

}  // namespace labguard
