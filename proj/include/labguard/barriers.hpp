#pragma once

// Barrier functions shipped with the plant models. Each one carries an
// analytic gradient; finite differences are only used by tests.

#include <Eigen/Dense>

#include <string>

#include "labguard/plants.hpp"
#include "labguard/state.hpp"

namespace labguard {

// h = w . x + offset
BarrierFunction linear_barrier(std::string label, LayoutPtr layout, Eigen::VectorXd weights, double offset,
                               double scale = 1.0);

// h_T = T_max - T. Scale defaults to the headroom T_max - T_coolant when given.
BarrierFunction thermal_barrier(LayoutPtr layout, double t_max, double scale);

// Temperature headroom minus the rise predicted over `lookahead` seconds at the
// current uninjected heating rate:
//   h = (T_max - T) - lookahead * (k C dH - U_A (T - T_cool)) / (m c_p)
// h >= 0 is the rate condition dT/dt <= (T_max - T) / lookahead. It is the
// barrier through which the injection channel acts on temperature; holding it
// keeps h_T >= 0 as long as lookahead >= m c_p / U_A.
BarrierFunction thermal_rate_barrier(LayoutPtr layout, const ThermalReactorParams& params, double t_max,
                                     double lookahead, double scale);

// h = C_max - C_cat
BarrierFunction catalyst_cap_barrier(LayoutPtr layout, double c_max);

// h = |p - p_obs|^2 - r_safe^2 over dims (px, py).
BarrierFunction collision_barrier(LayoutPtr layout, const Eigen::Vector2d& obstacle, double r_safe);

}  // namespace labguard
