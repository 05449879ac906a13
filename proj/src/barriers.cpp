#include "labguard/barriers.hpp"

namespace labguard {

BarrierFunction linear_barrier(std::string label, LayoutPtr layout, Eigen::VectorXd weights, double offset,
                               double scale) {
  if (static_cast<std::size_t>(weights.size()) != layout->size()) {
    throw DimensionMismatch("linear barrier weights do not match layout");
  }
  return BarrierFunction(
      std::move(label), layout, [weights, offset](const Eigen::VectorXd& x) { return weights.dot(x) + offset; },
      [weights](const Eigen::VectorXd&) { return weights; }, scale);
}

BarrierFunction thermal_barrier(LayoutPtr layout, double t_max, double scale) {
  const auto n = static_cast<Eigen::Index>(layout->size());
  const auto it = static_cast<Eigen::Index>(layout->require("T"));
  return BarrierFunction(
      "thermal", layout, [=](const Eigen::VectorXd& x) { return t_max - x(it); },
      [=](const Eigen::VectorXd&) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
        g(it) = -1.0;
        return g;
      },
      scale);
}

BarrierFunction thermal_rate_barrier(LayoutPtr layout, const ThermalReactorParams& params, double t_max,
                                     double lookahead, double scale) {
  params.validate();
  if (!(lookahead > 0.0)) throw InvalidArgument("thermal_rate lookahead must be positive");
  const auto n = static_cast<Eigen::Index>(layout->size());
  const auto it = static_cast<Eigen::Index>(layout->require("T"));
  const auto ic = static_cast<Eigen::Index>(layout->require("C_cat"));
  const double gain = params.heating_gain();
  const double cool = params.cooling_rate();
  const double t_cool = params.coolant_temp;
  return BarrierFunction(
      "thermal_rate", layout,
      [=](const Eigen::VectorXd& x) {
        const double rise_rate = gain * x(ic) - cool * (x(it) - t_cool);
        return (t_max - x(it)) - lookahead * rise_rate;
      },
      [=](const Eigen::VectorXd&) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
        g(it) = -1.0 + lookahead * cool;
        g(ic) = -lookahead * gain;
        return g;
      },
      scale);
}

BarrierFunction catalyst_cap_barrier(LayoutPtr layout, double c_max) {
  if (!(c_max > 0.0)) throw InvalidArgument("catalyst cap must be positive");
  const auto n = static_cast<Eigen::Index>(layout->size());
  const auto ic = static_cast<Eigen::Index>(layout->require("C_cat"));
  return BarrierFunction(
      "catalyst_cap", layout, [=](const Eigen::VectorXd& x) { return c_max - x(ic); },
      [=](const Eigen::VectorXd&) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
        g(ic) = -1.0;
        return g;
      },
      c_max);
}

BarrierFunction collision_barrier(LayoutPtr layout, const Eigen::Vector2d& obstacle, double r_safe) {
  if (!(r_safe > 0.0)) throw InvalidArgument("r_safe must be positive");
  const auto n = static_cast<Eigen::Index>(layout->size());
  const auto ix = static_cast<Eigen::Index>(layout->require("px"));
  const auto iy = static_cast<Eigen::Index>(layout->require("py"));
  const double r2 = r_safe * r_safe;
  return BarrierFunction(
      "collision", layout,
      [=](const Eigen::VectorXd& x) {
        const double dx = x(ix) - obstacle.x();
        const double dy = x(iy) - obstacle.y();
        return dx * dx + dy * dy - r2;
      },
      [=](const Eigen::VectorXd& x) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
        g(ix) = 2.0 * (x(ix) - obstacle.x());
        g(iy) = 2.0 * (x(iy) - obstacle.y());
        return g;
      },
      r2);
}

}  // namespace labguard
