#include "labguard/cbf.hpp"

#include <cmath>

namespace labguard {

ClassKFunction::ClassKFunction(double gamma) : gamma_(gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("class-K gain must be positive");
}

LieDerivatives lie_derivatives(const ControlAffineModel& model, const BarrierFunction& b, const StateVector& x) {
  require_same_layout(*model.state_layout(), *x.layout(), "lie derivative state");
  require_same_layout(*b.layout(), *x.layout(), "lie derivative barrier");
  const Eigen::VectorXd grad = b.gradient_raw(x.values());
  const Eigen::VectorXd f = model.drift(x.values());
  const Eigen::MatrixXd g = model.control_matrix(x.values());
  if (grad.size() != f.size() || g.rows() != f.size() || static_cast<std::size_t>(g.cols()) != model.m()) {
    throw DimensionMismatch("lie derivative: inconsistent shapes for barrier '" + b.label() + "'");
  }
  LieDerivatives out{grad.dot(f), g.transpose() * grad};
  if (!std::isfinite(out.lfh) || !out.lgh.allFinite()) {
    throw NumericalDivergence("non-finite Lie derivative for barrier '" + b.label() + "'");
  }
  return out;
}

AdmissibilityReport cbf_admissible(const ControlAffineModel& model, const BarrierFunction& b, const StateVector& x,
                                   const ControlBounds& bounds, const ClassKFunction& alpha) {
  if (bounds.size() != model.m()) throw DimensionMismatch("admissibility: bounds do not match input dims");
  const LieDerivatives ld = lie_derivatives(model, b, x);
  AdmissibilityReport rep;
  rep.h = eval_barrier(b, x);
  rep.lfh = ld.lfh;
  rep.lgh = ld.lgh;
  rep.alpha_h = alpha(rep.h);
  rep.maximizer.resize(ld.lgh.size());
  for (Eigen::Index k = 0; k < ld.lgh.size(); ++k) {
    rep.maximizer(k) = ld.lgh(k) > 0.0 ? bounds.upper()(k) : bounds.lower()(k);
  }
  // Sequential sum in axis order so the value is reproducible bit for bit.
  rep.sup = ld.lfh;
  for (Eigen::Index k = 0; k < ld.lgh.size(); ++k) rep.sup += ld.lgh(k) * rep.maximizer(k);
  rep.admissible = rep.sup >= -rep.alpha_h;
  return rep;
}

const ClassKFunction& FilterConfig::alpha_for(const std::string& label) const {
  auto it = alpha.find(label);
  return it == alpha.end() ? default_alpha : it->second;
}

double FilterConfig::eta_for(const std::string& label) const {
  auto it = eta.find(label);
  return it == eta.end() ? 0.0 : it->second;
}

QpProblem assemble_qp(const ControlAffineModel& model, const SafeSet& safe_set, const StateVector& x,
                      const ControlInput& u_ai, const ControlBounds& bounds, const FilterConfig& config) {
  require_same_layout(*model.input_layout(), *u_ai.layout(), "filter input");
  if (bounds.size() != model.m()) throw DimensionMismatch("filter: bounds do not match input dims");
  QpProblem qp{model.input_layout(), u_ai.values(), bounds, {}};
  qp.rows.reserve(safe_set.size());
  for (const auto& b : safe_set.barriers()) {
    const LieDerivatives ld = lie_derivatives(model, b, x);
    const double h = eval_barrier(b, x) - config.eta_for(b.label());
    qp.rows.push_back({b.label(), ld.lfh, ld.lgh, config.alpha_for(b.label())(h)});
  }
  return qp;
}

FilterResult solve_qp(const QpProblem& qp, double tol, int max_iterations) {
  const Eigen::Index m = qp.u_ref.size();
  const Eigen::Index r = static_cast<Eigen::Index>(qp.rows.size());
  Eigen::MatrixXd a(r, m);
  Eigen::VectorXd b(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const CbfRow& row = qp.rows[static_cast<std::size_t>(i)];
    if (row.lgh.size() != m) throw DimensionMismatch("qp row '" + row.label + "' has wrong width");
    a.row(i) = row.lgh.transpose();
    b(i) = -row.lfh - row.alpha_h;
  }
  const QpSolution sol = solve_projection_qp(qp.u_ref, qp.bounds.lower(), qp.bounds.upper(), a, b, tol, max_iterations);

  FilterResult out{ControlInput(qp.input_layout, sol.u), 0.0, {}, FilterStatus::Ok, sol.iterations, sol.kkt};
  if (sol.status == QpStatus::Infeasible) {
    out.status = FilterStatus::Infeasible;
    out.u_star = ControlInput(qp.input_layout, qp.bounds.project(qp.u_ref));
    out.correction_norm = (out.u_star.values() - qp.u_ref).norm();
    return out;
  }
  out.correction_norm = (sol.u - qp.u_ref).norm();
  for (Eigen::Index i = 0; i < r; ++i) {
    const double scale = std::max(1.0, a.row(i).norm());
    if (std::abs(a.row(i).dot(sol.u) - b(i)) <= 10.0 * tol * scale) {
      out.active_labels.push_back(qp.rows[static_cast<std::size_t>(i)].label);
    }
  }
  return out;
}

FilterResult filter_control(const ControlAffineModel& model, const SafeSet& safe_set, const StateVector& x,
                            const ControlInput& u_ai, const ControlBounds& bounds, const FilterConfig& config) {
  const QpProblem qp = assemble_qp(model, safe_set, x, u_ai, bounds, config);
  return solve_qp(qp, config.tol, config.max_iterations);
}

}  // namespace labguard
