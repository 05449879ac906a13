#pragma once

// Control barrier function machinery: Lie derivatives, the admissibility
// condition over a box of controls, and the minimally invasive QP filter.

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include "labguard/plants.hpp"
#include "labguard/qp.hpp"
#include "labguard/state.hpp"

namespace labguard {

// alpha(h) = gamma * h
class ClassKFunction {
 public:
  explicit ClassKFunction(double gamma = 1.0);
  double gamma() const { return gamma_; }
  double operator()(double h) const { return gamma_ * h; }

 private:
  double gamma_;
};

struct LieDerivatives {
  double lfh = 0.0;
  Eigen::VectorXd lgh;  // length m
};

LieDerivatives lie_derivatives(const ControlAffineModel& model, const BarrierFunction& b, const StateVector& x);

struct AdmissibilityReport {
  double h = 0.0;
  double lfh = 0.0;
  Eigen::VectorXd lgh;
  double alpha_h = 0.0;
  double sup = 0.0;           // sup over the box of lfh + lgh . u
  Eigen::VectorXd maximizer;  // a vertex attaining sup
  bool admissible = false;    // sup >= -alpha(h)
};

AdmissibilityReport cbf_admissible(const ControlAffineModel& model, const BarrierFunction& b, const StateVector& x,
                                   const ControlBounds& bounds, const ClassKFunction& alpha);

// One linearized barrier condition: lfh + lgh . u + alpha_h >= 0.
struct CbfRow {
  std::string label;
  double lfh = 0.0;
  Eigen::VectorXd lgh;
  double alpha_h = 0.0;

  double residual(const Eigen::VectorXd& u) const { return lfh + lgh.dot(u) + alpha_h; }
};

struct QpProblem {
  LayoutPtr input_layout;
  Eigen::VectorXd u_ref;
  ControlBounds bounds;
  std::vector<CbfRow> rows;
};

// Per-barrier gain and margin inflation. Barriers are enforced on h - eta.
struct FilterConfig {
  ClassKFunction default_alpha{1.0};
  std::map<std::string, ClassKFunction> alpha;
  std::map<std::string, double> eta;
  double tol = 1e-9;
  int max_iterations = 200;

  const ClassKFunction& alpha_for(const std::string& label) const;
  double eta_for(const std::string& label) const;
};

enum class FilterStatus { Ok, Infeasible };

struct FilterResult {
  ControlInput u_star;
  double correction_norm = 0.0;
  std::vector<std::string> active_labels;  // CBF rows tight at u_star, in barrier order
  FilterStatus status = FilterStatus::Ok;
  int iterations = 0;
  KktResiduals kkt;
};

QpProblem assemble_qp(const ControlAffineModel& model, const SafeSet& safe_set, const StateVector& x,
                      const ControlInput& u_ai, const ControlBounds& bounds, const FilterConfig& config);

// status Infeasible leaves u_star at the box projection of u_ref; callers must
// not apply it and go to their safe-hold path instead.
FilterResult solve_qp(const QpProblem& qp, double tol, int max_iterations = 200);

FilterResult filter_control(const ControlAffineModel& model, const SafeSet& safe_set, const StateVector& x,
                            const ControlInput& u_ai, const ControlBounds& bounds, const FilterConfig& config);

}  // namespace labguard
