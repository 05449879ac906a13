#pragma once

// Dense active-set solver for the projection QP
//
//   minimize   |u - u_ref|^2
//   subject to A u >= b,  lower <= u <= upper
//
// sized for safety filtering (a handful of inputs, a dozen rows). Dual
// active-set iteration (Goldfarb-Idnani with identity Hessian) started from
// the box projection of u_ref, which is already optimal for the bound rows.

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace labguard {

enum class QpStatus { Optimal, Infeasible };

struct KktResiduals {
  double stationarity = 0.0;     // |u - u_ref - sum lambda_i a_i|_inf
  double primal = 0.0;           // max(0, b_i - a_i u)
  double dual = 0.0;             // max(0, -lambda_i)
  double complementarity = 0.0;  // max |lambda_i (a_i u - b_i)|

  double max() const;
};

struct QpSolution {
  QpStatus status = QpStatus::Optimal;
  Eigen::VectorXd u;
  // Constraint indices: 0..rows-1 general rows, then per axis k the lower
  // bound at rows + 2k and the upper bound at rows + 2k + 1.
  std::vector<int> active;
  Eigen::VectorXd multipliers;  // one per constraint, zero when inactive
  int iterations = 0;
  KktResiduals kkt;
  // For infeasible problems: y >= 0 with y^T A_full = 0 and y^T b_full > 0.
  std::optional<Eigen::VectorXd> farkas;
};

// Throws IterationLimit when max_iterations is exceeded or an infeasibility
// certificate fails verification.
QpSolution solve_projection_qp(const Eigen::VectorXd& u_ref, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                               double tol = 1e-9, int max_iterations = 200);

KktResiduals kkt_residuals(const Eigen::VectorXd& u_ref, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                           const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& multipliers);

}  // namespace labguard
