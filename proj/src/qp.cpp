#include "labguard/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "labguard/error.hpp"

namespace labguard {

double KktResiduals::max() const { return std::max({stationarity, primal, dual, complementarity}); }

namespace {

// All constraints stacked as rows of a_full u >= b_full.
struct Stacked {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

Stacked stack(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::MatrixXd& a,
              const Eigen::VectorXd& b) {
  const Eigen::Index m = lower.size();
  const Eigen::Index r = a.rows();
  Stacked s;
  s.a = Eigen::MatrixXd::Zero(r + 2 * m, m);
  s.b = Eigen::VectorXd::Zero(r + 2 * m);
  if (r > 0) {
    s.a.topRows(r) = a;
    s.b.head(r) = b;
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    s.a(r + 2 * k, k) = 1.0;
    s.b(r + 2 * k) = lower(k);
    s.a(r + 2 * k + 1, k) = -1.0;
    s.b(r + 2 * k + 1) = -upper(k);
  }
  return s;
}

Eigen::MatrixXd active_normals(const Stacked& s, const std::vector<int>& active) {
  Eigen::MatrixXd n(s.a.cols(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t j = 0; j < active.size(); ++j) n.col(static_cast<Eigen::Index>(j)) = s.a.row(active[j]).transpose();
  return n;
}

}  // namespace

KktResiduals kkt_residuals(const Eigen::VectorXd& u_ref, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                           const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& multipliers) {
  const Stacked s = stack(lower, upper, a, b);
  KktResiduals k;
  const Eigen::VectorXd slack = s.a * u - s.b;
  k.stationarity = (u - u_ref - s.a.transpose() * multipliers).cwiseAbs().maxCoeff();
  k.primal = std::max(0.0, -slack.minCoeff());
  k.dual = std::max(0.0, -multipliers.minCoeff());
  k.complementarity = multipliers.cwiseProduct(slack).cwiseAbs().maxCoeff();
  return k;
}

QpSolution solve_projection_qp(const Eigen::VectorXd& u_ref, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                               double tol, int max_iterations) {
  const Eigen::Index m = u_ref.size();
  if (lower.size() != m || upper.size() != m) throw DimensionMismatch("qp: bounds length differs from u_ref");
  if (a.rows() > 0 && a.cols() != m) throw DimensionMismatch("qp: row width differs from u_ref");
  if (a.rows() != b.size()) throw DimensionMismatch("qp: A and b row counts differ");
  if (!(tol > 0.0)) throw InvalidArgument("qp: tol must be positive");

  const Stacked s = stack(lower, upper, a, b);
  const Eigen::Index total = s.a.rows();
  const Eigen::Index r = a.rows();

  QpSolution sol;
  sol.multipliers = Eigen::VectorXd::Zero(total);

  // Box projection: optimal for the bound rows, multipliers from stationarity.
  Eigen::VectorXd x = u_ref.cwiseMax(lower).cwiseMin(upper);
  std::vector<int> active;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (u_ref(k) < lower(k)) {
      active.push_back(static_cast<int>(r + 2 * k));
      sol.multipliers(r + 2 * k) = lower(k) - u_ref(k);
    } else if (u_ref(k) > upper(k)) {
      active.push_back(static_cast<int>(r + 2 * k + 1));
      sol.multipliers(r + 2 * k + 1) = u_ref(k) - upper(k);
    }
  }

  auto scaled_slack = [&](Eigen::Index i) {
    const double norm = s.a.row(i).norm();
    return norm > 0.0 ? (s.a.row(i).dot(x) - s.b(i)) / norm : -s.b(i);
  };

  int iterations = 0;
  for (;;) {
    // Most violated constraint; ties resolved to the lowest index.
    Eigen::Index p = -1;
    double worst = -tol;
    for (Eigen::Index i = 0; i < total; ++i) {
      if (std::find(active.begin(), active.end(), static_cast<int>(i)) != active.end()) continue;
      const double sl = scaled_slack(i);
      if (sl < worst) {
        worst = sl;
        p = i;
      }
    }
    if (p < 0) break;

    const Eigen::VectorXd ap = s.a.row(p).transpose();
    if (ap.norm() == 0.0) {
      // 0 >= b_p with b_p > 0: the row alone is the certificate.
      Eigen::VectorXd y = Eigen::VectorXd::Zero(total);
      y(p) = 1.0;
      sol.status = QpStatus::Infeasible;
      sol.farkas = y;
      break;
    }
    double lambda_p = 0.0;
    bool added = false;
    while (!added) {
      if (++iterations > max_iterations) throw IterationLimit("qp: iteration limit reached");
      Eigen::VectorXd rvec;
      Eigen::VectorXd z = ap;
      if (!active.empty()) {
        const Eigen::MatrixXd n = active_normals(s, active);
        rvec = n.colPivHouseholderQr().solve(ap);
        z = ap - n * rvec;
      }
      // Dual step length limited by multipliers that would turn negative.
      double t_dual = std::numeric_limits<double>::infinity();
      std::size_t blocking = 0;
      for (std::size_t j = 0; j < active.size(); ++j) {
        const double rj = rvec(static_cast<Eigen::Index>(j));
        if (rj > 1e-14) {
          const double tj = sol.multipliers(active[j]) / rj;
          if (tj < t_dual) {
            t_dual = tj;
            blocking = j;
          }
        }
      }
      const bool in_span = z.norm() <= 1e-12 * ap.norm();
      if (in_span) {
        if (!std::isfinite(t_dual)) {
          Eigen::VectorXd y = Eigen::VectorXd::Zero(total);
          y(p) = 1.0;
          for (std::size_t j = 0; j < active.size(); ++j) y(active[j]) = std::max(0.0, -rvec(static_cast<Eigen::Index>(j)));
          sol.status = QpStatus::Infeasible;
          sol.farkas = y;
          break;
        }
        for (std::size_t j = 0; j < active.size(); ++j) sol.multipliers(active[j]) -= t_dual * rvec(static_cast<Eigen::Index>(j));
        lambda_p += t_dual;
        sol.multipliers(active[blocking]) = 0.0;
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(blocking));
        continue;
      }
      const double slack_p = ap.dot(x) - s.b(p);
      const double t_primal = -slack_p / ap.dot(z);
      const double t = std::min(t_primal, t_dual);
      x += t * z;
      for (std::size_t j = 0; j < active.size(); ++j) sol.multipliers(active[j]) -= t * rvec(static_cast<Eigen::Index>(j));
      lambda_p += t;
      if (t_primal <= t_dual) {
        active.push_back(static_cast<int>(p));
        sol.multipliers(p) = lambda_p;
        added = true;
      } else {
        sol.multipliers(active[blocking]) = 0.0;
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(blocking));
      }
    }
    if (sol.status == QpStatus::Infeasible) break;
  }
  sol.iterations = iterations;

  if (sol.status == QpStatus::Infeasible) {
    // Certification pass: y >= 0, y^T A = 0, y^T b > 0 proves no u satisfies all rows.
    const Eigen::VectorXd& y = *sol.farkas;
    const double scale = std::max(1.0, s.a.cwiseAbs().maxCoeff()) * std::max(1.0, y.cwiseAbs().maxCoeff());
    const double combo = (s.a.transpose() * y).cwiseAbs().maxCoeff();
    const double gap = y.dot(s.b);
    if (y.minCoeff() < 0.0 || combo > 1e-9 * scale || !(gap > 0.0)) {
      throw IterationLimit("qp: infeasibility certificate failed verification");
    }
    sol.u = x;
    sol.multipliers.setZero();
    return sol;
  }

  sol.u = x;
  std::sort(active.begin(), active.end());
  sol.active = active;
  sol.kkt = kkt_residuals(u_ref, lower, upper, a, b, sol.u, sol.multipliers);
  return sol;
}

}  // namespace labguard
