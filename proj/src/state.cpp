#include "labguard/state.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace labguard {

Layout::Layout(std::vector<Dim> dims) : dims_(std::move(dims)) {
  std::set<std::string> seen;
  for (const auto& d : dims_) {
    if (d.name.empty()) throw InvalidArgument("dimension with empty name");
    if (!seen.insert(d.name).second) throw InvalidArgument("duplicate dimension: " + d.name);
  }
}

std::optional<std::size_t> Layout::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Layout::require(std::string_view name) const {
  auto i = index_of(name);
  if (!i) throw DimensionMismatch("no dimension named '" + std::string(name) + "'");
  return *i;
}

bool Layout::same_as(const Layout& other) const {
  if (this == &other) return true;
  if (dims_.size() != other.dims_.size()) return false;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i].name != other.dims_[i].name) return false;
  }
  return true;
}

LayoutPtr make_layout(std::vector<Dim> dims) { return std::make_shared<const Layout>(std::move(dims)); }

void require_same_layout(const Layout& a, const Layout& b, std::string_view context) {
  if (!a.same_as(b)) {
    throw DimensionMismatch(std::string(context) + ": layouts differ (" + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()) + " dims)");
  }
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

ControlBounds::ControlBounds(Eigen::VectorXd lower, Eigen::VectorXd upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) throw DimensionMismatch("bounds: lower/upper length differ");
  if (!lower_.allFinite() || !upper_.allFinite()) throw InvalidArgument("bounds must be finite");
  for (Eigen::Index k = 0; k < lower_.size(); ++k) {
    if (lower_(k) > upper_(k)) throw InvalidArgument("bounds: lower > upper at axis " + std::to_string(k));
  }
}

bool ControlBounds::contains(const Eigen::VectorXd& u, double tol) const {
  if (u.size() != lower_.size()) return false;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    if (u(k) < lower_(k) - tol || u(k) > upper_(k) + tol) return false;
  }
  return true;
}

Eigen::VectorXd ControlBounds::project(const Eigen::VectorXd& u) const {
  if (u.size() != lower_.size()) throw DimensionMismatch("bounds: projection of wrong length");
  return u.cwiseMax(lower_).cwiseMin(upper_);
}

BarrierFunction::BarrierFunction(std::string label, LayoutPtr layout, ScalarFn value,
                                 GradientFn gradient, double scale)
    : label_(std::move(label)),
      layout_(std::move(layout)),
      value_(std::move(value)),
      gradient_(std::move(gradient)),
      scale_(scale) {
  if (label_.empty()) throw InvalidArgument("barrier without label");
  if (!layout_) throw InvalidArgument("barrier '" + label_ + "' without layout");
  if (!value_ || !gradient_) throw InvalidArgument("barrier '" + label_ + "' missing value or gradient");
  if (!(scale_ > 0.0) || !std::isfinite(scale_)) {
    throw InvalidArgument("barrier '" + label_ + "' scale must be positive");
  }
}

OddConstraint::OddConstraint(std::string label, LayoutPtr layout, ScalarFn value)
    : label_(std::move(label)), layout_(std::move(layout)), value_(std::move(value)) {
  if (label_.empty()) throw InvalidArgument("constraint without label");
  if (!layout_ || !value_) throw InvalidArgument("constraint '" + label_ + "' incomplete");
}

SafeSet::SafeSet(std::vector<BarrierFunction> barriers) : barriers_(std::move(barriers)) {
  if (barriers_.empty()) throw InvalidArgument("safe set needs at least one barrier");
  std::set<std::string> labels;
  for (const auto& b : barriers_) {
    if (!labels.insert(b.label()).second) throw InvalidArgument("duplicate barrier label: " + b.label());
  }
}

const BarrierFunction* SafeSet::find(std::string_view label) const {
  for (const auto& b : barriers_) {
    if (b.label() == label) return &b;
  }
  return nullptr;
}

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Chemical: return "chemical";
    case Domain::Biological: return "biological";
    case Domain::Materials: return "materials";
    case Domain::Generic: return "generic";
  }
  return "generic";
}

Domain domain_from_string(std::string_view s) {
  if (s == "chemical") return Domain::Chemical;
  if (s == "biological") return Domain::Biological;
  if (s == "materials") return Domain::Materials;
  if (s == "generic") return Domain::Generic;
  throw InvalidArgument("unknown domain: " + std::string(s));
}

OddSpec::OddSpec(std::vector<OddConstraint> constraints, std::optional<SafeSet> safe_set, Domain domain)
    : constraints_(std::move(constraints)), safe_set_(std::move(safe_set)), domain_(domain) {
  if (constraints_.empty() && !safe_set_) {
    throw InvalidArgument("ODD spec needs at least one constraint or barrier");
  }
}

double boundary_tolerance(double scale) { return 1e-9 * (1.0 + std::abs(scale)); }

namespace {

double checked_value(const BarrierFunction& b, const StateVector& x) {
  require_same_layout(*b.layout(), *x.layout(), "barrier '" + b.label() + "'");
  const double h = b.value_raw(x.values());
  if (!std::isfinite(h)) throw NumericalDivergence("barrier '" + b.label() + "' returned non-finite value");
  return h;
}

}  // namespace

double eval_barrier(const BarrierFunction& b, const StateVector& x) { return checked_value(b, x); }

GradientCheckReport check_gradient(const BarrierFunction& b, const StateVector& x, double step) {
  if (!(step > 0.0)) throw InvalidArgument("gradient check step must be positive");
  require_same_layout(*b.layout(), *x.layout(), "gradient check");
  const Eigen::VectorXd& x0 = x.values();
  GradientCheckReport report;
  report.analytic = b.gradient_raw(x0);
  if (report.analytic.size() != x0.size()) throw DimensionMismatch("gradient length differs from state");
  if (!report.analytic.allFinite()) throw NumericalDivergence("non-finite analytic gradient");
  report.numeric.resize(x0.size());
  for (Eigen::Index k = 0; k < x0.size(); ++k) {
    const double s = step * std::max(1.0, std::abs(x0(k)));
    Eigen::VectorXd xp = x0;
    Eigen::VectorXd xm = x0;
    xp(k) += s;
    xm(k) -= s;
    const double hp = b.value_raw(xp);
    const double hm = b.value_raw(xm);
    if (!std::isfinite(hp) || !std::isfinite(hm)) throw NumericalDivergence("non-finite value near x");
    report.numeric(k) = (hp - hm) / (xp(k) - xm(k));
  }
  const double denom = std::max(report.analytic.cwiseAbs().maxCoeff(), report.numeric.cwiseAbs().maxCoeff());
  const double diff = (report.analytic - report.numeric).cwiseAbs().maxCoeff();
  report.max_rel_error = denom > 0.0 ? diff / denom : diff;
  return report;
}

Margin safe_set_margin(const SafeSet& s, const StateVector& x) {
  Margin m{std::numeric_limits<double>::infinity(), {}};
  for (const auto& b : s.barriers()) {
    const double h = checked_value(b, x);
    if (h < m.value) m = {h, b.label()};
  }
  return m;
}

Margin normalized_margin(const SafeSet& s, const StateVector& x) {
  Margin m{std::numeric_limits<double>::infinity(), {}};
  for (const auto& b : s.barriers()) {
    const double h = checked_value(b, x) / b.scale();
    if (h < m.value) m = {h, b.label()};
  }
  return m;
}

bool in_safe_set(const SafeSet& s, const StateVector& x) {
  return std::all_of(s.barriers().begin(), s.barriers().end(), [&](const BarrierFunction& b) {
    return checked_value(b, x) >= -boundary_tolerance(b.scale());
  });
}

std::vector<std::string> OddReport::failing_labels() const {
  std::vector<std::string> out;
  for (const auto& c : constraints) {
    if (!c.pass) out.push_back(c.label);
  }
  for (const auto& b : barriers) {
    if (!b.pass) out.push_back(b.label);
  }
  return out;
}

OddReport odd_membership(const OddSpec& spec, const StateVector& x) {
  OddReport report;
  report.pass = true;
  for (const auto& c : spec.constraints()) {
    require_same_layout(*c.layout(), *x.layout(), "constraint '" + c.label() + "'");
    const double v = c.value_raw(x.values());
    if (!std::isfinite(v)) throw NumericalDivergence("constraint '" + c.label() + "' returned non-finite value");
    const bool ok = v <= 0.0;
    report.constraints.push_back({c.label(), v, ok});
    report.pass = report.pass && ok;
  }
  if (spec.safe_set()) {
    Margin m{std::numeric_limits<double>::infinity(), {}};
    for (const auto& b : spec.safe_set()->barriers()) {
      const double h = checked_value(b, x);
      const bool ok = h >= -boundary_tolerance(b.scale());
      report.barriers.push_back({b.label(), h, ok});
      report.pass = report.pass && ok;
      if (h < m.value) m = {h, b.label()};
    }
    report.margin = m;
  }
  return report;
}

}  // namespace labguard
