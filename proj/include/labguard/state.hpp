#pragma once

// State-space vocabulary: states, controls, constraint and barrier functions,
// safe sets and operational-domain specifications.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labguard/error.hpp"

namespace labguard {

struct Dim {
  std::string name;
  std::string unit;
};

// Ordered dimension descriptors. Shared between every vector of the same
// space so that copying a state does not copy strings.
class Layout {
 public:
  explicit Layout(std::vector<Dim> dims);

  std::size_t size() const { return dims_.size(); }
  const Dim& dim(std::size_t i) const { return dims_.at(i); }
  const std::vector<Dim>& dims() const { return dims_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  // Throws DimensionMismatch when the name is absent.
  std::size_t require(std::string_view name) const;

  bool same_as(const Layout& other) const;

 private:
  std::vector<Dim> dims_;
};

using LayoutPtr = std::shared_ptr<const Layout>;

LayoutPtr make_layout(std::vector<Dim> dims);

// Throws DimensionMismatch unless both layouts describe the same dims.
void require_same_layout(const Layout& a, const Layout& b, std::string_view context);

namespace detail {
struct StateTag {};
struct ControlTag {};
}  // namespace detail

// A finite real vector tied to a layout. StateVector and ControlInput are
// distinct instantiations so a control cannot be passed where a state is due.
template <class Tag>
class TaggedVector {
 public:
  TaggedVector(LayoutPtr layout, Eigen::VectorXd values);

  const LayoutPtr& layout() const { return layout_; }
  const Eigen::VectorXd& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_(static_cast<Eigen::Index>(i)); }
  double at(std::string_view name) const { return values_(static_cast<Eigen::Index>(layout_->require(name))); }

  TaggedVector with_values(Eigen::VectorXd values) const { return TaggedVector(layout_, std::move(values)); }

 private:
  LayoutPtr layout_;
  Eigen::VectorXd values_;
};

using StateVector = TaggedVector<detail::StateTag>;
using ControlInput = TaggedVector<detail::ControlTag>;

bool all_finite(const Eigen::VectorXd& v);

// Axis-aligned box of admissible controls.
class ControlBounds {
 public:
  ControlBounds(Eigen::VectorXd lower, Eigen::VectorXd upper);

  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  std::size_t size() const { return static_cast<std::size_t>(lower_.size()); }

  bool contains(const Eigen::VectorXd& u, double tol = 0.0) const;
  Eigen::VectorXd project(const Eigen::VectorXd& u) const;

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// h_j: positive inside the safe set, zero on its boundary. `scale` is the
// characteristic magnitude of h, used for tolerances and normalized margins.
class BarrierFunction {
 public:
  BarrierFunction(std::string label, LayoutPtr layout, ScalarFn value, GradientFn gradient,
                  double scale = 1.0);

  const std::string& label() const { return label_; }
  const LayoutPtr& layout() const { return layout_; }
  double scale() const { return scale_; }

  // Raw evaluation on the underlying vector, no layout check.
  double value_raw(const Eigen::VectorXd& x) const { return value_(x); }
  Eigen::VectorXd gradient_raw(const Eigen::VectorXd& x) const { return gradient_(x); }

 private:
  std::string label_;
  LayoutPtr layout_;
  ScalarFn value_;
  GradientFn gradient_;
  double scale_;
};

// c_i: satisfied when c_i(x) <= 0.
class OddConstraint {
 public:
  OddConstraint(std::string label, LayoutPtr layout, ScalarFn value);

  const std::string& label() const { return label_; }
  const LayoutPtr& layout() const { return layout_; }
  double value_raw(const Eigen::VectorXd& x) const { return value_(x); }

 private:
  std::string label_;
  LayoutPtr layout_;
  ScalarFn value_;
};

class SafeSet {
 public:
  explicit SafeSet(std::vector<BarrierFunction> barriers);

  const std::vector<BarrierFunction>& barriers() const { return barriers_; }
  std::size_t size() const { return barriers_.size(); }
  const BarrierFunction* find(std::string_view label) const;

 private:
  std::vector<BarrierFunction> barriers_;
};

enum class Domain { Chemical, Biological, Materials, Generic };

std::string_view to_string(Domain d);
Domain domain_from_string(std::string_view s);

class OddSpec {
 public:
  OddSpec(std::vector<OddConstraint> constraints, std::optional<SafeSet> safe_set,
          Domain domain = Domain::Generic);

  const std::vector<OddConstraint>& constraints() const { return constraints_; }
  const std::optional<SafeSet>& safe_set() const { return safe_set_; }
  Domain domain() const { return domain_; }

 private:
  std::vector<OddConstraint> constraints_;
  std::optional<SafeSet> safe_set_;
  Domain domain_;
};

// Slack granted to a barrier value before a state counts as outside the set.
double boundary_tolerance(double scale);

double eval_barrier(const BarrierFunction& b, const StateVector& x);

struct GradientCheckReport {
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
  // Largest |analytic - numeric| entry divided by max(|analytic|_inf, |numeric|_inf).
  double max_rel_error = 0.0;
};

// Central differences with per-dim step `step * max(1, |x_k|)`.
GradientCheckReport check_gradient(const BarrierFunction& b, const StateVector& x, double step);

struct Margin {
  double value = 0.0;
  std::string label;
};

Margin safe_set_margin(const SafeSet& s, const StateVector& x);

// min_j h_j(x) / scale_j, for comparing barriers with different units.
Margin normalized_margin(const SafeSet& s, const StateVector& x);

bool in_safe_set(const SafeSet& s, const StateVector& x);

struct ConstraintResult {
  std::string label;
  double value = 0.0;
  bool pass = false;
};

struct OddReport {
  std::vector<ConstraintResult> constraints;
  std::vector<ConstraintResult> barriers;  // value is h_j(x); pass iff within tolerance
  std::optional<Margin> margin;            // absent when the spec has no barriers
  bool pass = false;

  std::vector<std::string> failing_labels() const;
};

OddReport odd_membership(const OddSpec& spec, const StateVector& x);

// ---- template implementation ----

template <class Tag>
TaggedVector<Tag>::TaggedVector(LayoutPtr layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (!layout_) throw InvalidArgument("vector without layout");
  if (static_cast<std::size_t>(values_.size()) != layout_->size()) {
    throw DimensionMismatch("vector has " + std::to_string(values_.size()) + " values for " +
                            std::to_string(layout_->size()) + " dims");
  }
  if (!all_finite(values_)) throw NumericalDivergence("non-finite vector entry");
}

}  // namespace labguard
