#include "labguard/odd.hpp"

#include <algorithm>
#include <cmath>

#include "labguard/barriers.hpp"

namespace labguard {

namespace {

// c(x) = x[i] - limit
OddConstraint upper_limit(const std::string& label, const LayoutPtr& layout, const std::string& dim, double limit) {
  const auto i = static_cast<Eigen::Index>(layout->require(dim));
  return OddConstraint(label, layout, [i, limit](const Eigen::VectorXd& x) { return x(i) - limit; });
}

// c(x) = required - x[i]
OddConstraint lower_limit(const std::string& label, const LayoutPtr& layout, const std::string& dim, double required) {
  const auto i = static_cast<Eigen::Index>(layout->require(dim));
  return OddConstraint(label, layout, [i, required](const Eigen::VectorXd& x) { return required - x(i); });
}

// h(x) = limit - x[i]
BarrierFunction ceiling(const std::string& label, const LayoutPtr& layout, const std::string& dim, double limit) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout->size()));
  w(static_cast<Eigen::Index>(layout->require(dim))) = -1.0;
  return linear_barrier(label, layout, w, limit, std::abs(limit) > 0.0 ? std::abs(limit) : 1.0);
}

void require_domain(const OddTemplate& t, Domain d) {
  if (t.domain != d) {
    throw InvalidArgument("template domain is " + std::string(to_string(t.domain)) + ", expected " +
                          std::string(to_string(d)));
  }
}

}  // namespace

double OddTemplate::require(const std::string& name) const {
  auto it = parameters.find(name);
  if (it == parameters.end() || !std::isfinite(it->second)) throw MissingParameter(name);
  return it->second;
}

double OddTemplate::get_or(const std::string& name, double fallback) const {
  auto it = parameters.find(name);
  if (it == parameters.end()) return fallback;
  if (!std::isfinite(it->second)) throw InvalidArgument("parameter " + name + " is not finite");
  return it->second;
}

OddSpec build_chemical_odd(const OddTemplate& t, const LayoutPtr& layout, std::vector<BarrierFunction> extra) {
  require_domain(t, Domain::Chemical);
  const double t_max = t.require("T_max");
  const double p_limit = 0.8 * t.require("P_burst_rated");
  const double c_pel = t.require("C_PEL");

  std::vector<OddConstraint> constraints{upper_limit("c_temp", layout, "T", t_max),
                                         upper_limit("c_press", layout, "P", p_limit),
                                         upper_limit("c_vent", layout, "C_volatile", c_pel)};
  // Thermal margin is normalized by the headroom above a 25 degC ambient unless overridden.
  std::vector<BarrierFunction> barriers{thermal_barrier(layout, t_max, t.get_or("thermal_scale", t_max - 25.0)),
                                        ceiling("pressure", layout, "P", p_limit),
                                        ceiling("ventilation", layout, "C_volatile", c_pel)};
  for (auto& b : extra) barriers.push_back(std::move(b));
  return OddSpec(std::move(constraints), SafeSet(std::move(barriers)), Domain::Chemical);
}

OddSpec build_bio_odd(const OddTemplate& t, const LayoutPtr& layout) {
  require_domain(t, Domain::Biological);
  const double max_group = t.require("max_risk_group");
  const double eps = t.get_or("strictness_epsilon", 1e-9);
  const auto room = static_cast<Eigen::Index>(layout->require("P_room"));
  const auto ambient = static_cast<Eigen::Index>(layout->require("P_ambient"));

  std::vector<OddConstraint> constraints;
  // Negative pressure, strict: P_room < P_ambient.
  constraints.emplace_back("c_containment", layout,
                           [room, ambient, eps](const Eigen::VectorXd& x) { return x(room) - x(ambient) + eps; });
  constraints.push_back(lower_limit("c_sterilized", layout, "sterilized", 1.0));
  constraints.push_back(lower_limit("c_autoclaved", layout, "autoclaved", 1.0));
  constraints.push_back(upper_limit("c_risk_group", layout, "risk_group", max_group));
  return OddSpec(std::move(constraints), std::nullopt, Domain::Biological);
}

OddSpec build_materials_odd(const OddTemplate& t, const LayoutPtr& layout) {
  require_domain(t, Domain::Materials);
  const double e_max = t.require("E_max_fuse");
  const double a_required = t.require("A_required");
  const double o2_limit = t.get_or("O2_limit_ppm", 50.0);
  const double o2_eps = t.get_or("o2_epsilon", 1e-6);

  std::vector<OddConstraint> constraints{upper_limit("c_energy", layout, "E_stored", e_max),
                                         upper_limit("c_o2", layout, "O2_ppm", o2_limit - o2_eps),
                                         lower_limit("c_relief", layout, "A_relief", a_required)};
  std::vector<BarrierFunction> barriers{ceiling("stored_energy", layout, "E_stored", e_max)};
  return OddSpec(std::move(constraints), SafeSet(std::move(barriers)), Domain::Materials);
}

OddSpec build_odd(const OddTemplate& t, const LayoutPtr& layout, std::vector<BarrierFunction> extra) {
  switch (t.domain) {
    case Domain::Chemical:
      return build_chemical_odd(t, layout, std::move(extra));
    case Domain::Biological:
      return build_bio_odd(t, layout);
    case Domain::Materials:
      return build_materials_odd(t, layout);
    case Domain::Generic:
      break;
  }
  throw InvalidArgument("no template builder for the generic domain");
}

std::pair<std::string, std::string> CompatibilityTable::key(const std::string& a, const std::string& b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

void CompatibilityTable::add_material(const std::string& id) {
  if (id.empty()) throw InvalidArgument("material id is empty");
  materials_.insert(id);
}

void CompatibilityTable::set(const std::string& a, const std::string& b, bool compatible) {
  add_material(a);
  add_material(b);
  if (a == b && !compatible) throw InvalidArgument("material " + a + " cannot be incompatible with itself");
  pairs_[key(a, b)] = compatible;
}

bool CompatibilityTable::compatible(const std::string& a, const std::string& b) const {
  if (!knows(a)) throw UnknownMaterial(a);
  if (!knows(b)) throw UnknownMaterial(b);
  if (a == b) return true;
  auto it = pairs_.find(key(a, b));
  return it != pairs_.end() && it->second;
}

std::vector<std::pair<std::string, std::string>> check_compatibility(const CompatibilityTable& table,
                                                                     const std::vector<std::string>& inventory) {
  for (const auto& id : inventory) {
    if (!table.knows(id)) throw UnknownMaterial(id);
  }
  const std::set<std::string> unique(inventory.begin(), inventory.end());
  const std::vector<std::string> ids(unique.begin(), unique.end());
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      if (!table.compatible(ids[i], ids[j])) out.emplace_back(ids[i], ids[j]);
    }
  }
  return out;
}

InventoryEnergyReport check_inventory_energy(const std::vector<InventoryItem>& items, double e_max) {
  if (!std::isfinite(e_max)) throw InvalidArgument("energy limit is not finite");
  InventoryEnergyReport r;
  r.limit = e_max;
  for (const auto& item : items) {
    if (!(item.mass >= 0.0) || !std::isfinite(item.mass) || !std::isfinite(item.specific_enthalpy)) {
      throw InvalidArgument("inventory item " + item.material + " has invalid mass or enthalpy");
    }
    r.total += item.mass * item.specific_enthalpy;
  }
  r.pass = r.total <= e_max;
  return r;
}

ProcedureSequence::ProcedureSequence(std::vector<std::string> steps, const std::set<std::string>& alphabet)
    : steps_(std::move(steps)) {
  for (const auto& s : steps_) {
    if (alphabet.count(s) == 0) throw InvalidArgument("step '" + s + "' is not in the declared alphabet");
  }
}

const std::set<std::string>& pipetting_alphabet() {
  static const std::set<std::string> alphabet{"x-fwd", "y-fwd", "z-fwd", "z-back", "y-back", "x-back"};
  return alphabet;
}

ProcedureSequence canonical_pipetting() {
  return ProcedureSequence({"x-fwd", "y-fwd", "z-fwd", "z-back", "y-back", "x-back"}, pipetting_alphabet());
}

SequenceVerdict validate_sequence(const ProcedureSequence& observed, const ProcedureSequence& canonical) {
  const auto& a = observed.steps();
  const auto& b = canonical.steps();
  SequenceVerdict v;
  const std::size_t common = std::min(a.size(), b.size());
  std::size_t i = 0;
  while (i < common && a[i] == b[i]) ++i;
  if (i == a.size() && i == b.size()) {
    v.pass = true;
    return v;
  }
  v.divergence_index = i;
  if (i < b.size()) v.expected = b[i];
  if (i < a.size()) v.observed = a[i];
  return v;
}

}  // namespace labguard
