#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "labguard/state.hpp"

namespace labguard {

struct OddTemplate {
  Domain domain = Domain::Generic;
  std::map<std::string, double> parameters;

  // Throws MissingParameter if absent or non-finite.
  double require(const std::string& name) const;
  double get_or(const std::string& name, double fallback) const;
};

// Chemical: dims T, P, C_volatile. Parameters T_max, P_burst_rated, C_PEL.
// Constraints c_temp, c_press, c_vent; barriers thermal, pressure, ventilation.
// `extra` barriers (plant-specific) are appended to the safe set.
OddSpec build_chemical_odd(const OddTemplate& t, const LayoutPtr& layout, std::vector<BarrierFunction> extra = {});

// Biological: dims P_room, P_ambient, sterilized, autoclaved, risk_group.
// Parameters max_risk_group; optional strictness_epsilon (default 1e-9).
OddSpec build_bio_odd(const OddTemplate& t, const LayoutPtr& layout);

// Materials: dims E_stored, O2_ppm, A_relief. Parameters E_max_fuse, A_required;
// optional O2_limit_ppm (default 50) and o2_epsilon (default 1e-6).
OddSpec build_materials_odd(const OddTemplate& t, const LayoutPtr& layout);

OddSpec build_odd(const OddTemplate& t, const LayoutPtr& layout, std::vector<BarrierFunction> extra = {});

class CompatibilityTable {
 public:
  void add_material(const std::string& id);
  // Registers both ids if needed; symmetric.
  void set(const std::string& a, const std::string& b, bool compatible);
  // Same material is always compatible. Undeclared pairs are incompatible.
  bool compatible(const std::string& a, const std::string& b) const;
  bool knows(const std::string& id) const { return materials_.count(id) != 0; }
  const std::set<std::string>& materials() const { return materials_; }

 private:
  static std::pair<std::string, std::string> key(const std::string& a, const std::string& b);
  std::set<std::string> materials_;
  std::map<std::pair<std::string, std::string>, bool> pairs_;
};

// Violating unordered pairs as (smaller id, larger id), sorted. Duplicates in
// the inventory are ignored.
std::vector<std::pair<std::string, std::string>> check_compatibility(const CompatibilityTable& table,
                                                                     const std::vector<std::string>& inventory);

struct InventoryItem {
  std::string material;
  double mass = 0.0;               // kg
  double specific_enthalpy = 0.0;  // J/kg
};

struct InventoryEnergyReport {
  double total = 0.0;  // J
  double limit = 0.0;
  bool pass = false;
};

InventoryEnergyReport check_inventory_energy(const std::vector<InventoryItem>& items, double e_max);

class ProcedureSequence {
 public:
  ProcedureSequence() = default;
  // Throws InvalidArgument for steps outside the alphabet.
  ProcedureSequence(std::vector<std::string> steps, const std::set<std::string>& alphabet);

  const std::vector<std::string>& steps() const { return steps_; }
  std::size_t size() const { return steps_.size(); }

 private:
  std::vector<std::string> steps_;
};

const std::set<std::string>& pipetting_alphabet();
// x-fwd, y-fwd, z-fwd, z-back, y-back, x-back
ProcedureSequence canonical_pipetting();

struct SequenceVerdict {
  bool pass = false;
  std::optional<std::size_t> divergence_index;
  std::optional<std::string> expected;  // absent when observed runs past the end
  std::optional<std::string> observed;  // absent when observed stops early
};

SequenceVerdict validate_sequence(const ProcedureSequence& observed, const ProcedureSequence& canonical);

}  // namespace labguard
