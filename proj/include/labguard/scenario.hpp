#pragma once

// Declarative scenario files: plant, operational domain, barrier gains,
// planner script, operator script, faults. One JSON document per scenario.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "labguard/audit.hpp"
#include "labguard/autonomy.hpp"
#include "labguard/cbf.hpp"
#include "labguard/odd.hpp"
#include "labguard/plants.hpp"
#include "labguard/twin.hpp"

namespace labguard {

inline constexpr int kScenarioSchemaVersion = 1;

struct BarrierConfig {
  std::string type;   // thermal_rate | catalyst_cap | collision | linear
  std::string label;  // defaults to the type
  ParamMap params;
  std::map<std::string, double> weights;  // linear only, dim -> weight
};

struct GainConfig {
  double gamma = 1.0;
  double eta = 0.0;
};

struct PlannedCommand {
  std::string request_id;
  std::optional<double> at;  // trigger time; fallbacks fire on rejection instead
  CommandPlan plan;
  std::string target;
  std::string reasoning;
  std::vector<std::string> resources;
  std::optional<bool> safe_label;  // ground truth for false-positive accounting
  std::optional<std::string> procedure_step;
  std::shared_ptr<const PlannedCommand> on_rejection;
};

enum class FaultType { ActuatorGain, SensorBias, ParameterShift };

std::string_view to_string(FaultType f);

struct FaultConfig {
  double at = 0.0;
  FaultType type = FaultType::ActuatorGain;
  double factor = 1.0;    // actuator gain, parameter shift
  std::string parameter;  // parameter shift
  std::string dim;        // sensor bias
  double bias = 0.0;
};

enum class Decision { Approve, Reject, Ignore };

struct OperatorScript {
  std::string name = "operator";
  Decision default_decision = Decision::Approve;
  std::map<std::string, Decision> decisions;  // request id -> decision
  double response_delay = 0.0;  // sim seconds, only while the clock runs
  double ack_delay = 0.0;
  std::string root_cause = "reviewed";
  bool reset_twin = true;
  std::vector<double> estops;
  std::vector<std::pair<double, int>> level_changes;
};

struct AutonomyConfig {
  int level = 0;
  GovernancePolicy policy;
  double approval_window = 60.0;  // sim seconds, escalations only
};

struct UncertaintyConfig {
  std::map<std::string, Interval> intervals;
  int samples = 64;
  McPolicy policy;
};

struct MonitorConfig {
  double abort_fraction = 0.25;  // of the normalized margin at the start of execution
  std::map<std::string, double> deviation_tolerance;
};

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string name;
  std::string description;
  std::uint64_t seed = 0;
  double dt = 0.01;
  double duration = 0.0;
  double min_horizon = 0.0;
  PlantSpec plant;
  std::map<std::string, double> initial_state;
  OddTemplate odd;
  std::vector<BarrierConfig> barriers;
  double default_gamma = 1.0;
  std::map<std::string, GainConfig> gains;
  std::map<std::string, double> lower;
  std::map<std::string, double> upper;
  std::map<std::string, double> safe_hold;
  AutonomyConfig autonomy;
  std::optional<UncertaintyConfig> uncertainty;
  std::map<std::string, double> sensor_noise;
  std::map<std::string, double> confirm_tolerance;
  MonitorConfig monitor;
  std::vector<FaultConfig> faults;
  std::vector<PlannedCommand> planner;
  OperatorScript operator_script;
  std::optional<std::string> procedure;  // "pipetting"
  int telemetry_decimation = 10;
  Json source;  // the document as parsed
};

// Validates structure and cross-references. Throws ScenarioInvalid with a
// field path such as "planner[1].segments[0].u.u_cat".
Scenario parse_scenario(const Json& doc);
Scenario load_scenario(const std::string& path);

// Everything the kernel needs, built from a scenario.
struct Assembly {
  ControlAffineModel model;
  OddSpec odd;
  ControlBounds bounds;
  FilterConfig filter;
  StateVector x0;
  Eigen::VectorXd safe_hold;
};

Assembly assemble(const Scenario& s);

BarrierFunction build_barrier(const BarrierConfig& c, const LayoutPtr& layout, const PlantSpec& plant,
                              const OddTemplate& odd);

// Request ids of every command, fallbacks included, in script order.
std::vector<const PlannedCommand*> all_commands(const Scenario& s);

}  // namespace labguard
