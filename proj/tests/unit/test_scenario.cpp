#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "labguard/error.hpp"
#include "labguard/scenario.hpp"

using namespace labguard;

namespace {

Json load_doc(const std::string& name) {
  std::ifstream in(std::string(LABGUARD_SCENARIO_DIR) + "/" + name);
  REQUIRE(in.good());
  return Json::parse(in);
}

// The path reported for a broken document, or "" when it parses.
std::string failure_path(const Json& doc) {
  try {
    parse_scenario(doc);
  } catch (const ScenarioInvalid& e) {
    return e.path();
  }
  return "";
}

}  // namespace

TEST_CASE("every shipped scenario parses and assembles") {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(LABGUARD_SCENARIO_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const Scenario s = load_scenario(entry.path().string());
    const Assembly a = assemble(s);
    CHECK(a.odd.safe_set()->size() > 0);
    CHECK(in_safe_set(*a.odd.safe_set(), a.x0));
    ++count;
  }
  CHECK(count >= 6);
}

TEST_CASE("reactor scenario fields") {
  const Scenario s = parse_scenario(load_doc("thermal_runaway.json"));
  CHECK(s.name == "thermal_runaway");
  CHECK(s.dt == doctest::Approx(0.01));
  REQUIRE(s.planner.size() == 1);
  const auto& bolus = s.planner[0];
  CHECK(bolus.safe_label == std::optional<bool>(false));
  REQUIRE(bolus.on_rejection);
  CHECK(bolus.on_rejection->safe_label == std::optional<bool>(true));
  CHECK_FALSE(bolus.on_rejection->at.has_value());
  CHECK(all_commands(s).size() == 2);
  // The bolus and the drop-wise fallback deliver the same amount of catalyst.
  auto dose = [](const CommandPlan& p) {
    double total = 0.0;
    for (const auto& seg : p.segments()) total += seg.duration * seg.u(0);
    return total;
  };
  CHECK(dose(bolus.plan) == doctest::Approx(dose(bolus.on_rejection->plan)).epsilon(1e-9));
}

TEST_CASE("invalid documents name the offending path") {
  const Json base = load_doc("thermal_runaway.json");
  REQUIRE(failure_path(base).empty());

  auto broken = [&](auto mutate) {
    Json d = base;
    mutate(d);
    return failure_path(d);
  };

  CHECK(broken([](Json& d) { d["surprise"] = 1; }) == "surprise");
  CHECK(broken([](Json& d) { d["schema_version"] = 2; }) == "schema_version");
  CHECK(broken([](Json& d) { d["dt"] = 0.0; }) == "dt");
  CHECK(broken([](Json& d) { d["dt"] = "fast"; }) == "dt");
  CHECK(broken([](Json& d) { d.erase("name"); }) == "name");
  CHECK(broken([](Json& d) { d["initial_state"].erase("T"); }) == "initial_state.T");
  CHECK(broken([](Json& d) { d["initial_state"]["Q"] = 1.0; }) == "initial_state.Q");
  CHECK(broken([](Json& d) { d["odd"]["parameters"].erase("T_max"); }) == "odd.parameters.T_max");
  CHECK(broken([](Json& d) { d["barriers"][1]["params"].erase("c_max"); }) == "barriers[1].params.c_max");
  CHECK(broken([](Json& d) { d["bounds"]["lower"]["u_cat"] = 1.0; }) == "bounds.lower.u_cat");
  CHECK(broken([](Json& d) { d["safe_hold"]["u_cat"] = 5.0; }) == "safe_hold.u_cat");
  CHECK(broken([](Json& d) { d["autonomy"]["level"] = 7; }).rfind("autonomy", 0) == 0);
  CHECK(broken([](Json& d) { d["planner"][0]["segments"][0]["u"]["u_bogus"] = 1.0; })
            .rfind("planner[0].segments[0].u", 0) == 0);
  CHECK(broken([](Json& d) { d["planner"][0]["label"] = "maybe"; }) == "planner[0].label");
  CHECK(broken([](Json& d) { d["planner"][0]["on_rejection"]["at"] = 3.0; }) ==
        "planner[0].on_rejection.at");
  CHECK(broken([](Json& d) { d["planner"][0]["on_rejection"]["id"] = d["planner"][0]["id"]; }) != "");
  CHECK(broken([](Json& d) { d["planner"][0]["at"] = 1e9; }) != "");
  CHECK(broken([](Json& d) { d["operator"]["decisions"] = {{"no-such-request", "reject"}}; }) != "");
  CHECK(broken([](Json& d) { d["telemetry"] = {{"decimation", 0}}; }) != "");
  CHECK(broken([](Json& d) { d["uncertainty"] = {{"intervals", {{"heat_of_reaction", {400000.0, 500000.0}}}}}; }) !=
        "");
  CHECK(broken([](Json& d) { d["faults"] = Json::array({{{"at", 5.0}, {"type", "gremlins"}}}); }) == "faults[0].type");
}

TEST_CASE("procedure scenarios need steps from the alphabet") {
  Json d = load_doc("pipetting_gantry.json");
  REQUIRE(failure_path(d).empty());
  d["planner"][0]["procedure_step"] = "w-fwd";
  CHECK(failure_path(d) == "planner");
  d["planner"][0].erase("procedure_step");
  CHECK(failure_path(d) == "planner");
}

TEST_CASE("load_scenario reports unreadable files") {
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ScenarioInvalid);
  const auto tmp = std::filesystem::temp_directory_path() / "labguard_bad_scenario.json";
  {
    std::ofstream out(tmp);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_scenario(tmp.string()), ScenarioInvalid);
  std::filesystem::remove(tmp);
}
