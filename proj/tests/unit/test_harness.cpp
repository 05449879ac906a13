#include <doctest.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <mutex>
#include <map>
#include <set>
#include <string>
#include <thread>

#include "labguard/error.hpp"
#include "labguard/harness.hpp"
#include "labguard/metrics.hpp"
#include "labguard/scenario.hpp"

using namespace labguard;

namespace {

Json load_doc(const std::string& name) {
  std::ifstream in(std::string(LABGUARD_SCENARIO_DIR) + "/" + name);
  REQUIRE(in.good());
  return Json::parse(in);
}

RunResult run_doc(const Json& doc, const RunOptions& opts = {}, const RunHooks& hooks = {}) {
  return run_scenario(parse_scenario(doc), opts, hooks);
}

RunResult run_file(const std::string& name) { return run_doc(load_doc(name)); }

std::vector<Json> of_type(const RunResult& r, const std::string& type) {
  std::vector<Json> out;
  for (const auto& e : r.events) {
    if (e.at("type") == type) out.push_back(e);
  }
  return out;
}

std::vector<Json> phases_of(const RunResult& r, const std::string& txn) {
  std::vector<Json> out;
  for (const auto& e : r.events) {
    if (e.at("type") == "phase" && e.at("txn") == txn) out.push_back(e);
  }
  return out;
}

std::string txn_of(const RunResult& r, const std::string& request_id) {
  for (const auto& e : of_type(r, "submit")) {
    if (e.at("request_id") == request_id && e.at("txn").is_string()) return e.at("txn").get<std::string>();
  }
  FAIL("no transaction for " << request_id);
  return "";
}

std::string final_phase(const RunResult& r, const std::string& txn) {
  std::string last;
  for (const auto& p : phases_of(r, txn)) {
    const std::string to = p.at("to").get<std::string>();
    if (to != "IDLE") last = to;
  }
  return last;
}

// Reactor heat balance written out independently of the plant library:
//   dT/dt = k dH C / (m cp) - UA (T - Tc) / (m cp),  dC/dt = u - kd C.
struct ReactorOracle {
  double k = 0.1, dh = 336000.0, m = 1.0, cp = 4000.0, ua = 50.0, tc = 25.0, kd = 0.01;

  std::array<double, 2> deriv(const std::array<double, 2>& x, double u) const {
    return {k * dh * x[1] / (m * cp) - ua * (x[0] - tc) / (m * cp), u - kd * x[1]};
  }
  std::array<double, 2> step(const std::array<double, 2>& x, double u, double dt) const {
    auto add = [](const std::array<double, 2>& a, const std::array<double, 2>& b, double s) {
      return std::array<double, 2>{a[0] + s * b[0], a[1] + s * b[1]};
    };
    const auto k1 = deriv(x, u);
    const auto k2 = deriv(add(x, k1, dt / 2), u);
    const auto k3 = deriv(add(x, k2, dt / 2), u);
    const auto k4 = deriv(add(x, k3, dt), u);
    return {x[0] + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            x[1] + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])};
  }
  // Peak temperature and lowest thermal_rate margin over `steps` control
  // periods of a single-rate dose.
  struct Peak {
    double t_max_reached;
    double min_rate_margin;
  };
  Peak run(double rate, double dose_time, std::size_t steps, double dt, double t_limit, double lookahead) const {
    std::array<double, 2> x{25.0, 0.0};
    Peak p{x[0], 1e300};
    auto margin = [&](const std::array<double, 2>& s) {
      const double rise = k * dh * s[1] / (m * cp) - ua * (s[0] - tc) / (m * cp);
      return (t_limit - s[0]) - lookahead * rise;
    };
    p.min_rate_margin = margin(x);
    for (std::size_t i = 0; i < steps; ++i) {
      const double t = static_cast<double>(i) * dt;
      x = step(x, t < dose_time - 1e-9 ? rate : 0.0, dt);
      p.t_max_reached = std::max(p.t_max_reached, x[0]);
      p.min_rate_margin = std::min(p.min_rate_margin, margin(x));
    }
    return p;
  }
};

}  // namespace

TEST_CASE("idle scenario: nothing submitted, empty intact chain") {
  const RunResult r = run_file("empty.json");
  CHECK(r.status == "completed");
  CHECK(of_type(r, "submit").empty());
  CHECK(r.audit_report.intact);
  CHECK(r.audit_report.length == 0);
  CHECK(r.metrics.incidents == 0);
  CHECK_FALSE(r.metrics.false_positive_rate.has_value());
  CHECK_FALSE(r.metrics.intervention_latency.has_value());
  CHECK_FALSE(r.metrics.odd_coverage.has_value());
  CHECK(exit_code_for(r) == 0);
  REQUIRE_FALSE(r.events.empty());
  CHECK(r.events.front().at("type") == "run_start");
  CHECK(r.events.back().at("type") == "run_end");
}

TEST_CASE("thermal runaway: bolus rejected at test, drop-wise fallback confirmed") {
  const Json doc = load_doc("thermal_runaway.json");
  const RunResult r = run_doc(doc);
  REQUIRE(r.status == "completed");
  const double t_limit = doc["odd"]["parameters"]["T_max"].get<double>();
  const double t0 = doc["initial_state"]["T"].get<double>();

  const std::string bolus = txn_of(r, "catalyst-bolus");
  const auto bolus_phases = phases_of(r, bolus);
  const auto abort = std::find_if(bolus_phases.begin(), bolus_phases.end(),
                                  [](const Json& p) { return p.at("to") == "ABORTED"; });
  REQUIRE(abort != bolus_phases.end());
  CHECK(abort->at("from") == "SIMULATED");
  CHECK(abort->at("reason") == "predicted_violation");
  const auto labels = abort->at("labels").get<std::vector<std::string>>();
  CHECK(std::count(labels.begin(), labels.end(), "thermal") == 1);
  for (const auto& p : bolus_phases) CHECK(p.at("to") != "VALIDATED");

  const std::string dropwise = txn_of(r, "catalyst-dropwise");
  CHECK(final_phase(r, dropwise) == "CONFIRMED");
  const auto execs = of_type(r, "execution");
  REQUIRE(execs.size() == 1);
  const Json& ex = execs[0];
  CHECK(ex.at("txn") == dropwise);
  CHECK(ex.at("completed") == true);
  const double peak = ex.at("max_true_state").at("T").get<double>();
  CHECK(peak < t_limit - 0.05 * (t_limit - t0));

  // Independent oracle: same plan integrated outside the library.
  const ReactorOracle oracle;
  const double dt = doc["dt"].get<double>();
  const auto& seg = doc["planner"][0]["on_rejection"]["segments"][0];
  const double rate = seg["u"]["u_cat"].get<double>();
  CHECK(seg["duration"].get<double>() == doctest::Approx(1800.0));
  const auto steps = ex.at("steps").get<std::size_t>();
  CHECK(ex.at("interventions") == 0);
  const auto dropwise_peak = oracle.run(rate, 1800.0, steps, dt, t_limit, 100.0);
  CHECK(peak == doctest::Approx(dropwise_peak.t_max_reached).epsilon(1e-9));

  // The bolus label is right: open loop it breaks the temperature limit.
  const auto& bseg = doc["planner"][0]["segments"][0];
  const auto bolus_peak =
      oracle.run(bseg["u"]["u_cat"].get<double>(), bseg["duration"].get<double>(), 60000, dt, t_limit, 100.0);
  CHECK(bolus_peak.t_max_reached > t_limit);

  CHECK(r.metrics.incidents == 1);
  CHECK(r.metrics.false_positive_rate == std::optional<double>(0.0));
  CHECK(r.metrics.odd_coverage == std::optional<double>(0.5));
  CHECK(r.audit_report.intact);
  CHECK(exit_code_for(r) == 2);
}

TEST_CASE("labeled scenario: false-positive rate is exactly one in four") {
  const Json doc = load_doc("labeled_fpr.json");
  const RunResult r = run_doc(doc);
  REQUIRE(r.status == "completed");
  CHECK(r.metrics.labeled_safe == 4);
  CHECK(r.metrics.rejected_safe == 1);
  REQUIRE(r.metrics.false_positive_rate.has_value());
  CHECK(*r.metrics.false_positive_rate == 0.25);

  // Labels agree with the nominal plant integrated independently, checked
  // against every barrier of the safe set.
  const ReactorOracle oracle;
  const double dt = doc["dt"].get<double>();
  const double lookahead = doc["barriers"][0]["params"]["lookahead"].get<double>();
  const double c_max = doc["barriers"][1]["params"]["c_max"].get<double>();
  for (const auto& cmd : doc["planner"]) {
    const auto& seg = cmd["segments"][0];
    const double rate = seg["u"]["u_cat"].get<double>();
    const double dur = seg["duration"].get<double>();
    const auto p = oracle.run(rate, dur, static_cast<std::size_t>(2 * dur / dt), dt, 100.0, lookahead);
    const bool safe = p.min_rate_margin > 0.0 && p.t_max_reached < 100.0 && rate * dur < c_max;
    CAPTURE(cmd["id"]);
    CHECK(safe == (cmd["label"] == "safe"));
  }

  const auto mc = std::count_if(r.events.begin(), r.events.end(),
                                [](const Json& e) { return e.at("type") == "hazard" && e.at("kind") == "monte_carlo"; });
  CHECK(mc == 1);
}

TEST_CASE("heat-release fault: deviation caught within one control period") {
  const Json doc = load_doc("fault_heat_release.json");
  const RunResult r = run_doc(doc);
  REQUIRE(r.status == "completed");
  const auto hazards = of_type(r, "hazard");
  REQUIRE(hazards.size() == 1);
  CHECK(hazards[0].at("kind") == "deviation");
  const std::string txn = hazards[0].at("txn").get<std::string>();
  bool aborted = false;
  for (const auto& p : phases_of(r, txn)) {
    if (p.at("to") == "ABORTED") {
      aborted = true;
      CHECK(p.at("reason") == "prediction_deviation");
      CHECK(p.at("t").get<double>() - hazards[0].at("t").get<double>() <= doc["dt"].get<double>());
    }
  }
  CHECK(aborted);
  REQUIRE(r.metrics.intervention_latency.has_value());
  CHECK(*r.metrics.intervention_latency <= doc["dt"].get<double>());
  CHECK(of_type(r, "true_violation").empty());
  CHECK(of_type(r, "safe_hold").size() == 1);
  CHECK(of_type(r, "fault_injected").size() == 1);
}

TEST_CASE("sensor bias: confirmation fails, twin restricted then reset") {
  const RunResult r = run_file("sensor_bias.json");
  REQUIRE(r.status == "completed");
  bool confirm_fail = false;
  for (const auto& p : of_type(r, "phase")) {
    if (p.at("to") == "ABORTED" && p.at("reason") == "confirm_fail") confirm_fail = true;
  }
  CHECK(confirm_fail);
  const auto restricted = of_type(r, "twin_restricted");
  const auto reset = of_type(r, "twin_reset");
  REQUIRE(restricted.size() == 1);
  REQUIRE(reset.size() == 1);
  CHECK(reset[0].at("seq").get<int>() > restricted[0].at("seq").get<int>());
}

TEST_CASE("robot detour and pipetting order") {
  const RunResult robot = run_file("robot_obstacle.json");
  CHECK(final_phase(robot, txn_of(robot, "cross-direct")) == "ABORTED");
  CHECK(final_phase(robot, txn_of(robot, "cross-detour")) == "CONFIRMED");
  for (const auto& ex : of_type(robot, "execution")) CHECK(ex.at("min_true_normalized_margin").get<double>() > 0.0);
  CHECK(of_type(robot, "true_violation").empty());

  const RunResult gantry = run_file("pipetting_gantry.json");
  const auto checks = of_type(gantry, "procedure_check");
  REQUIRE(checks.size() == 1);
  CHECK(checks[0].at("pass") == true);
  const std::string skipped = txn_of(gantry, "move-2");
  CHECK(final_phase(gantry, skipped) == "ABORTED");
  for (const auto& p : phases_of(gantry, skipped)) {
    if (p.at("to") == "ABORTED") CHECK(p.at("labels") == Json::array({"procedure_sequence"}));
  }
  CHECK(final_phase(gantry, txn_of(gantry, "move-2b")) == "CONFIRMED");
}

TEST_CASE("same seed gives a byte-identical log; replay reproduces live metrics") {
  for (const char* name : {"thermal_runaway.json", "labeled_fpr.json", "sensor_bias.json",
                           "robot_obstacle.json", "pipetting_gantry.json", "fault_heat_release.json"}) {
    CAPTURE(name);
    const Scenario s = load_scenario(std::string(LABGUARD_SCENARIO_DIR) + "/" + name);
    const RunResult a = run_scenario(s);
    const RunResult b = run_scenario(s);
    CHECK(events_jsonl(a.events) == events_jsonl(b.events));
    CHECK(a.audit.serialize() == b.audit.serialize());

    const auto replayed = parse_events_jsonl(events_jsonl(a.events));
    CHECK(replayed == a.events);
    const auto m = compute_metrics(replayed, labels_from_events(replayed));
    CHECK(m.to_json().dump() == a.metrics.to_json().dump());
  }
  const Scenario s = load_scenario(std::string(LABGUARD_SCENARIO_DIR) + "/sensor_bias.json");
  RunOptions other;
  other.seed = s.seed + 1;
  CHECK(events_jsonl(run_scenario(s).events) != events_jsonl(run_scenario(s, other).events));
}

TEST_CASE("no execution without a prior VALIDATED in the same transaction") {
  for (const char* name : {"thermal_runaway.json", "labeled_fpr.json", "sensor_bias.json",
                           "robot_obstacle.json", "pipetting_gantry.json", "fault_heat_release.json"}) {
    CAPTURE(name);
    const RunResult r = run_file(name);
    std::set<std::string> validated;
    int seq = -1;
    for (const auto& e : r.events) {
      CHECK(e.at("seq").get<int>() == seq + 1);
      seq = e.at("seq").get<int>();
      const std::string type = e.at("type").get<std::string>();
      if (type == "phase" && e.at("to") == "VALIDATED") validated.insert(e.at("txn").get<std::string>());
      if (type == "execution" || type == "filter_intervention") {
        CHECK(validated.count(e.at("txn").get<std::string>()) == 1);
      }
    }
  }
}

TEST_CASE("escalated approval expires and aborts without counting an incident") {
  Json doc = load_doc("thermal_runaway.json");
  doc["autonomy"]["level"] = 4;
  doc["autonomy"]["escalation_fraction"] = 0.99;
  doc["autonomy"]["approval_window"] = 30.0;
  doc["operator"]["default"] = "ignore";
  const RunResult r = run_doc(doc);
  REQUIRE(r.status == "completed");
  const auto requested = of_type(r, "approval_requested");
  REQUIRE(requested.size() == 1);
  const auto expired = of_type(r, "approval_expired");
  REQUIRE(expired.size() == 1);
  CHECK(expired[0].at("t").get<double>() - requested[0].at("t").get<double>() ==
        doctest::Approx(30.0).epsilon(1e-6));
  const std::string txn = txn_of(r, "catalyst-dropwise");
  CHECK(final_phase(r, txn) == "ABORTED");
  for (const auto& p : phases_of(r, txn)) {
    if (p.at("to") == "ABORTED") CHECK(p.at("reason") == "approval_expired");
  }
  CHECK(r.metrics.incidents == 1);  // only the bolus
}

TEST_CASE("paused approval with no decision stalls the run") {
  Json doc = load_doc("thermal_runaway.json");
  doc["autonomy"]["level"] = 0;
  doc["operator"]["decisions"] = {{"catalyst-dropwise", "ignore"}};
  const RunResult r = run_doc(doc);
  CHECK(r.status == "stalled");
  CHECK(of_type(r, "approval_stalled").size() == 1);
  CHECK(r.events.back().at("type") == "run_end");
  CHECK(exit_code_for(r) == 1);
}

TEST_CASE("human rejection at a paused level is not an incident") {
  Json doc = load_doc("thermal_runaway.json");
  doc["autonomy"]["level"] = 1;
  doc["planner"][0].erase("on_rejection");
  doc["planner"][0]["segments"][0]["u"]["u_cat"] = 0.00005;  // safe dose
  doc["planner"][0]["label"] = "safe";
  doc["operator"]["default"] = "reject";
  const RunResult r = run_doc(doc);
  REQUIRE(r.status == "completed");
  const std::string txn = txn_of(r, "catalyst-bolus");
  CHECK(final_phase(r, txn) == "ABORTED");
  CHECK(r.metrics.incidents == 0);
  CHECK(r.metrics.false_positive_rate == std::optional<double>(0.0));
  const auto decided = of_type(r, "approval_decided");
  REQUIRE(decided.size() == 1);
  CHECK(decided[0].at("decision") == "rejected");
}

TEST_CASE("emergency stop during execution aborts to safe hold and resumes") {
  Json doc = load_doc("thermal_runaway.json");
  doc["operator"]["estops"] = {600.0};
  const RunResult r = run_doc(doc);
  REQUIRE(r.status == "completed");
  const std::string txn = txn_of(r, "catalyst-dropwise");
  CHECK(final_phase(r, txn) == "ABORTED");
  bool estop_abort = false;
  for (const auto& p : phases_of(r, txn)) {
    if (p.at("to") == "ABORTED") {
      estop_abort = p.at("reason") == "emergency_stop";
      CHECK(p.at("t").get<double>() == doctest::Approx(600.0).epsilon(1e-6));
    }
  }
  CHECK(estop_abort);
  CHECK(of_type(r, "estop").size() == 1);
  CHECK(of_type(r, "resume").size() == 1);
  CHECK(r.metrics.incidents == 1);  // e-stop is an operator action, not an incident
  const auto ex = of_type(r, "execution");
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].at("completed") == false);
}

TEST_CASE("externally decided approvals arrive through the command queue") {
  Json doc = load_doc("thermal_runaway.json");
  doc["autonomy"]["level"] = 0;
  CommandQueue queue;
  RunHooks hooks;
  hooks.commands = &queue;
  std::mutex mu;
  std::vector<std::string> tickets;
  hooks.on_event = [&](const Json& e) {
    std::lock_guard lock(mu);
    if (e.at("type") == "approval_requested") tickets.push_back(e.at("ticket").get<std::string>());
  };
  // The kernel blocks on the queue while the ticket is paused, so the
  // decision has to come from another thread.
  std::thread decider([&] {
    for (std::size_t i = 0; i < 1; ++i) {
      std::string ticket;
      while (ticket.empty()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        std::lock_guard lock(mu);
        if (tickets.size() > i) ticket = tickets[i];
      }
      Command c;
      c.kind = Command::Kind::Decide;
      c.ticket = ticket;
      c.approve = true;
      c.actor = "remote-chemist";
      auto reply = c.reply->get_future();
      queue.push(std::move(c));
      reply.get();
    }
  });
  RunOptions opts;
  opts.external_approvals = true;
  const RunResult r = run_doc(doc, opts, hooks);
  decider.join();
  REQUIRE(r.status == "completed");
  // The bolus is rejected at Test before any approval; only the fallback asks.
  const auto decided = of_type(r, "approval_decided");
  REQUIRE(decided.size() >= 1);
  CHECK(decided[0].at("actor") == "remote-chemist");
  CHECK(final_phase(r, txn_of(r, "catalyst-dropwise")) == "CONFIRMED");
}

TEST_CASE("telemetry frames are decimated and ordered") {
  Json doc = load_doc("robot_obstacle.json");
  doc["telemetry"] = {{"decimation", 5}};
  std::vector<Json> frames;
  RunHooks hooks;
  hooks.on_frame = [&](const Json& f) { frames.push_back(f); };
  const RunResult r = run_doc(doc, {}, hooks);
  REQUIRE(frames.size() > 10);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    CHECK(frames[i].at("seq").get<long>() > frames[i - 1].at("seq").get<long>());
    CHECK(frames[i].at("t").get<double>() - frames[i - 1].at("t").get<double>() ==
          doctest::Approx(5 * doc["dt"].get<double>()));
  }
  CHECK(frames.front().contains("margins"));
  CHECK(frames.front().contains("normalized_margin"));
}

// ---- metrics on synthetic logs ----

namespace {

Json ev(const std::string& type, double t, Json extra = Json::object()) {
  extra["type"] = type;
  extra["t"] = t;
  return extra;
}

Json abort_ev(double t, const std::string& txn, const std::string& reason) {
  return ev("phase", t, {{"txn", txn}, {"from", "SIMULATED"}, {"to", "ABORTED"}, {"reason", reason}});
}

}  // namespace

TEST_CASE("incident rate: two incidents in half an hour is four per hour") {
  std::vector<Json> log{ev("run_start", 0.0),
                        ev("submit", 10.0, {{"request_id", "a"}, {"txn", "txn-0001"}, {"label", nullptr}}),
                        abort_ev(10.0, "txn-0001", "predicted_violation"),
                        ev("true_violation", 20.0, {{"txn", "txn-0001"}}),  // same txn, still one
                        ev("true_violation", 900.0, {{"txn", nullptr}}),
                        ev("run_end", 1800.0, {{"audit_intact", true}})};
  const auto m = compute_metrics(log, {});
  CHECK(m.incidents == 2);
  CHECK(m.sim_hours == doctest::Approx(0.5));
  CHECK(m.safety_incident_rate == doctest::Approx(4.0));
  CHECK(m.audit_integrity);
}

TEST_CASE("benign aborts are not incidents and do not count as false positives") {
  std::vector<Json> log{ev("run_start", 0.0),
                        ev("submit", 0.0, {{"request_id", "a"}, {"txn", "txn-0001"}, {"label", "safe"}}),
                        abort_ev(1.0, "txn-0001", "human_reject"),
                        ev("submit", 2.0, {{"request_id", "b"}, {"txn", "txn-0002"}, {"label", "safe"}}),
                        abort_ev(3.0, "txn-0002", "approval_expired"),
                        ev("submit", 4.0, {{"request_id", "c"}, {"txn", nullptr}, {"label", "safe"}}),
                        ev("run_end", 3600.0, {{"audit_intact", true}})};
  const auto m = compute_metrics(log, labels_from_events(log));
  CHECK(m.incidents == 0);
  CHECK(m.labeled_safe == 3);
  CHECK(m.rejected_safe == 1);  // the refused submission
  CHECK(*m.false_positive_rate == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("latency pairs each hazard with the next protective action") {
  std::vector<Json> log{ev("run_start", 0.0),
                        ev("hazard", 5.0, {{"txn", "txn-0001"}, {"kind", "margin"}}),
                        ev("filter_intervention", 5.25, {{"txn", "txn-0002"}}),  // other transaction
                        abort_ev(5.5, "txn-0001", "mid_flight_margin"),
                        ev("hazard", 7.0, {{"txn", "txn-0003"}, {"kind", "deviation"}}),
                        ev("run_end", 10.0, {{"audit_intact", false}})};
  const auto m = compute_metrics(log, {});
  CHECK(m.hazards == 2);
  REQUIRE(m.intervention_latency.has_value());
  CHECK(*m.intervention_latency == doctest::Approx(3.0));  // unanswered hazard runs to the end
  CHECK_FALSE(m.audit_integrity);
}

TEST_CASE("missing labels, missing hazards, partial logs") {
  std::vector<Json> log{ev("run_start", 0.0), ev("submit", 0.0, {{"request_id", "a"}, {"txn", "txn-0001"},
                                                                  {"label", nullptr}})};
  CHECK_THROWS_AS(compute_metrics(log, {}), InvalidArgument);
  MetricsOptions partial;
  partial.allow_partial = true;
  const auto m = compute_metrics(log, {}, partial);
  CHECK_FALSE(m.complete);
  CHECK_FALSE(m.false_positive_rate.has_value());
  CHECK_FALSE(m.intervention_latency.has_value());
  CHECK(m.to_json().at("intervention_latency").is_null());
  partial.require_fpr = true;
  CHECK_THROWS_AS(compute_metrics(log, {}, partial), MissingLabels);
}

TEST_CASE("approval board") {
  ApprovalBoard board;
  const auto& t = board.open("txn-0001", "a", ApprovalRequirement::Escalate, Json::object(), 0.0, 10.0);
  const std::string id = t.id;
  CHECK(id == "apr-0001");
  CHECK(board.pending().size() == 1);
  CHECK_THROWS_AS(board.decide("apr-9999", true, "x", 1.0), UnknownTicket);
  CHECK_THROWS_AS(board.decide(id, true, "", 1.0), InvalidArgument);
  CHECK(board.decide(id, true, "alice", 1.0).decision == "approved");
  CHECK_THROWS_AS(board.decide(id, false, "bob", 2.0), AlreadyDecided);

  const std::string late = board.open("txn-0002", "b", ApprovalRequirement::Escalate, Json::object(), 0.0, 10.0).id;
  CHECK(board.expire(5.0).empty());
  CHECK(board.expire(10.0) == std::vector<std::string>{late});
  CHECK(board.get(late).decider == std::optional<std::string>("expiry"));
  CHECK_THROWS_AS(board.decide(late, true, "alice", 11.0), Expired);

  const std::string paused = board.open("txn-0003", "c", ApprovalRequirement::PerStep, Json::object(), 0.0, {}).id;
  CHECK(board.expire(1e9).empty());
  board.cancel(paused, "kernel", 3.0);
  CHECK(board.pending().empty());
}

TEST_CASE("command queue closes cleanly") {
  CommandQueue q;
  Command c;
  auto reply = c.reply->get_future();
  CHECK(q.push(std::move(c)));
  q.close();
  CHECK(q.closed());
  CHECK_THROWS_AS(reply.get(), IllegalTransition);
  CHECK_FALSE(q.push(Command{}));
  CHECK_FALSE(q.wait_pop(std::chrono::milliseconds(1)).has_value());
}
