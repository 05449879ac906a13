#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "labguard/audit.hpp"
#include "labguard/gateway.hpp"
#include "labguard/harness.hpp"
#include "labguard/metrics.hpp"
#include "labguard/scenario.hpp"

namespace fs = std::filesystem;
using namespace labguard;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << bytes;
}

int cmd_run(const std::string& file, const std::string& out_dir, std::optional<std::uint64_t> seed, bool quiet) {
  const Scenario s = load_scenario(file);
  RunOptions opts;
  opts.seed = seed;
  const RunResult r = run_scenario(s, opts);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "events.jsonl", events_jsonl(r.events));
    write_file(fs::path(out_dir) / "metrics.json", r.metrics.to_json().dump(2) + "\n");
    r.audit.save((fs::path(out_dir) / "audit.log").string());
  }
  if (!quiet) {
    std::cout << "scenario " << s.name << ": " << r.status << ", " << r.events.size() << " events, audit "
              << (r.audit_report.intact ? "intact" : "BROKEN") << " (" << r.audit_report.length << " entries)\n";
    std::cout << r.metrics.to_json().dump(2) << "\n";
  }
  return exit_code_for(r);
}

int cmd_verify(const std::string& path, const std::optional<std::string>& key) {
  const ChainReport r = verify_file(path, key);
  if (r.intact) {
    std::cout << "intact: " << r.length << " entries\n";
    return 0;
  }
  std::cout << "broken at entry " << (r.first_break ? std::to_string(*r.first_break) : "?") << ": " << r.reason
            << "\n";
  return 1;
}

int cmd_replay(const std::string& path, bool require_fpr, const std::string& compare) {
  const auto events = parse_events_jsonl(read_file(path));
  MetricsOptions mo;
  mo.require_fpr = require_fpr;
  const MetricsReport m = compute_metrics(events, labels_from_events(events), mo);
  std::cout << m.to_json().dump(2) << "\n";
  if (!compare.empty()) {
    const Json live = Json::parse(read_file(compare));
    if (live != m.to_json()) {
      std::cerr << "replayed metrics differ from " << compare << "\n";
      return 1;
    }
    std::cout << "replayed metrics match " << compare << "\n";
  }
  return 0;
}

int cmd_list(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      const Scenario s = load_scenario(f.string());
      std::cout << s.name << "\t" << f.filename().string() << "\t" << s.description << "\n";
    } catch (const Error& e) {
      std::cout << "!invalid\t" << f.filename().string() << "\t" << e.what() << "\n";
    }
  }
  return 0;
}

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

int cmd_serve(const std::string& file, const std::string& host, int port, double realtime, bool external,
              const std::string& static_dir) {
  const Scenario s = load_scenario(file);
  GatewayConfig cfg;
  cfg.host = host;
  cfg.port = port;
  cfg.realtime_factor = realtime;
  cfg.external_approvals = external;
  cfg.static_dir = static_dir;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  GatewayServer server(s, cfg);
  std::cout << "serving " << s.name << " on http://" << host << ":" << server.port() << "\n" << std::flush;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labguard: runtime safety kernel and simulated lab harness"};
  app.require_subcommand(1);

  std::string file, out_dir, log_path, key, events_path, compare, dir = LABGUARD_SCENARIO_DIR;
  std::optional<std::uint64_t> seed;
  bool quiet = false, require_fpr = false;

  auto* run = app.add_subcommand("run", "run a scenario file");
  run->add_option("scenario", file, "scenario JSON")->required();
  run->add_option("--out", out_dir, "directory for events.jsonl, audit.log and metrics.json");
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_flag("--quiet", quiet);

  auto* verify = app.add_subcommand("verify-audit", "verify an audit log file");
  verify->add_option("log", log_path)->required();
  verify->add_option("--key", key, "HMAC key used when the log was written");

  auto* replay = app.add_subcommand("replay", "recompute metrics from a persisted event log");
  replay->add_option("events", events_path)->required();
  replay->add_flag("--require-fpr", require_fpr, "fail when no ground-truth labels are present");
  replay->add_option("--compare", compare, "metrics.json written by the live run");

  auto* list = app.add_subcommand("list-scenarios", "list shipped scenarios");
  list->add_option("--dir", dir);

  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  double realtime = 1.0;
  bool external = false;
  auto* serve = app.add_subcommand("serve", "run a scenario behind the operator gateway");
  serve->add_option("scenario", file)->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--realtime", realtime, "simulated seconds per wall second, 0 for unpaced");
  serve->add_flag("--external-approvals", external, "approvals come only from the console");
  serve->add_option("--static", static_dir, "directory served at /");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(file, out_dir, seed, quiet);
    if (*verify) return cmd_verify(log_path, key.empty() ? std::nullopt : std::optional<std::string>(key));
    if (*replay) return cmd_replay(events_path, require_fpr, compare);
    if (*list) return cmd_list(dir);
    if (*serve) return cmd_serve(file, host, port, realtime, external, static_dir);
  } catch (const ScenarioInvalid& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
