#pragma once

// Scenario runner: planner -> CRUTD -> twin -> governor -> plant under the
// CBF filter, on simulated time, emitting one event stream.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "labguard/audit.hpp"
#include "labguard/autonomy.hpp"
#include "labguard/metrics.hpp"
#include "labguard/scenario.hpp"

namespace labguard {

struct ApprovalTicket {
  std::string id;
  std::string txn;
  std::string request_id;
  ApprovalRequirement requirement = ApprovalRequirement::PerStep;
  Json summary;
  double created_at = 0.0;
  std::optional<double> expires_at;  // empty: the scenario waits for a decision
  std::string decision = "pending";  // pending | approved | rejected
  std::optional<std::string> decider;
  std::optional<double> decided_at;
  bool expired = false;

  Json to_json() const;
};

class ApprovalBoard {
 public:
  const ApprovalTicket& open(const std::string& txn, const std::string& request_id, ApprovalRequirement requirement,
                             Json summary, double now, std::optional<double> window);
  // Throws UnknownTicket, Expired, AlreadyDecided.
  const ApprovalTicket& decide(const std::string& id, bool approve, const std::string& actor, double now);
  // Auto-rejects pending tickets past their deadline; returns their ids.
  std::vector<std::string> expire(double now);
  // Closes a pending ticket whose transaction ended some other way.
  void cancel(const std::string& id, const std::string& actor, double now);

  const ApprovalTicket& get(const std::string& id) const;
  std::vector<ApprovalTicket> pending() const;

 private:
  std::map<std::string, ApprovalTicket> tickets_;
  std::size_t counter_ = 0;
};

// Console-originated mutations, serialized into the kernel loop.
struct Command {
  enum class Kind { Decide, SetLevel, EmergencyStop, Shutdown };
  Kind kind = Kind::Shutdown;
  std::string ticket;
  bool approve = false;
  int level = 0;
  std::string actor;
  std::shared_ptr<std::promise<Json>> reply = std::make_shared<std::promise<Json>>();
};

class CommandQueue {
 public:
  // False once closed; the command is then dropped.
  bool push(Command c);
  std::optional<Command> try_pop();
  std::optional<Command> wait_pop(std::chrono::milliseconds timeout);
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Command> q_;
  bool closed_ = false;
};

struct RunHooks {
  std::function<void(const Json&)> on_event;
  std::function<void(const Json&)> on_frame;
  // Kernel view for read-only consumers: transactions, approvals, level, metrics.
  std::function<void(const Json&)> on_snapshot;
  // Called once per control step with the new sim time; may sleep.
  std::function<void(double)> pace;
  CommandQueue* commands = nullptr;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  // Approvals come only from the command queue; the scripted operator still
  // acknowledges aborts.
  bool external_approvals = false;
};

struct RunResult {
  std::string status;  // completed | stalled | stopped | fault
  std::vector<Json> events;
  MetricsReport metrics;
  AuditLog audit;
  ChainReport audit_report;
};

RunResult run_scenario(const Scenario& s, const RunOptions& options = {}, const RunHooks& hooks = {});

// One canonical JSON document per line.
std::string events_jsonl(const std::vector<Json>& events);
std::vector<Json> parse_events_jsonl(const std::string& text);

// Exit status for CI: 0 clean, 2 when a safety incident occurred.
int exit_code_for(const RunResult& r);

}  // namespace labguard
