#pragma once

// Operator-facing service boundary. Holds no kernel state of its own: reads
// come from the snapshot the kernel publishes, mutations go through the
// kernel's command queue, telemetry is fanned out to subscribers.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "labguard/harness.hpp"

namespace labguard {

inline constexpr const char* kSchemaHeader = "X-Labguard-Schema";
inline constexpr const char* kActorHeader = "X-Labguard-Actor";
inline constexpr int kWireSchemaVersion = 1;

// Bounded per-subscriber queue. When full, the oldest frame is dropped;
// events are never dropped and nothing is reordered.
class TelemetrySubscriber {
 public:
  explicit TelemetrySubscriber(std::size_t capacity) : capacity_(capacity) {}

  void push(std::string line, bool droppable);
  // Empty on timeout or once closed and drained.
  std::optional<std::string> pop(std::chrono::milliseconds timeout);
  void close();
  bool closed() const;
  std::uint64_t dropped() const;

 private:
  struct Item {
    std::string line;
    bool droppable;
  };
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> q_;
  std::size_t capacity_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

class TelemetryHub {
 public:
  std::shared_ptr<TelemetrySubscriber> subscribe(std::size_t capacity);
  void publish_frame(const Json& frame);
  void publish_event(const Json& event);
  void close();
  std::size_t subscribers() const;

 private:
  void publish(const std::string& line, bool droppable);
  mutable std::mutex mu_;
  std::vector<std::weak_ptr<TelemetrySubscriber>> subs_;
  bool closed_ = false;
};

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 0;                  // 0 picks a free port
  double realtime_factor = 0.0;  // simulated seconds per wall second; 0 runs unpaced
  bool external_approvals = true;
  std::size_t subscriber_capacity = 256;
  std::string static_dir;  // console assets served at /, optional
  RunOptions run;
};

class GatewayServer {
 public:
  // Binds the port and starts the kernel and HTTP threads.
  GatewayServer(Scenario scenario, GatewayConfig config);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  int port() const { return port_; }
  void stop();
  void run_until_stopped();

  bool finished() const;
  std::optional<RunResult> result() const;
  Json snapshot() const;
  TelemetryHub& hub() { return hub_; }

 private:
  struct Impl;
  void kernel_main();
  void pace(double sim_time);

  Scenario scenario_;
  GatewayConfig config_;
  CommandQueue commands_;
  TelemetryHub hub_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  Json snapshot_;
  std::optional<RunResult> result_;
  bool finished_ = false;
  std::atomic<bool> stopping_{false};
  std::chrono::steady_clock::time_point wall_start_;

  std::thread kernel_thread_;
  std::thread http_thread_;
};

}  // namespace labguard
