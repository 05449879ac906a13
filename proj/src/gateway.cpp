#include "labguard/gateway.hpp"

#include <httplib.h>

#include <future>

namespace labguard {

void TelemetrySubscriber::push(std::string line, bool droppable) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (closed_) return;
    if (q_.size() >= capacity_) {
      auto victim = std::find_if(q_.begin(), q_.end(), [](const Item& i) { return i.droppable; });
      if (victim != q_.end()) {
        q_.erase(victim);
        ++dropped_;
      } else if (droppable) {
        ++dropped_;
        return;
      }
    }
    q_.push_back({std::move(line), droppable});
  }
  cv_.notify_one();
}

std::optional<std::string> TelemetrySubscriber::pop(std::chrono::milliseconds timeout) {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait_for(lock, timeout, [this] { return !q_.empty() || closed_; });
  if (q_.empty()) return std::nullopt;
  std::string line = std::move(q_.front().line);
  q_.pop_front();
  return line;
}

void TelemetrySubscriber::close() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool TelemetrySubscriber::closed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return closed_;
}

std::uint64_t TelemetrySubscriber::dropped() const {
  std::lock_guard<std::mutex> lock(mu_);
  return dropped_;
}

std::shared_ptr<TelemetrySubscriber> TelemetryHub::subscribe(std::size_t capacity) {
  auto s = std::make_shared<TelemetrySubscriber>(std::max<std::size_t>(capacity, 1));
  std::lock_guard<std::mutex> lock(mu_);
  if (closed_) {
    s->close();
  } else {
    subs_.push_back(s);
  }
  return s;
}

void TelemetryHub::publish(const std::string& line, bool droppable) {
  std::lock_guard<std::mutex> lock(mu_);
  if (closed_) return;
  auto it = subs_.begin();
  while (it != subs_.end()) {
    if (auto s = it->lock(); s && !s->closed()) {
      s->push(line, droppable);
      ++it;
    } else {
      it = subs_.erase(it);
    }
  }
}

void TelemetryHub::publish_frame(const Json& frame) {
  Json j = frame;
  j["kind"] = "frame";
  publish(j.dump() + "\n", true);
}

void TelemetryHub::publish_event(const Json& event) {
  Json j = event;
  j["kind"] = "event";
  publish(j.dump() + "\n", false);
}

void TelemetryHub::close() {
  std::lock_guard<std::mutex> lock(mu_);
  closed_ = true;
  for (auto& w : subs_) {
    if (auto s = w.lock()) s->close();
  }
  subs_.clear();
}

std::size_t TelemetryHub::subscribers() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t n = 0;
  for (const auto& w : subs_) {
    if (auto s = w.lock(); s && !s->closed()) ++n;
  }
  return n;
}

struct GatewayServer::Impl {
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_header(kSchemaHeader, std::to_string(kWireSchemaVersion));
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  reply(res, status, Json{{"error", kind}, {"message", message}});
}

bool is_api_path(const std::string& path) {
  for (const char* p : {"/transactions", "/approvals", "/autonomy", "/estop", "/metrics", "/telemetry", "/session"}) {
    if (path.rfind(p, 0) == 0) return true;
  }
  return false;
}

std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
  try {
    Json j = Json::parse(req.body);
    if (!j.is_object()) {
      reply_error(res, 400, "malformed", "body must be a JSON object");
      return std::nullopt;
    }
    return j;
  } catch (const Json::parse_error&) {
    reply_error(res, 400, "malformed", "body is not JSON");
    return std::nullopt;
  }
}

}  // namespace

GatewayServer::GatewayServer(Scenario scenario, GatewayConfig config)
    : scenario_(std::move(scenario)), config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  auto& svr = impl_->server;

  svr.set_pre_routing_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!is_api_path(req.path)) return httplib::Server::HandlerResponse::Unhandled;
    const std::string v = req.get_header_value(kSchemaHeader);
    if (v != std::to_string(kWireSchemaVersion)) {
      reply_error(res, 400, "schema_version",
                  std::string("header ") + kSchemaHeader + " must be " + std::to_string(kWireSchemaVersion));
      return httplib::Server::HandlerResponse::Handled;
    }
    if (req.method == "POST" && req.get_header_value(kActorHeader).empty()) {
      reply_error(res, 400, "actor", std::string("header ") + kActorHeader + " is required");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  // Forwards one command into the kernel loop and waits for its answer.
  auto send = [this](Command c, httplib::Response& res) {
    auto fut = c.reply->get_future();
    if (!commands_.push(std::move(c))) {
      reply_error(res, 409, "session_finished", "the scenario is no longer running");
      return;
    }
    if (fut.wait_for(std::chrono::seconds(10)) != std::future_status::ready) {
      reply_error(res, 504, "timeout", "kernel did not answer");
      return;
    }
    try {
      reply(res, 200, fut.get());
    } catch (const UnknownTicket& e) {
      reply_error(res, 404, "unknown_ticket", e.what());
    } catch (const AlreadyDecided& e) {
      reply_error(res, 409, "already_decided", e.what());
    } catch (const Expired& e) {
      reply_error(res, 410, "expired", e.what());
    } catch (const InvalidArgument& e) {
      reply_error(res, 400, "invalid", e.what());
    } catch (const std::exception& e) {
      reply_error(res, 409, "rejected", e.what());
    }
  };

  svr.Get("/session", [this](const httplib::Request&, httplib::Response& res) {
    const Json snap = snapshot();
    reply(res, 200,
          Json{{"scenario", scenario_.name},
               {"finished", snap.value("finished", false)},
               {"status", snap.value("status", std::string("running"))},
               {"t", snap.value("t", 0.0)},
               {"dt", scenario_.dt},
               {"decimation", scenario_.telemetry_decimation},
               {"abort_fraction", scenario_.monitor.abort_fraction},
               {"escalation_fraction", scenario_.autonomy.policy.escalation_fraction},
               {"autonomy", snap.value("autonomy", Json::object())}});
  });

  svr.Get("/transactions", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, snapshot().value("transactions", Json::array()));
  });

  svr.Get(R"(/transactions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    for (const auto& t : snapshot().value("transactions", Json::array())) {
      if (t.at("id") == id) return reply(res, 200, t);
    }
    reply_error(res, 404, "unknown_transaction", "unknown transaction: " + id);
  });

  svr.Get("/approvals", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, snapshot().value("approvals", Json::array()));
  });

  svr.Post(R"(/approvals/([^/]+)/decision)", [send](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    const std::string d = body->value("decision", std::string());
    if (d != "approve" && d != "reject") return reply_error(res, 400, "malformed", "decision must be approve or reject");
    Command c;
    c.kind = Command::Kind::Decide;
    c.ticket = req.matches[1];
    c.approve = d == "approve";
    c.actor = req.get_header_value(kActorHeader);
    send(std::move(c), res);
  });

  svr.Post("/autonomy/level", [send](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    if (!body->contains("level") || !body->at("level").is_number_integer()) {
      return reply_error(res, 400, "malformed", "level must be an integer");
    }
    Command c;
    c.kind = Command::Kind::SetLevel;
    c.level = body->at("level").get<int>();
    c.actor = req.get_header_value(kActorHeader);
    send(std::move(c), res);
  });

  svr.Post("/estop", [send](const httplib::Request& req, httplib::Response& res) {
    Command c;
    c.kind = Command::Kind::EmergencyStop;
    c.actor = req.get_header_value(kActorHeader);
    send(std::move(c), res);
  });

  svr.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, snapshot().value("metrics", Json::object()));
  });

  svr.Get("/telemetry", [this](const httplib::Request&, httplib::Response& res) {
    auto sub = hub_.subscribe(config_.subscriber_capacity);
    res.set_header(kSchemaHeader, std::to_string(kWireSchemaVersion));
    res.set_chunked_content_provider(
        "application/x-ndjson",
        [sub](std::size_t, httplib::DataSink& sink) {
          auto line = sub->pop(std::chrono::milliseconds(200));
          if (!line) {
            if (sub->closed()) sink.done();
            return true;
          }
          return sink.write(line->data(), line->size());
        },
        [sub](bool) { sub->close(); });
  });

  if (!config_.static_dir.empty()) svr.set_mount_point("/", config_.static_dir);

  port_ = config_.port == 0 ? svr.bind_to_any_port(config_.host) : (svr.bind_to_port(config_.host, config_.port)
                                                                       ? config_.port
                                                                       : -1);
  if (port_ <= 0) throw InvalidArgument("cannot bind " + config_.host + ":" + std::to_string(config_.port));

  snapshot_ = Json{{"scenario", scenario_.name}, {"transactions", Json::array()}, {"approvals", Json::array()},
                   {"metrics", Json::object()}, {"finished", false}, {"status", "running"}, {"t", 0.0}};
  wall_start_ = std::chrono::steady_clock::now();
  http_thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  kernel_thread_ = std::thread([this] { kernel_main(); });
}

GatewayServer::~GatewayServer() {
  stop();
  if (kernel_thread_.joinable()) kernel_thread_.join();
  if (http_thread_.joinable()) http_thread_.join();
}

void GatewayServer::kernel_main() {
  RunHooks hooks;
  hooks.on_event = [this](const Json& e) { hub_.publish_event(e); };
  hooks.on_frame = [this](const Json& f) { hub_.publish_frame(f); };
  hooks.on_snapshot = [this](const Json& s) {
    std::lock_guard<std::mutex> lock(mu_);
    snapshot_ = s;
    snapshot_["finished"] = false;
    snapshot_["status"] = "running";
  };
  if (config_.realtime_factor > 0.0) hooks.pace = [this](double t) { pace(t); };
  hooks.commands = &commands_;
  RunOptions opts = config_.run;
  opts.external_approvals = config_.external_approvals;
  std::optional<RunResult> r;
  std::string status;
  try {
    r = run_scenario(scenario_, opts, hooks);
    status = r->status;
  } catch (const std::exception& e) {
    status = "fault";
  }
  commands_.close();
  hub_.close();  // streams end after run_end
  std::lock_guard<std::mutex> lock(mu_);
  result_ = std::move(r);
  finished_ = true;
  snapshot_["finished"] = true;
  snapshot_["status"] = status;
  if (result_) snapshot_["metrics"] = result_->metrics.to_json();
  cv_.notify_all();
}

void GatewayServer::pace(double sim_time) {
  const auto target = wall_start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        std::chrono::duration<double>(sim_time / config_.realtime_factor));
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait_until(lock, target, [this] { return stopping_.load(); });
}

void GatewayServer::stop() {
  if (stopping_.exchange(true)) return;
  Command c;
  c.kind = Command::Kind::Shutdown;
  c.actor = "gateway";
  commands_.push(std::move(c));
  {
    std::lock_guard<std::mutex> lock(mu_);
    cv_.notify_all();
  }
  hub_.close();
  impl_->server.stop();
}

void GatewayServer::run_until_stopped() {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait(lock, [this] { return stopping_.load(); });
}

bool GatewayServer::finished() const {
  std::lock_guard<std::mutex> lock(mu_);
  return finished_;
}

std::optional<RunResult> GatewayServer::result() const {
  std::lock_guard<std::mutex> lock(mu_);
  return result_;
}

Json GatewayServer::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return snapshot_;
}

}  // namespace labguard
