#include "labguard/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "labguard/barriers.hpp"

namespace labguard {

std::string_view to_string(FaultType f) {
  switch (f) {
    case FaultType::ActuatorGain: return "actuator_gain";
    case FaultType::SensorBias: return "sensor_bias";
    case FaultType::ParameterShift: return "parameter_shift";
  }
  return "?";
}

namespace {

// A JSON value plus the path that reached it, so every error names its field.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const Json& json() const { return *j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const { throw ScenarioInvalid(path_, what); }

  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void expect_object() const {
    if (!j_->is_object()) fail("expected an object");
  }

  void allow_keys(std::initializer_list<const char*> keys) const {
    expect_object();
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_->items()) {
      if (!ok.count(k)) throw ScenarioInvalid(child_path(k), "unknown field");
    }
  }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Node at(const std::string& key) const {
    expect_object();
    if (!j_->contains(key)) throw ScenarioInvalid(child_path(key), "required field missing");
    return Node(j_->at(key), child_path(key));
  }

  std::optional<Node> opt(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return Node(j_->at(key), child_path(key));
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    const double v = j_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail("must be positive");
    return v;
  }

  double non_negative() const {
    const double v = number();
    if (v < 0.0) fail("must be non-negative");
    return v;
  }

  int integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<int>();
  }

  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail("expected a boolean");
    return j_->get<bool>();
  }

  std::vector<Node> items() const {
    if (!j_->is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_->size(); ++i) out.emplace_back((*j_)[i], path_ + "[" + std::to_string(i) + "]");
    return out;
  }

  std::map<std::string, double> number_map() const {
    expect_object();
    std::map<std::string, double> out;
    for (const auto& [k, v] : j_->items()) out[k] = Node(v, child_path(k)).number();
    return out;
  }

  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (const auto& n : items()) out.push_back(n.string());
    return out;
  }

 private:
  const Json* j_;
  std::string path_;
};

template <class Map>
void keys_within(const Map& m, const Layout& layout, const std::string& path) {
  for (const auto& [k, v] : m) {
    if (!layout.index_of(k)) throw ScenarioInvalid(path + "." + k, "no such dimension");
  }
}

PlantSpec parse_plant(const Node& n) {
  n.allow_keys({"kind", "params", "passive_dims"});
  PlantSpec p;
  p.kind = n.at("kind").string();
  if (auto params = n.opt("params")) p.params = params->number_map();
  if (auto passive = n.opt("passive_dims")) {
    for (const auto& d : passive->items()) {
      d.allow_keys({"name", "unit"});
      p.passive_dims.push_back({d.at("name").string(), d.has("unit") ? d.at("unit").string() : ""});
    }
  }
  return p;
}

Decision parse_decision(const Node& n) {
  const std::string s = n.string();
  if (s == "approve") return Decision::Approve;
  if (s == "reject") return Decision::Reject;
  if (s == "ignore") return Decision::Ignore;
  n.fail("expected approve, reject or ignore");
}

Eigen::VectorXd vector_from(const std::map<std::string, double>& m, const Layout& layout,
                            const Eigen::VectorXd& fallback) {
  Eigen::VectorXd v = fallback;
  for (const auto& [k, x] : m) v(static_cast<Eigen::Index>(layout.require(k))) = x;
  return v;
}

CommandPlan parse_plan(const Node& n, const LayoutPtr& inputs, const Eigen::VectorXd& safe_hold) {
  std::vector<PlanSegment> segs;
  const auto items = n.at("segments").items();
  if (items.empty()) n.at("segments").fail("a plan needs at least one segment");
  for (const auto& s : items) {
    s.allow_keys({"duration", "u"});
    const double d = s.at("duration").positive();
    const Node u = s.at("u");
    const auto m = u.number_map();
    keys_within(m, *inputs, u.path());
    segs.push_back({d, vector_from(m, *inputs, safe_hold)});
  }
  Eigen::VectorXd hold = safe_hold;
  if (auto h = n.opt("hold")) {
    const auto m = h->number_map();
    keys_within(m, *inputs, h->path());
    hold = vector_from(m, *inputs, safe_hold);
  }
  return CommandPlan(inputs, std::move(segs), hold);
}

std::shared_ptr<const PlannedCommand> parse_command(const Node& n, const LayoutPtr& inputs,
                                                    const Eigen::VectorXd& safe_hold, bool top_level) {
  n.allow_keys({"id", "at", "segments", "hold", "target", "reasoning", "resources", "label", "procedure_step",
                "on_rejection"});
  if (!top_level && n.has("at")) throw ScenarioInvalid(n.child_path("at"), "fallbacks trigger on rejection, not by time");
  std::optional<double> at;
  if (top_level) at = n.at("at").non_negative();
  std::optional<bool> label;
  if (auto l = n.opt("label")) {
    const std::string s = l->string();
    if (s != "safe" && s != "unsafe") l->fail("expected safe or unsafe");
    label = s == "safe";
  }
  std::optional<std::string> step;
  if (auto p = n.opt("procedure_step")) step = p->string();
  std::shared_ptr<const PlannedCommand> fallback;
  if (auto f = n.opt("on_rejection")) fallback = parse_command(*f, inputs, safe_hold, false);
  auto c = std::make_shared<PlannedCommand>(PlannedCommand{
      n.at("id").string(), at, parse_plan(n, inputs, safe_hold), n.has("target") ? n.at("target").string() : "",
      n.has("reasoning") ? n.at("reasoning").string() : "scripted", n.has("resources") ? n.at("resources").strings()
                                                                                        : std::vector<std::string>{},
      label, step, fallback});
  if (c->request_id.empty()) n.at("id").fail("must not be empty");
  return c;
}

FaultConfig parse_fault(const Node& n, const Scenario& s, const Layout& states) {
  n.allow_keys({"at", "type", "factor", "parameter", "dim", "bias"});
  FaultConfig f;
  f.at = n.at("at").non_negative();
  const Node type = n.at("type");
  const std::string t = type.string();
  if (t == "actuator_gain") {
    f.type = FaultType::ActuatorGain;
    f.factor = n.at("factor").number();
  } else if (t == "parameter_shift") {
    f.type = FaultType::ParameterShift;
    f.factor = n.at("factor").number();
    f.parameter = n.at("parameter").string();
    if (!s.plant.params.count(f.parameter)) n.at("parameter").fail("not a plant parameter");
  } else if (t == "sensor_bias") {
    f.type = FaultType::SensorBias;
    f.dim = n.at("dim").string();
    f.bias = n.at("bias").number();
    if (!states.index_of(f.dim)) n.at("dim").fail("no such dimension");
  } else {
    type.fail("expected actuator_gain, sensor_bias or parameter_shift");
  }
  return f;
}

void collect(const std::shared_ptr<const PlannedCommand>& c, std::vector<const PlannedCommand*>& out) {
  for (auto p = c; p; p = p->on_rejection) out.push_back(p.get());
}

}  // namespace

std::vector<const PlannedCommand*> all_commands(const Scenario& s) {
  std::vector<const PlannedCommand*> out;
  for (const auto& c : s.planner) {
    out.push_back(&c);
    collect(c.on_rejection, out);
  }
  return out;
}

BarrierFunction build_barrier(const BarrierConfig& c, const LayoutPtr& layout, const PlantSpec& plant,
                              const OddTemplate& odd) {
  auto param = [&](const std::string& k) -> double {
    auto it = c.params.find(k);
    if (it == c.params.end()) throw MissingParameter(k);
    return it->second;
  };
  auto param_or = [&](const std::string& k, double fallback) {
    auto it = c.params.find(k);
    return it == c.params.end() ? fallback : it->second;
  };
  if (c.type == "thermal_rate") {
    if (plant.kind != "reactor") throw InvalidArgument("thermal_rate needs the reactor plant");
    const auto rp = ThermalReactorParams::from_params(plant.params);
    if (!c.params.count("t_max") && !odd.parameters.count("T_max")) {
      throw ScenarioInvalid("odd.parameters.T_max", "required by the thermal_rate barrier");
    }
    const double t_max = c.params.count("t_max") ? param("t_max") : odd.require("T_max");
    BarrierFunction b = thermal_rate_barrier(layout, rp, t_max, param("lookahead"),
                                             param_or("scale", t_max - rp.coolant_temp));
    return BarrierFunction(c.label, layout, [b](const Eigen::VectorXd& x) { return b.value_raw(x); },
                           [b](const Eigen::VectorXd& x) { return b.gradient_raw(x); }, b.scale());
  }
  if (c.type == "catalyst_cap") {
    BarrierFunction b = catalyst_cap_barrier(layout, param("c_max"));
    return BarrierFunction(c.label, layout, [b](const Eigen::VectorXd& x) { return b.value_raw(x); },
                           [b](const Eigen::VectorXd& x) { return b.gradient_raw(x); }, b.scale());
  }
  if (c.type == "collision") {
    PlanarRobotParams rp;
    if (plant.kind == "robot") rp = PlanarRobotParams::from_params(plant.params);
    const Eigen::Vector2d obstacle{param_or("obstacle_x", rp.obstacle.x()), param_or("obstacle_y", rp.obstacle.y())};
    BarrierFunction b = collision_barrier(layout, obstacle, param_or("r_safe", rp.r_safe));
    return BarrierFunction(c.label, layout, [b](const Eigen::VectorXd& x) { return b.value_raw(x); },
                           [b](const Eigen::VectorXd& x) { return b.gradient_raw(x); }, b.scale());
  }
  if (c.type == "linear") {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout->size()));
    for (const auto& [dim, v] : c.weights) w(static_cast<Eigen::Index>(layout->require(dim))) = v;
    return linear_barrier(c.label, layout, w, param_or("offset", 0.0), param_or("scale", 1.0));
  }
  throw InvalidArgument("unknown barrier type: " + c.type);
}

Scenario parse_scenario(const Json& doc) {
  const Node root(doc, "");
  root.allow_keys({"schema_version", "name", "description", "seed", "dt", "duration", "min_horizon", "plant",
                   "initial_state", "odd", "barriers", "filter", "bounds", "safe_hold", "autonomy", "uncertainty",
                   "sensor_noise", "confirm_tolerance", "monitor", "faults", "planner", "operator", "procedure",
                   "telemetry"});
  Scenario s;
  s.source = doc;
  s.schema_version = root.at("schema_version").integer();
  if (s.schema_version != kScenarioSchemaVersion) {
    root.at("schema_version").fail("unsupported schema version " + std::to_string(s.schema_version));
  }
  s.name = root.at("name").string();
  if (auto d = root.opt("description")) s.description = d->string();
  if (auto seed = root.opt("seed")) {
    if (!seed->json().is_number_unsigned()) seed->fail("expected a non-negative integer");
    s.seed = seed->json().get<std::uint64_t>();
  }
  s.dt = root.at("dt").positive();
  s.duration = root.at("duration").non_negative();
  if (s.duration < s.dt) root.at("duration").fail("must be at least dt");
  if (auto h = root.opt("min_horizon")) s.min_horizon = h->non_negative();

  const Node plant = root.at("plant");
  s.plant = parse_plant(plant);
  std::optional<ControlAffineModel> model;
  try {
    model = make_model(s.plant);
  } catch (const MissingParameter& e) {
    throw ScenarioInvalid(plant.child_path("params") + "." + e.name(), "required parameter missing");
  } catch (const Error& e) {
    throw ScenarioInvalid(plant.path(), e.what());
  }
  const LayoutPtr states = model->state_layout();
  const LayoutPtr inputs = model->input_layout();

  const Node init = root.at("initial_state");
  s.initial_state = init.number_map();
  keys_within(s.initial_state, *states, init.path());
  for (const auto& d : states->dims()) {
    if (!s.initial_state.count(d.name)) throw ScenarioInvalid(init.child_path(d.name), "required field missing");
  }

  if (auto odd = root.opt("odd")) {
    odd->allow_keys({"domain", "parameters"});
    try {
      s.odd.domain = domain_from_string(odd->at("domain").string());
    } catch (const InvalidArgument& e) {
      odd->at("domain").fail(e.what());
    }
    if (auto p = odd->opt("parameters")) s.odd.parameters = p->number_map();
  }

  if (auto bs = root.opt("barriers")) {
    for (const auto& b : bs->items()) {
      b.allow_keys({"type", "label", "params", "weights"});
      BarrierConfig c;
      c.type = b.at("type").string();
      c.label = b.has("label") ? b.at("label").string() : c.type;
      if (auto p = b.opt("params")) c.params = p->number_map();
      if (auto w = b.opt("weights")) {
        c.weights = w->number_map();
        keys_within(c.weights, *states, w->path());
      }
      try {
        build_barrier(c, states, s.plant, s.odd);
      } catch (const MissingParameter& e) {
        throw ScenarioInvalid(b.child_path("params") + "." + e.name(), "required parameter missing");
      } catch (const ScenarioInvalid&) {
        throw;
      } catch (const Error& e) {
        throw ScenarioInvalid(b.path(), e.what());
      }
      s.barriers.push_back(std::move(c));
    }
  }

  if (auto b = root.opt("bounds")) {
    b->allow_keys({"lower", "upper"});
    s.lower = b->at("lower").number_map();
    s.upper = b->at("upper").number_map();
    keys_within(s.lower, *inputs, b->child_path("lower"));
    keys_within(s.upper, *inputs, b->child_path("upper"));
  }
  for (const auto& d : inputs->dims()) {
    if (!s.lower.count(d.name)) throw ScenarioInvalid("bounds.lower." + d.name, "required field missing");
    if (!s.upper.count(d.name)) throw ScenarioInvalid("bounds.upper." + d.name, "required field missing");
    if (s.lower[d.name] > s.upper[d.name]) throw ScenarioInvalid("bounds.lower." + d.name, "exceeds the upper bound");
  }
  if (auto h = root.opt("safe_hold")) {
    s.safe_hold = h->number_map();
    keys_within(s.safe_hold, *inputs, h->path());
  }
  for (const auto& d : inputs->dims()) {
    if (!s.safe_hold.count(d.name)) s.safe_hold[d.name] = std::clamp(0.0, s.lower[d.name], s.upper[d.name]);
    const double v = s.safe_hold[d.name];
    if (v < s.lower[d.name] || v > s.upper[d.name]) throw ScenarioInvalid("safe_hold." + d.name, "outside the bounds");
  }

  // The safe set has to exist before gains can reference its labels.
  Assembly partial = [&] {
    try {
      return assemble(s);
    } catch (const MissingParameter& e) {
      throw ScenarioInvalid("odd.parameters." + e.name(), "required parameter missing");
    } catch (const ScenarioInvalid&) {
      throw;
    } catch (const Error& e) {
      throw ScenarioInvalid("odd", e.what());
    }
  }();
  if (!partial.odd.safe_set() || partial.odd.safe_set()->size() == 0) {
    throw ScenarioInvalid("barriers", "the operational domain has no barrier functions");
  }
  std::set<std::string> labels;
  for (const auto& b : partial.odd.safe_set()->barriers()) {
    if (!labels.insert(b.label()).second) throw ScenarioInvalid("barriers", "duplicate barrier label " + b.label());
  }

  if (auto f = root.opt("filter")) {
    f->allow_keys({"gamma", "barriers"});
    if (auto g = f->opt("gamma")) s.default_gamma = g->positive();
    if (auto bs = f->opt("barriers")) {
      bs->expect_object();
      for (const auto& [label, v] : bs->json().items()) {
        const Node g(v, bs->child_path(label));
        if (!labels.count(label)) g.fail("no barrier with this label");
        g.allow_keys({"gamma", "eta"});
        GainConfig c;
        c.gamma = g.has("gamma") ? g.at("gamma").positive() : s.default_gamma;
        if (auto eta = g.opt("eta")) c.eta = eta->non_negative();
        s.gains[label] = c;
      }
    }
  }

  if (auto a = root.opt("autonomy")) {
    a->allow_keys({"level", "advancement_threshold", "escalation_fraction", "regression_drop", "approval_window"});
    s.autonomy.level = a->at("level").integer();
    if (s.autonomy.level < 0 || s.autonomy.level > kMaxRuntimeLevel) a->at("level").fail("must be within 0..4");
    if (auto v = a->opt("advancement_threshold")) s.autonomy.policy.advancement_threshold = v->integer();
    if (auto v = a->opt("escalation_fraction")) s.autonomy.policy.escalation_fraction = v->number();
    if (auto v = a->opt("regression_drop")) s.autonomy.policy.regression_drop = v->integer();
    if (auto v = a->opt("approval_window")) s.autonomy.approval_window = v->positive();
    try {
      s.autonomy.policy.validate();
    } catch (const Error& e) {
      a->fail(e.what());
    }
  }

  if (auto u = root.opt("uncertainty")) {
    u->allow_keys({"intervals", "samples", "max_unsafe_fraction"});
    UncertaintyConfig c;
    const Node iv = u->at("intervals");
    iv.expect_object();
    for (const auto& [name, v] : iv.json().items()) {
      const Node n(v, iv.child_path(name));
      const auto pair = n.items();
      if (pair.size() != 2) n.fail("expected [low, high]");
      const Interval i{pair[0].number(), pair[1].number()};
      auto base = s.plant.params.find(name);
      if (base == s.plant.params.end()) n.fail("not a plant parameter");
      if (!(i.low <= base->second && base->second <= i.high)) n.fail("nominal value outside [low, high]");
      c.intervals[name] = i;
    }
    if (auto n = u->opt("samples")) {
      c.samples = n->integer();
      if (c.samples < 1) n->fail("must be at least 1");
    }
    if (auto q = u->opt("max_unsafe_fraction")) {
      c.policy.kind = McPolicyKind::Quantile;
      c.policy.max_unsafe_fraction = q->number();
      if (c.policy.max_unsafe_fraction < 0.0 || c.policy.max_unsafe_fraction >= 1.0) q->fail("must be in [0, 1)");
    }
    s.uncertainty = c;
  }

  auto dim_map = [&](const char* key, std::map<std::string, double>& out) {
    if (auto n = root.opt(key)) {
      out = n->number_map();
      keys_within(out, *states, n->path());
      for (const auto& [k, v] : out) {
        if (v < 0.0) throw ScenarioInvalid(n->child_path(k), "must be non-negative");
      }
    }
  };
  dim_map("sensor_noise", s.sensor_noise);
  dim_map("confirm_tolerance", s.confirm_tolerance);

  if (auto m = root.opt("monitor")) {
    m->allow_keys({"abort_fraction", "deviation_tolerance"});
    if (auto f = m->opt("abort_fraction")) {
      s.monitor.abort_fraction = f->number();
      if (s.monitor.abort_fraction < 0.0 || s.monitor.abort_fraction >= 1.0) f->fail("must be in [0, 1)");
    }
    if (auto d = m->opt("deviation_tolerance")) {
      s.monitor.deviation_tolerance = d->number_map();
      keys_within(s.monitor.deviation_tolerance, *states, d->path());
      for (const auto& [k, v] : s.monitor.deviation_tolerance) {
        if (!(v > 0.0)) throw ScenarioInvalid(d->child_path(k), "must be positive");
      }
    }
  }

  if (auto fs = root.opt("faults")) {
    double last = 0.0;
    for (const auto& f : fs->items()) {
      s.faults.push_back(parse_fault(f, s, *states));
      if (s.faults.back().at < last) f.at("at").fail("faults must be listed in time order");
      last = s.faults.back().at;
    }
  }

  if (auto pr = root.opt("procedure")) {
    const std::string p = pr->string();
    if (p != "pipetting") pr->fail("unknown procedure");
    s.procedure = p;
  }

  std::set<std::string> ids;
  if (auto pl = root.opt("planner")) {
    double last = 0.0;
    for (const auto& c : pl->items()) {
      auto cmd = parse_command(c, inputs, partial.safe_hold, true);
      if (*cmd->at < last) c.at("at").fail("planner entries must be listed in time order");
      if (*cmd->at > s.duration) c.at("at").fail("after the end of the scenario");
      last = *cmd->at;
      s.planner.push_back(*cmd);
    }
    for (const auto* c : all_commands(s)) {
      if (!ids.insert(c->request_id).second) throw ScenarioInvalid("planner", "duplicate request id " + c->request_id);
      if (s.procedure && (!c->procedure_step || !pipetting_alphabet().count(*c->procedure_step))) {
        throw ScenarioInvalid("planner", "request " + c->request_id + " needs a procedure_step from the alphabet");
      }
    }
  }

  if (auto op = root.opt("operator")) {
    op->allow_keys({"name", "default", "decisions", "response_delay", "ack_delay", "root_cause", "reset_twin",
                    "estops", "level_changes"});
    auto& o = s.operator_script;
    if (auto n = op->opt("name")) o.name = n->string();
    if (o.name.empty()) op->at("name").fail("must not be empty");
    if (auto d = op->opt("default")) o.default_decision = parse_decision(*d);
    if (auto ds = op->opt("decisions")) {
      ds->expect_object();
      for (const auto& [id, v] : ds->json().items()) {
        const Node n(v, ds->child_path(id));
        if (!ids.count(id)) n.fail("no planner request with this id");
        o.decisions[id] = parse_decision(n);
      }
    }
    if (auto n = op->opt("response_delay")) o.response_delay = n->non_negative();
    if (auto n = op->opt("ack_delay")) o.ack_delay = n->non_negative();
    if (auto n = op->opt("root_cause")) o.root_cause = n->string();
    if (o.root_cause.empty()) op->at("root_cause").fail("must not be empty");
    if (auto n = op->opt("reset_twin")) o.reset_twin = n->boolean();
    if (auto es = op->opt("estops")) {
      for (const auto& e : es->items()) o.estops.push_back(e.non_negative());
    }
    if (auto ls = op->opt("level_changes")) {
      for (const auto& l : ls->items()) {
        l.allow_keys({"at", "level"});
        o.level_changes.emplace_back(l.at("at").non_negative(), l.at("level").integer());
      }
    }
  }

  if (auto t = root.opt("telemetry")) {
    t->allow_keys({"decimation"});
    s.telemetry_decimation = t->at("decimation").integer();
    if (s.telemetry_decimation < 1) t->at("decimation").fail("must be at least 1");
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioInvalid(path, "cannot open scenario file");
  std::stringstream buf;
  buf << in.rdbuf();
  Json doc;
  try {
    doc = Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw ScenarioInvalid(path, std::string("not valid JSON: ") + e.what());
  }
  return parse_scenario(doc);
}

Assembly assemble(const Scenario& s) {
  ControlAffineModel model = make_model(s.plant);
  const LayoutPtr& states = model.state_layout();
  const LayoutPtr& inputs = model.input_layout();

  std::vector<BarrierFunction> extra;
  for (const auto& c : s.barriers) extra.push_back(build_barrier(c, states, s.plant, s.odd));
  std::optional<OddSpec> odd;
  if (s.odd.domain == Domain::Generic) {
    odd.emplace(std::vector<OddConstraint>{}, SafeSet(std::move(extra)), Domain::Generic);
  } else {
    odd.emplace(build_odd(s.odd, states, std::move(extra)));
  }

  const Eigen::Index m = static_cast<Eigen::Index>(inputs->size());
  Eigen::VectorXd lo(m), hi(m), hold(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const std::string& name = inputs->dim(static_cast<std::size_t>(j)).name;
    lo(j) = s.lower.count(name) ? s.lower.at(name) : 0.0;
    hi(j) = s.upper.count(name) ? s.upper.at(name) : 0.0;
    hold(j) = s.safe_hold.count(name) ? s.safe_hold.at(name) : 0.0;
  }

  FilterConfig filter;
  filter.default_alpha = ClassKFunction(s.default_gamma);
  for (const auto& [label, g] : s.gains) {
    filter.alpha.emplace(label, ClassKFunction(g.gamma));
    filter.eta[label] = g.eta;
  }

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states->size()));
  for (const auto& [k, v] : s.initial_state) {
    if (auto i = states->index_of(k)) x0(static_cast<Eigen::Index>(*i)) = v;
  }
  StateVector start(states, x0);
  return Assembly{std::move(model), std::move(*odd), ControlBounds(lo, hi), std::move(filter), std::move(start), hold};
}

}  // namespace labguard
