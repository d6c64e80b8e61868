#include "slung/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "slung/errors.hpp"

namespace slung {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void get(const std::string& key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, long long& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
      out = v->get<long long>();
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = raw(key)) {
      const bool ok = v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0);
      if (!ok) throw ConfigError(field(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  template <int N>
  void get(const std::string& key, Eigen::Matrix<double, N, 1>& out) {
    if (const json* v = raw(key)) out = vec<N>(*v, field(key));
  }

  template <int N>
  static Eigen::Matrix<double, N, 1> vec(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != N) {
      throw ConfigError(where + ": expected an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
      if (!v[i].is_number()) throw ConfigError(where + ": expected numbers");
      out[i] = v[i].get<double>();
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(field(key) + ": unknown key");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json track_to_json(const TrackSpec& t) {
  json wps = json::array();
  for (const Vec3& w : t.waypoints) wps.push_back(vec_json(w));
  json gates = json::array();
  for (const GateSpec& g : t.gates) {
    gates.push_back({{"center", vec_json(g.center)},
                     {"normal", vec_json(g.normal)},
                     {"radius", g.radius},
                     {"collision_band", g.collision_band}});
  }
  return {{"name", t.name},
          {"waypoints", wps},
          {"threshold", t.threshold},
          {"laps", t.laps},
          {"start_position", vec_json(t.start_pose.position)},
          {"start_yaw", t.start_pose.yaw},
          {"gates", gates},
          {"workspace",
           {{"min_corner", vec_json(t.workspace.min_corner)},
            {"max_corner", vec_json(t.workspace.max_corner)}}}};
}

TrackSpec track_from_json(const json& j) {
  if (j.is_string()) return make_preset(j.get<std::string>());
  ObjectReader r(j, "track");
  TrackSpec t;
  // An inline track may start from a preset and override parts of it.
  if (const json* base = r.raw("preset")) {
    if (!base->is_string()) throw ConfigError("track.preset: expected a string");
    t = make_preset(base->get<std::string>());
  } else {
    t = TrackSpec{};
    t.name = "inline";
  }
  r.get("name", t.name);
  if (const json* w = r.raw("waypoints")) {
    if (!w->is_array()) throw ConfigError("track.waypoints: expected an array");
    t.waypoints.clear();
    for (std::size_t i = 0; i < w->size(); ++i) {
      t.waypoints.push_back(
          ObjectReader::vec<3>((*w)[i], "track.waypoints[" + std::to_string(i) + "]"));
    }
  }
  r.get("threshold", t.threshold);
  r.get("laps", t.laps);
  r.get("start_position", t.start_pose.position);
  r.get("start_yaw", t.start_pose.yaw);
  if (const json* g = r.raw("gates")) {
    if (!g->is_array()) throw ConfigError("track.gates: expected an array");
    t.gates.clear();
    for (std::size_t i = 0; i < g->size(); ++i) {
      ObjectReader gr((*g)[i], "track.gates[" + std::to_string(i) + "]");
      GateSpec gate;
      gr.get("center", gate.center);
      gr.get("normal", gate.normal);
      gr.get("radius", gate.radius);
      gr.get("collision_band", gate.collision_band);
      gr.finish();
      t.gates.push_back(gate);
    }
  }
  if (const json* w = r.raw("workspace")) {
    ObjectReader wr(*w, "track.workspace");
    wr.get("min_corner", t.workspace.min_corner);
    wr.get("max_corner", t.workspace.max_corner);
    wr.finish();
  }
  r.finish();
  if (!t.gates.empty()) {
    t.kind = ScenarioKind::GateTraversal;
  } else if (t.kind == ScenarioKind::GateTraversal) {
    t.kind = ScenarioKind::WaypointPassing;
  }
  return t;
}

}  // namespace

void RunConfig::validate() const {
  env.validate();
  ppo.validate();
  if (eval.trials < 1) throw ConfigError("eval.trials must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  const bool gated = !env.track.gates.empty();
  if (gated != (env.track.kind == ScenarioKind::GateTraversal)) {
    throw ConfigError("scenario '" + std::string(to_string(env.track.kind)) +
                      "' is incompatible with track '" + env.track.name + "'" +
                      (gated ? " (track has gates)" : " (track has no gates)"));
  }
}

json to_json(const RunConfig& c) {
  const PhysicalParams& p = c.env.physics;
  const RewardConfig& w = c.env.reward;
  const NormalizationConstants& n = c.env.norm;
  const PpoConfig& o = c.ppo;
  return {
      {"scenario", std::string(to_string(c.env.track.kind))},
      {"track", track_to_json(c.env.track)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"checkpoint_every", c.checkpoint_every},
      {"physics",
       {{"quad_mass", p.quad_mass},
        {"payload_mass", p.payload_mass},
        {"cable_length", p.cable_length},
        {"inertia_diag", vec_json(p.inertia_diag)},
        {"gravity", p.gravity},
        {"twr_max", p.twr_max},
        {"rate_tau", p.rate_tau},
        {"dt", p.dt}}},
      {"reward",
       {{"r_bound", w.r_bound},
        {"r_excess", w.r_excess},
        {"r_arrival", w.r_arrival},
        {"lambda1", w.lambda1},
        {"lambda2", w.lambda2},
        {"lambda3", w.lambda3},
        {"phi_max", w.phi_max}}},
      {"normalization",
       {{"k_q", vec_json(n.k_q)},
        {"k_v", vec_json(n.k_v)},
        {"k_p", vec_json(n.k_p)},
        {"k_g", vec_json(n.k_g)},
        {"k_phi", json::array({n.k_phi.x(), n.k_phi.y()})}}},
      {"randomization", {{"deviation_delta", c.env.randomization.deviation_delta}}},
      {"env",
       {{"omega_max", vec_json(c.env.omega_max)},
        {"max_episode_steps", c.env.max_episode_steps},
        {"body_radius", c.env.body_radius},
        {"gate_is_wall", c.env.gate_is_wall}}},
      {"ppo",
       {{"gamma", o.gamma},
        {"gae_lambda", o.gae_lambda},
        {"clip_epsilon", o.clip_epsilon},
        {"learning_rate", o.learning_rate},
        {"epochs_per_batch", o.epochs_per_batch},
        {"minibatch_size", o.minibatch_size},
        {"rollout_length", o.rollout_length},
        {"n_envs", o.n_envs},
        {"entropy_coef", o.entropy_coef},
        {"value_coef", o.value_coef},
        {"max_grad_norm", o.max_grad_norm},
        {"total_timesteps", o.total_timesteps},
        {"hidden", o.hidden},
        {"initial_log_std", o.initial_log_std},
        {"anneal_lr", o.anneal_lr},
        {"normalize_rewards", o.normalize_rewards}}},
      {"eval", {{"trials", c.eval.trials}, {"deterministic", c.eval.deterministic}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  ObjectReader r(j, "");
  if (const json* t = r.raw("track")) c.env.track = track_from_json(*t);
  if (const json* s = r.raw("scenario")) {
    if (!s->is_string()) throw ConfigError("scenario: expected a string");
    c.env.track.kind = parse_scenario_kind(s->get<std::string>());
  }
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.get("checkpoint_every", c.checkpoint_every);

  if (const json* v = r.raw("physics")) {
    ObjectReader s(*v, "physics");
    PhysicalParams& p = c.env.physics;
    s.get("quad_mass", p.quad_mass);
    s.get("payload_mass", p.payload_mass);
    s.get("cable_length", p.cable_length);
    s.get("inertia_diag", p.inertia_diag);
    s.get("gravity", p.gravity);
    s.get("twr_max", p.twr_max);
    s.get("rate_tau", p.rate_tau);
    s.get("dt", p.dt);
    s.finish();
  }
  if (const json* v = r.raw("reward")) {
    ObjectReader s(*v, "reward");
    RewardConfig& w = c.env.reward;
    s.get("r_bound", w.r_bound);
    s.get("r_excess", w.r_excess);
    s.get("r_arrival", w.r_arrival);
    s.get("lambda1", w.lambda1);
    s.get("lambda2", w.lambda2);
    s.get("lambda3", w.lambda3);
    s.get("phi_max", w.phi_max);
    s.finish();
  }
  if (const json* v = r.raw("normalization")) {
    ObjectReader s(*v, "normalization");
    NormalizationConstants& n = c.env.norm;
    s.get("k_q", n.k_q);
    s.get("k_v", n.k_v);
    s.get("k_p", n.k_p);
    s.get("k_g", n.k_g);
    s.get("k_phi", n.k_phi);
    s.finish();
  }
  if (const json* v = r.raw("randomization")) {
    ObjectReader s(*v, "randomization");
    s.get("deviation_delta", c.env.randomization.deviation_delta);
    s.finish();
  }
  if (const json* v = r.raw("env")) {
    ObjectReader s(*v, "env");
    s.get("omega_max", c.env.omega_max);
    s.get("max_episode_steps", c.env.max_episode_steps);
    s.get("body_radius", c.env.body_radius);
    s.get("gate_is_wall", c.env.gate_is_wall);
    s.finish();
  }
  if (const json* v = r.raw("ppo")) {
    ObjectReader s(*v, "ppo");
    PpoConfig& o = c.ppo;
    s.get("gamma", o.gamma);
    s.get("gae_lambda", o.gae_lambda);
    s.get("clip_epsilon", o.clip_epsilon);
    s.get("learning_rate", o.learning_rate);
    s.get("epochs_per_batch", o.epochs_per_batch);
    s.get("minibatch_size", o.minibatch_size);
    s.get("rollout_length", o.rollout_length);
    s.get("n_envs", o.n_envs);
    s.get("entropy_coef", o.entropy_coef);
    s.get("value_coef", o.value_coef);
    s.get("max_grad_norm", o.max_grad_norm);
    s.get("total_timesteps", o.total_timesteps);
    s.get("hidden", o.hidden);
    s.get("initial_log_std", o.initial_log_std);
    s.get("anneal_lr", o.anneal_lr);
    s.get("normalize_rewards", o.normalize_rewards);
    s.finish();
  }
  if (const json* v = r.raw("eval")) {
    ObjectReader s(*v, "eval");
    s.get("trials", c.eval.trials);
    s.get("deterministic", c.eval.deterministic);
    s.finish();
  }
  r.finish();
  c.validate();
  return c;
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  try {
    return json::parse(f, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number.
    std::ifstream g(path);
    std::string text((std::istreambuf_iterator<char>(g)), std::istreambuf_iterator<char>());
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": syntax error: " + e.what());
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::stringstream ss(key);
  std::string part, walked;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("override '" + key + "' has an empty path segment");
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) {
      throw ConfigError("override '" + key + "': '" + walked + "' is not an object");
    }
    walked += (walked.empty() ? "" : ".") + parts[i];
    node = &(*node)[parts[i]];
  }
  *node = value;
}

RunConfig load_run_config(const std::filesystem::path* path,
                          const std::vector<std::string>& overrides) {
  json j = path ? read_config_file(*path) : json::object();
  for (const std::string& o : overrides) apply_override(j, o);
  return run_config_from_json(j);
}

std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
  std::filesystem::path dir = cfg.output_dir;
  if (dir.empty()) {
    dir = std::filesystem::path("runs") / (std::string(to_string(cfg.env.track.kind)) + "_" +
                                           cfg.env.track.name + "_s" + std::to_string(cfg.seed));
  }
  if (dir.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) dir = std::filesystem::path(root) / dir;
  }
  return dir;
}

json state_to_json(const SystemState& s) {
  return {{"quad_pos", vec_json(s.quad_pos)},
          {"quad_vel", vec_json(s.quad_vel)},
          {"attitude", json::array({s.attitude.w(), s.attitude.x(), s.attitude.y(), s.attitude.z()})},
          {"body_rates", vec_json(s.body_rates)},
          {"payload_pos", vec_json(s.payload_pos)},
          {"payload_vel", vec_json(s.payload_vel)},
          {"cable_mode", s.cable_mode == CableMode::Taut ? "taut" : "slack"},
          {"time", s.time}};
}

SystemState state_from_json(const json& j) {
  ObjectReader r(j, "state");
  SystemState s;
  r.get("quad_pos", s.quad_pos);
  r.get("quad_vel", s.quad_vel);
  if (const json* a = r.raw("attitude")) {
    const Eigen::Vector4d q = ObjectReader::vec<4>(*a, "state.attitude");
    s.attitude = Quat(q[0], q[1], q[2], q[3]);
  }
  r.get("body_rates", s.body_rates);
  r.get("payload_pos", s.payload_pos);
  r.get("payload_vel", s.payload_vel);
  std::string mode = "taut";
  r.get("cable_mode", mode);
  if (mode != "taut" && mode != "slack") throw SchemaError("state.cable_mode: bad value " + mode);
  s.cable_mode = mode == "taut" ? CableMode::Taut : CableMode::Slack;
  r.get("time", s.time);
  r.finish();
  return s;
}

}  // namespace slung
