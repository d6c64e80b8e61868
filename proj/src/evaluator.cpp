#include "slung/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "slung/errors.hpp"

namespace slung {

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, std::size_t line, const std::string& col) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw SchemaError("line " + std::to_string(line) + ": column '" + col +
                      "' is not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::string join_events(const std::vector<Event>& events) {
  std::string out;
  for (const Event& e : events) {
    if (!out.empty()) out += ';';
    out += to_string(e);
  }
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Row values in log_columns() order, excluding mode and event.
std::vector<double> numeric_fields(const LogRow& r) {
  const SystemState& s = r.state;
  return {r.t,
          s.quad_pos.x(), s.quad_pos.y(), s.quad_pos.z(),
          s.quad_vel.x(), s.quad_vel.y(), s.quad_vel.z(),
          s.attitude.w(), s.attitude.x(), s.attitude.y(), s.attitude.z(),
          s.body_rates.x(), s.body_rates.y(), s.body_rates.z(),
          s.payload_pos.x(), s.payload_pos.y(), s.payload_pos.z(),
          s.payload_vel.x(), s.payload_vel.y(), s.payload_vel.z()};
}

double state_divergence(const SystemState& a, const SystemState& b) {
  double d = 0.0;
  auto acc = [&](const auto& x, const auto& y) { d = std::max(d, (x - y).cwiseAbs().maxCoeff()); };
  acc(a.quad_pos, b.quad_pos);
  acc(a.quad_vel, b.quad_vel);
  acc(a.attitude.coeffs(), b.attitude.coeffs());
  acc(a.body_rates, b.body_rates);
  acc(a.payload_pos, b.payload_pos);
  acc(a.payload_vel, b.payload_vel);
  d = std::max(d, std::abs(a.time - b.time));
  return d;
}

bool bit_equal(const SystemState& a, const SystemState& b) {
  return a.quad_pos == b.quad_pos && a.quad_vel == b.quad_vel &&
         a.attitude.coeffs() == b.attitude.coeffs() && a.body_rates == b.body_rates &&
         a.payload_pos == b.payload_pos && a.payload_vel == b.payload_vel &&
         a.cable_mode == b.cable_mode && a.time == b.time;
}

bool same_reward(const RewardBreakdown& a, const RewardBreakdown& b) {
  return a.safe == b.safe && a.crash == b.crash && a.smooth == b.smooth && a.target == b.target &&
         a.gate == b.gate && a.total == b.total;
}

double radial_offset(const Vec3& p, const GateSpec& g) {
  const Vec3 d = p - g.center;
  return (d - d.dot(g.normal) * g.normal).norm();
}

// Offset of the first plane crossing of a sampled path, if it crosses.
std::optional<double> first_crossing_offset(const std::vector<Vec3>& path, const GateSpec& g) {
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (auto hit = gate_plane_intersection(path[i - 1], path[i], g)) return radial_offset(*hit, g);
  }
  return std::nullopt;
}

nlohmann::json summary_json(const MetricSummary& m, const char* label) {
  return {{"label", label}, {"mean", m.mean}, {"std", m.std}, {"n", m.n}};
}

}  // namespace

RolloutLog run_rollout(const PolicyParams& params, const EnvConfig& cfg, std::uint64_t seed,
                       bool deterministic) {
  Env env(cfg, seed);
  if (params.obs_dim() != env.obs_dim()) {
    throw FormatError("policy obs_dim " + std::to_string(params.obs_dim()) +
                      " does not match scenario obs_dim " + std::to_string(env.obs_dim()));
  }
  Rng rng(stream_seed(seed, 0x5a3b1eULL));
  RolloutLog log;
  log.kind = env.kind();
  log.dt = cfg.physics.dt;
  log.initial = env.state();

  std::vector<double> obs(env.obs_dim());
  env.observe_into(obs);
  RewardBreakdown reward;
  StepInfo info;
  bool term = false, trunc = false;
  while (!env.done()) {
    const auto t0 = std::chrono::steady_clock::now();
    const PolicyOutput out = policy_forward(params, obs);
    Action a = out.mean;
    if (!deterministic) a = sample_from(out.mean_pre, out.log_std, rng).action;
    const auto t1 = std::chrono::steady_clock::now();
    log.inference_latency_s.push_back(std::chrono::duration<double>(t1 - t0).count());

    env.step_into(a, obs, reward, term, trunc, info);
    LogRow row;
    row.t = env.state().time;
    row.state = env.state();
    row.action = a;
    row.reward = reward;
    row.progress = info.progress_index;
    row.events = info.events;
    log.rows.push_back(std::move(row));
  }
  log.terminated = term;
  log.truncated = trunc;
  return log;
}

MetricsReport compute_metrics(const RolloutLog& log, const TrackSpec& track) {
  if (log.rows.empty()) throw EmptyLog("compute_metrics: log has no rows");
  MetricsReport m;

  const std::size_t total = track.total_targets();
  std::size_t waypoints_passed = 0;
  std::size_t last_wp_row = 0;
  bool failed = false;
  std::vector<bool> gate_q(track.gates.size(), false), gate_p(track.gates.size(), false);
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    for (const Event& e : log.rows[i].events) {
      switch (e.kind) {
        case EventKind::WaypointPassed:
          ++waypoints_passed;
          last_wp_row = i;
          break;
        case EventKind::GatePassed:
          if (e.index >= 0 && static_cast<std::size_t>(e.index) < gate_q.size()) gate_q[e.index] = true;
          break;
        case EventKind::PayloadGatePassed:
          if (e.index >= 0 && static_cast<std::size_t>(e.index) < gate_p.size()) gate_p[e.index] = true;
          break;
        case EventKind::GateCollided:
        case EventKind::Crash:
          failed = true;
          break;
        case EventKind::SafetyViolation:
          break;
      }
    }
  }
  m.success = !failed && waypoints_passed >= total;
  if (m.success && track.kind == ScenarioKind::GateTraversal) {
    m.success = std::all_of(gate_q.begin(), gate_q.end(), [](bool b) { return b; }) &&
                std::all_of(gate_p.begin(), gate_p.end(), [](bool b) { return b; });
  }
  if (m.success) m.completion_time = log.rows[last_wp_row].t - log.initial.time;

  const std::size_t end = m.success ? last_wp_row + 1 : log.rows.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < end; ++i) {
    const double v = log.rows[i].state.quad_vel.norm();
    sum += v;
    m.max_vel = std::max(m.max_vel, v);
  }
  m.avg_vel = sum / static_cast<double>(end);

  std::vector<Vec3> quad_path{log.initial.quad_pos}, payload_path{log.initial.payload_pos};
  for (const LogRow& r : log.rows) {
    quad_path.push_back(r.state.quad_pos);
    payload_path.push_back(r.state.payload_pos);
  }
  for (const GateSpec& g : track.gates) {
    if (auto d = first_crossing_offset(quad_path, g)) m.quad_gate_deviations.push_back(*d);
    if (auto d = first_crossing_offset(payload_path, g)) m.payload_gate_deviations.push_back(*d);
  }
  auto mean_of = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  m.quad_gate_deviation = mean_of(m.quad_gate_deviations);
  m.payload_gate_deviation = mean_of(m.payload_gate_deviations);

  if (track.kind == ScenarioKind::PayloadTargeting) {
    for (std::size_t i = 0; i < total; ++i) {
      double best = (log.initial.payload_pos - track.target(i)).norm();
      for (const Vec3& p : payload_path) best = std::min(best, (p - track.target(i)).norm());
      m.target_errors.push_back(best);
    }
  }

  if (!log.inference_latency_s.empty()) {
    std::vector<double> lat = log.inference_latency_s;
    m.latency_mean_s = std::accumulate(lat.begin(), lat.end(), 0.0) / lat.size();
    std::sort(lat.begin(), lat.end());
    const std::size_t k = static_cast<std::size_t>(std::ceil(0.99 * lat.size())) - 1;
    m.latency_p99_s = lat[std::min(k, lat.size() - 1)];
  }
  return m;
}

const std::vector<std::string>& log_columns() {
  static const std::vector<std::string> cols = {
      "t",     "px",     "py",       "pz",      "vx",     "vy",      "vz",      "qw",
      "qx",    "qy",     "qz",       "wx",      "wy",     "wz",      "lx",      "ly",
      "lz",    "lvx",    "lvy",      "lvz",     "mode",   "a0",      "a1",      "a2",
      "a3",    "r_safe", "r_crash",  "r_smooth", "r_target", "r_gate", "r_total", "event"};
  return cols;
}

void export_log(const RolloutLog& log, const std::filesystem::path& path, ExportFormat format) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  const auto& cols = log_columns();
  if (format == ExportFormat::Csv) {
    for (std::size_t c = 0; c < cols.size(); ++c) f << (c ? "," : "") << cols[c];
    f << '\n';
    for (const LogRow& r : log.rows) {
      for (double v : numeric_fields(r)) f << fmt(v) << ',';
      f << (r.state.cable_mode == CableMode::Taut ? "taut" : "slack");
      for (double v : r.action) f << ',' << fmt(v);
      const RewardBreakdown& w = r.reward;
      for (double v : {w.safe, w.crash, w.smooth, w.target, w.gate, w.total}) f << ',' << fmt(v);
      f << ',' << join_events(r.events) << '\n';
    }
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (const LogRow& r : log.rows) {
      nlohmann::json j;
      const std::vector<double> nums = numeric_fields(r);
      for (std::size_t c = 0; c < nums.size(); ++c) j[cols[c]] = nums[c];
      j["mode"] = r.state.cable_mode == CableMode::Taut ? "taut" : "slack";
      for (std::size_t k = 0; k < kActionDim; ++k) j["a" + std::to_string(k)] = r.action[k];
      j["r_safe"] = r.reward.safe;
      j["r_crash"] = r.reward.crash;
      j["r_smooth"] = r.reward.smooth;
      j["r_target"] = r.reward.target;
      j["r_gate"] = r.reward.gate;
      j["r_total"] = r.reward.total;
      j["event"] = join_events(r.events);
      rows.push_back(std::move(j));
    }
    nlohmann::json doc = {{"scenario", std::string(to_string(log.kind))},
                          {"dt", log.dt},
                          {"columns", cols},
                          {"rows", rows}};
    f << doc.dump(1) << '\n';
  }
  if (!f) throw IoError("failed writing: " + path.string());
}

RolloutLog import_log_csv(const std::filesystem::path& path, ScenarioKind kind, double dt,
                          const SystemState& initial) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open log: " + path.string());
  const auto& cols = log_columns();
  std::string line;
  if (!std::getline(f, line)) throw SchemaError("empty log file: " + path.string());
  if (split(line, ',') != cols) throw SchemaError("log header does not match the documented columns");

  RolloutLog log;
  log.kind = kind;
  log.dt = dt;
  log.initial = initial;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != cols.size()) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(cols.size()) + " fields, got " +
                        std::to_string(cells.size()));
    }
    auto num = [&](std::size_t c) { return parse_double(cells[c], lineno, cols[c]); };
    LogRow r;
    r.t = num(0);
    SystemState& s = r.state;
    s.quad_pos = {num(1), num(2), num(3)};
    s.quad_vel = {num(4), num(5), num(6)};
    s.attitude = Quat(num(7), num(8), num(9), num(10));
    s.body_rates = {num(11), num(12), num(13)};
    s.payload_pos = {num(14), num(15), num(16)};
    s.payload_vel = {num(17), num(18), num(19)};
    if (cells[20] == "taut") {
      s.cable_mode = CableMode::Taut;
    } else if (cells[20] == "slack") {
      s.cable_mode = CableMode::Slack;
    } else {
      throw SchemaError("line " + std::to_string(lineno) + ": bad mode '" + cells[20] + "'");
    }
    s.time = r.t;
    for (std::size_t k = 0; k < kActionDim; ++k) r.action[k] = num(21 + k);
    r.reward = {num(25), num(26), num(27), num(28), num(29), num(30)};
    if (!cells[31].empty()) {
      for (const std::string& e : split(cells[31], ';')) r.events.push_back(parse_event(e));
    }
    for (const Event& e : r.events) {
      if (e.kind == EventKind::WaypointPassed) r.progress = static_cast<std::size_t>(e.index) + 1;
    }
    if (r.progress == 0 && !log.rows.empty()) r.progress = log.rows.back().progress;
    log.rows.push_back(std::move(r));
  }
  return log;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

AggregateReport aggregate(const std::vector<MetricsReport>& reports) {
  AggregateReport a;
  a.trials = reports.size();
  if (reports.empty()) return a;
  std::vector<double> maxv, avgv, time, qdev, pdev, terr, lat_mean, lat_p99;
  std::size_t ok = 0;
  for (const MetricsReport& r : reports) {
    ok += r.success ? 1 : 0;
    maxv.push_back(r.max_vel);
    avgv.push_back(r.avg_vel);
    if (r.completion_time) time.push_back(*r.completion_time);
    if (r.quad_gate_deviation) qdev.push_back(*r.quad_gate_deviation);
    if (r.payload_gate_deviation) pdev.push_back(*r.payload_gate_deviation);
    terr.insert(terr.end(), r.target_errors.begin(), r.target_errors.end());
    if (r.latency_mean_s) lat_mean.push_back(*r.latency_mean_s);
    if (r.latency_p99_s) lat_p99.push_back(*r.latency_p99_s);
  }
  a.success_rate = static_cast<double>(ok) / static_cast<double>(reports.size());
  a.max_vel = summarize(maxv);
  a.avg_vel = summarize(avgv);
  a.completion_time = summarize(time);
  a.quad_gate_deviation = summarize(qdev);
  a.payload_gate_deviation = summarize(pdev);
  a.target_error = summarize(terr);
  a.latency_mean_s = summarize(lat_mean);
  a.latency_p99_s = summarize(lat_p99);
  return a;
}

void export_report(const MetricsReport& r, const std::filesystem::path& path) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j = {{"success", r.success},
                      {"max_vel", r.max_vel},
                      {"avg_vel", r.avg_vel},
                      {"completion_time", opt(r.completion_time)},
                      {"quad_gate_deviation", opt(r.quad_gate_deviation)},
                      {"payload_gate_deviation", opt(r.payload_gate_deviation)},
                      {"quad_gate_deviations", r.quad_gate_deviations},
                      {"payload_gate_deviations", r.payload_gate_deviations},
                      {"target_errors", r.target_errors},
                      {"latency_mean_s", opt(r.latency_mean_s)},
                      {"latency_p99_s", opt(r.latency_p99_s)}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << j.dump(2) << '\n';
}

void export_summary(const AggregateReport& a, const std::filesystem::path& path) {
  nlohmann::json j = {
      {"trials", a.trials},
      {"success_rate", a.success_rate},
      {"metrics",
       {{"max_vel", summary_json(a.max_vel, "Max Vel. (m/s)")},
        {"avg_vel", summary_json(a.avg_vel, "Avg Vel. (m/s)")},
        {"completion_time", summary_json(a.completion_time, "Time (s)")},
        {"quad_gate_deviation", summary_json(a.quad_gate_deviation, "Quad. Dev. (m)")},
        {"payload_gate_deviation", summary_json(a.payload_gate_deviation, "Payload Dev. (m)")},
        {"target_error", summary_json(a.target_error, "Target Error (m)")},
        {"latency_mean_s", summary_json(a.latency_mean_s, "Comp. Time (s)")},
        {"latency_p99_s", summary_json(a.latency_p99_s, "Comp. Time p99 (s)")}}}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << j.dump(2) << '\n';
}

ReplayReport replay(const EnvConfig& cfg, std::uint64_t seed, const RolloutLog& log) {
  Env env(cfg, seed);
  ReplayReport rep;
  rep.pass = bit_equal(env.state(), log.initial);
  if (!rep.pass) rep.first_divergence_step = 0;
  rep.max_divergence = state_divergence(env.state(), log.initial);

  RewardBreakdown reward;
  StepInfo info;
  bool term = false, trunc = false;
  std::vector<double> obs(env.obs_dim());
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    if (env.done()) {
      rep.pass = false;
      if (!rep.first_divergence_step) rep.first_divergence_step = i + 1;
      rep.max_divergence = std::numeric_limits<double>::infinity();
      break;
    }
    env.step_into(log.rows[i].action, obs, reward, term, trunc, info);
    const double d = state_divergence(env.state(), log.rows[i].state);
    rep.divergence.push_back(d);
    rep.max_divergence = std::max(rep.max_divergence, d);
    // A clamped action means the env applied something other than what was logged.
    const LogRow& row = log.rows[i];
    const bool same = bit_equal(env.state(), row.state) && !info.action_clamped &&
                      same_reward(reward, row.reward) && info.events == row.events;
    if (!same) {
      rep.pass = false;
      if (!rep.first_divergence_step) rep.first_divergence_step = i + 1;
    }
    ++rep.steps;
  }
  return rep;
}

}  // namespace slung
