#include "slung/env.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <utility>

#include "slung/errors.hpp"

namespace slung {

namespace {

double atan2_zero(double y, double x) {
  if (y == 0.0 && x == 0.0) return 0.0;
  return std::atan2(y, x);
}

}  // namespace

void NormalizationConstants::validate() const {
  const bool ok = (k_q.array() > 0).all() && (k_v.array() > 0).all() && (k_p.array() > 0).all() &&
                  (k_g.array() > 0).all() && (k_phi.array() > 0).all();
  if (!ok) throw ConfigError("normalization: all constants must be > 0");
}

void RewardConfig::validate() const {
  if (r_bound < 0 || r_excess < 0 || r_arrival < 0 || lambda1 < 0 || lambda2 < 0 ||
      lambda3 < 0) {
    throw ConfigError("reward: penalties, bonuses and weights must be >= 0");
  }
  if (!(phi_max > 0 && phi_max < M_PI)) throw ConfigError("reward: phi_max must be in (0, pi)");
}

void EnvConfig::validate() const {
  physics.validate();
  reward.validate();
  norm.validate();
  track.validate();
  if (!(omega_max.array() > 0).all()) throw ConfigError("env: omega_max must be > 0");
  if (max_episode_steps < 1) throw ConfigError("env: max_episode_steps must be >= 1");
  if (randomization.deviation_delta < 0 || randomization.deviation_delta >= M_PI / 2) {
    throw ConfigError("env: deviation_delta must be in [0, pi/2)");
  }
  if (body_radius < 0) throw ConfigError("env: body_radius must be >= 0");
  for (const GateSpec& g : track.gates) {
    if (g.radius <= body_radius) {
      throw ConfigError("env: gate radius must exceed the quadrotor body radius");
    }
  }
}

std::size_t observation_dim(ScenarioKind kind) {
  return kind == ScenarioKind::GateTraversal ? 27 : 24;
}

double assemble_total(const RewardBreakdown& r, const RewardConfig& cfg, ScenarioKind kind) {
  double specific = r.target;
  if (kind == ScenarioKind::GateTraversal) specific += cfg.lambda3 * r.gate;
  return r.safe + r.crash + r.smooth + cfg.lambda2 * specific;
}

std::string to_string(const Event& e) {
  const char* name = "";
  switch (e.kind) {
    case EventKind::WaypointPassed:
      name = "WaypointPassed";
      break;
    case EventKind::GatePassed:
      name = "GatePassed";
      break;
    case EventKind::PayloadGatePassed:
      name = "PayloadGatePassed";
      break;
    case EventKind::GateCollided:
      name = "GateCollided";
      break;
    case EventKind::Crash:
      return "Crash";
    case EventKind::SafetyViolation:
      return "SafetyViolation";
  }
  return std::string(name) + "(" + std::to_string(e.index) + ")";
}

Event parse_event(std::string_view text) {
  if (text == "Crash") return {EventKind::Crash, -1};
  if (text == "SafetyViolation") return {EventKind::SafetyViolation, -1};
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') {
    throw SchemaError("malformed event '" + std::string(text) + "'");
  }
  const std::string_view name = text.substr(0, open);
  const std::string_view num = text.substr(open + 1, text.size() - open - 2);
  int index = 0;
  const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), index);
  if (ec != std::errc() || ptr != num.data() + num.size()) {
    throw SchemaError("malformed event index '" + std::string(text) + "'");
  }
  if (name == "WaypointPassed") return {EventKind::WaypointPassed, index};
  if (name == "GatePassed") return {EventKind::GatePassed, index};
  if (name == "PayloadGatePassed") return {EventKind::PayloadGatePassed, index};
  if (name == "GateCollided") return {EventKind::GateCollided, index};
  throw SchemaError("unknown event '" + std::string(text) + "'");
}

DeviationAngles deviation_angles(const SystemState& state) {
  const Vec3 rel = state.payload_pos - state.quad_pos;
  if (rel.norm() < 1e-9) {
    throw DegenerateGeometry("deviation_angles: payload coincides with quadrotor");
  }
  const Vec3 b = state.attitude.conjugate() * rel;
  // +0.0 folds a -0 denominator so the horizontal case follows atan2(0, 0) = 0.
  const double down = -b.z() + 0.0;
  return {atan2_zero(b.y(), down), atan2_zero(b.x(), down)};
}

Command denormalize_action(const Action& a, const PhysicalParams& params, const Vec3& omega_max,
                           bool* clamped) {
  Action c;
  bool any = false;
  for (std::size_t i = 0; i < kActionDim; ++i) {
    c[i] = std::clamp(a[i], -1.0, 1.0);
    any = any || c[i] != a[i];
  }
  if (clamped) *clamped = any;
  Command cmd;
  cmd.thrust = (c[0] + 1.0) / 2.0 * params.twr_max;
  cmd.rate_setpoint = Vec3(c[1], c[2], c[3]).cwiseProduct(omega_max);
  return cmd;
}

void build_observation(const SystemState& state, const ScenarioContext& ctx,
                       const Action& prev_action, const NormalizationConstants& k,
                       ScenarioKind env_kind, std::span<double> out) {
  if (ctx.kind != env_kind) {
    throw ContextMismatch("scenario context '" + std::string(to_string(ctx.kind)) +
                          "' does not match env scenario '" + std::string(to_string(env_kind)) +
                          "'");
  }
  if (out.size() != observation_dim(env_kind)) {
    throw DimensionMismatch("observation buffer has wrong size");
  }
  std::size_t i = 0;
  auto put3 = [&](const Vec3& v, const Vec3& scale) {
    for (int d = 0; d < 3; ++d) out[i++] = v[d] / scale[d];
  };

  put3(state.quad_vel, k.k_v);
  // vec(R): columns stacked.
  const Mat3 R = state.attitude.toRotationMatrix();
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < 3; ++r) out[i++] = R(r, c);
  }
  DeviationAngles ang;
  if ((state.payload_pos - state.quad_pos).norm() >= 1e-9) ang = deviation_angles(state);
  out[i++] = ang.phi / k.k_phi[0];
  out[i++] = ang.theta / k.k_phi[1];

  switch (env_kind) {
    case ScenarioKind::WaypointPassing:
      put3(ctx.target1 - state.quad_pos, k.k_q);
      put3(ctx.target2 - state.quad_pos, k.k_q);
      break;
    case ScenarioKind::PayloadTargeting:
      put3(ctx.target1 - state.quad_pos, k.k_q);
      put3(ctx.target1 - state.payload_pos, k.k_p);
      break;
    case ScenarioKind::GateTraversal:
      put3(ctx.target1 - state.quad_pos, k.k_q);
      put3(ctx.target2 - state.quad_pos, k.k_q);
      put3(ctx.gate_center - state.quad_pos, k.k_g);
      break;
  }
  for (double a : prev_action) out[i++] = a;
}

Observation build_observation(const SystemState& state, const ScenarioContext& ctx,
                              const Action& prev_action, const NormalizationConstants& consts,
                              ScenarioKind env_kind) {
  Observation o;
  o.features.resize(observation_dim(env_kind));
  build_observation(state, ctx, prev_action, consts, env_kind, o.features);
  return o;
}

GeneralReward reward_general(const SystemState& state, const Action& action,
                             const Action& prev_action, const RewardConfig& cfg,
                             const Workspace& workspace) {
  GeneralReward r;
  DeviationAngles ang;
  if ((state.payload_pos - state.quad_pos).norm() >= 1e-9) ang = deviation_angles(state);
  if (std::abs(ang.phi) > cfg.phi_max || std::abs(ang.theta) > cfg.phi_max) {
    r.safe = -cfg.r_excess;
  }
  if (workspace_violation(state, workspace)) {
    r.crash = -cfg.r_bound;
    r.terminate = true;
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < kActionDim; ++i) {
    const double d = prev_action[i] - action[i];
    sq += d * d;
  }
  r.smooth = -cfg.lambda1 * std::sqrt(sq);
  return r;
}

double reward_target_wp(const Vec3& delta_prev, const Vec3& delta_cur) {
  return delta_prev.squaredNorm() - delta_cur.squaredNorm();
}

double reward_target_pt(const Vec3& delta_payload_prev, const Vec3& delta_payload_cur) {
  return delta_payload_prev.squaredNorm() - delta_payload_cur.squaredNorm();
}

double reward_gate(const SystemState& state, const GateSpec& gate, const Vec3& final_wp,
                   bool passed, const RewardConfig& cfg) {
  const Vec3 dir = final_wp - gate.center;
  const double n = dir.norm();
  if (n < 1e-9) throw DegenerateGeometry("reward_gate: final waypoint coincides with gate");
  if (passed) return cfg.r_arrival;
  return dir.dot(state.quad_vel) / n;
}

// ---------------------------------------------------------------------------

Env::Env(EnvConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
  cfg_.validate();
  reset_state();
}

Vec3 Env::tracked_position(const SystemState& s) const {
  return kind() == ScenarioKind::PayloadTargeting ? s.payload_pos : s.quad_pos;
}

ScenarioContext Env::context() const {
  ScenarioContext ctx;
  ctx.kind = kind();
  ctx.target1 = cfg_.track.target(progress_);
  ctx.target2 = cfg_.track.target(progress_ + 1);
  if (!cfg_.track.gates.empty()) {
    std::size_t j = 0;
    while (j + 1 < quad_gate_passed_.size() && quad_gate_passed_[j]) ++j;
    ctx.gate_center = cfg_.track.gates[j].center;
  }
  return ctx;
}

void Env::observe_into(std::span<double> obs) const {
  build_observation(state_, context(), prev_action_, cfg_.norm, kind(), obs);
}

void Env::reset_state() {
  const PhysicalParams& p = cfg_.physics;
  const double delta = cfg_.randomization.deviation_delta;
  const double phi = delta > 0 ? rng_.uniform(-delta, delta) : 0.0;
  const double theta = delta > 0 ? rng_.uniform(-delta, delta) : 0.0;

  SystemState s;
  s.quad_pos = cfg_.track.start_pose.position;
  s.attitude = Quat(Eigen::AngleAxisd(cfg_.track.start_pose.yaw, Vec3::UnitZ()));
  const Vec3 body_dir = Vec3(std::tan(theta), std::tan(phi), -1.0).normalized();
  s.payload_pos = s.quad_pos + p.cable_length * (s.attitude * body_dir);
  s.cable_mode = p.payload_mass > 0 ? CableMode::Taut : CableMode::Slack;
  state_ = s;

  prev_action_.fill(0.0);
  progress_ = 0;
  steps_ = 0;
  done_ = false;
  const std::size_t gates = cfg_.track.gates.size();
  quad_gate_passed_.assign(gates, false);
  payload_gate_passed_.assign(gates, false);
  arrival_paid_.assign(gates, false);
}

Observation Env::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  return reset();
}

Observation Env::reset() {
  reset_state();
  Observation o;
  o.features.resize(obs_dim());
  observe_into(o.features);
  return o;
}

void Env::reset_into(std::span<double> obs) {
  reset_state();
  observe_into(obs);
}

StepResult Env::step(const Action& action) {
  StepResult r;
  r.observation.features.resize(obs_dim());
  step_into(action, r.observation.features, r.reward, r.terminated, r.truncated, r.info);
  return r;
}

bool Env::step_into(const Action& action, std::span<double> obs, RewardBreakdown& reward,
                    bool& terminated, bool& truncated, StepInfo& info) {
  if (done_) throw SteppedAfterDone("step called on a finished episode; reset first");
  const ScenarioKind k = kind();
  const TrackSpec& track = cfg_.track;
  const RewardConfig& rc = cfg_.reward;

  info.events.clear();
  info.final_observation.clear();
  info.success = false;

  Action a;
  for (std::size_t i = 0; i < kActionDim; ++i) a[i] = std::clamp(action[i], -1.0, 1.0);
  const Command cmd = denormalize_action(action, cfg_.physics, cfg_.omega_max,
                                         &info.action_clamped);

  const SystemState prev = state_;
  state_ = hybrid_step(prev, cmd, cfg_.physics);
  ++steps_;

  reward = RewardBreakdown{};
  bool failed = false;

  // Waypoint progress and target reward against the (possibly new) active target.
  const Vec3 body_prev = tracked_position(prev);
  const Vec3 body_cur = tracked_position(state_);
  const WaypointProgress wp = waypoint_progress(body_prev, body_cur, track, progress_);
  if (wp.passed) {
    info.events.push_back({EventKind::WaypointPassed, static_cast<int>(progress_)});
    progress_ = wp.index;
  }
  const Vec3& goal = track.target(progress_);
  reward.target = k == ScenarioKind::PayloadTargeting
                      ? reward_target_pt(goal - body_prev, goal - body_cur)
                      : reward_target_wp(goal - body_prev, goal - body_cur);

  if (k == ScenarioKind::GateTraversal) {
    const Vec3 final_wp = track.target(track.total_targets() - 1);
    bool paid_now = false;
    std::size_t guide_gate = 0;
    for (std::size_t j = 0; j < track.gates.size(); ++j) {
      const GateSpec& g = track.gates[j];
      const bool earlier_done = j == 0 || quad_gate_passed_[j - 1];
      if (!quad_gate_passed_[j] && earlier_done) {
        const auto hit = gate_plane_intersection(prev.quad_pos, state_.quad_pos, g);
        const GateEvent ev = gate_crossing(prev.quad_pos, state_.quad_pos, g, cfg_.body_radius);
        if (ev == GateEvent::Passed) {
          quad_gate_passed_[j] = true;
          info.events.push_back({EventKind::GatePassed, static_cast<int>(j)});
          if (!arrival_paid_[j]) {
            arrival_paid_[j] = true;
            paid_now = true;
          }
        } else if (ev == GateEvent::Collided || (hit && cfg_.gate_is_wall)) {
          info.events.push_back({EventKind::GateCollided, static_cast<int>(j)});
          failed = true;
        }
      }
      const bool payload_turn = j == 0 || payload_gate_passed_[j - 1];
      if (!payload_gate_passed_[j] && payload_turn) {
        const auto hit = gate_plane_intersection(prev.payload_pos, state_.payload_pos, g);
        const GateEvent ev = gate_crossing(prev.payload_pos, state_.payload_pos, g);
        if (ev == GateEvent::Passed) {
          payload_gate_passed_[j] = true;
          info.events.push_back({EventKind::PayloadGatePassed, static_cast<int>(j)});
        } else if (ev == GateEvent::Collided || (hit && cfg_.gate_is_wall)) {
          info.events.push_back({EventKind::GateCollided, static_cast<int>(j)});
          failed = true;
        }
      }
      // A cable straddling an active gate plane must go through the opening.
      const bool active = (earlier_done && !quad_gate_passed_[j]) ||
                          quad_gate_passed_[j] != payload_gate_passed_[j];
      const auto cable_hit = active ? gate_plane_intersection(state_.quad_pos,
                                                              state_.payload_pos, g)
                                    : std::nullopt;
      if (cable_hit && !failed) {
        const Vec3 d = *cable_hit - g.center;
        const double off = (d - d.dot(g.normal) * g.normal).norm();
        const bool rim = cable_gate_collision(state_.quad_pos, state_.payload_pos, g);
        if (rim || (cfg_.gate_is_wall && off > g.radius)) {
          info.events.push_back({EventKind::GateCollided, static_cast<int>(j)});
          failed = true;
        }
      }
      if (quad_gate_passed_[j] && guide_gate == j && j + 1 < track.gates.size()) guide_gate = j + 1;
    }
    reward.gate = reward_gate(state_, track.gates[guide_gate], final_wp, paid_now, rc);
  }

  const GeneralReward gen = reward_general(state_, a, prev_action_, rc, track.workspace);
  reward.safe = gen.safe;
  reward.smooth = gen.smooth;
  if (gen.safe != 0.0) info.events.push_back({EventKind::SafetyViolation, -1});
  if (gen.terminate) {
    info.events.push_back({EventKind::Crash, -1});
    failed = true;
  }
  if (failed) reward.crash = -rc.r_bound;
  reward.total = assemble_total(reward, rc, k);

  const bool finished = progress_ >= track.total_targets();
  bool success = finished && !failed;
  if (success && k == ScenarioKind::GateTraversal) {
    success = std::all_of(quad_gate_passed_.begin(), quad_gate_passed_.end(),
                          [](bool b) { return b; }) &&
              std::all_of(payload_gate_passed_.begin(), payload_gate_passed_.end(),
                          [](bool b) { return b; });
  }
  terminated = failed || finished;
  truncated = !terminated && steps_ >= cfg_.max_episode_steps;
  done_ = terminated || truncated;
  info.success = success;

  prev_action_ = a;
  info.mode = state_.cable_mode;
  info.progress_index = progress_;
  info.quad_vel = state_.quad_vel;
  info.payload_vel = state_.payload_vel;
  observe_into(obs);
  return done_;
}

// ---------------------------------------------------------------------------

BatchEnv::BatchEnv(const EnvConfig& cfg, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("batch size must be >= 1");
  envs_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) envs_.emplace_back(cfg, stream_seed(seed, i));
  obs_dim_ = envs_.front().obs_dim();
  obs_.assign(n * obs_dim_, 0.0);
  rewards_.assign(n, {});
  terminated_.assign(n, 0);
  truncated_.assign(n, 0);
  infos_.assign(n, {});
}

const std::vector<double>& BatchEnv::reset() {
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    envs_[i].reset_into(std::span<double>(obs_).subspan(i * obs_dim_, obs_dim_));
  }
  return obs_;
}

void BatchEnv::step(std::span<const double> actions) {
  if (actions.size() != envs_.size() * kActionDim) {
    throw DimensionMismatch("batch step expects " + std::to_string(envs_.size() * kActionDim) +
                            " action values, got " + std::to_string(actions.size()));
  }
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    Action a;
    std::copy_n(actions.begin() + static_cast<std::ptrdiff_t>(i * kActionDim), kActionDim,
                a.begin());
    const std::span<double> row = std::span<double>(obs_).subspan(i * obs_dim_, obs_dim_);
    bool term = false, trunc = false;
    const bool done = envs_[i].step_into(a, row, rewards_[i], term, trunc, infos_[i]);
    terminated_[i] = term;
    truncated_[i] = trunc;
    if (done) {
      infos_[i].final_observation.assign(row.begin(), row.end());
      envs_[i].reset_into(row);
    }
  }
}

}  // namespace slung
