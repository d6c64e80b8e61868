#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slung/dynamics.hpp"
#include "slung/rng.hpp"
#include "slung/scenario.hpp"

namespace slung {

inline constexpr std::size_t kActionDim = 4;
using Action = std::array<double, kActionDim>;

struct NormalizationConstants {
  Vec3 k_q{5.0, 5.0, 1.0};
  Vec3 k_v{10.0, 10.0, 3.0};
  Vec3 k_p{5.0, 5.0, 1.0};
  Vec3 k_g{3.0, 3.0, 1.0};
  Eigen::Vector2d k_phi{1.5, 1.5};

  void validate() const;
};

struct RewardConfig {
  double r_bound = 10.0;
  double r_excess = 3.0;
  double r_arrival = 20.0;
  double lambda1 = 1e-4;
  double lambda2 = 10.0;
  double lambda3 = 5e-3;
  double phi_max = 1.5;

  void validate() const;
};

struct DomainRandomization {
  double deviation_delta = 0.0873;  // rad, half-width of the initial (phi, theta) box
};

struct EnvConfig {
  PhysicalParams physics;
  RewardConfig reward;
  NormalizationConstants norm;
  DomainRandomization randomization;
  TrackSpec track = make_preset("hop");
  Vec3 omega_max{15.0, 15.0, 5.0};
  int max_episode_steps = 1500;
  double body_radius = 0.12;
  // A gate sits in a wall: crossing its plane anywhere outside the opening is
  // a collision. When false only the rim band around the opening collides.
  bool gate_is_wall = true;

  void validate() const;
};

std::size_t observation_dim(ScenarioKind kind);

struct Observation {
  std::vector<double> features;
};

struct RewardBreakdown {
  double safe = 0.0;
  double crash = 0.0;
  double smooth = 0.0;
  double target = 0.0;
  double gate = 0.0;
  double total = 0.0;
};

// Recomputes total from the components with the scenario weights.
double assemble_total(const RewardBreakdown& r, const RewardConfig& cfg, ScenarioKind kind);

enum class EventKind {
  WaypointPassed,
  GatePassed,
  PayloadGatePassed,
  GateCollided,
  Crash,
  SafetyViolation,
};

struct Event {
  EventKind kind;
  int index = -1;  // waypoint or gate index, -1 when not applicable

  bool operator==(const Event&) const = default;
};

std::string to_string(const Event& e);
// Parses the to_string form; throws SchemaError on malformed input.
Event parse_event(std::string_view text);

struct StepInfo {
  CableMode mode = CableMode::Taut;
  std::size_t progress_index = 0;
  Vec3 quad_vel = Vec3::Zero();
  Vec3 payload_vel = Vec3::Zero();
  std::vector<Event> events;
  bool success = false;
  bool action_clamped = false;
  // Filled by BatchEnv on auto-reset: observation at the terminal step.
  std::vector<double> final_observation;
};

struct StepResult {
  Observation observation;
  RewardBreakdown reward;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

struct DeviationAngles {
  double phi = 0.0;
  double theta = 0.0;
};

// Payload offset angles from the body -z axis. atan2(0, 0) is taken as 0.
DeviationAngles deviation_angles(const SystemState& state);

Command denormalize_action(const Action& a, const PhysicalParams& params, const Vec3& omega_max,
                           bool* clamped = nullptr);

// Scenario-specific geometry needed to build an observation.
struct ScenarioContext {
  ScenarioKind kind = ScenarioKind::WaypointPassing;
  Vec3 target1 = Vec3::Zero();
  Vec3 target2 = Vec3::Zero();
  Vec3 gate_center = Vec3::Zero();
};

// Writes the observation into `out` (size observation_dim(env_kind)).
void build_observation(const SystemState& state, const ScenarioContext& ctx,
                       const Action& prev_action, const NormalizationConstants& consts,
                       ScenarioKind env_kind, std::span<double> out);

Observation build_observation(const SystemState& state, const ScenarioContext& ctx,
                              const Action& prev_action, const NormalizationConstants& consts,
                              ScenarioKind env_kind);

struct GeneralReward {
  double safe = 0.0;
  double crash = 0.0;
  double smooth = 0.0;
  bool terminate = false;
};

GeneralReward reward_general(const SystemState& state, const Action& action,
                             const Action& prev_action, const RewardConfig& cfg,
                             const Workspace& workspace);

double reward_target_wp(const Vec3& delta_prev, const Vec3& delta_cur);
double reward_target_pt(const Vec3& delta_payload_prev, const Vec3& delta_payload_cur);

// r_arrival on the pass step, otherwise the velocity projected onto the
// gate-to-final-waypoint direction.
double reward_gate(const SystemState& state, const GateSpec& gate, const Vec3& final_wp,
                   bool passed, const RewardConfig& cfg);

// Single environment. Not thread-safe; one instance per worker.
class Env {
 public:
  Env(EnvConfig cfg, std::uint64_t seed);

  const EnvConfig& config() const { return cfg_; }
  ScenarioKind kind() const { return cfg_.track.kind; }
  std::size_t obs_dim() const { return observation_dim(kind()); }

  // Reseeds the stream and resets.
  Observation reset(std::uint64_t seed);
  // Continues the current stream (used for auto-reset).
  Observation reset();
  void reset_into(std::span<double> obs);

  StepResult step(const Action& action);
  // Allocation-light variant used by BatchEnv; returns terminated || truncated.
  bool step_into(const Action& action, std::span<double> obs, RewardBreakdown& reward,
                 bool& terminated, bool& truncated, StepInfo& info);

  const SystemState& state() const { return state_; }
  // Replaces the state without touching progress bookkeeping (tests, replay).
  void set_state(const SystemState& s) { state_ = s; }
  const Action& prev_action() const { return prev_action_; }
  std::size_t progress_index() const { return progress_; }
  int step_count() const { return steps_; }
  bool done() const { return done_; }
  bool gate_passed(std::size_t j) const { return quad_gate_passed_.at(j); }
  ScenarioContext context() const;
  void observe_into(std::span<double> obs) const;

 private:
  Vec3 tracked_position(const SystemState& s) const;
  void reset_state();

  EnvConfig cfg_;
  Rng rng_;
  SystemState state_;
  Action prev_action_{};
  std::size_t progress_ = 0;
  int steps_ = 0;
  bool done_ = false;
  std::vector<bool> quad_gate_passed_;
  std::vector<bool> payload_gate_passed_;
  std::vector<bool> arrival_paid_;
};

// n independent environments with stream_seed(seed, i) per slot and auto-reset.
class BatchEnv {
 public:
  BatchEnv(const EnvConfig& cfg, std::size_t n, std::uint64_t seed);

  std::size_t size() const { return envs_.size(); }
  std::size_t obs_dim() const { return obs_dim_; }
  ScenarioKind kind() const { return envs_.front().kind(); }

  // Row-major n x obs_dim.
  const std::vector<double>& reset();
  // actions: row-major n x 4. Throws DimensionMismatch on a wrong shape.
  void step(std::span<const double> actions);

  const std::vector<double>& observations() const { return obs_; }
  const std::vector<RewardBreakdown>& rewards() const { return rewards_; }
  const std::vector<std::uint8_t>& terminated() const { return terminated_; }
  const std::vector<std::uint8_t>& truncated() const { return truncated_; }
  const std::vector<StepInfo>& infos() const { return infos_; }
  const Env& env(std::size_t i) const { return envs_.at(i); }

 private:
  std::vector<Env> envs_;
  std::size_t obs_dim_;
  std::vector<double> obs_;
  std::vector<RewardBreakdown> rewards_;
  std::vector<std::uint8_t> terminated_;
  std::vector<std::uint8_t> truncated_;
  std::vector<StepInfo> infos_;
};

}  // namespace slung
