#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace slung {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

struct PhysicalParams {
  double quad_mass = 0.305;     // kg
  double payload_mass = 0.070;  // kg
  double cable_length = 0.6;    // m
  Vec3 inertia_diag{1.4e-3, 1.4e-3, 2.2e-3};
  double gravity = 9.81;  // along -z
  double twr_max = 3.5;   // max thrust / (quad_mass * gravity)
  double rate_tau = 0.05;  // s
  double dt = 0.01;        // s

  // Throws ConfigError when an invariant is violated.
  void validate() const;

  double total_mass() const { return quad_mass + payload_mass; }
  Vec3 gravity_vector() const { return {0.0, 0.0, -gravity}; }
};

enum class CableMode { Taut, Slack };

enum class Transition { None, TautToSlack, SlackToTaut };

struct SystemState {
  Vec3 quad_pos = Vec3::Zero();
  Vec3 quad_vel = Vec3::Zero();
  Quat attitude = Quat::Identity();  // body -> world
  Vec3 body_rates = Vec3::Zero();
  Vec3 payload_pos = Vec3::Zero();
  Vec3 payload_vel = Vec3::Zero();
  CableMode cable_mode = CableMode::Taut;
  double time = 0.0;

  // Unit vector from quadrotor to payload (normalized by actual separation).
  Vec3 cable_direction() const;
  double separation() const { return (payload_pos - quad_pos).norm(); }
};

// Weight-normalized collective thrust (multiples of quad_mass * gravity) and a
// body-rate setpoint for the inner loop.
struct Command {
  double thrust = 0.0;
  Vec3 rate_setpoint = Vec3::Zero();
};

// Hover state with the payload hanging straight below the quadrotor.
SystemState hover_state(const Vec3& quad_pos, const PhysicalParams& params);

// Command that balances the full system weight at hover.
Command hover_command(const PhysicalParams& params);

// First-order body-rate tracking law plus gyroscopic feedforward.
Vec3 rate_loop(const SystemState& state, const Command& cmd, const PhysicalParams& params);

// Cable tension from the taut-mode Lagrange multiplier. Negative means the
// taut model would need the cable to push. Throws ModeError in Slack mode.
double cable_tension(const SystemState& state, const Command& cmd, const PhysicalParams& params);

Transition detect_transition(const SystemState& state, const Command& cmd,
                             const PhysicalParams& params);

// Perfectly inelastic radial impulse between the two bodies. No-op when the
// bodies are approaching along the cable.
SystemState apply_taut_impulse(const SystemState& state, const PhysicalParams& params);

// One RK4 step of the coupled taut-cable dynamics. Does not advance time.
SystemState step_taut(const SystemState& state, const Command& cmd, const PhysicalParams& params,
                      double dt);

// One RK4 step with a free quadrotor and a ballistic payload. Does not advance time.
SystemState step_slack(const SystemState& state, const Command& cmd, const PhysicalParams& params,
                       double dt);

// Full hybrid step of params.dt with boundary mode switching. Advances time.
SystemState hybrid_step(const SystemState& state, const Command& cmd, const PhysicalParams& params);

// Total mechanical energy (translational + rotational kinetic + potential).
double mechanical_energy(const SystemState& state, const PhysicalParams& params);

Vec3 linear_momentum(const SystemState& state, const PhysicalParams& params);

}  // namespace slung
