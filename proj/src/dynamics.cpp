#include "slung/dynamics.hpp"

#include <cmath>
#include <string>

#include "slung/errors.hpp"

namespace slung {

namespace {

// Body z-axis in world frame for a (possibly unnormalized) quaternion.
Vec3 body_z(const Quat& q) {
  const Quat u = q.normalized();
  const double w = u.w(), x = u.x(), y = u.y(), z = u.z();
  return {2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)};
}

Eigen::Vector4d quat_derivative(const Quat& q, const Vec3& w) {
  return {-0.5 * (q.x() * w.x() + q.y() * w.y() + q.z() * w.z()),
          0.5 * (q.w() * w.x() + q.y() * w.z() - q.z() * w.y()),
          0.5 * (q.w() * w.y() - q.x() * w.z() + q.z() * w.x()),
          0.5 * (q.w() * w.z() + q.x() * w.y() - q.y() * w.x())};
}

Quat quat_add(const Quat& q, const Eigen::Vector4d& d, double h) {
  return Quat(q.w() + h * d[0], q.x() + h * d[1], q.y() + h * d[2], q.z() + h * d[3]);
}

Vec3 angular_accel(const Vec3& omega, const Command& cmd, const PhysicalParams& p) {
  const Vec3& inertia = p.inertia_diag;
  const Vec3 tracking = (cmd.rate_setpoint - omega) / p.rate_tau;
  const Vec3 moment = inertia.cwiseProduct(tracking) + omega.cross(inertia.cwiseProduct(omega));
  return (moment - omega.cross(inertia.cwiseProduct(omega))).cwiseQuotient(inertia);
}

double thrust_newtons(const Command& cmd, const PhysicalParams& p) {
  return cmd.thrust * p.quad_mass * p.gravity;
}

// Taut-mode generalized coordinates: payload translation, cable direction, attitude, rates.
struct TautX {
  Vec3 pos, vel, rho, rho_dot;
  Quat q;
  Vec3 omega;
};

struct TautDx {
  Vec3 pos, vel, rho, rho_dot;
  Eigen::Vector4d q;
  Vec3 omega;
};

TautDx taut_rhs(const TautX& x, const Command& cmd, const PhysicalParams& p) {
  const double l = p.cable_length;
  const Vec3 force = thrust_newtons(cmd, p) * body_z(x.q);
  const double rd2 = x.rho_dot.squaredNorm();
  TautDx d;
  d.pos = x.vel;
  d.vel = p.gravity_vector() + (x.rho.dot(force) - p.quad_mass * l * rd2) / p.total_mass() * x.rho;
  d.rho = x.rho_dot;
  d.rho_dot = -rd2 * x.rho + x.rho.cross(x.rho.cross(force)) / (p.quad_mass * l);
  d.q = quat_derivative(x.q, x.omega);
  d.omega = angular_accel(x.omega, cmd, p);
  return d;
}

TautX taut_add(const TautX& x, const TautDx& d, double h) {
  return {x.pos + h * d.pos,         x.vel + h * d.vel,   x.rho + h * d.rho,
          x.rho_dot + h * d.rho_dot, quat_add(x.q, d.q, h), x.omega + h * d.omega};
}

// Slack mode: free quadrotor plus ballistic payload.
struct SlackX {
  Vec3 qpos, qvel;
  Quat q;
  Vec3 omega;
  Vec3 ppos, pvel;
};

struct SlackDx {
  Vec3 qpos, qvel;
  Eigen::Vector4d q;
  Vec3 omega;
  Vec3 ppos, pvel;
};

SlackDx slack_rhs(const SlackX& x, const Command& cmd, const PhysicalParams& p) {
  SlackDx d;
  d.qpos = x.qvel;
  d.qvel = p.gravity_vector() + thrust_newtons(cmd, p) / p.quad_mass * body_z(x.q);
  d.q = quat_derivative(x.q, x.omega);
  d.omega = angular_accel(x.omega, cmd, p);
  d.ppos = x.pvel;
  d.pvel = p.gravity_vector();
  return d;
}

SlackX slack_add(const SlackX& x, const SlackDx& d, double h) {
  return {x.qpos + h * d.qpos,   x.qvel + h * d.qvel,   quat_add(x.q, d.q, h),
          x.omega + h * d.omega, x.ppos + h * d.ppos, x.pvel + h * d.pvel};
}

template <class X, class Dx, class Rhs, class Add>
X rk4(const X& x, double h, Rhs rhs, Add add) {
  const Dx k1 = rhs(x);
  const Dx k2 = rhs(add(x, k1, 0.5 * h));
  const Dx k3 = rhs(add(x, k2, 0.5 * h));
  const Dx k4 = rhs(add(x, k3, h));
  X out = add(x, k1, h / 6.0);
  out = add(out, k2, h / 3.0);
  out = add(out, k3, h / 3.0);
  return add(out, k4, h / 6.0);
}

bool finite(const SystemState& s) {
  return s.quad_pos.allFinite() && s.quad_vel.allFinite() && s.attitude.coeffs().allFinite() &&
         s.body_rates.allFinite() && s.payload_pos.allFinite() && s.payload_vel.allFinite();
}

void require_finite(const SystemState& s, const char* where) {
  if (!finite(s)) {
    throw NonFiniteState(std::string("non-finite state after ") + where + " at t=" +
                         std::to_string(s.time));
  }
}

}  // namespace

void PhysicalParams::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("physics: " + what); };
  if (!(quad_mass > 0)) fail("quad_mass must be > 0");
  if (!(payload_mass >= 0)) fail("payload_mass must be >= 0");
  if (!(cable_length > 0)) fail("cable_length must be > 0");
  if (!(dt > 0)) fail("dt must be > 0");
  if (!(rate_tau > 0)) fail("rate_tau must be > 0");
  if (!(twr_max > 0)) fail("twr_max must be > 0");
  if (!(gravity >= 0)) fail("gravity must be >= 0");
  if (!(inertia_diag.array() > 0).all()) fail("inertia_diag must be componentwise > 0");
}

Vec3 SystemState::cable_direction() const {
  const Vec3 d = payload_pos - quad_pos;
  const double n = d.norm();
  if (n < 1e-12) return {0.0, 0.0, -1.0};
  return d / n;
}

SystemState hover_state(const Vec3& quad_pos, const PhysicalParams& params) {
  SystemState s;
  s.quad_pos = quad_pos;
  s.payload_pos = quad_pos - Vec3(0.0, 0.0, params.cable_length);
  s.cable_mode = params.payload_mass > 0 ? CableMode::Taut : CableMode::Slack;
  return s;
}

Command hover_command(const PhysicalParams& params) {
  Command c;
  c.thrust = params.total_mass() / params.quad_mass;
  return c;
}

Vec3 rate_loop(const SystemState& state, const Command& cmd, const PhysicalParams& params) {
  const Vec3& inertia = params.inertia_diag;
  const Vec3& w = state.body_rates;
  return inertia.cwiseProduct(cmd.rate_setpoint - w) / params.rate_tau +
         w.cross(inertia.cwiseProduct(w));
}

double cable_tension(const SystemState& state, const Command& cmd, const PhysicalParams& params) {
  if (state.cable_mode != CableMode::Taut) {
    throw ModeError("cable_tension requires Taut mode");
  }
  const double l = params.cable_length;
  const Vec3 rho = (state.payload_pos - state.quad_pos) / l;
  const Vec3 rho_dot = (state.payload_vel - state.quad_vel) / l;
  const Vec3 force = thrust_newtons(cmd, params) * body_z(state.attitude);
  return params.payload_mass / params.total_mass() *
         (params.quad_mass * l * rho_dot.squaredNorm() - rho.dot(force));
}

Transition detect_transition(const SystemState& state, const Command& cmd,
                             const PhysicalParams& params) {
  if (state.cable_mode == CableMode::Taut) {
    return cable_tension(state, cmd, params) < 0.0 ? Transition::TautToSlack : Transition::None;
  }
  return state.separation() >= params.cable_length ? Transition::SlackToTaut : Transition::None;
}

SystemState apply_taut_impulse(const SystemState& state, const PhysicalParams& params) {
  const Vec3 n = state.cable_direction();
  const double radial = (state.payload_vel - state.quad_vel).dot(n);
  if (radial <= 0.0) return state;
  const double m = params.total_mass();
  SystemState out = state;
  out.quad_vel += (params.payload_mass / m * radial) * n;
  out.payload_vel -= (params.quad_mass / m * radial) * n;
  return out;
}

SystemState step_taut(const SystemState& state, const Command& cmd, const PhysicalParams& params,
                      double dt) {
  const double l = params.cable_length;
  TautX x{state.payload_pos,
          state.payload_vel,
          (state.payload_pos - state.quad_pos) / l,
          (state.payload_vel - state.quad_vel) / l,
          state.attitude,
          state.body_rates};
  // Start from an exactly consistent chart.
  x.rho.normalize();
  x.rho_dot -= x.rho.dot(x.rho_dot) * x.rho;

  const TautX y = rk4<TautX, TautDx>(
      x, dt, [&](const TautX& s) { return taut_rhs(s, cmd, params); }, taut_add);

  const Vec3 rho = y.rho.normalized();
  const Vec3 rho_dot = y.rho_dot - rho.dot(y.rho_dot) * rho;

  SystemState out = state;
  out.payload_pos = y.pos;
  out.payload_vel = y.vel;
  out.quad_pos = y.pos - l * rho;
  out.quad_vel = y.vel - l * rho_dot;
  out.attitude = y.q.normalized();
  out.body_rates = y.omega;
  require_finite(out, "step_taut");
  return out;
}

SystemState step_slack(const SystemState& state, const Command& cmd, const PhysicalParams& params,
                       double dt) {
  const SlackX x{state.quad_pos,   state.quad_vel,    state.attitude,
                 state.body_rates, state.payload_pos, state.payload_vel};
  const SlackX y = rk4<SlackX, SlackDx>(
      x, dt, [&](const SlackX& s) { return slack_rhs(s, cmd, params); }, slack_add);

  SystemState out = state;
  out.quad_pos = y.qpos;
  out.quad_vel = y.qvel;
  out.attitude = y.q.normalized();
  out.body_rates = y.omega;
  out.payload_pos = y.ppos;
  out.payload_vel = y.pvel;
  require_finite(out, "step_slack");
  return out;
}

SystemState hybrid_step(const SystemState& state, const Command& cmd,
                        const PhysicalParams& params) {
  const bool massless = params.payload_mass <= 0.0;
  SystemState s = state;
  if (massless) s.cable_mode = CableMode::Slack;

  if (detect_transition(s, cmd, params) == Transition::TautToSlack) {
    s.cable_mode = CableMode::Slack;
  }

  s = s.cable_mode == CableMode::Taut ? step_taut(s, cmd, params, params.dt)
                                      : step_slack(s, cmd, params, params.dt);

  if (detect_transition(s, cmd, params) == Transition::SlackToTaut) {
    s = apply_taut_impulse(s, params);
    s.payload_pos = s.quad_pos + params.cable_length * s.cable_direction();
    // Any residual radial motion (approaching) is kept; only separation is clipped.
    if (!massless) s.cable_mode = CableMode::Taut;
  }
  s.time = state.time + params.dt;
  return s;
}

double mechanical_energy(const SystemState& s, const PhysicalParams& p) {
  const double kinetic = 0.5 * p.quad_mass * s.quad_vel.squaredNorm() +
                         0.5 * p.payload_mass * s.payload_vel.squaredNorm() +
                         0.5 * s.body_rates.dot(p.inertia_diag.cwiseProduct(s.body_rates));
  const double potential =
      p.gravity * (p.quad_mass * s.quad_pos.z() + p.payload_mass * s.payload_pos.z());
  return kinetic + potential;
}

Vec3 linear_momentum(const SystemState& s, const PhysicalParams& p) {
  return p.quad_mass * s.quad_vel + p.payload_mass * s.payload_vel;
}

}  // namespace slung
