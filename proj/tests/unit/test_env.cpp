#include <gtest/gtest.h>

#include <cmath>

#include "slung/env.hpp"
#include "slung/errors.hpp"
#include "slung/ppo.hpp"

using namespace slung;

namespace {

EnvConfig config_for(const std::string& preset) {
  EnvConfig c;
  c.track = make_preset(preset);
  return c;
}

}  // namespace

TEST(Env, ObservationDims) {
  EXPECT_EQ(observation_dim(ScenarioKind::WaypointPassing), 24u);
  EXPECT_EQ(observation_dim(ScenarioKind::PayloadTargeting), 24u);
  EXPECT_EQ(observation_dim(ScenarioKind::GateTraversal), 27u);
}

TEST(Env, ObservationLayout) {
  PhysicalParams p;
  SystemState s = hover_state({1, 2, 1}, p);
  s.quad_vel = {10, -20, 3};
  ScenarioContext ctx;
  ctx.kind = ScenarioKind::GateTraversal;
  ctx.target1 = {6, 2, 2};
  ctx.target2 = {1, 7, 1};
  ctx.gate_center = {4, 2, 1};
  const Action prev{0.1, 0.2, 0.3, 0.4};
  const Observation o =
      build_observation(s, ctx, prev, NormalizationConstants{}, ScenarioKind::GateTraversal);
  const auto& f = o.features;
  ASSERT_EQ(f.size(), 27u);
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_DOUBLE_EQ(f[1], -2.0);
  EXPECT_DOUBLE_EQ(f[2], 1.0);
  // Identity attitude, column-stacked.
  for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(f[3 + i], (i % 4 == 0) ? 1.0 : 0.0);
  EXPECT_DOUBLE_EQ(f[12], 0.0);
  EXPECT_DOUBLE_EQ(f[13], 0.0);
  EXPECT_DOUBLE_EQ(f[14], 1.0);  // (6-1)/5
  EXPECT_DOUBLE_EQ(f[16], 1.0);  // (2-1)/1
  EXPECT_DOUBLE_EQ(f[17], 0.0);
  EXPECT_DOUBLE_EQ(f[18], 1.0);  // (7-2)/5
  EXPECT_DOUBLE_EQ(f[19], 0.0);
  EXPECT_DOUBLE_EQ(f[20], 1.0);  // (4-1)/3
  EXPECT_DOUBLE_EQ(f[21], 0.0);
  EXPECT_DOUBLE_EQ(f[23], 0.1);
  EXPECT_DOUBLE_EQ(f[26], 0.4);
}

TEST(Env, ObservationContextMismatch) {
  PhysicalParams p;
  const SystemState s = hover_state({0, 0, 1}, p);
  ScenarioContext ctx;
  ctx.kind = ScenarioKind::WaypointPassing;
  EXPECT_THROW(build_observation(s, ctx, Action{}, NormalizationConstants{},
                                 ScenarioKind::GateTraversal),
               ContextMismatch);
}

TEST(Env, DeviationAngles) {
  PhysicalParams p;
  SystemState s = hover_state({0, 0, 1}, p);
  const auto zero = deviation_angles(s);
  EXPECT_EQ(zero.phi, 0.0);
  EXPECT_EQ(zero.theta, 0.0);
  s.payload_pos = s.quad_pos + 0.6 * Vec3(std::sin(0.3), 0, -std::cos(0.3));
  EXPECT_NEAR(deviation_angles(s).theta, 0.3, 1e-12);
  EXPECT_NEAR(deviation_angles(s).phi, 0.0, 1e-12);
  s.payload_pos = s.quad_pos + 0.6 * Vec3(0, std::sin(-0.2), -std::cos(0.2));
  EXPECT_NEAR(deviation_angles(s).phi, -0.2, 1e-12);
  s.payload_pos = s.quad_pos;
  EXPECT_THROW(deviation_angles(s), DegenerateGeometry);
}

TEST(Env, DenormalizeAction) {
  PhysicalParams p;
  const Vec3 wmax(15, 15, 5);
  bool clamped = true;
  const Command c = denormalize_action({-1, 1, -1, 0.5}, p, wmax, &clamped);
  EXPECT_FALSE(clamped);
  EXPECT_EQ(c.thrust, 0.0);
  EXPECT_EQ(c.rate_setpoint, Vec3(15, -15, 2.5));
  const Command top = denormalize_action({2, 0, 0, 0}, p, wmax, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(top.thrust, p.twr_max);
}

TEST(Env, HoverActionHolds) {
  const EnvConfig c = config_for("hop");
  const Command cmd = denormalize_action(hover_action(c), c.physics, c.omega_max);
  EXPECT_NEAR(cmd.thrust, c.physics.total_mass() / c.physics.quad_mass, 1e-12);
}

TEST(Env, TelescopingTargetReward) {
  // Sum over a fixed-goal trajectory collapses to initial minus final squared distance.
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 goal(rng.normal(), rng.normal(), rng.normal());
    Vec3 x(rng.normal(), rng.normal(), rng.normal());
    const Vec3 x0 = x;
    double sum = 0.0;
    for (int k = 0; k < 500; ++k) {
      const Vec3 nx = x + 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
      sum += reward_target_wp(goal - x, goal - nx);
      x = nx;
    }
    EXPECT_NEAR(sum, (goal - x0).squaredNorm() - (goal - x).squaredNorm(), 1e-10);
  }
}

TEST(Env, GeneralRewardTerms) {
  RewardConfig rc;
  Workspace w;
  PhysicalParams p;
  SystemState s = hover_state({0, 0, 1}, p);
  const GeneralReward ok = reward_general(s, {0, 0, 0, 0}, {0, 0, 0, 0}, rc, w);
  EXPECT_EQ(ok.safe, 0.0);
  EXPECT_EQ(ok.crash, 0.0);
  EXPECT_EQ(ok.smooth, 0.0);
  const GeneralReward sm = reward_general(s, {0.3, 0, 0.4, 0}, {0, 0, 0, 0}, rc, w);
  EXPECT_NEAR(sm.smooth, -rc.lambda1 * 0.5, 1e-18);
  s.payload_pos = s.quad_pos + 0.6 * Vec3(std::sin(1.6), 0, -std::cos(1.6));
  EXPECT_EQ(reward_general(s, {}, {}, rc, w).safe, -rc.r_excess);
  s = hover_state({0, 0, 0.5}, p);  // payload 0.1 m below the floor
  const GeneralReward crash = reward_general(s, {}, {}, rc, w);
  EXPECT_EQ(crash.crash, -10.0);
  EXPECT_TRUE(crash.terminate);
}

TEST(Env, RewardTotalReconstructsExactly) {
  for (const char* preset : {"hop", "star10", "gate_single"}) {
    EnvConfig c = config_for(preset);
    Env env(c, 3);
    Rng rng(4);
    for (int k = 0; k < 300 && !env.done(); ++k) {
      Action a = hover_action(c);
      for (std::size_t i = 0; i < kActionDim; ++i) a[i] += 0.3 * rng.normal();
      const StepResult r = env.step(a);
      EXPECT_EQ(r.reward.total, assemble_total(r.reward, c.reward, env.kind())) << preset;
    }
  }
}

TEST(Env, EpisodeTelescopesAgainstFixedGoal) {
  // Single-waypoint track: episode target reward sum equals d0^2 - dT^2 while
  // the goal stays fixed.
  EnvConfig c = config_for("hop");
  c.track.threshold = 1e-3;  // never reached in this short rollout
  Env env(c, 5);
  const Vec3 goal = c.track.waypoints[0];
  const Vec3 x0 = env.state().quad_pos;
  double sum = 0.0;
  Rng rng(6);
  for (int k = 0; k < 50; ++k) {
    Action a = hover_action(c);
    a[1] = 0.05 * rng.normal();
    sum += env.step(a).reward.target;
  }
  const Vec3 xT = env.state().quad_pos;
  EXPECT_NEAR(sum, (goal - x0).squaredNorm() - (goal - xT).squaredNorm(), 1e-12);
}

TEST(Env, ArrivalRewardFiresOnce) {
  EnvConfig c = config_for("gate_single");
  c.gate_is_wall = false;
  const GateSpec& g = c.track.gates[0];
  Env env(c, 1);
  const PhysicalParams& p = c.physics;
  int fired = 0;
  // Fly back and forth through the opening many times.
  for (int pass = 0; pass < 12; ++pass) {
    const double dir = pass % 2 == 0 ? 1.0 : -1.0;
    SystemState s = hover_state(g.center - dir * 0.05 * g.normal, p);
    s.quad_vel = dir * 10.0 * g.normal;
    s.payload_vel = s.quad_vel;
    s.payload_pos = s.quad_pos - dir * 0.05 * g.normal + Vec3(0, 0, -0.6) + dir * 0.1 * g.normal;
    s.payload_pos = s.quad_pos + 0.6 * (s.payload_pos - s.quad_pos).normalized();
    env.set_state(s);
    const StepResult r = env.step(hover_action(c));
    if (r.reward.gate == c.reward.r_arrival) ++fired;
    ASSERT_FALSE(r.terminated) << "pass " << pass;
  }
  EXPECT_EQ(fired, 1);
  EXPECT_TRUE(env.gate_passed(0));
}

TEST(Env, GateWallCollisionTerminates) {
  EnvConfig c = config_for("gate_single");
  const GateSpec& g = c.track.gates[0];
  Env env(c, 1);
  SystemState s = hover_state(g.center + Vec3(-0.05, 0.0, 0.6), c.physics);
  s.quad_vel = {10, 0, 0};
  s.payload_vel = s.quad_vel;
  env.set_state(s);
  const StepResult r = env.step(hover_action(c));
  EXPECT_TRUE(r.terminated);
  EXPECT_EQ(r.reward.crash, -c.reward.r_bound);
  bool collided = false;
  for (const Event& e : r.info.events) collided |= e.kind == EventKind::GateCollided;
  EXPECT_TRUE(collided);
}

TEST(Env, GateRewardProjectsVelocity) {
  RewardConfig rc;
  GateSpec g{{0, 0, 1}, {1, 0, 0}, 0.3, 0.15};
  SystemState s;
  s.quad_vel = {2, 1, 0};
  EXPECT_NEAR(reward_gate(s, g, {3, 0, 1}, false, rc), 2.0, 1e-15);
  EXPECT_EQ(reward_gate(s, g, {3, 0, 1}, true, rc), rc.r_arrival);
  EXPECT_THROW(reward_gate(s, g, {0, 0, 1}, false, rc), DegenerateGeometry);
}

TEST(Env, TruncationAndSteppedAfterDone) {
  EnvConfig c = config_for("hop");
  c.max_episode_steps = 5;
  Env env(c, 1);
  StepResult r;
  for (int k = 0; k < 5; ++k) r = env.step(hover_action(c));
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.terminated);
  EXPECT_THROW(env.step(hover_action(c)), SteppedAfterDone);
}

TEST(Env, WaypointEventsAndSuccess) {
  EnvConfig c = config_for("hop");
  Env env(c, 1);
  SystemState s = env.state();
  const Vec3 shift = c.track.waypoints[0] - s.quad_pos - Vec3(0.05, 0, 0);
  s.quad_pos += shift;
  s.payload_pos += shift;
  env.set_state(s);
  const StepResult r = env.step(hover_action(c));
  ASSERT_FALSE(r.info.events.empty());
  EXPECT_EQ(r.info.events[0], (Event{EventKind::WaypointPassed, 0}));
  EXPECT_TRUE(r.terminated);
  EXPECT_TRUE(r.info.success);
}

TEST(Env, ResetRandomizesWithinDelta) {
  EnvConfig c = config_for("hop");
  Env env(c, 1);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    env.reset(seed);
    const DeviationAngles a = deviation_angles(env.state());
    EXPECT_LE(std::abs(a.phi), c.randomization.deviation_delta + 1e-12);
    EXPECT_LE(std::abs(a.theta), c.randomization.deviation_delta + 1e-12);
    EXPECT_NEAR(env.state().separation(), c.physics.cable_length, 1e-12);
  }
}

TEST(Env, SeedDeterminism) {
  EnvConfig c = config_for("gate_single");
  Env a(c, 9), b(c, 9);
  EXPECT_EQ(a.state().payload_pos, b.state().payload_pos);
  for (int k = 0; k < 100 && !a.done(); ++k) {
    const StepResult ra = a.step(hover_action(c)), rb = b.step(hover_action(c));
    EXPECT_EQ(ra.observation.features, rb.observation.features);
    EXPECT_EQ(ra.reward.total, rb.reward.total);
  }
}

TEST(Env, EventStringRoundTrip) {
  for (const Event e : {Event{EventKind::WaypointPassed, 3}, Event{EventKind::GatePassed, 0},
                        Event{EventKind::PayloadGatePassed, 1}, Event{EventKind::GateCollided, 2},
                        Event{EventKind::Crash, -1}, Event{EventKind::SafetyViolation, -1}}) {
    EXPECT_EQ(parse_event(to_string(e)), e);
  }
  EXPECT_THROW(parse_event("Bogus(1)"), SchemaError);
}

TEST(BatchEnv, AutoResetKeepsFinalObservation) {
  EnvConfig c = config_for("hop");
  c.max_episode_steps = 3;
  BatchEnv envs(c, 4, 11);
  envs.reset();
  std::vector<double> actions(4 * kActionDim);
  const Action h = hover_action(c);
  for (std::size_t e = 0; e < 4; ++e) std::copy(h.begin(), h.end(), actions.begin() + e * kActionDim);
  envs.step(actions);
  envs.step(actions);
  envs.step(actions);
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_TRUE(envs.truncated()[e]);
    EXPECT_EQ(envs.infos()[e].final_observation.size(), envs.obs_dim());
    EXPECT_EQ(envs.env(e).step_count(), 0);
  }
  EXPECT_THROW(envs.step(std::vector<double>(3)), DimensionMismatch);
}

TEST(BatchEnv, StreamsMatchIndependentEnvs) {
  EnvConfig c = config_for("hop");
  BatchEnv envs(c, 3, 21);
  envs.reset();
  for (std::size_t i = 0; i < 3; ++i) {
    Env solo(c, stream_seed(21, i));
    solo.reset();
    EXPECT_EQ(solo.state().payload_pos, envs.env(i).state().payload_pos);
  }
}

TEST(Env, ConfigValidation) {
  EnvConfig c = config_for("gate_single");
  c.body_radius = 0.35;
  EXPECT_THROW(c.validate(), ConfigError);
  c = config_for("hop");
  c.max_episode_steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
