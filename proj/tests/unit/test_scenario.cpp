#include <gtest/gtest.h>

#include <cmath>

#include "slung/errors.hpp"
#include "slung/rng.hpp"
#include "slung/scenario.hpp"

using namespace slung;

namespace {

TrackSpec single(const Vec3& wp, double threshold) {
  TrackSpec t;
  t.name = "t";
  t.waypoints = {wp};
  t.threshold = threshold;
  return t;
}

GateSpec unit_gate() { return GateSpec{{0, 0, 1}, {1, 0, 0}, 0.3, 0.15}; }

}  // namespace

TEST(Scenario, WaypointWithinThresholdPasses) {
  const TrackSpec t = single({0, 0, 1}, 0.5);
  const auto r = waypoint_progress({0.3, 0, 1}, {0.3, 0, 1}, t, 0);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.index, 1u);
  EXPECT_FALSE(waypoint_progress({0.6, 0, 1}, {0.6, 0, 1}, t, 0).passed);
}

TEST(Scenario, WaypointPassedBetweenSamples) {
  const TrackSpec t = single({0, 0, 1}, 0.2);
  // Both endpoints 1 m away, segment passes 0.1 m from the waypoint.
  const auto r = waypoint_progress({-1, 0.1, 1}, {1, 0.1, 1}, t, 0);
  EXPECT_TRUE(r.passed);
}

TEST(Scenario, WaypointIndexAdvancesAtMostOne) {
  TrackSpec t;
  t.name = "t";
  t.waypoints = {{0, 0, 1}, {0.1, 0, 1}};
  t.threshold = 0.5;
  const auto r = waypoint_progress({0, 0, 1}, {0.1, 0, 1}, t, 0);
  EXPECT_EQ(r.index, 1u);
  const auto done = waypoint_progress({0, 0, 1}, {0, 0, 1}, t, 2);
  EXPECT_FALSE(done.passed);
  EXPECT_EQ(done.index, 2u);
}

TEST(Scenario, PointSegmentDistanceOracle) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a(rng.normal(), rng.normal(), rng.normal());
    const Vec3 b(rng.normal(), rng.normal(), rng.normal());
    const Vec3 p(rng.normal(), rng.normal(), rng.normal());
    double best = 1e9;
    for (int k = 0; k <= 10000; ++k) best = std::min(best, (a + (b - a) * (k / 10000.0) - p).norm());
    EXPECT_NEAR(point_segment_distance(p, a, b), best, 1e-3);
    EXPECT_LE(point_segment_distance(p, a, b), best + 1e-12);
  }
}

TEST(Scenario, GateCrossingClasses) {
  const GateSpec g = unit_gate();
  EXPECT_EQ(gate_crossing({-0.1, 0.1, 1}, {0.1, 0.1, 1}, g), GateEvent::Passed);
  EXPECT_EQ(gate_crossing({-0.1, 0.35, 1}, {0.1, 0.35, 1}, g), GateEvent::Collided);
  EXPECT_EQ(gate_crossing({-0.1, 0.5, 1}, {0.1, 0.5, 1}, g), GateEvent::NoEvent);
  EXPECT_EQ(gate_crossing({-0.1, 0, 1}, {-0.1, 1, 1}, g), GateEvent::NoEvent);  // parallel
}

TEST(Scenario, GateCrossingSymmetricUnderReversal) {
  const GateSpec g = unit_gate();
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const Vec3 a(rng.uniform(-0.2, 0.2), rng.uniform(-0.6, 0.6), 1 + rng.uniform(-0.6, 0.6));
    const Vec3 b(rng.uniform(-0.2, 0.2), rng.uniform(-0.6, 0.6), 1 + rng.uniform(-0.6, 0.6));
    EXPECT_EQ(gate_crossing(a, b, g), gate_crossing(b, a, g));
  }
}

TEST(Scenario, BodyRadiusShrinksOpening) {
  const GateSpec g = unit_gate();
  EXPECT_EQ(gate_crossing({-0.1, 0.25, 1}, {0.1, 0.25, 1}, g), GateEvent::Passed);
  EXPECT_EQ(gate_crossing({-0.1, 0.25, 1}, {0.1, 0.25, 1}, g, 0.12), GateEvent::Collided);
  EXPECT_EQ(gate_crossing({-0.1, 0.15, 1}, {0.1, 0.15, 1}, g, 0.12), GateEvent::Passed);
}

TEST(Scenario, PlaneIntersectionPoint) {
  const GateSpec g = unit_gate();
  const auto hit = gate_plane_intersection({-1, 0, 1}, {3, 0.4, 1}, g);
  ASSERT_TRUE(hit.has_value());
  EXPECT_NEAR(hit->x(), 0.0, 1e-15);
  EXPECT_NEAR(hit->y(), 0.1, 1e-15);
  EXPECT_FALSE(gate_plane_intersection({1, 0, 1}, {2, 0, 1}, g).has_value());
}

TEST(Scenario, CableGateCollision) {
  const GateSpec g = unit_gate();
  EXPECT_FALSE(cable_gate_collision({-1, 0, 1}, {-1, 0, 0.4}, g));  // same side
  EXPECT_FALSE(cable_gate_collision({0.1, 0, 1}, {-0.1, 0, 1}, g));  // through the center
  // Segment crossing the plane at radial offset 0.4.
  EXPECT_TRUE(cable_gate_collision({0.1, 0, 1.4}, {-0.1, 0, 1.4}, g));
  EXPECT_FALSE(cable_gate_collision({0.1, 0, 1.6}, {-0.1, 0, 1.6}, g));
}

TEST(Scenario, SamplingAdequacy) {
  // Straight analytic trajectories through the gate are never missed when the
  // per-step displacement is below the collision band.
  const GateSpec g = unit_gate();
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 through(0, rng.uniform(-0.2, 0.2), 1 + rng.uniform(-0.2, 0.2));
    const Vec3 dir = Vec3(1.0, rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)).normalized();
    const double step = rng.uniform(0.01, 0.149);
    const double phase = rng.uniform(0.0, 1.0);
    int passes = 0;
    for (int k = -40; k < 40; ++k) {
      const Vec3 a = through + (k + phase) * step * dir;
      const Vec3 b = through + (k + 1 + phase) * step * dir;
      if (gate_crossing(a, b, g) == GateEvent::Passed) ++passes;
    }
    EXPECT_EQ(passes, 1);
  }
}

TEST(Scenario, WorkspaceClosedBox) {
  Workspace w;
  SystemState s;
  s.quad_pos = {0, 0, 1};
  s.payload_pos = {0, 0, 0.4};
  EXPECT_FALSE(workspace_violation(s, w));
  s.payload_pos = {0, 0, -0.1};
  EXPECT_TRUE(workspace_violation(s, w));
  s.payload_pos = {0, 0, 0.4};
  s.quad_pos = {2.5, -2.5, 2.0};
  EXPECT_FALSE(workspace_violation(s, w));
}

TEST(Scenario, PresetsValid) {
  for (const std::string& name : preset_names()) {
    const TrackSpec t = make_preset(name);
    EXPECT_NO_THROW(t.validate()) << name;
    EXPECT_GT(t.path_length(), 0.0) << name;
    SystemState s;
    for (std::size_t i = 0; i < t.total_targets(); ++i) {
      s.quad_pos = s.payload_pos = t.target(i);
      EXPECT_FALSE(workspace_violation(s, t.workspace)) << name;
    }
    s.quad_pos = t.start_pose.position;
    s.payload_pos = s.quad_pos - Vec3(0, 0, 0.6);
    EXPECT_FALSE(workspace_violation(s, t.workspace)) << name;
  }
  EXPECT_EQ(make_preset("star10").kind, ScenarioKind::PayloadTargeting);
  EXPECT_EQ(make_preset("star10").total_targets(), 10u);
  EXPECT_EQ(make_preset("gate_single").gates.at(0).radius, 0.3);
}

TEST(Scenario, UnknownPresetNamed) {
  try {
    make_preset("nope");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
}

TEST(Scenario, TargetWrapsLapsAndClamps) {
  TrackSpec t;
  t.name = "t";
  t.waypoints = {{0, 0, 1}, {1, 0, 1}};
  t.laps = 2;
  EXPECT_EQ(t.target(2), t.waypoints[0]);
  EXPECT_EQ(t.target(3), t.waypoints[1]);
  EXPECT_EQ(t.target(10), t.waypoints[1]);
}

TEST(Scenario, InvalidTracksRejected) {
  TrackSpec t;
  t.name = "bad";
  EXPECT_THROW(t.validate(), ConfigError);
  t.waypoints = {{0, 0, 1}, {0, 0, 1}};
  EXPECT_THROW(t.validate(), ConfigError);
  t.waypoints = {{0, 0, 1}};
  t.threshold = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_THROW(parse_scenario_kind("xx"), ConfigError);
  EXPECT_EQ(parse_scenario_kind("gt"), ScenarioKind::GateTraversal);
}
