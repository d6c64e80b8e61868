#include "slung/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "slung/errors.hpp"

namespace slung {

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::WaypointPassing:
      return "wp";
    case ScenarioKind::PayloadTargeting:
      return "pt";
    case ScenarioKind::GateTraversal:
      return "gt";
  }
  return "?";
}

ScenarioKind parse_scenario_kind(std::string_view text) {
  if (text == "wp" || text == "WaypointPassing") return ScenarioKind::WaypointPassing;
  if (text == "pt" || text == "PayloadTargeting") return ScenarioKind::PayloadTargeting;
  if (text == "gt" || text == "GateTraversal") return ScenarioKind::GateTraversal;
  throw ConfigError("unknown scenario kind '" + std::string(text) + "' (expected wp, pt or gt)");
}

bool Workspace::contains(const Vec3& p) const {
  return (p.array() >= min_corner.array()).all() && (p.array() <= max_corner.array()).all();
}

const Vec3& TrackSpec::target(std::size_t index) const {
  const std::size_t total = total_targets();
  const std::size_t i = std::min(index, total - 1);
  return waypoints[i % waypoints.size()];
}

double TrackSpec::path_length() const {
  double len = 0.0;
  Vec3 prev = start_pose.position;
  for (std::size_t i = 0; i < total_targets(); ++i) {
    len += (target(i) - prev).norm();
    prev = target(i);
  }
  return len;
}

void TrackSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw ConfigError("track '" + name + "': " + what);
  };
  if (waypoints.empty()) fail("needs at least one waypoint");
  if (!(threshold > 0)) fail("threshold must be > 0");
  if (laps < 1) fail("laps must be >= 1");
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    if ((waypoints[i + 1] - waypoints[i]).norm() < 1e-9) fail("consecutive waypoints coincide");
  }
  if (laps > 1 && waypoints.size() > 1 && (waypoints.front() - waypoints.back()).norm() < 1e-9) {
    fail("lap wrap-around repeats a waypoint");
  }
  if (!(workspace.min_corner.array() < workspace.max_corner.array()).all()) {
    fail("workspace min_corner must be < max_corner");
  }
  if (kind == ScenarioKind::GateTraversal && gates.empty()) fail("gate scenario needs a gate");
  for (const GateSpec& g : gates) {
    if (std::abs(g.normal.norm() - 1.0) > 1e-9) fail("gate normal must be unit length");
    if (!(g.radius > 0)) fail("gate radius must be > 0");
    if (!(g.collision_band >= 0)) fail("gate collision_band must be >= 0");
  }
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (a + s * ab - p).norm();
}

WaypointProgress waypoint_progress(const Vec3& pos_prev, const Vec3& pos_cur,
                                   const TrackSpec& track, std::size_t index) {
  WaypointProgress out{index, false};
  if (index >= track.total_targets()) return out;
  if (point_segment_distance(track.target(index), pos_prev, pos_cur) <= track.threshold) {
    out.index = index + 1;
    out.passed = true;
  }
  return out;
}

double gate_signed_distance(const Vec3& p, const GateSpec& gate) {
  return (p - gate.center).dot(gate.normal);
}

std::optional<Vec3> gate_plane_intersection(const Vec3& a, const Vec3& b, const GateSpec& gate) {
  const double da = gate_signed_distance(a, gate);
  const double db = gate_signed_distance(b, gate);
  // Touching the plane counts as a crossing from the side we left.
  const bool crosses = (da < 0.0 && db >= 0.0) || (da > 0.0 && db <= 0.0);
  if (!crosses) return std::nullopt;
  const double s = da / (da - db);
  return a + s * (b - a);
}

namespace {

double radial_offset(const Vec3& p, const GateSpec& gate) {
  const Vec3 d = p - gate.center;
  return (d - d.dot(gate.normal) * gate.normal).norm();
}

}  // namespace

GateEvent gate_crossing(const Vec3& pos_prev, const Vec3& pos_cur, const GateSpec& gate,
                        double body_radius) {
  const auto hit = gate_plane_intersection(pos_prev, pos_cur, gate);
  if (!hit) return GateEvent::NoEvent;
  const double r = radial_offset(*hit, gate);
  const double opening = gate.radius - body_radius;
  if (r <= opening) return GateEvent::Passed;
  if (r <= gate.radius + gate.collision_band) return GateEvent::Collided;
  return GateEvent::NoEvent;
}

GateEvent gate_crossing(const Vec3& pos_prev, const Vec3& pos_cur, const GateSpec& gate) {
  return gate_crossing(pos_prev, pos_cur, gate, 0.0);
}

bool cable_gate_collision(const Vec3& quad, const Vec3& payload, const GateSpec& gate) {
  const auto hit = gate_plane_intersection(quad, payload, gate);
  if (!hit) return false;
  const double r = radial_offset(*hit, gate);
  return r > gate.radius && r <= gate.radius + gate.collision_band;
}

bool workspace_violation(const SystemState& state, const Workspace& w) {
  return !w.contains(state.quad_pos) || !w.contains(state.payload_pos);
}

std::vector<std::string> preset_names() {
  return {"hop", "zigzag", "eight3", "heart", "star10", "gate_single", "gate_double"};
}

TrackSpec make_preset(std::string_view name) {
  constexpr double kPi = std::numbers::pi;
  TrackSpec t;
  t.name = std::string(name);
  if (name == "hop") {
    t.kind = ScenarioKind::WaypointPassing;
    t.start_pose.position = {-1.0, 0.0, 1.2};
    t.waypoints = {{1.0, 0.0, 1.2}};
    t.threshold = 0.5;
  } else if (name == "zigzag") {
    t.kind = ScenarioKind::WaypointPassing;
    t.start_pose.position = {-2.0, 0.0, 1.2};
    t.waypoints = {{-0.8, 0.8, 1.25}, {0.4, -0.8, 1.15}, {1.6, 0.8, 1.25}};
    t.threshold = 0.5;
  } else if (name == "eight3") {
    t.kind = ScenarioKind::WaypointPassing;
    t.start_pose.position = {0.0, 0.0, 1.2};
    // Lemniscate of Gerono sampled at 8 points, alternating height.
    for (int k = 1; k <= 8; ++k) {
      const double s = 2.0 * kPi * k / 8.0;
      t.waypoints.push_back(
          {1.8 * std::sin(s), 2.4 * std::sin(s) * std::cos(s), 1.2 + 0.15 * ((k % 2) ? 1.0 : -1.0)});
    }
    t.laps = 3;
    t.threshold = 0.5;
  } else if (name == "heart") {
    t.kind = ScenarioKind::WaypointPassing;
    t.start_pose.position = {0.0, 0.2, 1.2};
    for (int k = 1; k <= 10; ++k) {
      const double s = 2.0 * kPi * k / 10.0;
      const double x = 16.0 * std::pow(std::sin(s), 3);
      const double y = 13.0 * std::cos(s) - 5.0 * std::cos(2 * s) - 2.0 * std::cos(3 * s) -
                       std::cos(4 * s);
      t.waypoints.push_back({x / 16.0 * 2.0, y / 17.0 * 1.9 + 0.1, 1.2 + 0.1 * std::cos(s)});
    }
    t.threshold = 0.5;
  } else if (name == "star10") {
    t.kind = ScenarioKind::PayloadTargeting;
    t.start_pose.position = {0.0, 0.0, 1.3};
    // Pentagram vertex order; two laps give ten targets.
    for (int k : {0, 2, 4, 1, 3}) {
      const double s = kPi / 2.0 + 2.0 * kPi * k / 5.0;
      t.waypoints.push_back({1.5 * std::cos(s), 1.5 * std::sin(s), 0.75});
    }
    t.laps = 2;
    t.threshold = 0.2;
  } else if (name == "gate_single") {
    t.kind = ScenarioKind::GateTraversal;
    t.start_pose.position = {-2.0, 0.0, 1.2};
    t.gates = {GateSpec{{0.0, 0.0, 1.1}, {1.0, 0.0, 0.0}, 0.3, 0.15}};
    t.waypoints = {{2.0, 0.0, 1.2}};
    t.threshold = 0.5;
  } else if (name == "gate_double") {
    t.kind = ScenarioKind::GateTraversal;
    t.start_pose.position = {-2.0, -0.5, 1.2};
    const Vec3 n2 = Vec3(1.0, 1.0, 0.0).normalized();
    t.gates = {GateSpec{{-0.6, -0.5, 1.1}, {1.0, 0.0, 0.0}, 0.3, 0.15},
               GateSpec{{0.9, 0.4, 1.1}, n2, 0.3, 0.15}};
    t.waypoints = {{2.1, 1.6, 1.2}};
    t.threshold = 0.5;
  } else {
    throw ConfigError("unknown track preset '" + std::string(name) + "'");
  }
  t.validate();
  return t;
}

}  // namespace slung
