#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slung/dynamics.hpp"

namespace slung {

enum class ScenarioKind { WaypointPassing, PayloadTargeting, GateTraversal };

std::string_view to_string(ScenarioKind kind);
// Accepts "wp", "pt", "gt" and the full names; throws ConfigError otherwise.
ScenarioKind parse_scenario_kind(std::string_view text);

struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
};

struct Workspace {
  Vec3 min_corner{-2.5, -2.5, 0.0};
  Vec3 max_corner{2.5, 2.5, 2.0};

  // Closed box: points on the boundary are inside.
  bool contains(const Vec3& p) const;
};

struct GateSpec {
  Vec3 center = Vec3::Zero();
  Vec3 normal{1.0, 0.0, 0.0};
  double radius = 0.3;
  double collision_band = 0.15;
};

struct TrackSpec {
  std::string name;
  ScenarioKind kind = ScenarioKind::WaypointPassing;
  std::vector<Vec3> waypoints;
  double threshold = 0.5;
  int laps = 1;
  Pose start_pose;
  std::vector<GateSpec> gates;
  Workspace workspace;

  std::size_t total_targets() const { return waypoints.size() * static_cast<std::size_t>(laps); }
  // Waypoint for a progress index; indices past the end clamp to the last one.
  const Vec3& target(std::size_t index) const;
  // Start point plus every lap of waypoints, polyline length.
  double path_length() const;
  void validate() const;
};

enum class GateEvent { NoEvent, Passed, Collided };

struct WaypointProgress {
  std::size_t index = 0;
  bool passed = false;
};

// Closest distance from p to the segment [a, b].
double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

WaypointProgress waypoint_progress(const Vec3& pos_prev, const Vec3& pos_cur,
                                   const TrackSpec& track, std::size_t index);

// Signed distance of p from the gate plane along the gate normal.
double gate_signed_distance(const Vec3& p, const GateSpec& gate);

// Plane intersection point of a segment that changes side, if any.
std::optional<Vec3> gate_plane_intersection(const Vec3& a, const Vec3& b, const GateSpec& gate);

GateEvent gate_crossing(const Vec3& pos_prev, const Vec3& pos_cur, const GateSpec& gate);

// Same as gate_crossing but with the disc radius shrunk by a body radius.
GateEvent gate_crossing(const Vec3& pos_prev, const Vec3& pos_cur, const GateSpec& gate,
                        double body_radius);

// True iff the quad-payload segment pierces the gate plane outside the
// opening but within the rim band.
bool cable_gate_collision(const Vec3& quad, const Vec3& payload, const GateSpec& gate);

bool workspace_violation(const SystemState& state, const Workspace& w);

// Shipped presets: zigzag, eight3, heart, star10, gate_single, gate_double,
// plus the single-waypoint smoke task "hop".
std::vector<std::string> preset_names();
// Throws ConfigError naming the preset when unknown.
TrackSpec make_preset(std::string_view name);

}  // namespace slung
