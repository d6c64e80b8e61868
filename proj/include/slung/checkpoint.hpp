#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "slung/policy.hpp"
#include "slung/scenario.hpp"

namespace slung {

// Binary layout, all integers and floats little-endian:
//   0  char[4]  magic "SLPP"
//   4  u32      version (1)
//   8  u32      scenario kind (0 wp, 1 pt, 2 gt)
//   12 u32      obs_dim
//   16 u32      hidden width
//   20 u32      action dim (4)
//   24 u64      parameter count
//   32 f32[n]   parameters in PolicyParams order
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ScenarioKind kind = ScenarioKind::WaypointPassing;
  PolicyParams params;
};

// Throws IoError when the file cannot be written.
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     ScenarioKind kind);

// Throws FormatError on bad magic/version/dimensions or truncation, and when
// `expected` is given and the scenario kind or obs_dim does not match it.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<ScenarioKind> expected = std::nullopt);

}  // namespace slung
