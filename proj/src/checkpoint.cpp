#include "slung/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "slung/env.hpp"
#include "slung/errors.hpp"

namespace slung {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'P', 'P'};
constexpr std::size_t kHeaderSize = 32;

template <class T>
void put_le(std::vector<unsigned char>& buf, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<unsigned char>(u >> (8 * i)));
}

template <class T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

std::uint32_t kind_code(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::WaypointPassing:
      return 0;
    case ScenarioKind::PayloadTargeting:
      return 1;
    case ScenarioKind::GateTraversal:
      return 2;
  }
  return 0;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params,
                     ScenarioKind kind) {
  std::vector<unsigned char> buf(kMagic, kMagic + 4);
  put_le<std::uint32_t>(buf, kCheckpointVersion);
  put_le<std::uint32_t>(buf, kind_code(kind));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(params.obs_dim()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(params.hidden()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(kActionDim));
  put_le<std::uint64_t>(buf, params.size());
  for (double v : params.data()) put_le<float>(buf, static_cast<float>(v));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<ScenarioKind> expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                       std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (buf.size() < kHeaderSize) throw FormatError("checkpoint truncated (header)" + where);
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("bad checkpoint magic" + where);
  const auto version = get_le<std::uint32_t>(buf.data() + 4);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + where);
  }
  const auto code = get_le<std::uint32_t>(buf.data() + 8);
  if (code > 2) throw FormatError("unknown scenario kind code" + where);
  const ScenarioKind kind = code == 0   ? ScenarioKind::WaypointPassing
                            : code == 1 ? ScenarioKind::PayloadTargeting
                                        : ScenarioKind::GateTraversal;
  const auto obs_dim = get_le<std::uint32_t>(buf.data() + 12);
  const auto hidden = get_le<std::uint32_t>(buf.data() + 16);
  const auto act_dim = get_le<std::uint32_t>(buf.data() + 20);
  const auto count = get_le<std::uint64_t>(buf.data() + 24);

  if (act_dim != kActionDim) throw FormatError("checkpoint action dim mismatch" + where);
  if (obs_dim != observation_dim(kind)) {
    throw FormatError("checkpoint obs_dim " + std::to_string(obs_dim) +
                      " inconsistent with its scenario" + where);
  }
  if (hidden == 0 || hidden > 65536) throw FormatError("bad hidden width" + where);
  Checkpoint ck{kind, PolicyParams(obs_dim, hidden)};
  if (count != ck.params.size()) throw FormatError("checkpoint parameter count mismatch" + where);
  if (buf.size() != kHeaderSize + 4 * count) throw FormatError("checkpoint truncated" + where);
  for (std::size_t i = 0; i < count; ++i) {
    ck.params.data()[i] = static_cast<double>(get_le<float>(buf.data() + kHeaderSize + 4 * i));
  }
  if (expected) {
    if (*expected != kind || observation_dim(*expected) != obs_dim) {
      throw FormatError("checkpoint is for scenario '" + std::string(to_string(kind)) +
                        "' (obs_dim " + std::to_string(obs_dim) + "), expected '" +
                        std::string(to_string(*expected)) + "' (obs_dim " +
                        std::to_string(observation_dim(*expected)) + ")" + where);
    }
  }
  return ck;
}

}  // namespace slung
