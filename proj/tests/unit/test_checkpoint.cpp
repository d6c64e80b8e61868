#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "slung/checkpoint.hpp"
#include "slung/errors.hpp"

using namespace slung;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "slung_ckpt_test";
  fs::create_directories(dir);
  return dir / name;
}

PolicyParams params(std::size_t obs_dim) {
  Rng rng(1);
  return init_policy(obs_dim, 16, rng, Action{0.1, 0, 0, 0}, -0.7);
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST(Checkpoint, RoundTripIsFloatQuantized) {
  const PolicyParams p = params(27);
  const fs::path f = tmp("rt.ckpt");
  save_checkpoint(f, p, ScenarioKind::GateTraversal);
  const Checkpoint c = load_checkpoint(f, ScenarioKind::GateTraversal);
  EXPECT_EQ(c.kind, ScenarioKind::GateTraversal);
  EXPECT_EQ(c.params.obs_dim(), 27u);
  EXPECT_EQ(c.params.hidden(), 16u);
  EXPECT_EQ(c.params.data(), p.quantized().data());
  // Saving a loaded checkpoint is lossless.
  save_checkpoint(tmp("rt2.ckpt"), c.params, c.kind);
  EXPECT_EQ(read_all(f), read_all(tmp("rt2.ckpt")));
}

TEST(Checkpoint, HeaderLayout) {
  const PolicyParams p = params(24);
  const fs::path f = tmp("hdr.ckpt");
  save_checkpoint(f, p, ScenarioKind::PayloadTargeting);
  const std::string b = read_all(f);
  EXPECT_EQ(b.substr(0, 4), "SLPP");
  EXPECT_EQ(b.size(), 32 + 4 * p.size());
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 1);
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 24);
}

TEST(Checkpoint, TruncationRejected) {
  const fs::path f = tmp("trunc.ckpt");
  save_checkpoint(f, params(24), ScenarioKind::WaypointPassing);
  const std::string b = read_all(f);
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{20}, b.size() - 1}) {
    write_all(tmp("cut.ckpt"), b.substr(0, keep));
    EXPECT_THROW(load_checkpoint(tmp("cut.ckpt")), FormatError) << keep;
  }
  write_all(tmp("long.ckpt"), b + "x");
  EXPECT_THROW(load_checkpoint(tmp("long.ckpt")), FormatError);
}

TEST(Checkpoint, BadMagicAndVersion) {
  const fs::path f = tmp("magic.ckpt");
  save_checkpoint(f, params(24), ScenarioKind::WaypointPassing);
  std::string b = read_all(f);
  std::string m = b;
  m[0] = 'X';
  write_all(tmp("m.ckpt"), m);
  EXPECT_THROW(load_checkpoint(tmp("m.ckpt")), FormatError);
  std::string v = b;
  v[4] = 9;
  write_all(tmp("v.ckpt"), v);
  EXPECT_THROW(load_checkpoint(tmp("v.ckpt")), FormatError);
}

TEST(Checkpoint, WrongScenarioRejected) {
  const fs::path f = tmp("kind.ckpt");
  save_checkpoint(f, params(24), ScenarioKind::WaypointPassing);
  EXPECT_NO_THROW(load_checkpoint(f, ScenarioKind::WaypointPassing));
  // Same obs size, different scenario.
  EXPECT_THROW(load_checkpoint(f, ScenarioKind::PayloadTargeting), FormatError);
  EXPECT_THROW(load_checkpoint(f, ScenarioKind::GateTraversal), FormatError);
}

TEST(Checkpoint, MissingFileAndUnwritablePath) {
  EXPECT_THROW(load_checkpoint(tmp("does_not_exist.ckpt")), Error);
  EXPECT_THROW(save_checkpoint("/proc/nope/x.ckpt", params(24), ScenarioKind::WaypointPassing),
               IoError);
}
