#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "fpsr/checkpoint.hpp"
#include "fpsr/models.hpp"

using namespace fpsr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fpsr_checkpoint_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint sample() {
  Checkpoint c;
  c.config_digest = "abc123";
  c.step = 42;
  c.meta["phase"] = "pretrain";
  c.meta["note"] = "two words";
  Rng r(7);
  r.normal();
  c.rng["data"] = r.state();
  c.put("a", Shape{2, 3}, {1.f, -2.f, 3.5f, 1e-30f, -0.f, 65504.f});
  c.put("b", Shape{}, {0.125f});
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto path = scratch("roundtrip.ckpt");
  const auto c = sample();
  save_checkpoint(path, c);
  const auto d = load_checkpoint(path, "abc123");
  EXPECT_EQ(d.step, 42);
  EXPECT_EQ(d.config_digest, "abc123");
  EXPECT_EQ(d.meta, c.meta);
  EXPECT_EQ(d.rng, c.rng);
  ASSERT_EQ(d.tensors.size(), 2u);
  EXPECT_EQ(d.at("a").shape, (Shape{2, 3}));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(d.at("a").values[i]), std::bit_cast<std::uint32_t>(c.at("a").values[i]));
  }
  EXPECT_EQ(d.at("b").values[0], 0.125f);

  Rng original(7);
  original.normal();
  Rng restored;
  restored.set_state(d.rng.at("data"));
  EXPECT_EQ(original.next_u64(), restored.next_u64());
}

TEST(Checkpoint, SavingTwiceGivesIdenticalBytes) {
  const auto a = scratch("twice_a.ckpt"), b = scratch("twice_b.ckpt");
  save_checkpoint(a, sample());
  save_checkpoint(b, sample());
  EXPECT_TRUE(same_file_bytes(a, b));
  auto c = sample();
  c.step = 43;
  save_checkpoint(b, c);
  EXPECT_FALSE(same_file_bytes(a, b));
}

TEST(Checkpoint, RejectsDamagedFiles) {
  const auto good = scratch("good.ckpt"), bad = scratch("bad.ckpt");
  save_checkpoint(good, sample());
  const auto bytes = slurp(good);

  dump(bad, bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(bad), CheckpointError);

  auto flipped = bytes;
  flipped[flipped.size() - 2] ^= 0x5a;
  dump(bad, flipped);
  EXPECT_THROW(load_checkpoint(bad), CheckpointError);

  auto versioned = bytes;
  versioned.replace(versioned.find(" 1\n"), 3, " 9\n");
  dump(bad, versioned);
  EXPECT_THROW(load_checkpoint(bad), CheckpointError);

  dump(bad, "hello world\n");
  EXPECT_THROW(load_checkpoint(bad), CheckpointError);
  dump(bad, "");
  EXPECT_THROW(load_checkpoint(bad), CheckpointError);
  EXPECT_THROW(load_checkpoint(scratch("does_not_exist.ckpt")), CheckpointError);
}

TEST(Checkpoint, DigestMismatchIsRejected) {
  const auto path = scratch("digest.ckpt");
  save_checkpoint(path, sample());
  EXPECT_THROW(load_checkpoint(path, "other"), CheckpointError);
  EXPECT_NO_THROW(load_checkpoint(path));
}

TEST(Checkpoint, PutValidatesAndReplaces) {
  Checkpoint c;
  EXPECT_THROW(c.put("x", Shape{2}, {1.f}), CheckpointError);
  EXPECT_THROW(c.put("has space", Shape{1}, {1.f}), CheckpointError);
  c.put("x", Shape{1}, {1.f});
  c.put("x", Shape{2}, {2.f, 3.f});
  ASSERT_EQ(c.tensors.size(), 1u);
  EXPECT_EQ(c.at("x").values[1], 3.f);
  EXPECT_EQ(c.find("y"), nullptr);
  EXPECT_THROW(c.at("y"), CheckpointError);
}

TEST(Checkpoint, ModelAndOptimizerStateRoundTrip) {
  const models::EusrConfig cfg{4, 1, 1, 1.0};
  models::Eusr<float> a(cfg, 3), b(cfg, 4);
  auto pa = a.parameters();
  Adam<float> adam_a(pa);
  for (auto& p : pa) {
    auto g = p.tensor.mutable_grad();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = 0.01f * static_cast<float>(k % 7) - 0.02f;
  }
  adam_a.step(1e-3);

  Checkpoint c;
  store_parameters(c, "gen/", pa);
  store_adam(c, "adam.gen/", adam_a);
  const auto path = scratch("model.ckpt");
  save_checkpoint(path, c);
  const auto loaded = load_checkpoint(path);

  auto pb = b.parameters();
  Adam<float> adam_b(pb);
  restore_parameters(loaded, "gen/", pb);
  restore_adam(loaded, "adam.gen/", adam_b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i].name, pb[i].name);
    const auto x = pa[i].tensor.data(), y = pb[i].tensor.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << pa[i].name;
    EXPECT_EQ(adam_a.first_moment(i), adam_b.first_moment(i));
    EXPECT_EQ(adam_a.second_moment(i), adam_b.second_moment(i));
    EXPECT_EQ(adam_a.updates(i), adam_b.updates(i));
  }
  EXPECT_THROW(restore_adam(loaded, "adam.disc/", adam_b), CheckpointError);
  EXPECT_THROW(restore_parameters(loaded, "disc/", pb), CheckpointError);
}

TEST(Checkpoint, RestoreRejectsShapeMismatch) {
  models::Eusr<float> small({4, 1, 1, 1.0}, 1), wide({8, 1, 1, 1.0}, 1);
  Checkpoint c;
  store_parameters(c, "gen/", small.parameters());
  EXPECT_THROW(restore_parameters(c, "gen/", wide.parameters()), CheckpointError);
}
