// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "otrlab/checkpoint.hpp"
#include "otrlab/rng.hpp"

namespace otrlab {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("otrlab_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ModelConfig cfg() {
  ModelConfig c;
  c.vocab_size = 9;
  c.context_len = 12;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  return c;
}

std::unique_ptr<TokenPolicy> trained_like() {
  auto m = init_params(cfg());
  std::uint64_t k = 1;
  for (auto& [name, t] : m->params())
    for (auto& v : t.values) v = static_cast<double>(splitmix64(k++) >> 11) * 0x1p-53 - 0.5;
  m->params()[0].value.values[0] = -0.0;
  m->params()[0].value.values[1] = 1e-310;
  return m;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir a, b;
  b.path += "_b";
  auto m = trained_like();
  auto st = AdamWState::for_params(m->params());
  st.step = 17;
  st.m[0][3] = 0.125;
  st.v[1][0] = 3.5e-9;
  checkpoint_save(a.path, *m, &st, {{"step", "17"}, {"run", "abc"}});
  const Checkpoint c = checkpoint_load(a.path);
  EXPECT_EQ(c.model->params().checksum(), m->params().checksum());
  ASSERT_TRUE(c.optimizer.has_value());
  EXPECT_EQ(c.optimizer->step, 17u);
  EXPECT_EQ(c.optimizer->m, st.m);
  EXPECT_EQ(c.optimizer->v, st.v);
  EXPECT_EQ(c.meta.at("run"), "abc");
  EXPECT_EQ(c.model->config().d_ff, 16u);
  EXPECT_TRUE(std::signbit(c.model->params()[0].value.values[0]));
  checkpoint_save(b.path, *c.model, &*c.optimizer, c.meta);
  EXPECT_EQ(slurp(a.path / "manifest.txt"), slurp(b.path / "manifest.txt"));
  EXPECT_EQ(slurp(a.path / "tensors.bin"), slurp(b.path / "tensors.bin"));
}

TEST(Checkpoint, ModelOnlyAndBigram) {
  TempDir d;
  ModelConfig c;
  c.kind = ModelKind::bigram;
  c.vocab_size = 4;
  c.context_len = 4;
  auto m = init_params(c);
  m->params()[0].value.values[5] = 2.5;
  checkpoint_save(d.path, *m, nullptr, {});
  const auto back = checkpoint_load(d.path);
  EXPECT_FALSE(back.optimizer.has_value());
  EXPECT_EQ(back.model->config().kind, ModelKind::bigram);
  EXPECT_EQ(back.model->params()[0].value.values[5], 2.5);
}

TEST(Checkpoint, ManifestListsTensorsWithOffsets) {
  TempDir d;
  auto m = trained_like();
  checkpoint_save(d.path, *m, nullptr, {});
  const std::string man = slurp(d.path / "manifest.txt");
  EXPECT_NE(man.find("tok_emb 9x8 f64 0"), std::string::npos) << man;
  EXPECT_EQ(fs::file_size(d.path / "tensors.bin"), m->params().total_count() * 8);
}

TEST(Checkpoint, TruncatedBlobNamesTheTensor) {
  TempDir d;
  auto m = trained_like();
  checkpoint_save(d.path, *m, nullptr, {});
  fs::resize_file(d.path / "tensors.bin", fs::file_size(d.path / "tensors.bin") - 8);
  try {
    checkpoint_load(d.path);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("unembed"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RejectsVersionMismatchAndGarbage) {
  TempDir d;
  checkpoint_save(d.path, *trained_like(), nullptr, {});
  std::string man = slurp(d.path / "manifest.txt");
  const std::string good = man;
  man.replace(man.find(" 1\n"), 3, " 9\n");
  std::ofstream(d.path / "manifest.txt", std::ios::binary) << man;
  EXPECT_THROW(checkpoint_load(d.path), CheckpointError);
  std::ofstream(d.path / "manifest.txt", std::ios::binary) << "hello 1\n";
  EXPECT_THROW(checkpoint_load(d.path), CheckpointError);
  std::ofstream(d.path / "manifest.txt", std::ios::binary) << good;
  std::ofstream(d.path / "tensors.bin", std::ios::binary | std::ios::app) << "xxxxxxxx";
  EXPECT_THROW(checkpoint_load(d.path), CheckpointError);
  EXPECT_THROW(checkpoint_load(d.path / "missing"), CheckpointError);
}

TEST(Checkpoint, RejectsMetadataWithSpaces) {
  TempDir d;
  EXPECT_THROW(checkpoint_save(d.path, *trained_like(), nullptr, {{"k", "a b"}}), CheckpointError);
}

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, -1e-300, 1.0 / 3.0, 123456789.0}) EXPECT_EQ(std::stod(format_double(v)), v);
}

}  // namespace
}  // namespace otrlab
