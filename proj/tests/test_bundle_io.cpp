/* Copyright 2026 The cpcad Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cpcad/error.hpp"
#include "cpcad/trainer.hpp"
#include "fixtures.hpp"
#include "temp_dir.hpp"

namespace cpcad {
namespace {

namespace fs = std::filesystem;

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void expect_same_weights(const ModelBundle& a, const ModelBundle& b) {
  ASSERT_EQ(a.encoders.size(), b.encoders.size());
  for (std::size_t g = 0; g < a.encoders.size(); ++g) {
    const auto ta = a.encoders[g].tensors();
    const auto tb = b.encoders[g].tensors();
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
      EXPECT_EQ(ta[i].first, tb[i].first);
      EXPECT_TRUE(*ta[i].second == *tb[i].second) << ta[i].first;
    }
  }
  ASSERT_EQ(a.predictors.size(), b.predictors.size());
  for (std::size_t p = 0; p < a.predictors.size(); ++p) {
    EXPECT_EQ(a.predictors[p].direction, b.predictors[p].direction);
    EXPECT_EQ(a.predictors[p].offsets, b.predictors[p].offsets);
    for (std::size_t i = 0; i < a.predictors[p].matrices.size(); ++i) {
      EXPECT_TRUE(a.predictors[p].matrices[i] == b.predictors[p].matrices[i]);
    }
  }
}

TEST(BundleIo, RoundTripIsBitExact) {
  testing::TempDir dir;
  ModelBundle a = testing::tiny_bundle(1);
  a.class_name = "carpet";
  save_bundle(a, dir.path() / "m.cpcb");
  const ModelBundle b = load_bundle(dir.path() / "m.cpcb");
  EXPECT_EQ(b.class_name, "carpet");
  EXPECT_EQ(b.grid, a.grid);
  EXPECT_EQ(b.encoder_config, a.encoder_config);
  EXPECT_EQ(b.encoder_of, a.encoder_of);
  expect_same_weights(a, b);
  EXPECT_EQ(b.fingerprint(), a.fingerprint());
}

TEST(BundleIo, SharedEncoderRoundTrip) {
  testing::TempDir dir;
  TrainConfig t = testing::tiny_train();
  t.share_encoder = true;
  const ModelBundle a = testing::tiny_bundle(0, t);
  save_bundle(a, dir.path() / "m.cpcb");
  const ModelBundle b = load_bundle(dir.path() / "m.cpcb");
  EXPECT_EQ(b.encoders.size(), 1u);
  expect_same_weights(a, b);
}

TEST(BundleIo, SaveIsDeterministic) {
  testing::TempDir dir;
  const ModelBundle a = testing::tiny_bundle();
  save_bundle(a, dir.path() / "a.cpcb");
  save_bundle(a, dir.path() / "b.cpcb");
  EXPECT_EQ(read_bytes(dir.path() / "a.cpcb"), read_bytes(dir.path() / "b.cpcb"));
}

TEST(BundleIo, VersionMismatchIsReported) {
  testing::TempDir dir;
  save_bundle(testing::tiny_bundle(), dir.path() / "m.cpcb");
  auto bytes = read_bytes(dir.path() / "m.cpcb");
  bytes[8] = 2;  // u32 version follows the 8-byte magic
  write_bytes(dir.path() / "v2.cpcb", bytes);
  EXPECT_THROW(load_bundle(dir.path() / "v2.cpcb"), CheckpointVersionError);
}

TEST(BundleIo, CorruptionIsReported) {
  testing::TempDir dir;
  save_bundle(testing::tiny_bundle(), dir.path() / "m.cpcb");
  const auto bytes = read_bytes(dir.path() / "m.cpcb");

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  write_bytes(dir.path() / "flip.cpcb", flipped);
  EXPECT_THROW(load_bundle(dir.path() / "flip.cpcb"), CheckpointFormatError);

  for (std::size_t keep : {std::size_t{4}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    write_bytes(dir.path() / "short.cpcb", std::vector<char>(bytes.begin(), bytes.begin() + keep));
    EXPECT_THROW(load_bundle(dir.path() / "short.cpcb"), CheckpointFormatError) << keep;
  }

  auto longer = bytes;
  longer.push_back(0);
  write_bytes(dir.path() / "long.cpcb", longer);
  EXPECT_THROW(load_bundle(dir.path() / "long.cpcb"), CheckpointFormatError);

  auto magic = bytes;
  magic[0] = 'X';
  write_bytes(dir.path() / "magic.cpcb", magic);
  EXPECT_THROW(load_bundle(dir.path() / "magic.cpcb"), CheckpointFormatError);
}

TEST(BundleIo, MissingFileIsIoError) {
  EXPECT_THROW(load_bundle("/nonexistent/m.cpcb"), IOError);
}

TEST(BundleIo, SaveLeavesNoTemporaries) {
  testing::TempDir dir;
  save_bundle(testing::tiny_bundle(), dir.path() / "m.cpcb");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(Checkpoint, RoundTripsOptimizerAndHistory) {
  testing::TempDir dir;
  Trainer t(testing::tiny_split(), testing::tiny_grid(), testing::tiny_encoder(), testing::tiny_train(3));
  t.run_epoch();
  t.run_epoch();
  save_checkpoint(t.state(), dir.path() / "c.cpcb");
  const TrainingState s = load_checkpoint(dir.path() / "c.cpcb");
  EXPECT_EQ(s.epochs_completed, 2);
  EXPECT_EQ(s.loss_history, t.state().loss_history);
  ASSERT_EQ(s.optimizers.size(), t.state().optimizers.size());
  for (std::size_t g = 0; g < s.optimizers.size(); ++g) {
    const nn::Adam& a = t.state().optimizers[g];
    const nn::Adam& b = s.optimizers[g];
    EXPECT_EQ(a.steps(), b.steps());
    ASSERT_EQ(a.first_moments().size(), b.first_moments().size());
    for (std::size_t i = 0; i < a.first_moments().size(); ++i) {
      EXPECT_TRUE(a.first_moments()[i] == b.first_moments()[i]);
      EXPECT_TRUE(a.second_moments()[i] == b.second_moments()[i]);
    }
  }
  expect_same_weights(t.state().bundle, s.bundle);
}

TEST(Checkpoint, CheckpointLoadsAsBundle) {
  testing::TempDir dir;
  Trainer t(testing::tiny_split(), testing::tiny_grid(), testing::tiny_encoder(), testing::tiny_train(1));
  t.run_epoch();
  save_checkpoint(t.state(), dir.path() / "c.cpcb");
  const ModelBundle b = load_bundle(dir.path() / "c.cpcb");
  EXPECT_EQ(b.fingerprint(), t.state().bundle.fingerprint());
}

TEST(Checkpoint, PlainBundleHasNoTrainingState) {
  testing::TempDir dir;
  save_bundle(testing::tiny_bundle(), dir.path() / "m.cpcb");
  EXPECT_THROW(load_checkpoint(dir.path() / "m.cpcb"), CheckpointFormatError);
}

// Written by an earlier build from tiny_bundle() with class "fixture"; guards
// the on-disk layout against silent changes.
TEST(BundleIo, CommittedFixtureStillLoads) {
  const fs::path fixture = fs::path(CPCAD_TEST_DATA) / "bundle_v1.cpcb";
  const ModelBundle b = load_bundle(fixture);
  EXPECT_EQ(b.class_name, "fixture");
  EXPECT_EQ(b.grid, testing::tiny_grid());
  EXPECT_EQ(b.encoder_config, testing::tiny_encoder());
  EXPECT_EQ(b.predictors.size(), 4u);
  ModelBundle fresh = testing::tiny_bundle();
  fresh.class_name = "fixture";
  expect_same_weights(fresh, b);
}

}  // namespace
}  // namespace cpcad
