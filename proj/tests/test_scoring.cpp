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

#include <cmath>

#include <gtest/gtest.h>

#include "cpcad/error.hpp"
#include "cpcad/scoring.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace cpcad {
namespace {

using cpcad::testing::TempDir;
using cpcad::testing::tiny_bundle;
using cpcad::testing::tiny_split;

ScoreMap random_map(int side, double absent_rate, Rng& rng) {
  ScoreMap m;
  m.values = Eigen::ArrayXXd::Zero(side, side);
  m.counts = Eigen::ArrayXXi::Zero(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      if (bernoulli(rng, absent_rate)) continue;
      m.values(r, c) = uniform(rng, 0.0, 5.0);
      m.counts(r, c) = 1 + static_cast<int>(uniform_index(rng, 3));
    }
  m.counts(0, 0) = std::max(m.counts(0, 0), 1);
  return m;
}

TEST(TopCount, Values) {
  EXPECT_EQ(top_count(529, 0.05), 27u);
  EXPECT_EQ(top_count(60, 0.05), 3u);  // 0.05 * 60 rounds above 3 in binary
  EXPECT_EQ(top_count(61, 0.05), 4u);
  EXPECT_EQ(top_count(20, 0.05), 1u);
  EXPECT_EQ(top_count(1, 0.05), 1u);
  EXPECT_EQ(top_count(40, 1.0), 40u);
  EXPECT_EQ(top_count(0, 0.05), 0u);
  EXPECT_THROW(top_count(10, 0.0), ConfigError);
  EXPECT_THROW(top_count(10, 1.5), ConfigError);
}

TEST(ImageScore, MatchesSortOracle) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const ScoreMap m = random_map(23, 0.2, rng);
    std::vector<double> present;
    for (int r = 0; r < 23; ++r)
      for (int c = 0; c < 23; ++c)
        if (m.counts(r, c) > 0) present.push_back(m.values(r, c));
    const std::size_t k = static_cast<std::size_t>(std::ceil(0.05 * present.size() - 1e-9));
    EXPECT_NEAR(image_score(m), oracle::top_mean(present, std::max<std::size_t>(k, 1)), 1e-12);
  }
}

TEST(ImageScore, UniformAndEmpty) {
  ScoreMap m;
  m.values = Eigen::ArrayXXd::Constant(23, 23, 2.5);
  m.counts = Eigen::ArrayXXi::Ones(23, 23);
  EXPECT_EQ(image_score(m), 2.5);
  m.counts.setZero();
  EXPECT_THROW(image_score(m), EmptyScoreMapError);
  EXPECT_THROW(m.min_present(), EmptyScoreMapError);
}

TEST(MakeMask, DualityWithFootprintSums) {
  Rng rng(2);
  const GridLayout g = plan_grid({64, 32, 16, 16, 8});
  for (int t = 0; t < 10; ++t) {
    const ScoreMap m = random_map(7, 0.0, rng);
    const Heatmap h = make_mask(m, g).heatmap;
    const Eigen::ArrayXXi cover = present_coverage(m, g);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        double sum = 0;
        int count = 0;
        for (int r = 0; r < 7; ++r)
          for (int c = 0; c < 7; ++c)
            if (8 * r <= y && y < 8 * r + 16 && 8 * c <= x && x < 8 * c + 16) {
              sum += m.values(r, c);
              ++count;
            }
        ASSERT_EQ(cover(y, x), count);
        ASSERT_EQ(h(y, x) * count, sum);
      }
  }
}

TEST(MakeMask, UncoveredPixelsGetMinimumPresent) {
  const GridLayout g = plan_grid({64, 32, 16, 16, 8});
  ScoreMap m;
  m.values = Eigen::ArrayXXd::Zero(7, 7);
  m.counts = Eigen::ArrayXXi::Zero(7, 7);
  m.values(3, 3) = 4.0;
  m.counts(3, 3) = 1;
  m.values(0, 0) = 1.5;
  m.counts(0, 0) = 1;
  const Heatmap h = make_mask(m, g).heatmap;
  EXPECT_EQ(h(0, 0), 1.5);
  EXPECT_EQ(h(30, 30), 4.0);
  EXPECT_EQ(h(63, 63), 1.5);
  EXPECT_EQ(m.present_count(), 2u);
  ScoreMap wrong = m;
  wrong.values.resize(5, 5);
  wrong.counts = Eigen::ArrayXXi::Ones(5, 5);
  EXPECT_THROW(make_mask(wrong, g), ShapeError);
}

TEST(NegativeBank, RejectsTestSamples) {
  const ModelBundle b = tiny_bundle();
  DatasetSplit s = tiny_split();
  s.train.push_back(s.test.back());
  EXPECT_THROW(build_negative_bank(s, b, 1000, 1), ContaminationError);
  s = tiny_split();
  s.train[0].source_id = "test/defect/000";
  EXPECT_THROW(build_negative_bank(s, b, 1000, 1), ContaminationError);
}

TEST(NegativeBank, PoolsComeFromTrainingEmbeddings) {
  const ModelBundle b = tiny_bundle();
  const DatasetSplit s = tiny_split(2);
  const GridLayout g = plan_grid(b.grid);
  const NegativeBank bank = build_negative_bank(s, b, 100, 9);
  ASSERT_EQ(bank.pools.size(), 4u);
  EXPECT_EQ(bank.pool_size(), 100u);
  EXPECT_EQ(bank.sources, (std::vector<std::string>{"train/good/000", "train/good/001"}));
  for (std::size_t p = 0; p < 4; ++p) {
    SubpatchBlocks all(g);
    for (const auto& x : s.train) all.append(x.pixels);
    const Eigen::MatrixXf z = b.encoder_for(p).encode(all.pixels());
    for (Eigen::Index c = 0; c < bank.pools[p].cols(); ++c) {
      const Eigen::VectorXf col = bank.pools[p].col(c);
      Eigen::Index best = 0;
      ((z.colwise() - col).colwise().norm()).minCoeff(&best);
      EXPECT_TRUE(z.col(best).isApprox(col, 1e-5f));
    }
  }
  // The whole training set when it fits.
  EXPECT_EQ(build_negative_bank(s, b, 100000, 9).pool_size(), 2u * g.blocks_per_image());
  EXPECT_THROW(build_negative_bank(s, b, 10, 9, 16), BankTooSmallError);
}

TEST(ScoreImage, PresentPositionsAndDeterminism) {
  TrainConfig c = cpcad::testing::tiny_train();
  c.offsets = {2};
  const ModelBundle b = tiny_bundle(0, c);
  const DatasetSplit s = tiny_split();
  const NegativeBank bank = build_negative_bank(s, b, 16384, 1);
  ScoringParams params;
  params.offsets = {2};
  const ScoreMap m = score_image(s.test[0].pixels, b, bank, params, 42);
  ASSERT_EQ(m.side(), 7);
  // Centre sub-patches of a 3x3 sub-grid are never two steps from a context.
  for (int r = 0; r < 7; ++r)
    for (int c2 = 0; c2 < 7; ++c2) EXPECT_EQ(m.present(r, c2), !(r % 2 == 1 && c2 % 2 == 1));
  EXPECT_EQ(m.present_count(), 40u);
  EXPECT_TRUE((m.values >= 0).all());
  const ScoreMap again = score_image(s.test[0].pixels, b, bank, params, 42);
  EXPECT_TRUE((again.values == m.values).all());
  const ScoreMap other = score_image(s.test[0].pixels, b, bank, params, 43);
  EXPECT_FALSE((other.values == m.values).all());
  params.scope = NegativeScope::per_image;
  const ScoreMap per_image = score_image(s.test[0].pixels, b, bank, params, 42);
  EXPECT_FALSE((per_image.values == m.values).all());
  EXPECT_EQ(per_image.present_count(), 40u);
}

TEST(ScoreImage, CountsMatchPairEnumeration) {
  const ModelBundle b = tiny_bundle();
  const DatasetSplit s = tiny_split();
  const NegativeBank bank = build_negative_bank(s, b, 16384, 1);
  ScoringParams params;
  params.offsets = {1, 2};
  const ScoreMap m = score_image(s.test[0].pixels, b, bank, params, 1);
  // 9 patches, 4 directions, (3-1)*3 + (3-2)*3 pairs each.
  EXPECT_EQ(m.counts.sum(), 9 * 4 * (6 + 3));
}

TEST(ScoreImage, Errors) {
  const ModelBundle b = tiny_bundle();
  const DatasetSplit s = tiny_split();
  const NegativeBank bank = build_negative_bank(s, b, 16384, 1);
  ScoringParams params;
  params.offsets = {3};
  EXPECT_THROW(score_image(s.test[0].pixels, b, bank, params, 1), ConfigError);
  params.offsets = {1};
  params.negatives = 100000;
  EXPECT_THROW(score_image(s.test[0].pixels, b, bank, params, 1), BankTooSmallError);
  params.negatives = 16;
  ModelBundle changed = b;
  changed.predictors[0].matrices[0](0, 0) += 1.0f;
  EXPECT_THROW(score_image(s.test[0].pixels, changed, bank, params, 1), ConfigError);
}

TEST(Sidecars, RoundTrip) {
  TempDir dir;
  Rng rng(3);
  const ScoreMap m = random_map(9, 0.3, rng);
  save_score_map(m, dir / "m.bin");
  const ScoreMap back = load_score_map(dir / "m.bin");
  EXPECT_TRUE((back.values == m.values).all());
  EXPECT_TRUE((back.counts == m.counts).all());
  Heatmap h = Heatmap::Random(5, 7);
  save_heatmap(h, dir / "h.bin");
  EXPECT_TRUE((load_heatmap(dir / "h.bin") == h).all());
  EXPECT_THROW(load_heatmap(dir / "m.bin"), IOError);
  EXPECT_THROW(load_score_map(dir / "missing.bin"), IOError);
}

TEST(Scoring, SeedsAndVerdicts) {
  EXPECT_NE(image_seed(1, "test/good/000"), image_seed(1, "test/good/001"));
  EXPECT_EQ(image_seed(1, "test/good/000"), image_seed(1, "test/good/000"));
  EXPECT_EQ(classify(2.0, 2.0), Verdict::anomalous);
  EXPECT_EQ(classify(1.999, 2.0), Verdict::normal);
  EXPECT_EQ(parse_negative_scope(to_string(NegativeScope::per_image)), NegativeScope::per_image);
  EXPECT_THROW(parse_negative_scope("global"), ConfigError);
}

}  // namespace
}  // namespace cpcad
