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

#include <string>

#include <gtest/gtest.h>

#include "cpcad/config.hpp"
#include "cpcad/error.hpp"
#include "fixtures.hpp"

namespace cpcad {
namespace {

constexpr char kDesk[] = R"(
[run]
seed = 7
out_dir = runs/x

[dataset]
source = synthetic
class = synthetic-sine-grating
texture_kind = sine-grating
defect_kind = rectangle-blot
n_train = 40
n_test_normal = 20
n_test_anomalous = 20

[grid]
image_side = 128
patch_side = 64
patch_stride = 32
subpatch_side = 32
subpatch_stride = 16

[encoder]
backbone = small-cnn
embedding_dim = 64
input_side = 32

[train]
epochs = 30
batch_size = 4
learning_rate = 1e-3

[scoring]
offsets = 2
negatives = 16
)";

TEST(Config, ParsesSectionsAndPropagatesSeeds) {
  const RunConfig c = parse_run_config(kDesk);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.out_dir, "runs/x");
  EXPECT_EQ(c.dataset.class_name, "synthetic-sine-grating");
  EXPECT_EQ(c.dataset.synth.n_train, 40);
  EXPECT_EQ(c.grid.image_side, 128);
  EXPECT_EQ(c.encoder.backbone, Backbone::small_cnn);
  EXPECT_EQ(c.encoder.embedding_dim, 64);
  EXPECT_EQ(c.train.epochs, 30);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.scoring.offsets, std::vector<int>{2});
  EXPECT_EQ(c.train.offsets, std::vector<int>{2});
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_EQ(synth_config(c).seed, 7u);
  EXPECT_EQ(c.train.directions.size(), 4u);
}

TEST(Config, DefaultsAreValid) {
  const RunConfig c = parse_run_config("");
  EXPECT_EQ(c.grid.image_side, 768);
  EXPECT_EQ(c.encoder.input_side, c.grid.subpatch_side);
  EXPECT_DOUBLE_EQ(c.scoring.top_fraction, 0.05);
  EXPECT_EQ(c.scoring.scope, NegativeScope::per_site);
}

TEST(Config, ResolvedTextRoundTrips) {
  const RunConfig a = parse_run_config(kDesk, {"train.directions=from_left,from_below", "train.beta2=0.995"});
  const std::string text = to_ini(a);
  const RunConfig b = parse_run_config(text);
  EXPECT_EQ(to_ini(b), text);
  EXPECT_EQ(b.train, a.train);
  EXPECT_EQ(b.grid, a.grid);
  EXPECT_DOUBLE_EQ(b.train.beta2, 0.995);
}

TEST(Config, OverridesApplyOnTop) {
  const RunConfig c = parse_run_config(kDesk, {"run.seed=11", "dataset.class=other", "scoring.offsets=1,2"});
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.train.seed, 11u);
  EXPECT_EQ(c.dataset.class_name, "other");
  EXPECT_EQ(c.train.offsets, (std::vector<int>{1, 2}));
}

TEST(Config, RejectsUnknownNames) {
  EXPECT_THROW(parse_run_config("[gird]\nimage_side = 64\n"), ConfigError);
  EXPECT_THROW(parse_run_config(std::string(kDesk) + "\n[extra]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"train.epoch=3"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"encoder.backbone=vgg"}), ConfigError);
}

TEST(Config, RejectsMalformedValues) {
  EXPECT_THROW(parse_run_config(kDesk, {"train.epochs=ten"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"train.epochs=3.5"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"train.learning_rate=fast"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"train.augment=maybe"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"run.seed=-1"}), ConfigError);
  EXPECT_THROW(parse_run_config("[grid\nimage_side = 64\n"), ConfigError);
}

TEST(Config, RejectsBadOverrideSyntax) {
  EXPECT_THROW(parse_run_config(kDesk, {"seed=3"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"run.seed"}), ConfigError);
}

TEST(Config, CrossFieldChecks) {
  EXPECT_THROW(parse_run_config(kDesk, {"encoder.input_side=16"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"scoring.offsets=3"}), GeometryError);
  EXPECT_THROW(parse_run_config(kDesk, {"grid.patch_stride=30"}), GeometryError);
  EXPECT_THROW(parse_run_config(kDesk, {"dataset.n_train=0"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"scoring.top_fraction=0"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"scoring.top_fraction=1.5"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"scoring.bank_size=4"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"dataset.source=imagenet"}), ConfigError);
  EXPECT_THROW(parse_run_config(kDesk, {"train.directions=from_left,from_left"}), ConfigError);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_run_config("/nonexistent/run.ini"), ConfigError);
}

TEST(Config, IntListHelpers) {
  EXPECT_EQ(parse_int_list(" 2, 3 ,4"), (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(join({2, 3, 4}), "2,3,4");
  EXPECT_TRUE(parse_int_list("").empty());
  EXPECT_THROW(parse_int_list("2,x"), ConfigError);
}

TEST(BundleTree, RoundTripsStructuralFields) {
  TrainConfig t = testing::tiny_train();
  t.share_encoder = true;
  t.directions = {Direction::from_above, Direction::from_right};
  const ModelBundle a = testing::tiny_bundle(0, t);
  ModelBundle b;
  read_bundle_tree(read_ini(bundle_config_text(a)), b);
  EXPECT_EQ(b.grid, a.grid);
  EXPECT_EQ(b.encoder_config, a.encoder_config);
  EXPECT_EQ(b.encoder_of, a.encoder_of);
  EXPECT_EQ(b.train_config.offsets, a.train_config.offsets);
  EXPECT_EQ(b.train_config.seed, a.train_config.seed);
  EXPECT_EQ(b.train_config.directions, a.train_config.directions);
  EXPECT_TRUE(b.train_config.share_encoder);
}

TEST(BundleTree, RejectsWrongVersionAndUnknownKeys) {
  const ModelBundle a = testing::tiny_bundle();
  auto tree = bundle_tree(a);
  tree.put("bundle.version", 99);
  ModelBundle b;
  EXPECT_THROW(read_bundle_tree(tree, b), CheckpointVersionError);
  tree = bundle_tree(a);
  tree.put("train.color", "blue");
  EXPECT_THROW(read_bundle_tree(tree, b), CheckpointFormatError);
  tree = bundle_tree(a);
  tree.put("grid.image_side", "wide");
  EXPECT_THROW(read_bundle_tree(tree, b), CheckpointFormatError);
}

}  // namespace
}  // namespace cpcad
