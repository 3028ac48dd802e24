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

#include <fstream>

#include <gtest/gtest.h>

#include "cpcad/dataset.hpp"
#include "cpcad/error.hpp"
#include "temp_dir.hpp"

namespace cpcad {
namespace {

using cpcad::testing::TempDir;

SynthDefectConfig small_config() {
  SynthDefectConfig c;
  c.n_train = 4;
  c.n_test_normal = 3;
  c.n_test_anomalous = 3;
  c.seed = 11;
  return c;
}

TEST(Synthetic, CountsLabelsAndIds) {
  const DatasetSplit s = generate_synthetic(small_config(), 64);
  ASSERT_EQ(s.train.size(), 4u);
  ASSERT_EQ(s.test.size(), 6u);
  EXPECT_EQ(s.class_name, "synthetic-sine-grating");
  EXPECT_EQ(s.train[0].source_id, "train/good/000");
  for (const auto& x : s.train) {
    EXPECT_EQ(x.partition, Partition::train);
    EXPECT_EQ(x.label, Label::normal);
    EXPECT_FALSE(x.gt_mask);
  }
  int anomalous = 0;
  for (const auto& x : s.test) {
    EXPECT_EQ(x.partition, Partition::test);
    EXPECT_EQ(x.pixels.rows(), 64);
    if (x.label == Label::anomalous) {
      ++anomalous;
      ASSERT_TRUE(x.gt_mask);
      EXPECT_GT((x.gt_mask->cast<int>()).sum(), 0);
      EXPECT_TRUE(x.source_id.starts_with("test/defect/"));
    } else {
      EXPECT_TRUE(x.source_id.starts_with("test/good/"));
    }
  }
  EXPECT_EQ(anomalous, 3);
  EXPECT_NO_THROW(validate(s));
}

TEST(Synthetic, Deterministic) {
  const DatasetSplit a = generate_synthetic(small_config(), 64);
  const DatasetSplit b = generate_synthetic(small_config(), 64);
  SynthDefectConfig other = small_config();
  other.seed = 12;
  const DatasetSplit c = generate_synthetic(other, 64);
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_TRUE((a.test[i].pixels == b.test[i].pixels).all());
  EXPECT_FALSE((a.train[0].pixels == c.train[0].pixels).all());
}

TEST(Synthetic, MaskMarksExactlyTheChangedPixels) {
  Rng rng(3);
  for (TextureKind t : {TextureKind::sine_grating, TextureKind::checker, TextureKind::value_noise}) {
    for (DefectKind d : {DefectKind::rectangle_blot, DefectKind::intensity_shift, DefectKind::texture_swap}) {
      SynthDefectConfig c;
      c.texture = t;
      c.defect = d;
      for (int i = 0; i < 5; ++i) {
        const SynthDefect s = render_defect(c, 96, rng);
        const auto changed = (s.defective != s.clean);
        EXPECT_TRUE((changed == (s.mask > 0)).all()) << to_string(t) << "/" << to_string(d);
        EXPECT_EQ(s.mask.cast<int>().sum(), s.rect.height * s.rect.width);
        EXPECT_GE(s.rect.height, 9);
        EXPECT_LE(s.rect.height, 20);
        EXPECT_GE(s.rect.top, 0);
        EXPECT_LE(s.rect.top + s.rect.height, 96);
        EXPECT_GE(s.defective.minCoeff(), 0.0f);
        EXPECT_LE(s.defective.maxCoeff(), 1.0f);
      }
    }
  }
}

TEST(Synthetic, ConfigValidation) {
  SynthDefectConfig c;
  EXPECT_NO_THROW(validate(c, 128));
  c.n_train = 0;
  EXPECT_THROW(validate(c, 128), ConfigError);
  c = SynthDefectConfig{};
  c.defect_size_max = 0.6;
  EXPECT_THROW(validate(c, 128), ConfigError);
  c = SynthDefectConfig{};
  c.defect_size_min = 0.3;
  c.defect_size_max = 0.2;
  EXPECT_THROW(validate(c, 128), ConfigError);
  c = SynthDefectConfig{};
  c.defect_size_min = c.defect_size_max = 0.001;
  EXPECT_THROW(validate(c, 128), ConfigError);
  EXPECT_EQ(parse_texture_kind("checker"), TextureKind::checker);
  EXPECT_EQ(parse_defect_kind(to_string(DefectKind::texture_swap)), DefectKind::texture_swap);
  EXPECT_THROW(parse_defect_kind("scratch"), ConfigError);
}

TEST(SplitValidation, RejectsBrokenInvariants) {
  DatasetSplit s = generate_synthetic(small_config(), 64);
  DatasetSplit bad = s;
  bad.train[0].label = Label::anomalous;
  EXPECT_THROW(validate(bad), ConfigError);
  bad = s;
  bad.test.back().gt_mask.reset();
  EXPECT_THROW(validate(bad), ConfigError);
  bad = s;
  bad.test[0].pixels(0, 0) = 1.5f;
  EXPECT_THROW(validate(bad), ConfigError);
  bad = s;
  bad.test.back().gt_mask = Mask::Zero(32, 32);
  EXPECT_THROW(validate(bad), ConfigError);
}

TEST(MvtecLayout, RoundTrip) {
  TempDir dir;
  const DatasetSplit s = generate_synthetic(small_config(), 64);
  write_mvtec_layout(s, dir.path());
  const auto cls = dir.path() / s.class_name;
  EXPECT_TRUE(std::filesystem::is_directory(cls / "train" / "good"));
  EXPECT_TRUE(std::filesystem::exists(cls / "ground_truth" / "defect" / "000_mask.png"));
  const DatasetSplit back = load_mvtec_class(dir.path(), s.class_name, 64);
  ASSERT_EQ(back.train.size(), s.train.size());
  ASSERT_EQ(back.test.size(), s.test.size());
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    const ImageSample& a = s.test[i];
    const auto it = std::find_if(back.test.begin(), back.test.end(),
                                 [&](const ImageSample& b) { return b.source_id == a.source_id; });
    ASSERT_NE(it, back.test.end()) << a.source_id;
    EXPECT_EQ(it->label, a.label);
    EXPECT_LE((it->pixels - a.pixels).abs().maxCoeff(), 0.5f / 255 + 1e-6f);
    ASSERT_EQ(it->gt_mask.has_value(), a.gt_mask.has_value());
    if (a.gt_mask) EXPECT_TRUE((*it->gt_mask == *a.gt_mask).all());
  }
}

TEST(MvtecLayout, ResizesOnLoad) {
  TempDir dir;
  const DatasetSplit s = generate_synthetic(small_config(), 64);
  write_mvtec_layout(s, dir.path());
  const DatasetSplit back = load_mvtec_class(dir.path(), s.class_name, 32, Interpolation::area);
  EXPECT_EQ(back.train[0].pixels.rows(), 32);
  for (const auto& x : back.test) {
    if (x.gt_mask) EXPECT_EQ(x.gt_mask->rows(), 32);
  }
}

TEST(MvtecLayout, Errors) {
  TempDir dir;
  EXPECT_THROW(load_mvtec_class(dir.path(), "bottle", 64), DatasetLayoutError);
  const DatasetSplit s = generate_synthetic(small_config(), 64);
  write_mvtec_layout(s, dir.path());
  std::filesystem::remove(dir.path() / s.class_name / "ground_truth" / "defect" / "001_mask.png");
  EXPECT_THROW(load_mvtec_class(dir.path(), s.class_name, 64), MissingMaskError);
  std::filesystem::remove_all(dir.path() / s.class_name / "train");
  EXPECT_THROW(load_mvtec_class(dir.path(), s.class_name, 64), DatasetLayoutError);
}

TEST(Image, CorruptFileThrows) {
  TempDir dir;
  std::ofstream(dir / "bad.png") << "not a png";
  EXPECT_THROW(read_grayscale(dir / "bad.png"), ImageDecodeError);
}

TEST(Image, Png16RoundTrip) {
  TempDir dir;
  Heatmap h(2, 3);
  h << 0.0, 0.5, 1.0, 2.0, -1.0, 0.25;
  write_png16(dir / "h.png", h, 0.0, 1.0);
  const Image back = read_grayscale(dir / "h.png");
  EXPECT_NEAR(back(0, 1), 0.5f, 1e-4f);
  EXPECT_EQ(back(1, 0), 1.0f);  // clamped
  EXPECT_EQ(back(1, 1), 0.0f);
}

TEST(Image, ResizeIdentityAndInterpolationNames) {
  Image img = Image::Random(16, 16).abs();
  EXPECT_TRUE((resize_square(img, 16) == img).all());
  for (Interpolation i : {Interpolation::bilinear, Interpolation::nearest, Interpolation::area}) {
    EXPECT_EQ(parse_interpolation(to_string(i)), i);
  }
  EXPECT_THROW(parse_interpolation("cubic"), ConfigError);
}

TEST(Augment, IdentityAndFlip) {
  const DatasetSplit s = generate_synthetic(small_config(), 64);
  const ImageSample& x = s.train[0];
  EXPECT_TRUE((augment_train(x, AugmentParams{64, 0, 0, false}).pixels == x.pixels).all());
  const Image flipped = augment_train(x, AugmentParams{64, 0, 0, true}).pixels;
  EXPECT_TRUE((flipped == x.pixels.rowwise().reverse()).all());
}

TEST(Augment, ParamsInRangeAndPreserveMetadata) {
  Rng rng(4);
  int flips = 0;
  for (int i = 0; i < 400; ++i) {
    const AugmentParams p = draw_augment_params(100, rng);
    EXPECT_GE(p.crop_side, 80);
    EXPECT_LE(p.crop_side, 100);
    EXPECT_GE(p.offset_y, 0);
    EXPECT_LE(p.offset_y + p.crop_side, 100);
    EXPECT_LE(p.offset_x + p.crop_side, 100);
    flips += p.flip;
  }
  EXPECT_GT(flips, 150);
  EXPECT_LT(flips, 250);
  const DatasetSplit s = generate_synthetic(small_config(), 64);
  const ImageSample a = augment_train(s.train[1], rng);
  EXPECT_EQ(a.source_id, s.train[1].source_id);
  EXPECT_EQ(a.pixels.rows(), 64);
}

}  // namespace
}  // namespace cpcad
