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

#ifndef CPCAD_DATASET_HPP_
#define CPCAD_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cpcad/geometry.hpp"
#include "cpcad/image.hpp"
#include "cpcad/rng.hpp"

namespace cpcad {

enum class Label { normal, anomalous };
// Which half of a split a sample was read from. Training-only code paths
// check this to keep test data out.
enum class Partition { train, test };

std::string to_string(Label label);
Label parse_label(const std::string& name);

struct ImageSample {
  Image pixels;
  Label label = Label::normal;
  std::optional<Mask> gt_mask;
  // Layout-relative id without extension, e.g. "test/crack/003".
  std::string source_id;
  Partition partition = Partition::train;
};

struct DatasetSplit {
  std::vector<ImageSample> train;
  std::vector<ImageSample> test;
  std::string class_name;
};

// Throws ConfigError when a split invariant is broken: abnormal or masked
// training samples, anomalous test samples without masks, masks of the
// wrong size, or intensities outside [0, 1].
void validate(const DatasetSplit& split);

// Reads <root>/<class>/{train/good, test/<type>, ground_truth/<type>}.
DatasetSplit load_mvtec_class(const std::filesystem::path& root, const std::string& class_name,
                              int image_side, Interpolation interp = Interpolation::bilinear);

// Writes `split` as an MVTec-style tree under <root>/<class_name>. Anomalous
// test samples go to test/defect unless their source id names another type.
void write_mvtec_layout(const DatasetSplit& split, const std::filesystem::path& root);

enum class TextureKind { sine_grating, checker, value_noise };
enum class DefectKind { rectangle_blot, intensity_shift, texture_swap };

std::string to_string(TextureKind kind);
std::string to_string(DefectKind kind);
TextureKind parse_texture_kind(const std::string& name);
DefectKind parse_defect_kind(const std::string& name);

struct SynthDefectConfig {
  TextureKind texture = TextureKind::sine_grating;
  DefectKind defect = DefectKind::rectangle_blot;
  // Defect rectangle sides as fractions of the image side.
  double defect_size_min = 0.1;
  double defect_size_max = 0.2;
  int n_train = 40;
  int n_test_normal = 20;
  int n_test_anomalous = 20;
  std::uint64_t seed = 0;
};

// Throws ConfigError for sizes outside (0, 0.5], a defect that rounds to
// zero pixels, or bad counts.
void validate(const SynthDefectConfig& config, int image_side);

// One rendered texture before and after the defect painter ran.
struct SynthDefect {
  Image clean;
  Image defective;
  Mask mask;
  PixelRect rect;
};

Image render_texture(TextureKind kind, int side, Rng& rng);
SynthDefect render_defect(const SynthDefectConfig& config, int side, Rng& rng);

// Deterministic in (config, image_side).
DatasetSplit generate_synthetic(const SynthDefectConfig& config, int image_side);

// A square crop of crop_side at (offset_y, offset_x), resized back to the
// original side, then optionally mirrored left-right.
struct AugmentParams {
  int crop_side = 0;
  int offset_y = 0;
  int offset_x = 0;
  bool flip = false;
};

// Crop scale uniform in [0.8, 1], position uniform, flip with p = 0.5.
AugmentParams draw_augment_params(int side, Rng& rng);
ImageSample augment_train(const ImageSample& image, const AugmentParams& params);
ImageSample augment_train(const ImageSample& image, Rng& rng);

}  // namespace cpcad

#endif  // CPCAD_DATASET_HPP_
