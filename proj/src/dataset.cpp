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

#include "cpcad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "cpcad/error.hpp"

namespace cpcad {
namespace fs = std::filesystem;

namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> list_subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string numbered(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

// Splits "test/<type>/<stem>" into (type, stem); empty type if malformed.
std::pair<std::string, std::string> split_test_id(const std::string& id) {
  const fs::path p(id);
  std::vector<std::string> parts;
  for (const auto& part : p) parts.push_back(part.string());
  if (parts.size() == 3 && parts[0] == "test") return {parts[1], parts[2]};
  return {"", ""};
}

float noise(Rng& rng, double amplitude) {
  return static_cast<float>(uniform(rng, -amplitude, amplitude));
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

std::string to_string(Label label) { return label == Label::normal ? "normal" : "anomalous"; }

Label parse_label(const std::string& name) {
  if (name == "normal" || name == "0") return Label::normal;
  if (name == "anomalous" || name == "1") return Label::anomalous;
  throw ConfigError("unknown label '" + name + "'");
}

void validate(const DatasetSplit& split) {
  auto check_pixels = [](const ImageSample& s) {
    if (s.pixels.size() == 0) throw ConfigError(s.source_id + ": empty image");
    if (s.pixels.minCoeff() < 0.0f || s.pixels.maxCoeff() > 1.0f) {
      throw ConfigError(s.source_id + ": intensities outside [0, 1]");
    }
    if (s.gt_mask && (s.gt_mask->rows() != s.pixels.rows() || s.gt_mask->cols() != s.pixels.cols())) {
      throw ConfigError(s.source_id + ": mask size differs from image size");
    }
  };
  for (const ImageSample& s : split.train) {
    check_pixels(s);
    if (s.label != Label::normal || s.gt_mask) {
      throw ConfigError(s.source_id + ": training samples must be normal and unmasked");
    }
  }
  for (const ImageSample& s : split.test) {
    check_pixels(s);
    if (s.label == Label::anomalous && !s.gt_mask) {
      throw ConfigError(s.source_id + ": anomalous test sample without mask");
    }
  }
}

DatasetSplit load_mvtec_class(const fs::path& root, const std::string& class_name, int image_side,
                              Interpolation interp) {
  const fs::path class_dir = root / class_name;
  const fs::path train_dir = class_dir / "train" / "good";
  const fs::path test_dir = class_dir / "test";
  const fs::path gt_dir = class_dir / "ground_truth";
  if (!fs::is_directory(class_dir)) throw DatasetLayoutError("missing class directory " + class_dir.string());
  if (!fs::is_directory(train_dir)) throw DatasetLayoutError("missing " + train_dir.string());
  if (!fs::is_directory(test_dir)) throw DatasetLayoutError("missing " + test_dir.string());

  DatasetSplit split;
  split.class_name = class_name;
  for (const fs::path& file : list_pngs(train_dir)) {
    ImageSample s;
    s.pixels = resize_square(read_grayscale(file), image_side, interp);
    s.source_id = "train/good/" + file.stem().string();
    s.partition = Partition::train;
    split.train.push_back(std::move(s));
  }
  for (const std::string& type : list_subdirs(test_dir)) {
    for (const fs::path& file : list_pngs(test_dir / type)) {
      ImageSample s;
      s.pixels = resize_square(read_grayscale(file), image_side, interp);
      s.source_id = "test/" + type + "/" + file.stem().string();
      s.partition = Partition::test;
      s.label = type == "good" ? Label::normal : Label::anomalous;
      if (s.label == Label::anomalous) {
        const fs::path mask = gt_dir / type / (file.stem().string() + "_mask.png");
        if (!fs::is_regular_file(mask)) throw MissingMaskError("no mask " + mask.string());
        s.gt_mask = resize_mask(read_mask(mask), image_side);
      }
      split.test.push_back(std::move(s));
    }
  }
  return split;
}

void write_mvtec_layout(const DatasetSplit& split, const fs::path& root) {
  const fs::path class_dir = root / split.class_name;
  std::error_code ec;
  fs::create_directories(class_dir / "train" / "good", ec);
  if (ec) throw IOError("cannot create " + (class_dir / "train" / "good").string() + ": " + ec.message());
  int counter = 0;
  for (const ImageSample& s : split.train) {
    std::string stem = fs::path(s.source_id).filename().string();
    if (stem.empty()) stem = numbered(counter);
    ++counter;
    write_png8(class_dir / "train" / "good" / (stem + ".png"), s.pixels);
  }
  int normal = 0, anomalous = 0;
  for (const ImageSample& s : split.test) {
    auto [type, stem] = split_test_id(s.source_id);
    if (type.empty()) {
      type = s.label == Label::normal ? "good" : "defect";
      stem = numbered(s.label == Label::normal ? normal : anomalous);
    }
    (s.label == Label::normal ? normal : anomalous)++;
    write_png8(class_dir / "test" / type / (stem + ".png"), s.pixels);
    if (s.label == Label::anomalous && s.gt_mask) {
      write_mask_png(class_dir / "ground_truth" / type / (stem + "_mask.png"), *s.gt_mask);
    }
  }
  if (!fs::is_directory(class_dir / "test")) fs::create_directories(class_dir / "test", ec);
}

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::sine_grating: return "sine-grating";
    case TextureKind::checker: return "checker";
    case TextureKind::value_noise: return "value-noise";
  }
  return "sine-grating";
}

std::string to_string(DefectKind kind) {
  switch (kind) {
    case DefectKind::rectangle_blot: return "rectangle-blot";
    case DefectKind::intensity_shift: return "intensity-shift";
    case DefectKind::texture_swap: return "texture-swap";
  }
  return "rectangle-blot";
}

TextureKind parse_texture_kind(const std::string& name) {
  if (name == "sine-grating") return TextureKind::sine_grating;
  if (name == "checker") return TextureKind::checker;
  if (name == "value-noise") return TextureKind::value_noise;
  throw ConfigError("unknown texture kind '" + name + "'");
}

DefectKind parse_defect_kind(const std::string& name) {
  if (name == "rectangle-blot") return DefectKind::rectangle_blot;
  if (name == "intensity-shift") return DefectKind::intensity_shift;
  if (name == "texture-swap") return DefectKind::texture_swap;
  throw ConfigError("unknown defect kind '" + name + "'");
}

void validate(const SynthDefectConfig& config, int image_side) {
  if (!(config.defect_size_min > 0.0) || config.defect_size_max > 0.5 ||
      config.defect_size_min > config.defect_size_max) {
    throw ConfigError("defect size range must satisfy 0 < min <= max <= 0.5");
  }
  if (std::lround(config.defect_size_min * image_side) < 1) {
    throw ConfigError("defect of " + std::to_string(config.defect_size_min) +
                      " x side rounds to zero pixels");
  }
  if (config.n_train < 1) throw ConfigError("n_train must be positive");
  if (config.n_test_normal < 0 || config.n_test_anomalous < 0) {
    throw ConfigError("test counts must be non-negative");
  }
}

// Textures stay inside [0.19, 0.81] so every defect painter below is
// guaranteed to change each pixel it touches.
Image render_texture(TextureKind kind, int side, Rng& rng) {
  Image img(side, side);
  switch (kind) {
    case TextureKind::sine_grating: {
      const double period = side * uniform(rng, 0.11, 0.14);
      const double theta = uniform(rng, -0.25, 0.25);
      const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double cx = std::cos(theta) / period, cy = std::sin(theta) / period;
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const double t = 2.0 * std::numbers::pi * (x * cx + y * cy) + phase;
          img(y, x) = static_cast<float>(0.5 + 0.25 * std::sin(t)) + noise(rng, 0.03);
        }
      }
      break;
    }
    case TextureKind::checker: {
      const double cell = side * uniform(rng, 0.09, 0.12);
      const double oy = uniform(rng, 0.0, 2.0 * cell), ox = uniform(rng, 0.0, 2.0 * cell);
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const auto parity = static_cast<long>(std::floor((y + oy) / cell) + std::floor((x + ox) / cell));
          img(y, x) = (parity % 2 == 0 ? 0.35f : 0.65f) + noise(rng, 0.03);
        }
      }
      break;
    }
    case TextureKind::value_noise: {
      const int cells = 8;
      const double pitch = static_cast<double>(side) / cells;
      Eigen::ArrayXXd lattice(cells + 1, cells + 1);
      for (int i = 0; i <= cells; ++i) {
        for (int j = 0; j <= cells; ++j) lattice(i, j) = uniform(rng, 0.25, 0.75);
      }
      for (int y = 0; y < side; ++y) {
        const double fy = y / pitch;
        const int iy = std::min(static_cast<int>(fy), cells - 1);
        const double ty = smoothstep(fy - iy);
        for (int x = 0; x < side; ++x) {
          const double fx = x / pitch;
          const int ix = std::min(static_cast<int>(fx), cells - 1);
          const double tx = smoothstep(fx - ix);
          const double top = lattice(iy, ix) * (1 - tx) + lattice(iy, ix + 1) * tx;
          const double bottom = lattice(iy + 1, ix) * (1 - tx) + lattice(iy + 1, ix + 1) * tx;
          img(y, x) = static_cast<float>(top * (1 - ty) + bottom * ty) + noise(rng, 0.02);
        }
      }
      break;
    }
  }
  return img;
}

SynthDefect render_defect(const SynthDefectConfig& config, int side, Rng& rng) {
  SynthDefect out;
  out.clean = render_texture(config.texture, side, rng);
  out.defective = out.clean;
  const int h = static_cast<int>(std::lround(uniform(rng, config.defect_size_min, config.defect_size_max) * side));
  const int w = static_cast<int>(std::lround(uniform(rng, config.defect_size_min, config.defect_size_max) * side));
  if (h < 1 || w < 1 || h > side || w > side) throw ConfigError("defect does not fit the image");
  out.rect = {static_cast<int>(uniform_index(rng, static_cast<std::size_t>(side - h + 1))),
              static_cast<int>(uniform_index(rng, static_cast<std::size_t>(side - w + 1))), h, w};
  auto region = out.defective.block(out.rect.top, out.rect.left, h, w);
  switch (config.defect) {
    case DefectKind::rectangle_blot: {
      const bool dark = bernoulli(rng, 0.5);
      region.setConstant(static_cast<float>(dark ? uniform(rng, 0.0, 0.1) : uniform(rng, 0.9, 1.0)));
      break;
    }
    case DefectKind::intensity_shift: {
      const double delta = uniform(rng, 0.15, 0.25) * (bernoulli(rng, 0.5) ? 1.0 : -1.0);
      region = (region + static_cast<float>(delta)).cwiseMax(0.0f).cwiseMin(1.0f);
      break;
    }
    case DefectKind::texture_swap: {
      const auto other = static_cast<TextureKind>((static_cast<int>(config.texture) + 1) % 3);
      const Image swap = render_texture(other, side, rng);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const float before = region(y, x);
          float after = swap(out.rect.top + y, out.rect.left + x);
          // Minimum contrast so the painted set equals the mask.
          if (std::abs(after - before) < 0.05f) after = before < 0.5f ? before + 0.25f : before - 0.25f;
          region(y, x) = after;
        }
      }
      break;
    }
  }
  out.mask = Mask::Zero(side, side);
  out.mask.block(out.rect.top, out.rect.left, h, w).setOnes();
  return out;
}

DatasetSplit generate_synthetic(const SynthDefectConfig& config, int image_side) {
  validate(config, image_side);
  DatasetSplit split;
  split.class_name = "synthetic-" + to_string(config.texture);
  enum : std::uint64_t { kTrain = 1, kTestNormal = 2, kTestAnomalous = 3 };
  for (int i = 0; i < config.n_train; ++i) {
    Rng rng(derive_seed(config.seed, kTrain, static_cast<std::uint64_t>(i)));
    ImageSample s;
    s.pixels = render_texture(config.texture, image_side, rng);
    s.source_id = "train/good/" + numbered(i);
    s.partition = Partition::train;
    split.train.push_back(std::move(s));
  }
  for (int i = 0; i < config.n_test_normal; ++i) {
    Rng rng(derive_seed(config.seed, kTestNormal, static_cast<std::uint64_t>(i)));
    ImageSample s;
    s.pixels = render_texture(config.texture, image_side, rng);
    s.source_id = "test/good/" + numbered(i);
    s.partition = Partition::test;
    split.test.push_back(std::move(s));
  }
  for (int i = 0; i < config.n_test_anomalous; ++i) {
    Rng rng(derive_seed(config.seed, kTestAnomalous, static_cast<std::uint64_t>(i)));
    SynthDefect d = render_defect(config, image_side, rng);
    ImageSample s;
    s.pixels = std::move(d.defective);
    s.gt_mask = std::move(d.mask);
    s.label = Label::anomalous;
    s.source_id = "test/defect/" + numbered(i);
    s.partition = Partition::test;
    split.test.push_back(std::move(s));
  }
  return split;
}

AugmentParams draw_augment_params(int side, Rng& rng) {
  AugmentParams p;
  const double scale = uniform(rng, 0.8, 1.0);
  p.crop_side = std::clamp(static_cast<int>(std::lround(scale * side)), 1, side);
  const auto slack = static_cast<std::size_t>(side - p.crop_side + 1);
  p.offset_y = static_cast<int>(uniform_index(rng, slack));
  p.offset_x = static_cast<int>(uniform_index(rng, slack));
  p.flip = bernoulli(rng, 0.5);
  return p;
}

ImageSample augment_train(const ImageSample& image, const AugmentParams& params) {
  const int side = static_cast<int>(image.pixels.rows());
  ImageSample out;
  out.label = image.label;
  out.source_id = image.source_id;
  out.partition = image.partition;
  const Image crop = image.pixels.block(params.offset_y, params.offset_x, params.crop_side, params.crop_side);
  out.pixels = resize_square(crop, side, Interpolation::bilinear);
  if (params.flip) out.pixels = out.pixels.rowwise().reverse().eval();
  return out;
}

ImageSample augment_train(const ImageSample& image, Rng& rng) {
  return augment_train(image, draw_augment_params(static_cast<int>(image.pixels.rows()), rng));
}

}  // namespace cpcad
