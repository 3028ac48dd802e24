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

#ifndef CPCAD_IMAGE_HPP_
#define CPCAD_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

namespace cpcad {

// Grayscale intensities in [0, 1], indexed (row, col).
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Binary {0, 1} ground-truth mask.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Real-valued per-pixel anomaly scores.
using Heatmap = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Interpolation { bilinear, nearest, area };

Interpolation parse_interpolation(const std::string& name);
std::string to_string(Interpolation interp);

// Decodes any 8/16-bit PNG (gray, BGR or BGRA) to luma in [0, 1] with
// weights (0.299, 0.587, 0.114). Throws ImageDecodeError.
Image read_grayscale(const std::filesystem::path& path);

// Decodes a mask image; any pixel > 0.5 of full scale is positive.
Mask read_mask(const std::filesystem::path& path);

Image resize_square(const Image& image, int side,
                    Interpolation interp = Interpolation::bilinear);

// Nearest-neighbour resize followed by re-binarization.
Mask resize_mask(const Mask& mask, int side);

// 8-bit grayscale PNG (values clamped to [0, 1]). Throws IOError.
void write_png8(const std::filesystem::path& path, const Image& image);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
// 16-bit grayscale PNG of `values` mapped linearly from [lo, hi] to [0, 65535].
void write_png16(const std::filesystem::path& path, const Heatmap& values,
                 double lo, double hi);

}  // namespace cpcad

#endif  // CPCAD_IMAGE_HPP_
