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

#ifndef CPCAD_GEOMETRY_HPP_
#define CPCAD_GEOMETRY_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "cpcad/image.hpp"

namespace cpcad {

// Square tiling of an image into overlapping patches, each tiled again into
// overlapping sub-patches. Defaults follow the 768 / 256 / 64 setup with 50%
// overlap at both levels.
struct GridSpec {
  int image_side = 768;
  int patch_side = 256;
  int patch_stride = 128;
  int subpatch_side = 64;
  int subpatch_stride = 32;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct GridLayout {
  GridSpec spec;
  int patches_per_axis = 0;
  int subpatches_per_patch_axis = 0;
  // Side of the global sub-patch lattice (pitch subpatch_stride).
  int distinct_positions_per_axis = 0;

  // Lattice steps between neighbouring patches.
  int stride_ratio() const { return spec.patch_stride / spec.subpatch_stride; }
  int patches() const { return patches_per_axis * patches_per_axis; }
  int subpatches_per_patch() const {
    return subpatches_per_patch_axis * subpatches_per_patch_axis;
  }
  int blocks_per_image() const { return patches() * subpatches_per_patch(); }
  int block_pixels() const { return spec.subpatch_side * spec.subpatch_side; }

  // Flat block index, ordered (patch_row, patch_col, sub_row, sub_col).
  int block_index(int pr, int pc, int sr, int sc) const {
    return ((pr * patches_per_axis + pc) * subpatches_per_patch_axis + sr) *
               subpatches_per_patch_axis + sc;
  }
};

struct PatchIndex {
  int row = 0;
  int col = 0;
};

struct LocalIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const LocalIndex&, const LocalIndex&) = default;
};

struct LatticePos {
  int row = 0;
  int col = 0;
  friend bool operator==(const LatticePos&, const LatticePos&) = default;
};

struct PixelRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Throws GeometryError unless every level tiles exactly.
GridLayout plan_grid(const GridSpec& spec);

// All sub-patch blocks of one or more images, stored contiguously as
// [image][patch_row][patch_col][sub_row][sub_col][y][x].
class SubpatchBlocks {
 public:
  explicit SubpatchBlocks(const GridLayout& layout) : layout_(layout) {}

  const GridLayout& layout() const { return layout_; }
  std::size_t count() const { return pixels_.size() / block_size(); }
  std::size_t images() const { return count() / layout_.blocks_per_image(); }
  std::size_t block_size() const { return static_cast<std::size_t>(layout_.block_pixels()); }

  std::span<const float> pixels() const { return pixels_; }
  std::span<const float> block(std::size_t flat) const {
    return std::span<const float>(pixels_).subspan(flat * block_size(), block_size());
  }
  std::span<const float> block(int pr, int pc, int sr, int sc, std::size_t image = 0) const {
    return block(image * layout_.blocks_per_image() + layout_.block_index(pr, pc, sr, sc));
  }

  // Appends the blocks of `image`. Throws GeometryError on a size mismatch.
  void append(const Image& image);

 private:
  GridLayout layout_;
  std::vector<float> pixels_;
};

SubpatchBlocks extract_subpatches(const Image& image, const GridLayout& layout);

// Lattice position of local sub-patch `local` inside patch `patch`.
LatticePos global_position(PatchIndex patch, LocalIndex local, const GridLayout& layout);

// Pixel rectangle covered by the sub-patch at a lattice position.
PixelRect pixel_footprint(LatticePos pos, const GridLayout& layout);

// Number of lattice footprints covering each pixel.
Eigen::ArrayXXi coverage_counts(const GridLayout& layout);

}  // namespace cpcad

#endif  // CPCAD_GEOMETRY_HPP_
