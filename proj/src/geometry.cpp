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

#include "cpcad/geometry.hpp"

#include <algorithm>
#include <string>

#include "cpcad/error.hpp"

namespace cpcad {
namespace {

int tiles(int outer, int inner, int stride, const char* what) {
  if (inner <= 0 || stride <= 0 || outer <= 0) {
    throw GeometryError(std::string(what) + ": sides and strides must be positive");
  }
  if (inner > outer) {
    throw GeometryError(std::string(what) + ": tile side " + std::to_string(inner) +
                        " exceeds container side " + std::to_string(outer));
  }
  if ((outer - inner) % stride != 0) {
    throw GeometryError(std::string(what) + ": (" + std::to_string(outer) + " - " +
                        std::to_string(inner) + ") not divisible by stride " +
                        std::to_string(stride));
  }
  return (outer - inner) / stride + 1;
}

}  // namespace

GridLayout plan_grid(const GridSpec& spec) {
  GridLayout layout;
  layout.spec = spec;
  layout.patches_per_axis = tiles(spec.image_side, spec.patch_side, spec.patch_stride, "patch");
  layout.subpatches_per_patch_axis =
      tiles(spec.patch_side, spec.subpatch_side, spec.subpatch_stride, "sub-patch");
  if (spec.patch_stride % spec.subpatch_stride != 0) {
    throw GeometryError("patch stride " + std::to_string(spec.patch_stride) +
                        " is not a multiple of sub-patch stride " +
                        std::to_string(spec.subpatch_stride));
  }
  layout.distinct_positions_per_axis =
      tiles(spec.image_side, spec.subpatch_side, spec.subpatch_stride, "lattice");
  return layout;
}

void SubpatchBlocks::append(const Image& image) {
  const GridSpec& s = layout_.spec;
  if (image.rows() != s.image_side || image.cols() != s.image_side) {
    throw GeometryError("image is " + std::to_string(image.rows()) + "x" +
                        std::to_string(image.cols()) + ", grid expects side " +
                        std::to_string(s.image_side));
  }
  const int n = layout_.subpatches_per_patch_axis;
  const int side = s.subpatch_side;
  const std::size_t base = pixels_.size();
  pixels_.resize(base + static_cast<std::size_t>(layout_.blocks_per_image()) * block_size());
  float* out = pixels_.data() + base;
  for (int pr = 0; pr < layout_.patches_per_axis; ++pr) {
    for (int pc = 0; pc < layout_.patches_per_axis; ++pc) {
      for (int sr = 0; sr < n; ++sr) {
        for (int sc = 0; sc < n; ++sc) {
          const int top = pr * s.patch_stride + sr * s.subpatch_stride;
          const int left = pc * s.patch_stride + sc * s.subpatch_stride;
          for (int y = 0; y < side; ++y) {
            const float* src = image.data() + static_cast<std::ptrdiff_t>(top + y) * image.cols() + left;
            out = std::copy(src, src + side, out);
          }
        }
      }
    }
  }
}

SubpatchBlocks extract_subpatches(const Image& image, const GridLayout& layout) {
  SubpatchBlocks blocks(layout);
  blocks.append(image);
  return blocks;
}

LatticePos global_position(PatchIndex patch, LocalIndex local, const GridLayout& layout) {
  const int p = layout.patches_per_axis;
  const int s = layout.subpatches_per_patch_axis;
  if (patch.row < 0 || patch.row >= p || patch.col < 0 || patch.col >= p ||
      local.row < 0 || local.row >= s || local.col < 0 || local.col >= s) {
    throw GeometryError("patch/local index out of range");
  }
  const int r = layout.stride_ratio();
  return {patch.row * r + local.row, patch.col * r + local.col};
}

PixelRect pixel_footprint(LatticePos pos, const GridLayout& layout) {
  const GridSpec& s = layout.spec;
  return {pos.row * s.subpatch_stride, pos.col * s.subpatch_stride, s.subpatch_side,
          s.subpatch_side};
}

Eigen::ArrayXXi coverage_counts(const GridLayout& layout) {
  const int side = layout.spec.image_side;
  Eigen::ArrayXXi counts = Eigen::ArrayXXi::Zero(side, side);
  const int d = layout.distinct_positions_per_axis;
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      const PixelRect rect = pixel_footprint({r, c}, layout);
      counts.block(rect.top, rect.left, rect.height, rect.width) += 1;
    }
  }
  return counts;
}

}  // namespace cpcad
