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

#include <set>
#include <utility>

#include <gtest/gtest.h>

#include "cpcad/error.hpp"
#include "cpcad/geometry.hpp"
#include "cpcad/rng.hpp"

namespace cpcad {
namespace {

TEST(PlanGrid, DefaultCounts) {
  const GridLayout g = plan_grid(GridSpec{});
  EXPECT_EQ(g.patches_per_axis, 5);
  EXPECT_EQ(g.subpatches_per_patch_axis, 7);
  EXPECT_EQ(g.distinct_positions_per_axis, 23);
  EXPECT_EQ(g.stride_ratio(), 4);
  EXPECT_EQ(g.blocks_per_image(), 25 * 49);
}

TEST(PlanGrid, DeskCounts) {
  const GridLayout g = plan_grid({128, 64, 32, 32, 16});
  EXPECT_EQ(g.patches_per_axis, 3);
  EXPECT_EQ(g.subpatches_per_patch_axis, 3);
  EXPECT_EQ(g.distinct_positions_per_axis, 7);
}

TEST(PlanGrid, RejectsBadGeometry) {
  EXPECT_THROW(plan_grid({770, 256, 128, 64, 32}), GeometryError);  // 514 % 128
  EXPECT_THROW(plan_grid({768, 256, 128, 64, 48}), GeometryError);  // 192 % 48
  EXPECT_THROW(plan_grid({768, 256, 96, 64, 64}), GeometryError);   // 512 % 96
  EXPECT_THROW(plan_grid({768, 256, 128, 64, 0}), GeometryError);
  EXPECT_THROW(plan_grid({128, 256, 128, 64, 32}), GeometryError);
  // Tiles at every level but patch stride is not a multiple of sub-stride.
  EXPECT_THROW(plan_grid({96, 48, 24, 16, 16}), GeometryError);
}

TEST(GlobalPosition, SurjectiveOntoLattice) {
  const GridLayout g = plan_grid(GridSpec{});
  std::set<std::pair<int, int>> hit;
  for (int pr = 0; pr < 5; ++pr)
    for (int pc = 0; pc < 5; ++pc)
      for (int sr = 0; sr < 7; ++sr)
        for (int sc = 0; sc < 7; ++sc) {
          const LatticePos p = global_position({pr, pc}, {sr, sc}, g);
          ASSERT_TRUE(p.row >= 0 && p.row < 23 && p.col >= 0 && p.col < 23);
          hit.insert({p.row, p.col});
        }
  EXPECT_EQ(hit.size(), 23u * 23u);
}

TEST(GlobalPosition, OutOfRangeThrows) {
  const GridLayout g = plan_grid(GridSpec{});
  EXPECT_THROW(global_position({5, 0}, {0, 0}, g), GeometryError);
  EXPECT_THROW(global_position({0, 0}, {0, 7}, g), GeometryError);
  EXPECT_THROW(global_position({-1, 0}, {0, 0}, g), GeometryError);
}

TEST(Footprint, MatchesExtractedPixels) {
  const GridSpec spec{96, 48, 24, 16, 8};
  const GridLayout g = plan_grid(spec);
  Image img(96, 96);
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) img(y, x) = static_cast<float>(y * 96 + x);
  const SubpatchBlocks blocks = extract_subpatches(img, g);
  EXPECT_EQ(blocks.count(), static_cast<std::size_t>(g.blocks_per_image()));
  for (int pr = 0; pr < g.patches_per_axis; ++pr)
    for (int pc = 0; pc < g.patches_per_axis; ++pc)
      for (int sr = 0; sr < g.subpatches_per_patch_axis; ++sr)
        for (int sc = 0; sc < g.subpatches_per_patch_axis; ++sc) {
          const PixelRect f = pixel_footprint(global_position({pr, pc}, {sr, sc}, g), g);
          const auto b = blocks.block(pr, pc, sr, sc);
          for (int y = 0; y < f.height; ++y)
            for (int x = 0; x < f.width; ++x) ASSERT_EQ(b[y * 16 + x], img(f.top + y, f.left + x));
        }
}

TEST(Blocks, AppendStacksImages) {
  const GridLayout g = plan_grid({64, 32, 16, 16, 8});
  SubpatchBlocks blocks(g);
  blocks.append(Image::Constant(64, 64, 0.25f));
  blocks.append(Image::Constant(64, 64, 0.75f));
  EXPECT_EQ(blocks.images(), 2u);
  EXPECT_EQ(blocks.block(0, 0, 0, 0, 1)[0], 0.75f);
  EXPECT_EQ(blocks.block(2, 2, 2, 2, 0)[0], 0.25f);
  EXPECT_THROW(blocks.append(Image::Zero(32, 32)), GeometryError);
}

TEST(Coverage, DefaultCountsAgainstBruteForce) {
  const GridLayout g = plan_grid(GridSpec{});
  const Eigen::ArrayXXi c = coverage_counts(g);
  // Pixel (y, x) is covered by lattice rows r with 32 r <= y < 32 r + 64.
  auto hits = [](int y) {
    int n = 0;
    for (int r = 0; r < 23; ++r) n += (32 * r <= y && y < 32 * r + 64);
    return n;
  };
  for (int y = 0; y < 768; y += 7)
    for (int x = 0; x < 768; x += 11) ASSERT_EQ(c(y, x), hits(y) * hits(x));
  EXPECT_EQ(c(0, 0), 1);
  EXPECT_EQ(c(0, 100), 2);
  EXPECT_EQ(c(400, 400), 4);
  EXPECT_EQ(c.minCoeff(), 1);
}

TEST(Coverage, RandomSpecsCoverEveryPixel) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const int sub_stride = 4 << uniform_index(rng, 2);         // 4 or 8
    const int sub_side = sub_stride * (1 + static_cast<int>(uniform_index(rng, 3)));
    const int ratio = 1 + static_cast<int>(uniform_index(rng, 3));
    const int patch_stride = sub_stride * ratio;
    const int patch_side = sub_side + sub_stride * static_cast<int>(uniform_index(rng, 4)) + patch_stride;
    const int image_side = patch_side + patch_stride * static_cast<int>(uniform_index(rng, 3));
    const GridSpec spec{image_side, patch_side, patch_stride, sub_side, sub_stride};
    GridLayout g;
    try {
      g = plan_grid(spec);
    } catch (const GeometryError&) {
      continue;
    }
    const Eigen::ArrayXXi c = coverage_counts(g);
    EXPECT_GE(c.minCoeff(), 1);
    EXPECT_EQ(c.sum(), static_cast<long>(g.distinct_positions_per_axis) * g.distinct_positions_per_axis *
                           sub_side * sub_side);
  }
}

}  // namespace
}  // namespace cpcad
