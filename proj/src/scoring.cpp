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

#include "cpcad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cpcad/encoder.hpp"
#include "cpcad/error.hpp"
#include "cpcad/rng.hpp"

namespace cpcad {

std::string to_string(NegativeScope scope) {
  return scope == NegativeScope::per_site ? "per_site" : "per_image";
}

NegativeScope parse_negative_scope(const std::string& name) {
  if (name == "per_site") return NegativeScope::per_site;
  if (name == "per_image") return NegativeScope::per_image;
  throw ConfigError("unknown negative sampling scope '" + name + "' (per_site, per_image)");
}

namespace {

// First `count` entries of a partial Fisher-Yates shuffle of [0, population),
// returned sorted.
std::vector<std::size_t> subsample(std::size_t population, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), 0);
  if (count >= population) return idx;
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, population - i)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <class Scalar, int Options>
void write_raw(std::ofstream& f, const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Options>& a) {
  // Row-major on disk regardless of the in-memory order.
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const Scalar v = a(r, c);
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

template <class Scalar, int Options>
void read_raw(std::ifstream& f, Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Options>& a) {
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      Scalar v;
      f.read(reinterpret_cast<char*>(&v), sizeof(v));
      a(r, c) = v;
    }
  }
}

std::ofstream open_out(const std::filesystem::path& path, const char (&tag)[9], Eigen::Index rows,
                       Eigen::Index cols) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IOError("cannot write " + path.string());
  f.write(tag, 8);
  const auto r = static_cast<std::uint32_t>(rows), c = static_cast<std::uint32_t>(cols);
  f.write(reinterpret_cast<const char*>(&r), 4);
  f.write(reinterpret_cast<const char*>(&c), 4);
  return f;
}

std::ifstream open_in(const std::filesystem::path& path, const char (&tag)[9], Eigen::Index& rows,
                      Eigen::Index& cols) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot read " + path.string());
  char got[8];
  std::uint32_t r = 0, c = 0;
  f.read(got, 8);
  f.read(reinterpret_cast<char*>(&r), 4);
  f.read(reinterpret_cast<char*>(&c), 4);
  if (!f || std::memcmp(got, tag, 8) != 0) throw IOError(path.string() + " is not a " + std::string(tag, 7) + " file");
  rows = r;
  cols = c;
  return f;
}

constexpr char kScoreMapTag[9] = "CPCADSM1";
constexpr char kHeatmapTag[9] = "CPCADHM1";

}  // namespace

void save_score_map(const ScoreMap& map, const std::filesystem::path& path) {
  std::ofstream f = open_out(path, kScoreMapTag, map.values.rows(), map.values.cols());
  write_raw(f, map.values);
  const Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> counts = map.counts.cast<std::int32_t>();
  write_raw(f, counts);
  if (!f) throw IOError("short write to " + path.string());
}

ScoreMap load_score_map(const std::filesystem::path& path) {
  Eigen::Index rows = 0, cols = 0;
  std::ifstream f = open_in(path, kScoreMapTag, rows, cols);
  ScoreMap map;
  map.values.resize(rows, cols);
  Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> counts(rows, cols);
  read_raw(f, map.values);
  read_raw(f, counts);
  if (!f) throw IOError(path.string() + " is truncated");
  map.counts = counts.cast<int>();
  return map;
}

void save_heatmap(const Heatmap& heatmap, const std::filesystem::path& path) {
  std::ofstream f = open_out(path, kHeatmapTag, heatmap.rows(), heatmap.cols());
  f.write(reinterpret_cast<const char*>(heatmap.data()), static_cast<std::streamsize>(heatmap.size() * sizeof(double)));
  if (!f) throw IOError("short write to " + path.string());
}

Heatmap load_heatmap(const std::filesystem::path& path) {
  Eigen::Index rows = 0, cols = 0;
  std::ifstream f = open_in(path, kHeatmapTag, rows, cols);
  Heatmap h(rows, cols);
  f.read(reinterpret_cast<char*>(h.data()), static_cast<std::streamsize>(h.size() * sizeof(double)));
  if (!f) throw IOError(path.string() + " is truncated");
  return h;
}

NegativeBank build_negative_bank(const DatasetSplit& split, const ModelBundle& bundle,
                                 std::size_t max_pool_size, std::uint64_t seed, int negatives) {
  bundle.validate();
  if (max_pool_size == 0) throw ConfigError("bank_size must be positive");
  if (negatives < 1) throw ConfigError("negatives must be >= 1");
  for (const ImageSample& s : split.train) {
    if (s.partition != Partition::train || s.source_id.starts_with("test/")) {
      throw ContaminationError("negative bank would include test sample '" + s.source_id + "'");
    }
  }
  const GridLayout layout = plan_grid(bundle.grid);
  const auto per_image = static_cast<std::size_t>(layout.blocks_per_image());
  const std::size_t total = split.train.size() * per_image;
  if (total < static_cast<std::size_t>(negatives)) {
    throw BankTooSmallError("training set yields " + std::to_string(total) + " sub-patches, need " +
                            std::to_string(negatives));
  }

  NegativeBank bank;
  for (const ImageSample& s : split.train) bank.sources.push_back(s.source_id);
  std::sort(bank.sources.begin(), bank.sources.end());
  bank.source_fingerprint = 0xcbf29ce484222325ULL;
  for (const std::string& id : bank.sources) bank.source_fingerprint = fnv1a(id + '\n', bank.source_fingerprint);
  bank.bundle_fingerprint = bundle.fingerprint();

  // Pick columns first so only the chosen sub-patches are encoded.
  std::vector<std::vector<std::size_t>> chosen(bundle.predictors.size());
  for (std::size_t p = 0; p < bundle.predictors.size(); ++p) {
    Rng rng(derive_seed(seed, p));
    chosen[p] = subsample(total, max_pool_size, rng);
    bank.pools.emplace_back(bundle.encoder_config.embedding_dim, static_cast<Eigen::Index>(chosen[p].size()));
  }

  const std::size_t block = static_cast<std::size_t>(layout.block_pixels());
  std::vector<std::size_t> cursor(bundle.predictors.size(), 0);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    const SubpatchBlocks blocks = extract_subpatches(split.train[i].pixels, layout);
    const std::size_t lo = i * per_image, hi = lo + per_image;
    for (std::size_t g = 0; g < bundle.encoders.size(); ++g) {
      const std::vector<std::size_t> preds = bundle.predictors_of(g);
      // Union of this image's wanted blocks over the group's predictors.
      std::vector<std::size_t> wanted;
      for (std::size_t p : preds) {
        for (std::size_t c = cursor[p]; c < chosen[p].size() && chosen[p][c] < hi; ++c) {
          wanted.push_back(chosen[p][c] - lo);
        }
      }
      std::sort(wanted.begin(), wanted.end());
      wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
      if (wanted.empty()) continue;
      std::vector<float> pixels(wanted.size() * block);
      for (std::size_t w = 0; w < wanted.size(); ++w) {
        const auto src = blocks.block(wanted[w]);
        std::copy(src.begin(), src.end(), pixels.begin() + static_cast<std::ptrdiff_t>(w * block));
      }
      const Eigen::MatrixXf z = bundle.encoders[g].encode(pixels);
      for (std::size_t p : preds) {
        for (; cursor[p] < chosen[p].size() && chosen[p][cursor[p]] < hi; ++cursor[p]) {
          const std::size_t local = chosen[p][cursor[p]] - lo;
          const auto w = std::lower_bound(wanted.begin(), wanted.end(), local) - wanted.begin();
          bank.pools[p].col(static_cast<Eigen::Index>(cursor[p])) = z.col(w);
        }
      }
    }
  }
  if (bank.pool_size() < static_cast<std::size_t>(negatives)) {
    throw BankTooSmallError("bank holds " + std::to_string(bank.pool_size()) + " embeddings, need " +
                            std::to_string(negatives));
  }
  return bank;
}

double ScoreMap::min_present() const {
  double out = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      if (counts(r, c) > 0) out = std::min(out, values(r, c));
  if (!std::isfinite(out)) throw EmptyScoreMapError("score map has no present positions");
  return out;
}

double ScoreMap::max_present() const {
  double out = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      if (counts(r, c) > 0) out = std::max(out, values(r, c));
  if (!std::isfinite(out)) throw EmptyScoreMapError("score map has no present positions");
  return out;
}

ScoreMap score_image(const Image& image, const ModelBundle& bundle, const NegativeBank& bank,
                     const ScoringParams& params, std::uint64_t seed) {
  if (bank.bundle_fingerprint != bundle.fingerprint()) {
    throw ConfigError("negative bank was built for a different model bundle");
  }
  if (bank.pools.size() != bundle.predictors.size()) {
    throw ConfigError("negative bank has " + std::to_string(bank.pools.size()) + " pools for " +
                      std::to_string(bundle.predictors.size()) + " predictors");
  }
  if (params.negatives < 1) throw ConfigError("negatives must be >= 1");
  const auto negatives = static_cast<std::size_t>(params.negatives);
  if (bank.pool_size() < negatives) {
    throw BankTooSmallError("bank holds " + std::to_string(bank.pool_size()) + " embeddings, need " +
                            std::to_string(negatives));
  }
  if (params.offsets.empty()) throw ConfigError("scoring needs at least one offset");
  for (const auto& pred : bundle.predictors) {
    for (int k : params.offsets) {
      if (!pred.has_offset(k)) {
        throw ConfigError("offset " + std::to_string(k) + " was not trained for " +
                          std::string(to_string(pred.direction)));
      }
    }
  }

  const GridLayout layout = plan_grid(bundle.grid);
  const SubpatchBlocks blocks = extract_subpatches(image, layout);
  std::vector<EmbeddingGrid> grids;
  for (const Encoder& e : bundle.encoders) grids.push_back(encode(blocks, e));

  const int side = layout.distinct_positions_per_axis;
  ScoreMap map;
  map.values = Eigen::ArrayXXd::Zero(side, side);
  map.counts = Eigen::ArrayXXi::Zero(side, side);
  const int s = layout.subpatches_per_patch_axis;
  const Eigen::Index d = bundle.encoder_config.embedding_dim;
  Eigen::MatrixXf neg(d, static_cast<Eigen::Index>(negatives));

  for (std::size_t p = 0; p < bundle.predictors.size(); ++p) {
    const auto& pred = bundle.predictors[p];
    const EmbeddingGrid& z = grids[bundle.encoder_of[p]];
    const Eigen::MatrixXf& pool = bank.pools[p];
    const std::uint64_t dir = direction_index(pred.direction);
    for (int k : params.offsets) {
      const Eigen::MatrixXf& w = pred.weight(k);
      const auto pairs = directional_pairs(s, pred.direction, k);
      auto fill = [&](Rng& rng) {
        const auto picked = sample_without_replacement(rng, pool.cols(), negatives);
        for (std::size_t j = 0; j < negatives; ++j) {
          neg.col(static_cast<Eigen::Index>(j)) = pool.col(static_cast<Eigen::Index>(picked[j]));
        }
      };
      if (params.scope == NegativeScope::per_image) {
        Rng rng(derive_seed(seed, dir, static_cast<std::uint64_t>(k)));
        fill(rng);
      }
      for (int pr = 0; pr < layout.patches_per_axis; ++pr) {
        for (int pc = 0; pc < layout.patches_per_axis; ++pc) {
          for (const auto& [ctx, tgt] : pairs) {
            if (params.scope == NegativeScope::per_site) {
              Rng rng(derive_seed(seed, dir, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(pr),
                                  static_cast<std::uint64_t>(pc), static_cast<std::uint64_t>(tgt.row),
                                  static_cast<std::uint64_t>(tgt.col)));
              fill(rng);
            }
            const float loss = detail::infonce_kernel<float>(
                z.values.col(z.column(pr, pc, ctx.row, ctx.col)),
                z.values.col(z.column(pr, pc, tgt.row, tgt.col)), neg, w, 1.0f, nullptr, nullptr,
                nullptr, nullptr);
            const LatticePos pos = global_position({pr, pc}, tgt, layout);
            map.values(pos.row, pos.col) += loss;
            map.counts(pos.row, pos.col) += 1;
          }
        }
      }
    }
  }
  for (Eigen::Index r = 0; r < side; ++r)
    for (Eigen::Index c = 0; c < side; ++c)
      if (map.counts(r, c) > 0) map.values(r, c) /= map.counts(r, c);
  return map;
}

std::uint64_t image_seed(std::uint64_t run_seed, const std::string& image_id) {
  return derive_seed(run_seed, fnv1a(image_id));
}

std::size_t top_count(std::size_t present, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw ConfigError("top_fraction must lie in (0, 1]");
  }
  if (present == 0) return 0;
  const double x = top_fraction * static_cast<double>(present);
  // 0.05 * 60 is 3.0000000000000004 in binary; do not round that up to 4.
  const auto m = static_cast<std::size_t>(std::ceil(x - 1e-9 * x));
  return std::clamp<std::size_t>(m, 1, present);
}

double image_score(const ScoreMap& map, double top_fraction) {
  std::vector<double> present;
  for (Eigen::Index r = 0; r < map.values.rows(); ++r)
    for (Eigen::Index c = 0; c < map.values.cols(); ++c)
      if (map.counts(r, c) > 0) present.push_back(map.values(r, c));
  const std::size_t m = top_count(present.size(), top_fraction);
  if (m == 0) throw EmptyScoreMapError("score map has no present positions");
  std::partial_sort(present.begin(), present.begin() + static_cast<std::ptrdiff_t>(m), present.end(),
                    std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += present[i];
  return sum / static_cast<double>(m);
}

Eigen::ArrayXXi present_coverage(const ScoreMap& map, const GridLayout& layout) {
  const int n = layout.spec.image_side;
  Eigen::ArrayXXi cover = Eigen::ArrayXXi::Zero(n, n);
  for (int r = 0; r < map.side(); ++r) {
    for (int c = 0; c < map.side(); ++c) {
      if (!map.present(r, c)) continue;
      const PixelRect f = pixel_footprint({r, c}, layout);
      cover.block(f.top, f.left, f.height, f.width) += 1;
    }
  }
  return cover;
}

AnomalyMask make_mask(const ScoreMap& map, const GridLayout& layout) {
  if (map.side() != layout.distinct_positions_per_axis) {
    throw ShapeError("score map side " + std::to_string(map.side()) + " does not match lattice side " +
                     std::to_string(layout.distinct_positions_per_axis));
  }
  const double fill = map.min_present();
  const int n = layout.spec.image_side;
  Heatmap sum = Heatmap::Zero(n, n);
  const Eigen::ArrayXXi cover = present_coverage(map, layout);
  for (int r = 0; r < map.side(); ++r) {
    for (int c = 0; c < map.side(); ++c) {
      if (!map.present(r, c)) continue;
      const PixelRect f = pixel_footprint({r, c}, layout);
      sum.block(f.top, f.left, f.height, f.width) += map.values(r, c);
    }
  }
  AnomalyMask out;
  out.heatmap.resize(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      out.heatmap(y, x) = cover(y, x) > 0 ? sum(y, x) / cover(y, x) : fill;
    }
  }
  return out;
}

}  // namespace cpcad
