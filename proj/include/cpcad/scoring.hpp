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

#ifndef CPCAD_SCORING_HPP_
#define CPCAD_SCORING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpcad/dataset.hpp"
#include "cpcad/geometry.hpp"
#include "cpcad/image.hpp"
#include "cpcad/trainer.hpp"

namespace cpcad {

// Whether test-time negatives are redrawn for every (patch, pair, direction,
// offset) site or drawn once per (image, direction, offset).
enum class NegativeScope { per_site, per_image };

std::string to_string(NegativeScope scope);
NegativeScope parse_negative_scope(const std::string& name);

struct ScoringParams {
  std::vector<int> offsets = {2, 3};  // K; each must be trained
  int negatives = 16;                 // N-1
  double top_fraction = 0.05;
  std::size_t bank_size = 16384;
  NegativeScope scope = NegativeScope::per_site;

  friend bool operator==(const ScoringParams&, const ScoringParams&) = default;
};

// Test-time negatives: embeddings of unaugmented training sub-patches, one
// pool per predictor (under that predictor's encoder).
struct NegativeBank {
  std::vector<Eigen::MatrixXf> pools;  // d x pool_size each
  std::vector<std::string> sources;    // sorted training source ids
  std::uint64_t source_fingerprint = 0;
  std::uint64_t bundle_fingerprint = 0;

  std::size_t pool_size() const { return pools.empty() ? 0 : static_cast<std::size_t>(pools.front().cols()); }
};

// Encodes every sub-patch of split.train and subsamples each pool to at most
// max_pool_size columns. Throws ContaminationError if any sample in
// split.train came from the test partition, BankTooSmallError if the pool
// holds fewer than `negatives` embeddings.
NegativeBank build_negative_bank(const DatasetSplit& split, const ModelBundle& bundle,
                                 std::size_t max_pool_size, std::uint64_t seed,
                                 int negatives = 16);

// Mean InfoNCE loss per distinct sub-patch lattice position.
struct ScoreMap {
  Eigen::ArrayXXd values;  // sum / count where count > 0, otherwise 0
  Eigen::ArrayXXi counts;

  int side() const { return static_cast<int>(values.rows()); }
  bool present(int row, int col) const { return counts(row, col) > 0; }
  std::size_t present_count() const { return static_cast<std::size_t>((counts > 0).count()); }
  double min_present() const;
  double max_present() const;
};

// Scores one image: every pair of every patch, direction and offset in
// params.offsets contributes its loss to the target's lattice position.
// Throws ConfigError on bank/bundle mismatch or an untrained offset.
ScoreMap score_image(const Image& image, const ModelBundle& bundle, const NegativeBank& bank,
                     const ScoringParams& params, std::uint64_t seed);

// Seed for `image_id` under a run-level seed.
std::uint64_t image_seed(std::uint64_t run_seed, const std::string& image_id);

// Mean of the ceil(top_fraction * M) largest present values (at least one).
// Throws EmptyScoreMapError when nothing is present.
double image_score(const ScoreMap& map, double top_fraction = 0.05);
std::size_t top_count(std::size_t present, double top_fraction);

struct AnomalyMask {
  Heatmap heatmap;
};

// Each pixel gets the mean of the present lattice values whose footprint
// covers it; pixels no present footprint covers get min_present().
AnomalyMask make_mask(const ScoreMap& map, const GridLayout& layout);

// Present footprints covering each pixel.
Eigen::ArrayXXi present_coverage(const ScoreMap& map, const GridLayout& layout);

// Raw little-endian sidecars: 8-byte tag, u32 rows, u32 cols, float64
// values (score maps add int32 counts). Loaders throw IOError.
void save_score_map(const ScoreMap& map, const std::filesystem::path& path);
ScoreMap load_score_map(const std::filesystem::path& path);
void save_heatmap(const Heatmap& heatmap, const std::filesystem::path& path);
Heatmap load_heatmap(const std::filesystem::path& path);

enum class Verdict { normal, anomalous };

// Anomalous iff score >= tau.
inline Verdict classify(double score, double tau) {
  return score >= tau ? Verdict::anomalous : Verdict::normal;
}

}  // namespace cpcad

#endif  // CPCAD_SCORING_HPP_
