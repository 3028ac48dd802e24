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

#ifndef CPCAD_TRAINER_HPP_
#define CPCAD_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cpcad/contrastive.hpp"
#include "cpcad/dataset.hpp"
#include "cpcad/encoder.hpp"
#include "cpcad/geometry.hpp"
#include "cpcad/nn.hpp"

namespace cpcad {

struct TrainConfig {
  int epochs = 150;
  int batch_size = 16;
  double learning_rate = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int negatives = 16;  // N-1
  std::uint64_t seed = 0;
  std::vector<Direction> directions{kAllDirections.begin(), kAllDirections.end()};
  // One encoder for all directions instead of one per direction. Faster, but
  // not four independent per-direction models.
  bool share_encoder = false;
  std::vector<int> offsets = {2, 3};
  bool augment = true;
  // Sub-patches per encoder pass; 0 runs the whole batch at once. With
  // chunking, normalization statistics are per chunk and activations are
  // recomputed for the backward pass.
  int micro_batch = 0;
  int checkpoint_every = 25;
  // Parallel directional models. Not part of the fingerprint.
  int threads = 1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Throws ConfigError (bad scalars, duplicate directions/offsets) or
// GeometryError (an offset that does not fit the sub-grid).
void validate(const TrainConfig& config, const GridLayout& layout);

struct ModelBundle {
  std::string class_name;
  GridSpec grid;
  EncoderConfig encoder_config;
  TrainConfig train_config;
  std::vector<Encoder> encoders;
  std::vector<DirectionalPredictor<float>> predictors;
  std::vector<std::size_t> encoder_of;  // predictor -> encoder

  const Encoder& encoder_for(std::size_t predictor) const { return encoders.at(encoder_of.at(predictor)); }
  // Predictors sharing encoder `group`.
  std::vector<std::size_t> predictors_of(std::size_t group) const;

  // Hash of configs and every weight bit.
  std::uint64_t fingerprint() const;
  // Throws ConfigError when structure and configs disagree.
  void validate() const;
};

// Everything needed to continue training where a checkpoint stopped.
struct TrainingState {
  ModelBundle bundle;
  std::vector<nn::Adam> optimizers;  // one per encoder group
  int epochs_completed = 0;
  std::vector<std::vector<double>> loss_history;  // [epoch][group]
};

class Trainer {
 public:
  // Throws ConfigError for an empty training set and ContaminationError if
  // any training sample came from the test partition.
  Trainer(const DatasetSplit& split, const GridSpec& grid, const EncoderConfig& encoder,
          const TrainConfig& config);
  Trainer(const DatasetSplit& split, TrainingState resumed);

  bool done() const { return state_.epochs_completed >= state_.bundle.train_config.epochs; }
  std::size_t groups() const { return state_.bundle.encoders.size(); }

  // One epoch of every group; returns the per-group mean step loss.
  std::vector<double> run_epoch();

  // Remaining epochs; `on_epoch` sees the state after each one.
  ModelBundle run(const std::function<void(const TrainingState&)>& on_epoch = {});

  // One optimizer step of `group` on already-augmented images. Returns the
  // mean InfoNCE loss over every pair, offset and direction of the group.
  double step(std::size_t group, std::span<const Image> images, Rng& rng);

  // Mean loss of the same objective without updating anything.
  double evaluate_loss(std::size_t group, std::span<const Image> images, Rng& rng);

  const TrainingState& state() const { return state_; }
  TrainingState& state() { return state_; }

 private:
  void check_samples(const DatasetSplit& split);
  std::vector<nn::Param> group_params(std::size_t group);
  double epoch_for_group(std::size_t group, int epoch);
  double objective(std::size_t group, const SubpatchBlocks& blocks, const Eigen::MatrixXf& z,
                   Rng& rng, Eigen::MatrixXf* dz);

  std::vector<ImageSample> train_;  // owned copy of split.train
  GridLayout layout_;
  TrainingState state_;
  std::vector<std::vector<Eigen::MatrixXf>> predictor_grads_;
  std::vector<std::int64_t> global_steps_;
};

ModelBundle train_class(const DatasetSplit& split, const GridSpec& grid,
                        const EncoderConfig& encoder, const TrainConfig& config);

// Checkpoint bundle: a single file holding a version tag, the configs as
// INI text, a JSON manifest of named float32 arrays, the little-endian
// array data and a CRC-32 trailer.
inline constexpr std::uint32_t kBundleVersion = 1;

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
// Throws CheckpointVersionError or CheckpointFormatError.
ModelBundle load_bundle(const std::filesystem::path& path);

// Bundle plus optimizer moments, epoch counter and loss history.
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

}  // namespace cpcad

#endif  // CPCAD_TRAINER_HPP_
