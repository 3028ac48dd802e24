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

#ifndef CPCAD_ENCODER_HPP_
#define CPCAD_ENCODER_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "cpcad/geometry.hpp"
#include "cpcad/nn.hpp"

namespace cpcad {

enum class Backbone { small_cnn, resnet18v2_block3 };

std::string to_string(Backbone backbone);
Backbone parse_backbone(const std::string& name);

struct EncoderConfig {
  Backbone backbone = Backbone::small_cnn;
  int embedding_dim = 64;
  int input_side = 64;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Throws ConfigError for d < 8, a ResNet whose d is not its third-stage
// width (256), or an input too small for the backbone's downsampling.
void validate(const EncoderConfig& config);

namespace detail {

// Four stride-2 3x3 convolutions, widths (32, 64, 128, d), ReLU after each.
class SmallCnn {
 public:
  struct Tape {
    std::array<nn::Conv2d::Cache, 4> conv;
    std::array<nn::ReLU::Cache, 4> relu;
    int out_height = 0, out_width = 0;
  };

  SmallCnn() = default;
  SmallCnn(int dim, Rng& rng);

  nn::Matrix forward(nn::Activation x, Tape* tape) const;
  void backward(const Tape& tape, const nn::Matrix& dz);
  void collect(std::vector<nn::Param>& params);
  std::size_t parameter_count() const;

 private:
  std::array<nn::Conv2d, 4> conv_;
};

// Pre-activation ResNet-18 truncated after its third stage (widths 64, 128,
// 256), followed by a final BN-ReLU.
class PreactResNet {
 public:
  struct Block {
    nn::BatchNorm2d bn1, bn2;
    nn::Conv2d conv1, conv2;
    std::optional<nn::Conv2d> projection;
  };
  struct BlockTape {
    nn::BatchNorm2d::Cache bn1, bn2;
    nn::ReLU::Cache relu1, relu2;
    nn::Conv2d::Cache conv1, conv2, projection;
  };
  struct Tape {
    nn::Conv2d::Cache stem;
    nn::BatchNorm2d::Cache stem_bn;
    nn::ReLU::Cache stem_relu;
    nn::MaxPool2d::Cache pool;
    std::vector<BlockTape> blocks;
    nn::BatchNorm2d::Cache final_bn;
    nn::ReLU::Cache final_relu;
    int out_height = 0, out_width = 0;
  };

  static constexpr int kWidth = 256;

  PreactResNet() = default;
  explicit PreactResNet(Rng& rng);

  nn::Matrix forward(nn::Activation x, const nn::Pass& pass, Tape* tape,
                     std::vector<nn::BatchStats>* stats) const;
  void backward(const Tape& tape, const nn::Matrix& dz);
  void apply_stats(const std::vector<nn::BatchStats>& stats);
  void collect(std::vector<nn::Param>& params, std::vector<nn::Buffer>& buffers);
  std::size_t parameter_count() const;

 private:
  nn::Conv2d stem_;
  nn::BatchNorm2d stem_bn_;
  nn::MaxPool2d pool_;
  std::vector<Block> blocks_;
  nn::BatchNorm2d final_bn_;
};

}  // namespace detail

// Maps sub-patch pixel blocks to embedding columns. Weights always start
// from a seeded random initialization; there is no pretrained path.
class Encoder {
 public:
  using Tape = std::variant<detail::SmallCnn::Tape, detail::PreactResNet::Tape>;

  Encoder() = default;
  Encoder(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  int dim() const { return config_.embedding_dim; }

  // Inference-mode embeddings (d x count). `blocks` holds count blocks of
  // input_side^2 pixels each. Throws ShapeError on a size mismatch.
  Eigen::MatrixXf encode(std::span<const float> blocks, std::size_t chunk = 256) const;

  // Training-mode forward for one chunk. With pass.update_running the batch
  // statistics are folded into the running averages.
  Eigen::MatrixXf forward(std::span<const float> blocks, const nn::Pass& pass, Tape* tape);
  // Accumulates parameter gradients for dL/dz of the chunk recorded in `tape`.
  void backward(const Tape& tape, const Eigen::MatrixXf& dz);

  std::vector<nn::Param> parameters();
  std::vector<nn::Buffer> buffers();
  // Parameters followed by buffers, read-only.
  std::vector<std::pair<std::string, const Eigen::MatrixXf*>> tensors() const;
  std::size_t parameter_count() const;

 private:
  nn::Activation to_activation(std::span<const float> blocks) const;

  EncoderConfig config_;
  std::variant<detail::SmallCnn, detail::PreactResNet> net_;
};

// Same as the Encoder constructor.
Encoder init_encoder(const EncoderConfig& config, std::uint64_t seed);

// d x n embeddings laid out like SubpatchBlocks: column
// image*blocks_per_image + block_index(pr, pc, sr, sc).
struct EmbeddingGrid {
  Eigen::MatrixXf values;
  int patches_per_axis = 0;
  int subpatches_per_patch_axis = 0;

  int dim() const { return static_cast<int>(values.rows()); }
  Eigen::Index column(int pr, int pc, int sr, int sc, int image = 0) const {
    const int s = subpatches_per_patch_axis;
    return ((static_cast<Eigen::Index>(image) * patches_per_axis + pr) * patches_per_axis + pc) *
               s * s + sr * s + sc;
  }
};

// Embeds every block of `blocks`. Throws ShapeError when the block side
// differs from the encoder's input side.
EmbeddingGrid encode(const SubpatchBlocks& blocks, const Encoder& encoder);

}  // namespace cpcad

#endif  // CPCAD_ENCODER_HPP_
