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

#include "cpcad/encoder.hpp"

#include <algorithm>
#include <string>

#include "cpcad/error.hpp"

namespace cpcad {

std::string to_string(Backbone backbone) {
  switch (backbone) {
    case Backbone::small_cnn: return "small-cnn";
    case Backbone::resnet18v2_block3: return "resnet18v2-block3";
  }
  return "small-cnn";
}

Backbone parse_backbone(const std::string& name) {
  if (name == "small-cnn") return Backbone::small_cnn;
  if (name == "resnet18v2-block3") return Backbone::resnet18v2_block3;
  throw ConfigError("unknown backbone '" + name + "'");
}

void validate(const EncoderConfig& config) {
  if (config.embedding_dim < 8) {
    throw ConfigError("embedding_dim must be >= 8, got " + std::to_string(config.embedding_dim));
  }
  if (config.backbone == Backbone::resnet18v2_block3) {
    if (config.embedding_dim != detail::PreactResNet::kWidth) {
      throw ConfigError("resnet18v2-block3 produces 256-d embeddings, got embedding_dim=" +
                        std::to_string(config.embedding_dim));
    }
    if (config.input_side < 32) throw ConfigError("resnet18v2-block3 needs input_side >= 32");
  } else if (config.input_side < 8) {
    throw ConfigError("small-cnn needs input_side >= 8");
  }
}

namespace detail {

SmallCnn::SmallCnn(int dim, Rng& rng) {
  const std::array<int, 5> widths = {1, 32, 64, 128, dim};
  for (std::size_t i = 0; i < conv_.size(); ++i) {
    conv_[i] = nn::Conv2d(widths[i], widths[i + 1], 3, 2, 1, true, rng);
  }
}

nn::Matrix SmallCnn::forward(nn::Activation x, Tape* tape) const {
  for (std::size_t i = 0; i < conv_.size(); ++i) {
    x = conv_[i].forward(x, tape ? &tape->conv[i] : nullptr);
    nn::ReLU::forward(x, tape ? &tape->relu[i] : nullptr);
  }
  if (tape != nullptr) {
    tape->out_height = x.height;
    tape->out_width = x.width;
  }
  return nn::spatial_mean(x);
}

void SmallCnn::backward(const Tape& tape, const nn::Matrix& dz) {
  nn::Activation g = nn::spatial_mean_backward(dz, tape.out_height, tape.out_width);
  for (std::size_t i = conv_.size(); i-- > 0;) {
    nn::ReLU::backward(tape.relu[i], g);
    g = conv_[i].backward(tape.conv[i], g, i > 0);
  }
}

void SmallCnn::collect(std::vector<nn::Param>& params) {
  for (std::size_t i = 0; i < conv_.size(); ++i) conv_[i].collect("conv" + std::to_string(i), params);
}

std::size_t SmallCnn::parameter_count() const {
  std::size_t total = 0;
  for (const nn::Conv2d& c : conv_) total += c.parameter_count();
  return total;
}

PreactResNet::PreactResNet(Rng& rng)
    : stem_(1, 64, 7, 2, 3, false, rng), stem_bn_(64), final_bn_(kWidth) {
  const std::array<int, 3> widths = {64, 128, 256};
  int in = 64;
  for (std::size_t stage = 0; stage < widths.size(); ++stage) {
    for (int b = 0; b < 2; ++b) {
      const int out = widths[stage];
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      Block block;
      block.bn1 = nn::BatchNorm2d(in);
      block.conv1 = nn::Conv2d(in, out, 3, stride, 1, false, rng);
      block.bn2 = nn::BatchNorm2d(out);
      block.conv2 = nn::Conv2d(out, out, 3, 1, 1, false, rng);
      if (stride != 1 || in != out) block.projection = nn::Conv2d(in, out, 1, stride, 0, false, rng);
      blocks_.push_back(std::move(block));
      in = out;
    }
  }
}

nn::Matrix PreactResNet::forward(nn::Activation x, const nn::Pass& pass, Tape* tape,
                                 std::vector<nn::BatchStats>* stats) const {
  x = stem_.forward(x, tape ? &tape->stem : nullptr);
  x = stem_bn_.forward(x, pass, tape ? &tape->stem_bn : nullptr, stats);
  nn::ReLU::forward(x, tape ? &tape->stem_relu : nullptr);
  x = pool_.forward(x, tape ? &tape->pool : nullptr);
  if (tape != nullptr) tape->blocks.resize(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& block = blocks_[i];
    BlockTape* bt = tape ? &tape->blocks[i] : nullptr;
    nn::Activation a = block.bn1.forward(x, pass, bt ? &bt->bn1 : nullptr, stats);
    nn::ReLU::forward(a, bt ? &bt->relu1 : nullptr);
    nn::Activation shortcut =
        block.projection ? block.projection->forward(a, bt ? &bt->projection : nullptr) : x;
    nn::Activation h = block.conv1.forward(a, bt ? &bt->conv1 : nullptr);
    h = block.bn2.forward(h, pass, bt ? &bt->bn2 : nullptr, stats);
    nn::ReLU::forward(h, bt ? &bt->relu2 : nullptr);
    h = block.conv2.forward(h, bt ? &bt->conv2 : nullptr);
    h.data += shortcut.data;
    x = std::move(h);
  }
  x = final_bn_.forward(x, pass, tape ? &tape->final_bn : nullptr, stats);
  nn::ReLU::forward(x, tape ? &tape->final_relu : nullptr);
  if (tape != nullptr) {
    tape->out_height = x.height;
    tape->out_width = x.width;
  }
  return nn::spatial_mean(x);
}

void PreactResNet::backward(const Tape& tape, const nn::Matrix& dz) {
  nn::Activation g = nn::spatial_mean_backward(dz, tape.out_height, tape.out_width);
  nn::ReLU::backward(tape.final_relu, g);
  g = final_bn_.backward(tape.final_bn, g);
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    Block& block = blocks_[i];
    const BlockTape& bt = tape.blocks[i];
    nn::Activation dh = block.conv2.backward(bt.conv2, g, true);
    nn::ReLU::backward(bt.relu2, dh);
    dh = block.bn2.backward(bt.bn2, dh);
    nn::Activation da = block.conv1.backward(bt.conv1, dh, true);
    if (block.projection) {
      da.data += block.projection->backward(bt.projection, g, true).data;
      nn::ReLU::backward(bt.relu1, da);
      g = block.bn1.backward(bt.bn1, da);
    } else {
      nn::ReLU::backward(bt.relu1, da);
      nn::Activation dx = block.bn1.backward(bt.bn1, da);
      dx.data += g.data;
      g = std::move(dx);
    }
  }
  g = pool_.backward(tape.pool, g);
  nn::ReLU::backward(tape.stem_relu, g);
  g = stem_bn_.backward(tape.stem_bn, g);
  stem_.backward(tape.stem, g, false);
}

void PreactResNet::apply_stats(const std::vector<nn::BatchStats>& stats) {
  std::size_t next = 0;
  stem_bn_.update_running(stats.at(next++));
  for (Block& block : blocks_) {
    block.bn1.update_running(stats.at(next++));
    block.bn2.update_running(stats.at(next++));
  }
  final_bn_.update_running(stats.at(next++));
}

void PreactResNet::collect(std::vector<nn::Param>& params, std::vector<nn::Buffer>& buffers) {
  stem_.collect("stem", params);
  stem_bn_.collect("stem_bn", params, buffers);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    blocks_[i].bn1.collect(p + "/bn1", params, buffers);
    blocks_[i].conv1.collect(p + "/conv1", params);
    blocks_[i].bn2.collect(p + "/bn2", params, buffers);
    blocks_[i].conv2.collect(p + "/conv2", params);
    if (blocks_[i].projection) blocks_[i].projection->collect(p + "/projection", params);
  }
  final_bn_.collect("final_bn", params, buffers);
}

std::size_t PreactResNet::parameter_count() const {
  std::size_t total = stem_.parameter_count() + stem_bn_.parameter_count() +
                      final_bn_.parameter_count();
  for (const Block& b : blocks_) {
    total += b.bn1.parameter_count() + b.conv1.parameter_count() + b.bn2.parameter_count() +
             b.conv2.parameter_count();
    if (b.projection) total += b.projection->parameter_count();
  }
  return total;
}

}  // namespace detail

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  validate(config);
  Rng rng(derive_seed(seed, 0x656e63));
  if (config.backbone == Backbone::small_cnn) {
    net_ = detail::SmallCnn(config.embedding_dim, rng);
  } else {
    net_ = detail::PreactResNet(rng);
  }
}

Encoder init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  return Encoder(config, seed);
}

nn::Activation Encoder::to_activation(std::span<const float> blocks) const {
  const std::size_t area = static_cast<std::size_t>(config_.input_side) * config_.input_side;
  if (blocks.size() % area != 0) {
    throw ShapeError("block buffer of " + std::to_string(blocks.size()) +
                     " pixels is not a multiple of " + std::to_string(area));
  }
  nn::Activation x;
  x.batch = static_cast<int>(blocks.size() / area);
  x.height = config_.input_side;
  x.width = config_.input_side;
  x.data = Eigen::Map<const Eigen::RowVectorXf>(blocks.data(),
                                                static_cast<Eigen::Index>(blocks.size()));
  return x;
}

Eigen::MatrixXf Encoder::encode(std::span<const float> blocks, std::size_t chunk) const {
  const std::size_t area = static_cast<std::size_t>(config_.input_side) * config_.input_side;
  if (blocks.size() % area != 0) {
    throw ShapeError("block buffer of " + std::to_string(blocks.size()) +
                     " pixels is not a multiple of " + std::to_string(area));
  }
  const std::size_t count = blocks.size() / area;
  Eigen::MatrixXf z(config_.embedding_dim, static_cast<Eigen::Index>(count));
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < count; start += chunk) {
    const std::size_t n = std::min(chunk, count - start);
    nn::Activation x = to_activation(blocks.subspan(start * area, n * area));
    nn::Matrix part = std::visit(
        [&](const auto& net) -> nn::Matrix {
          using T = std::decay_t<decltype(net)>;
          if constexpr (std::is_same_v<T, detail::SmallCnn>) {
            return net.forward(std::move(x), nullptr);
          } else {
            return net.forward(std::move(x), nn::Pass::inference(), nullptr, nullptr);
          }
        },
        net_);
    z.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = part;
  }
  return z;
}

Eigen::MatrixXf Encoder::forward(std::span<const float> blocks, const nn::Pass& pass, Tape* tape) {
  nn::Activation x = to_activation(blocks);
  if (auto* small = std::get_if<detail::SmallCnn>(&net_)) {
    detail::SmallCnn::Tape* t = nullptr;
    if (tape != nullptr) t = &tape->emplace<detail::SmallCnn::Tape>();
    return small->forward(std::move(x), t);
  }
  auto& resnet = std::get<detail::PreactResNet>(net_);
  detail::PreactResNet::Tape* t = nullptr;
  if (tape != nullptr) t = &tape->emplace<detail::PreactResNet::Tape>();
  std::vector<nn::BatchStats> stats;
  nn::Matrix z = resnet.forward(std::move(x), pass, t, pass.update_running ? &stats : nullptr);
  if (pass.update_running) resnet.apply_stats(stats);
  return z;
}

void Encoder::backward(const Tape& tape, const Eigen::MatrixXf& dz) {
  if (auto* small = std::get_if<detail::SmallCnn>(&net_)) {
    small->backward(std::get<detail::SmallCnn::Tape>(tape), dz);
  } else {
    std::get<detail::PreactResNet>(net_).backward(std::get<detail::PreactResNet::Tape>(tape), dz);
  }
}

std::vector<nn::Param> Encoder::parameters() {
  std::vector<nn::Param> params;
  std::vector<nn::Buffer> unused;
  std::visit(
      [&](auto& net) {
        using T = std::decay_t<decltype(net)>;
        if constexpr (std::is_same_v<T, detail::SmallCnn>) {
          net.collect(params);
        } else {
          net.collect(params, unused);
        }
      },
      net_);
  return params;
}

std::vector<nn::Buffer> Encoder::buffers() {
  std::vector<nn::Buffer> buffers;
  if (auto* resnet = std::get_if<detail::PreactResNet>(&net_)) {
    std::vector<nn::Param> unused;
    resnet->collect(unused, buffers);
  }
  return buffers;
}

std::vector<std::pair<std::string, const Eigen::MatrixXf*>> Encoder::tensors() const {
  // collect() only records addresses; nothing is modified.
  auto* self = const_cast<Encoder*>(this);
  std::vector<std::pair<std::string, const Eigen::MatrixXf*>> out;
  for (const nn::Param& p : self->parameters()) out.emplace_back(p.name, p.value);
  for (const nn::Buffer& b : self->buffers()) out.emplace_back(b.name, b.value);
  return out;
}

std::size_t Encoder::parameter_count() const {
  return std::visit([](const auto& net) { return net.parameter_count(); }, net_);
}

EmbeddingGrid encode(const SubpatchBlocks& blocks, const Encoder& encoder) {
  if (blocks.layout().spec.subpatch_side != encoder.config().input_side) {
    throw ShapeError("sub-patch side " + std::to_string(blocks.layout().spec.subpatch_side) +
                     " does not match encoder input side " +
                     std::to_string(encoder.config().input_side));
  }
  EmbeddingGrid grid;
  grid.values = encoder.encode(blocks.pixels());
  grid.patches_per_axis = blocks.layout().patches_per_axis;
  grid.subpatches_per_patch_axis = blocks.layout().subpatches_per_patch_axis;
  return grid;
}

}  // namespace cpcad
