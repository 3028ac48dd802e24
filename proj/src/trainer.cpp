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

#include "cpcad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "cpcad/config.hpp"
#include "cpcad/error.hpp"

namespace cpcad {

void validate(const TrainConfig& config, const GridLayout& layout) {
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (config.negatives < 1) throw ConfigError("negatives must be >= 1");
  if (config.directions.empty()) throw ConfigError("at least one direction is required");
  if (std::set<Direction>(config.directions.begin(), config.directions.end()).size() !=
      config.directions.size()) {
    throw ConfigError("duplicate direction");
  }
  if (config.offsets.empty()) throw ConfigError("at least one offset k is required");
  if (std::set<int>(config.offsets.begin(), config.offsets.end()).size() != config.offsets.size()) {
    throw ConfigError("duplicate offset");
  }
  for (int k : config.offsets) {
    if (k < 1) throw ConfigError("offsets must be >= 1");
    if (k >= layout.subpatches_per_patch_axis) {
      throw GeometryError("offset k=" + std::to_string(k) + " must be < " +
                          std::to_string(layout.subpatches_per_patch_axis) +
                          " sub-patches per patch axis");
    }
  }
  if (config.micro_batch < 0) throw ConfigError("micro_batch must be >= 0");
  if (config.threads < 1) throw ConfigError("threads must be >= 1");
}

std::vector<std::size_t> ModelBundle::predictors_of(std::size_t group) const {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < encoder_of.size(); ++p) {
    if (encoder_of[p] == group) out.push_back(p);
  }
  return out;
}

std::uint64_t ModelBundle::fingerprint() const {
  std::uint64_t h = fnv1a(bundle_config_text(*this));
  for (const Encoder& e : encoders) {
    for (const auto& [name, m] : e.tensors()) {
      h = fnv1a(name, h);
      h = fnv1a_bytes(m->data(), sizeof(float) * static_cast<std::size_t>(m->size()), h);
    }
  }
  for (const auto& p : predictors) {
    for (const auto& m : p.matrices) {
      h = fnv1a_bytes(m.data(), sizeof(float) * static_cast<std::size_t>(m.size()), h);
    }
  }
  return h;
}

void ModelBundle::validate() const {
  if (grid.subpatch_side != encoder_config.input_side) {
    throw ConfigError("grid sub-patch side " + std::to_string(grid.subpatch_side) +
                      " differs from encoder input side " + std::to_string(encoder_config.input_side));
  }
  if (predictors.size() != encoder_of.size() || predictors.size() != train_config.directions.size()) {
    throw ConfigError("bundle directions do not match the training configuration");
  }
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    if (predictors[p].direction != train_config.directions[p]) {
      throw ConfigError("bundle direction order differs from the training configuration");
    }
    if (encoder_of[p] >= encoders.size()) throw ConfigError("predictor refers to a missing encoder");
    if (predictors[p].offsets != train_config.offsets) throw ConfigError("predictor offsets differ");
  }
  const std::size_t expected = train_config.share_encoder ? 1 : predictors.size();
  if (encoders.size() != expected) throw ConfigError("unexpected number of encoders");
}

Trainer::Trainer(const DatasetSplit& split, const GridSpec& grid, const EncoderConfig& encoder,
                 const TrainConfig& config)
    : layout_(plan_grid(grid)) {
  cpcad::validate(encoder);
  if (grid.subpatch_side != encoder.input_side) {
    throw ConfigError("encoder input side must equal the sub-patch side");
  }
  cpcad::validate(config, layout_);
  check_samples(split);

  ModelBundle& b = state_.bundle;
  b.class_name = split.class_name;
  b.grid = grid;
  b.encoder_config = encoder;
  b.train_config = config;
  const std::size_t n_groups = config.share_encoder ? 1 : config.directions.size();
  for (std::size_t g = 0; g < n_groups; ++g) {
    b.encoders.emplace_back(encoder, derive_seed(config.seed, 0xe7c, g));
  }
  for (std::size_t p = 0; p < config.directions.size(); ++p) {
    Rng rng(derive_seed(config.seed, 0x9ed, p));
    b.predictors.push_back(DirectionalPredictor<float>::initialized(
        config.directions[p], config.offsets, encoder.embedding_dim, rng));
    b.encoder_of.push_back(config.share_encoder ? 0 : p);
  }
  nn::Adam::Options options{static_cast<float>(config.learning_rate),
                            static_cast<float>(config.beta1), static_cast<float>(config.beta2),
                            static_cast<float>(config.adam_epsilon)};
  predictor_grads_.resize(b.predictors.size());
  for (std::size_t p = 0; p < b.predictors.size(); ++p) {
    for (const auto& m : b.predictors[p].matrices) {
      predictor_grads_[p].push_back(Eigen::MatrixXf::Zero(m.rows(), m.cols()));
    }
  }
  for (std::size_t g = 0; g < n_groups; ++g) state_.optimizers.emplace_back(options, group_params(g));
  global_steps_.assign(n_groups, 0);
}

Trainer::Trainer(const DatasetSplit& split, TrainingState resumed) : state_(std::move(resumed)) {
  ModelBundle& b = state_.bundle;
  b.validate();
  layout_ = plan_grid(b.grid);
  cpcad::validate(b.train_config, layout_);
  check_samples(split);
  predictor_grads_.resize(b.predictors.size());
  for (std::size_t p = 0; p < b.predictors.size(); ++p) {
    for (const auto& m : b.predictors[p].matrices) {
      predictor_grads_[p].push_back(Eigen::MatrixXf::Zero(m.rows(), m.cols()));
    }
  }
  if (state_.optimizers.size() != b.encoders.size()) {
    throw CheckpointFormatError("optimizer state does not match the number of encoders");
  }
  for (const nn::Adam& adam : state_.optimizers) global_steps_.push_back(adam.steps());
}

void Trainer::check_samples(const DatasetSplit& split) {
  if (split.train.empty()) throw ConfigError("training set is empty");
  train_.clear();
  for (const ImageSample& s : split.train) {
    if (s.partition != Partition::train || s.source_id.starts_with("test/")) {
      throw ContaminationError("test sample '" + s.source_id + "' passed to training");
    }
    if (s.label != Label::normal) throw ConfigError("training sample '" + s.source_id + "' is not normal");
    train_.push_back(s);
  }
}

std::vector<nn::Param> Trainer::group_params(std::size_t group) {
  ModelBundle& b = state_.bundle;
  std::vector<nn::Param> params = b.encoders[group].parameters();
  for (std::size_t p : b.predictors_of(group)) {
    auto& pred = b.predictors[p];
    for (std::size_t i = 0; i < pred.matrices.size(); ++i) {
      params.push_back({"predictor/" + std::string(to_string(pred.direction)) + "/k" +
                            std::to_string(pred.offsets[i]),
                        &pred.matrices[i], &predictor_grads_[p][i]});
    }
  }
  return params;
}

double Trainer::objective(std::size_t group, const SubpatchBlocks& blocks, const Eigen::MatrixXf& z,
                          Rng& rng, Eigen::MatrixXf* dz) {
  const ModelBundle& b = state_.bundle;
  const auto negatives = static_cast<std::size_t>(b.train_config.negatives);
  const int s = layout_.subpatches_per_patch_axis;
  const std::size_t n = blocks.count();
  const auto per_image = static_cast<std::size_t>(layout_.blocks_per_image());
  const std::vector<std::size_t> preds = b.predictors_of(group);

  std::size_t pair_count = 0;
  for (std::size_t p : preds) {
    for (int k : b.predictors[p].offsets) {
      pair_count += directional_pairs(s, b.predictors[p].direction, k).size();
    }
  }
  pair_count *= blocks.images() * static_cast<std::size_t>(layout_.patches());
  const float scale = 1.0f / static_cast<float>(pair_count);

  const Eigen::Index d = z.rows();
  Eigen::MatrixXf neg(d, static_cast<Eigen::Index>(negatives));
  Eigen::VectorXf d_ctx(d), d_tgt(d);
  Eigen::MatrixXf d_neg(d, static_cast<Eigen::Index>(negatives));
  double total = 0.0;
  for (std::size_t image = 0; image < blocks.images(); ++image) {
    for (int pr = 0; pr < layout_.patches_per_axis; ++pr) {
      for (int pc = 0; pc < layout_.patches_per_axis; ++pc) {
        for (std::size_t p : preds) {
          const auto& pred = b.predictors[p];
          for (std::size_t slot = 0; slot < pred.offsets.size(); ++slot) {
            const Eigen::MatrixXf& w = pred.matrices[slot];
            for (const auto& [ctx, tgt] : directional_pairs(s, pred.direction, pred.offsets[slot])) {
              const auto ci = static_cast<Eigen::Index>(image * per_image +
                                                        layout_.block_index(pr, pc, ctx.row, ctx.col));
              const auto ti = static_cast<Eigen::Index>(image * per_image +
                                                        layout_.block_index(pr, pc, tgt.row, tgt.col));
              const auto picked = sample_negative_indices(n, static_cast<std::size_t>(ti), negatives, rng);
              for (std::size_t j = 0; j < picked.size(); ++j) {
                neg.col(static_cast<Eigen::Index>(j)) = z.col(static_cast<Eigen::Index>(picked[j]));
              }
              if (dz == nullptr) {
                total += detail::infonce_kernel<float>(z.col(ci), z.col(ti), neg, w, scale, nullptr,
                                                       nullptr, nullptr, nullptr);
                continue;
              }
              d_ctx.setZero();
              d_tgt.setZero();
              d_neg.setZero();
              total += detail::infonce_kernel<float>(z.col(ci), z.col(ti), neg, w, scale, &d_ctx,
                                                     &d_tgt, &d_neg, &predictor_grads_[p][slot]);
              dz->col(ci) += d_ctx;
              dz->col(ti) += d_tgt;
              for (std::size_t j = 0; j < picked.size(); ++j) {
                dz->col(static_cast<Eigen::Index>(picked[j])) += d_neg.col(static_cast<Eigen::Index>(j));
              }
            }
          }
        }
      }
    }
  }
  return total / static_cast<double>(pair_count);
}

double Trainer::step(std::size_t group, std::span<const Image> images, Rng& rng) {
  SubpatchBlocks blocks(layout_);
  for (const Image& img : images) blocks.append(img);
  Encoder& encoder = state_.bundle.encoders[group];
  const std::vector<nn::Param> params = group_params(group);
  nn::zero_grads(params);

  const std::size_t n = blocks.count();
  const std::size_t area = blocks.block_size();
  const auto micro = static_cast<std::size_t>(state_.bundle.train_config.micro_batch);
  const bool chunked = micro > 0 && micro < n;
  Eigen::MatrixXf z(encoder.dim(), static_cast<Eigen::Index>(n));
  Encoder::Tape tape;
  if (!chunked) {
    z = encoder.forward(blocks.pixels(), nn::Pass::training(), &tape);
  } else {
    for (std::size_t start = 0; start < n; start += micro) {
      const std::size_t len = std::min(micro, n - start);
      z.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) =
          encoder.forward(blocks.pixels().subspan(start * area, len * area), {true, true, false},
                          nullptr);
    }
  }

  Eigen::MatrixXf dz = Eigen::MatrixXf::Zero(z.rows(), z.cols());
  const double loss = objective(group, blocks, z, rng, &dz);
  const std::int64_t step_index = global_steps_[group];
  if (!std::isfinite(loss)) {
    throw DivergenceError(static_cast<std::size_t>(step_index), "non-finite InfoNCE loss");
  }

  if (!chunked) {
    encoder.backward(tape, dz);
  } else {
    for (std::size_t start = 0; start < n; start += micro) {
      const std::size_t len = std::min(micro, n - start);
      // Same chunk boundaries as the first pass, so the recomputed
      // activations equal the ones that produced z.
      encoder.forward(blocks.pixels().subspan(start * area, len * area), {true, false, true}, &tape);
      encoder.backward(tape, dz.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)));
    }
  }
  state_.optimizers[group].step(params);
  ++global_steps_[group];
  return loss;
}

double Trainer::evaluate_loss(std::size_t group, std::span<const Image> images, Rng& rng) {
  SubpatchBlocks blocks(layout_);
  for (const Image& img : images) blocks.append(img);
  // Batch statistics without touching running averages or caches.
  Encoder copy = state_.bundle.encoders[group];
  const std::size_t n = blocks.count();
  const std::size_t area = blocks.block_size();
  const auto micro = static_cast<std::size_t>(state_.bundle.train_config.micro_batch);
  const std::size_t chunk = micro > 0 ? micro : n;
  Eigen::MatrixXf z(copy.dim(), static_cast<Eigen::Index>(n));
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    z.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) =
        copy.forward(blocks.pixels().subspan(start * area, len * area), {true, false, false}, nullptr);
  }
  return objective(group, blocks, z, rng, nullptr);
}

double Trainer::epoch_for_group(std::size_t group, int epoch) {
  const TrainConfig& cfg = state_.bundle.train_config;
  Rng rng(derive_seed(cfg.seed, 0xe90c, group, static_cast<std::uint64_t>(epoch)));
  std::vector<std::size_t> order(train_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);
  double sum = 0.0;
  std::size_t steps = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch) {
    std::vector<Image> images;
    for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) {
      const ImageSample& s = train_[order[i]];
      images.push_back(cfg.augment ? augment_train(s, rng).pixels : s.pixels);
    }
    sum += step(group, images, rng);
    ++steps;
  }
  return sum / static_cast<double>(steps);
}

std::vector<double> Trainer::run_epoch() {
  const int epoch = state_.epochs_completed;
  std::vector<double> losses(groups(), 0.0);
  const auto threads = static_cast<std::size_t>(state_.bundle.train_config.threads);
  if (threads <= 1 || groups() == 1) {
    for (std::size_t g = 0; g < groups(); ++g) losses[g] = epoch_for_group(g, epoch);
  } else {
    // Groups own disjoint weights, so they can run side by side.
    std::vector<std::exception_ptr> errors(groups());
    for (std::size_t first = 0; first < groups(); first += threads) {
      std::vector<std::thread> pool;
      for (std::size_t g = first; g < std::min(groups(), first + threads); ++g) {
        pool.emplace_back([&, g] {
          try {
            losses[g] = epoch_for_group(g, epoch);
          } catch (...) {
            errors[g] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  ++state_.epochs_completed;
  state_.loss_history.push_back(losses);
  return losses;
}

ModelBundle Trainer::run(const std::function<void(const TrainingState&)>& on_epoch) {
  while (!done()) {
    run_epoch();
    if (on_epoch) on_epoch(state_);
  }
  return state_.bundle;
}

ModelBundle train_class(const DatasetSplit& split, const GridSpec& grid, const EncoderConfig& encoder,
                        const TrainConfig& config) {
  Trainer trainer(split, grid, encoder, config);
  return trainer.run();
}

}  // namespace cpcad
