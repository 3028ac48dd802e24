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

#ifndef CPCAD_CONTRASTIVE_HPP_
#define CPCAD_CONTRASTIVE_HPP_

// InfoNCE over bilinear logits z_a^T W_k z_b, without an autoregressive
// context network: the context embedding is the raw encoder output of the
// neighbouring sub-patch.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cpcad/error.hpp"
#include "cpcad/geometry.hpp"
#include "cpcad/rng.hpp"

namespace cpcad {

// Where the context sits relative to the predicted target.
enum class Direction { from_above, from_below, from_left, from_right };

inline constexpr std::array<Direction, 4> kAllDirections = {
    Direction::from_above, Direction::from_below, Direction::from_left,
    Direction::from_right};

inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::from_above: return "from_above";
    case Direction::from_below: return "from_below";
    case Direction::from_left: return "from_left";
    case Direction::from_right: return "from_right";
  }
  return "from_above";
}

inline Direction parse_direction(std::string_view name) {
  for (Direction d : kAllDirections) {
    if (to_string(d) == name) return d;
  }
  if (name == "above") return Direction::from_above;
  if (name == "below") return Direction::from_below;
  if (name == "left") return Direction::from_left;
  if (name == "right") return Direction::from_right;
  throw ConfigError("unknown direction '" + std::string(name) + "'");
}

inline std::size_t direction_index(Direction d) { return static_cast<std::size_t>(d); }

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// The bilinear maps W_k of one prediction direction.
template <class Scalar>
struct DirectionalPredictor {
  Direction direction = Direction::from_above;
  std::vector<int> offsets;
  std::vector<Mat<Scalar>> matrices;  // parallel to offsets

  int dim() const { return matrices.empty() ? 0 : static_cast<int>(matrices.front().rows()); }

  bool has_offset(int k) const {
    return std::find(offsets.begin(), offsets.end(), k) != offsets.end();
  }

  std::size_t slot(int k) const {
    const auto it = std::find(offsets.begin(), offsets.end(), k);
    if (it == offsets.end()) {
      throw ConfigError("offset k=" + std::to_string(k) + " not trained for " +
                        std::string(to_string(direction)));
    }
    return static_cast<std::size_t>(it - offsets.begin());
  }

  const Mat<Scalar>& weight(int k) const { return matrices[slot(k)]; }
  Mat<Scalar>& weight(int k) { return matrices[slot(k)]; }

  // Entries uniform in [-1/sqrt(d), 1/sqrt(d)].
  static DirectionalPredictor initialized(Direction direction, std::vector<int> offsets,
                                          int dim, Rng& rng) {
    DirectionalPredictor p;
    p.direction = direction;
    p.offsets = std::move(offsets);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < p.offsets.size(); ++i) {
      Mat<Scalar> w(dim, dim);
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
          w(r, c) = static_cast<Scalar>(uniform(rng, -bound, bound));
        }
      }
      p.matrices.push_back(std::move(w));
    }
    return p;
  }
};

// z_a^T W z_b.
template <class Scalar>
Scalar bilinear_score(const Eigen::Ref<const Vec<Scalar>>& z_a,
                      const Eigen::Ref<const Vec<Scalar>>& z_b,
                      const Eigen::Ref<const Mat<Scalar>>& w) {
  if (w.rows() != z_a.size() || w.cols() != z_b.size()) {
    throw ShapeError("bilinear_score: W is " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + ", vectors have " +
                     std::to_string(z_a.size()) + " and " + std::to_string(z_b.size()));
  }
  return z_a.dot(w * z_b);
}

// Stable -log softmax(logits)[0]; logits[0] is the positive pair.
template <class Scalar>
Scalar infonce_from_logits(const Eigen::Ref<const Vec<Scalar>>& logits) {
  const Scalar peak = logits.maxCoeff();
  if (logits(0) == peak) {
    // log1p keeps precision when the loss is close to zero.
    return std::log1p((logits.tail(logits.size() - 1).array() - peak).exp().sum());
  }
  const Scalar lse = peak + std::log((logits.array() - peak).exp().sum());
  return std::max(lse - logits(0), Scalar(0));
}

template <class Scalar>
struct ContrastiveBatch {
  Vec<Scalar> context;               // z_t
  Vec<Scalar> target;                // z_{t+k}
  std::vector<Vec<Scalar>> negatives;  // z_j, N-1 of them
  int k = 1;
  Direction direction = Direction::from_above;
};

template <class Scalar>
struct InfoNceGradients {
  Scalar loss = 0;
  Vec<Scalar> d_context;
  Vec<Scalar> d_target;
  Mat<Scalar> d_negatives;  // one column per negative
  Mat<Scalar> d_weight;
};

namespace detail {

// Loss and (optionally) gradients for one positive plus the columns of
// `negatives`. Gradients are scaled by `scale` and added into the outputs.
template <class Scalar>
Scalar infonce_kernel(const Eigen::Ref<const Vec<Scalar>>& context,
                      const Eigen::Ref<const Vec<Scalar>>& target,
                      const Eigen::Ref<const Mat<Scalar>>& negatives,
                      const Eigen::Ref<const Mat<Scalar>>& w, Scalar scale,
                      Vec<Scalar>* d_context, Vec<Scalar>* d_target,
                      Mat<Scalar>* d_negatives, Mat<Scalar>* d_weight) {
  const Vec<Scalar> predicted = w * context;
  Vec<Scalar> logits(negatives.cols() + 1);
  logits(0) = target.dot(predicted);
  logits.tail(negatives.cols()).noalias() = negatives.transpose() * predicted;
  const Scalar loss = infonce_from_logits<Scalar>(logits);
  if (d_weight == nullptr) return loss;

  const Scalar peak = logits.maxCoeff();
  Vec<Scalar> g = (logits.array() - peak).exp().matrix();
  g /= g.sum();
  g(0) -= Scalar(1);
  g *= scale;

  Vec<Scalar> d_predicted = g(0) * target;
  d_predicted.noalias() += negatives * g.tail(negatives.cols());
  *d_target += g(0) * predicted;
  d_negatives->noalias() += predicted * g.tail(negatives.cols()).transpose();
  d_weight->noalias() += d_predicted * context.transpose();
  d_context->noalias() += w.transpose() * d_predicted;
  return loss;
}

template <class Scalar>
Mat<Scalar> stack_negatives(const std::vector<Vec<Scalar>>& negatives, Eigen::Index dim) {
  Mat<Scalar> m(dim, static_cast<Eigen::Index>(negatives.size()));
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    if (negatives[j].size() != dim) throw ShapeError("negative has wrong dimension");
    m.col(static_cast<Eigen::Index>(j)) = negatives[j];
  }
  return m;
}

template <class Scalar>
void check_batch(const ContrastiveBatch<Scalar>& batch, const Mat<Scalar>& w) {
  if (batch.negatives.empty()) throw ShapeError("InfoNCE needs at least one negative");
  const Eigen::Index d = batch.context.size();
  if (batch.target.size() != d || w.rows() != d || w.cols() != d) {
    throw ShapeError("InfoNCE: inconsistent embedding dimensions");
  }
}

}  // namespace detail

// -log( exp(s+) / (exp(s+) + sum_j exp(s_j)) ) with s = z^T W_k z_t.
template <class Scalar>
Scalar infonce_loss(const ContrastiveBatch<Scalar>& batch,
                    const DirectionalPredictor<Scalar>& predictor) {
  const Mat<Scalar>& w = predictor.weight(batch.k);
  detail::check_batch(batch, w);
  const Mat<Scalar> negatives = detail::stack_negatives(batch.negatives, batch.context.size());
  return detail::infonce_kernel<Scalar>(batch.context, batch.target, negatives, w, Scalar(1),
                                        nullptr, nullptr, nullptr, nullptr);
}

template <class Scalar>
InfoNceGradients<Scalar> infonce_gradients(const ContrastiveBatch<Scalar>& batch,
                                           const DirectionalPredictor<Scalar>& predictor) {
  const Mat<Scalar>& w = predictor.weight(batch.k);
  detail::check_batch(batch, w);
  const Eigen::Index d = batch.context.size();
  const Mat<Scalar> negatives = detail::stack_negatives(batch.negatives, d);
  InfoNceGradients<Scalar> out;
  out.d_context = Vec<Scalar>::Zero(d);
  out.d_target = Vec<Scalar>::Zero(d);
  out.d_negatives = Mat<Scalar>::Zero(d, negatives.cols());
  out.d_weight = Mat<Scalar>::Zero(d, d);
  out.loss = detail::infonce_kernel<Scalar>(batch.context, batch.target, negatives, w,
                                            Scalar(1), &out.d_context, &out.d_target,
                                            &out.d_negatives, &out.d_weight);
  return out;
}

// (context, target) pairs of one patch's sub-grid for offset k.
inline std::vector<std::pair<LocalIndex, LocalIndex>> directional_pairs(int side,
                                                                        Direction direction,
                                                                        int k) {
  if (k < 1) throw ConfigError("offset k must be >= 1, got " + std::to_string(k));
  if (k >= side) {
    throw GeometryError("offset k=" + std::to_string(k) + " does not fit a sub-grid of side " +
                        std::to_string(side));
  }
  std::vector<std::pair<LocalIndex, LocalIndex>> pairs;
  pairs.reserve(static_cast<std::size_t>((side - k) * side));
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      LocalIndex target{r, c};
      switch (direction) {
        case Direction::from_above: target.row += k; break;
        case Direction::from_below: target.row -= k; break;
        case Direction::from_left: target.col += k; break;
        case Direction::from_right: target.col -= k; break;
      }
      if (target.row < 0 || target.row >= side || target.col < 0 || target.col >= side) continue;
      pairs.emplace_back(LocalIndex{r, c}, target);
    }
  }
  return pairs;
}

// `count` distinct candidate indices from [0, candidates), never `exclude`.
inline std::vector<std::size_t> sample_negative_indices(std::size_t candidates,
                                                        std::size_t exclude, std::size_t count,
                                                        Rng& rng) {
  if (exclude >= candidates || candidates - 1 < count) {
    throw SamplingError("need " + std::to_string(count) + " negatives but only " +
                        std::to_string(candidates == 0 ? 0 : candidates - 1) +
                        " candidates remain");
  }
  std::vector<std::size_t> picked = sample_without_replacement(rng, candidates - 1, count);
  for (std::size_t& p : picked) {
    if (p >= exclude) ++p;
  }
  return picked;
}

// Train-time negatives: columns of `batch_embeddings` other than the target.
template <class Scalar>
std::vector<Vec<Scalar>> sample_negatives_train(const Mat<Scalar>& batch_embeddings,
                                                std::size_t exclude, std::size_t count,
                                                Rng& rng) {
  const auto picked = sample_negative_indices(
      static_cast<std::size_t>(batch_embeddings.cols()), exclude, count, rng);
  std::vector<Vec<Scalar>> out;
  out.reserve(picked.size());
  for (std::size_t p : picked) out.push_back(batch_embeddings.col(static_cast<Eigen::Index>(p)));
  return out;
}

}  // namespace cpcad

#endif  // CPCAD_CONTRASTIVE_HPP_
