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

#ifndef CPCAD_NN_HPP_
#define CPCAD_NN_HPP_

// Minimal CPU layers with hand-written backward passes. Activations are
// stored channel-major: a (channels x batch*height*width) matrix whose
// column index is (b*height + y)*width + x.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpcad/rng.hpp"

namespace cpcad::nn {

using Matrix = Eigen::MatrixXf;

struct Activation {
  Matrix data;
  int batch = 0;
  int height = 0;
  int width = 0;

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index column(int b, int y, int x) const {
    return (static_cast<Eigen::Index>(b) * height + y) * width + x;
  }
};

// A trainable tensor and its gradient accumulator. Vectors are n x 1.
struct Param {
  std::string name;
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
};

// A persisted non-trainable tensor (normalization running statistics).
struct Buffer {
  std::string name;
  Matrix* value = nullptr;
};

// How a forward pass treats normalization and caching.
struct Pass {
  bool batch_stats = false;     // normalize with batch statistics
  bool update_running = false;  // fold batch statistics into running averages
  bool cache = false;           // keep what backward needs

  static Pass inference() { return {}; }
  static Pass training() { return {true, true, true}; }
};

class Conv2d {
 public:
  struct Cache {
    Activation input;
  };

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias,
         Rng& rng);

  Activation forward(const Activation& x, Cache* cache) const;
  // Accumulates parameter gradients; returns dL/dx unless `need_input_grad`
  // is false, in which case the returned activation is empty.
  Activation backward(const Cache& cache, const Activation& dy, bool need_input_grad);

  void collect(const std::string& prefix, std::vector<Param>& params);
  std::size_t parameter_count() const;

  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }

 private:
  void im2col(const Activation& x, int out_h, int out_w, Matrix& cols) const;
  void col2im(const Matrix& cols, int out_h, int out_w, Activation& dx) const;

  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, padding_ = 0;
  bool has_bias_ = false;
  Matrix weight_;  // out x (kernel*kernel*in), column order (ky, kx, c)
  Matrix bias_;
  Matrix weight_grad_;
  Matrix bias_grad_;
};

struct BatchStats {
  Eigen::VectorXf mean;
  Eigen::VectorXf var;
  Eigen::Index count = 0;
};

class BatchNorm2d {
 public:
  struct Cache {
    Matrix normalized;
    Eigen::VectorXf inv_std;
  };

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  // Batch statistics, when used and requested, are appended to `stats`.
  Activation forward(const Activation& x, const Pass& pass, Cache* cache,
                     std::vector<BatchStats>* stats) const;
  Activation backward(const Cache& cache, const Activation& dy);
  void update_running(const BatchStats& stats);

  void collect(const std::string& prefix, std::vector<Param>& params,
               std::vector<Buffer>& buffers);
  std::size_t parameter_count() const { return static_cast<std::size_t>(2 * gamma_.rows()); }

  static constexpr float kMomentum = 0.1f;
  static constexpr float kEps = 1e-5f;

 private:
  Matrix gamma_, beta_;
  Matrix running_mean_, running_var_;
  Matrix gamma_grad_, beta_grad_;
};

// In-place ReLU; the cache records the positive mask.
struct ReLU {
  using Cache = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
  static void forward(Activation& x, Cache* cache);
  static void backward(const Cache& cache, Activation& dy);
};

class MaxPool2d {
 public:
  struct Cache {
    std::vector<Eigen::Index> argmax;  // input column*channels + channel
    int in_height = 0, in_width = 0;
  };

  MaxPool2d(int kernel = 3, int stride = 2, int padding = 1)
      : kernel_(kernel), stride_(stride), padding_(padding) {}

  Activation forward(const Activation& x, Cache* cache) const;
  Activation backward(const Cache& cache, const Activation& dy) const;

 private:
  int kernel_, stride_, padding_;
};

// Mean over all spatial positions: (C x B*H*W) -> (C x B).
Matrix spatial_mean(const Activation& x);
Activation spatial_mean_backward(const Matrix& dz, int height, int width);

// Adam with bias correction. One instance owns the moments of one parameter
// list; the list order must be stable between steps.
class Adam {
 public:
  struct Options {
    float learning_rate = 1.5e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
  };

  Adam() = default;
  Adam(Options options, const std::vector<Param>& params);

  void step(const std::vector<Param>& params);

  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  Options options_;
  std::int64_t steps_ = 0;
  std::vector<Matrix> m_, v_;
};

void zero_grads(const std::vector<Param>& params);

}  // namespace cpcad::nn

#endif  // CPCAD_NN_HPP_
