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

#include "cpcad/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace cpcad::nn {

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding,
               bool bias, Rng& rng)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      has_bias_(bias) {
  const int fan_in = in_channels * kernel * kernel;
  const double bound = std::sqrt(6.0 / fan_in);  // Kaiming-uniform for ReLU
  weight_.resize(out_channels, fan_in);
  for (Eigen::Index c = 0; c < weight_.cols(); ++c) {
    for (Eigen::Index r = 0; r < weight_.rows(); ++r) {
      weight_(r, c) = static_cast<float>(uniform(rng, -bound, bound));
    }
  }
  weight_grad_ = Matrix::Zero(weight_.rows(), weight_.cols());
  if (has_bias_) {
    bias_ = Matrix::Zero(out_channels, 1);
    bias_grad_ = Matrix::Zero(out_channels, 1);
  }
}

void Conv2d::im2col(const Activation& x, int out_h, int out_w, Matrix& cols) const {
  const int c = in_;
  const Eigen::Index rows = static_cast<Eigen::Index>(kernel_) * kernel_ * c;
  cols.setZero(rows, static_cast<Eigen::Index>(x.batch) * out_h * out_w);
  const float* src = x.data.data();
  float* dst = cols.data();
  for (int b = 0; b < x.batch; ++b) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const Eigen::Index col = (static_cast<Eigen::Index>(b) * out_h + oy) * out_w + ox;
        float* out = dst + col * rows;
        for (int ky = 0; ky < kernel_; ++ky) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= x.height) continue;
          for (int kx = 0; kx < kernel_; ++kx) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix < 0 || ix >= x.width) continue;
            std::memcpy(out + (ky * kernel_ + kx) * c, src + x.column(b, iy, ix) * c,
                        sizeof(float) * c);
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const Matrix& cols, int out_h, int out_w, Activation& dx) const {
  const int c = in_;
  const Eigen::Index rows = cols.rows();
  dx.data.setZero(c, static_cast<Eigen::Index>(dx.batch) * dx.height * dx.width);
  const float* src = cols.data();
  float* dst = dx.data.data();
  for (int b = 0; b < dx.batch; ++b) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const Eigen::Index col = (static_cast<Eigen::Index>(b) * out_h + oy) * out_w + ox;
        const float* in = src + col * rows;
        for (int ky = 0; ky < kernel_; ++ky) {
          const int iy = oy * stride_ - padding_ + ky;
          if (iy < 0 || iy >= dx.height) continue;
          for (int kx = 0; kx < kernel_; ++kx) {
            const int ix = ox * stride_ - padding_ + kx;
            if (ix < 0 || ix >= dx.width) continue;
            float* out = dst + dx.column(b, iy, ix) * c;
            const float* g = in + (ky * kernel_ + kx) * c;
            for (int ch = 0; ch < c; ++ch) out[ch] += g[ch];
          }
        }
      }
    }
  }
}

Activation Conv2d::forward(const Activation& x, Cache* cache) const {
  const int oh = out_size(x.height);
  const int ow = out_size(x.width);
  Matrix cols;
  im2col(x, oh, ow, cols);
  Activation y;
  y.batch = x.batch;
  y.height = oh;
  y.width = ow;
  y.data.noalias() = weight_ * cols;
  if (has_bias_) y.data.colwise() += bias_.col(0);
  if (cache != nullptr) cache->input = x;
  return y;
}

Activation Conv2d::backward(const Cache& cache, const Activation& dy, bool need_input_grad) {
  const Activation& x = cache.input;
  Matrix cols;
  im2col(x, dy.height, dy.width, cols);
  weight_grad_.noalias() += dy.data * cols.transpose();
  if (has_bias_) bias_grad_ += dy.data.rowwise().sum();
  Activation dx;
  if (!need_input_grad) return dx;
  dx.batch = x.batch;
  dx.height = x.height;
  dx.width = x.width;
  cols.noalias() = weight_.transpose() * dy.data;
  col2im(cols, dy.height, dy.width, dx);
  return dx;
}

void Conv2d::collect(const std::string& prefix, std::vector<Param>& params) {
  params.push_back({prefix + "/weight", &weight_, &weight_grad_});
  if (has_bias_) params.push_back({prefix + "/bias", &bias_, &bias_grad_});
}

std::size_t Conv2d::parameter_count() const {
  return static_cast<std::size_t>(weight_.size() + (has_bias_ ? bias_.size() : 0));
}

BatchNorm2d::BatchNorm2d(int channels)
    : gamma_(Matrix::Ones(channels, 1)),
      beta_(Matrix::Zero(channels, 1)),
      running_mean_(Matrix::Zero(channels, 1)),
      running_var_(Matrix::Ones(channels, 1)),
      gamma_grad_(Matrix::Zero(channels, 1)),
      beta_grad_(Matrix::Zero(channels, 1)) {}

Activation BatchNorm2d::forward(const Activation& x, const Pass& pass, Cache* cache,
                                std::vector<BatchStats>* stats) const {
  Eigen::VectorXf mean, var;
  if (pass.batch_stats) {
    mean = x.data.rowwise().mean();
    var = (x.data.colwise() - mean).array().square().rowwise().mean().matrix();
    if (stats != nullptr) stats->push_back({mean, var, x.data.cols()});
  } else {
    mean = running_mean_.col(0);
    var = running_var_.col(0);
  }
  const Eigen::VectorXf inv_std = (var.array() + kEps).rsqrt().matrix();
  Activation y;
  y.batch = x.batch;
  y.height = x.height;
  y.width = x.width;
  y.data = (x.data.colwise() - mean);
  y.data = inv_std.asDiagonal() * y.data;
  if (cache != nullptr) {
    cache->normalized = y.data;
    cache->inv_std = inv_std;
  }
  y.data = gamma_.col(0).asDiagonal() * y.data;
  y.data.colwise() += beta_.col(0);
  return y;
}

Activation BatchNorm2d::backward(const Cache& cache, const Activation& dy) {
  const Matrix& xhat = cache.normalized;
  const float n = static_cast<float>(dy.data.cols());
  gamma_grad_ += dy.data.cwiseProduct(xhat).rowwise().sum();
  beta_grad_ += dy.data.rowwise().sum();
  const Matrix dxhat = gamma_.col(0).asDiagonal() * dy.data;
  const Eigen::VectorXf sum_dxhat = dxhat.rowwise().sum();
  const Eigen::VectorXf sum_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().sum();
  Activation dx;
  dx.batch = dy.batch;
  dx.height = dy.height;
  dx.width = dy.width;
  dx.data = n * dxhat;
  dx.data.colwise() -= sum_dxhat;
  dx.data -= sum_dxhat_xhat.asDiagonal() * xhat;
  dx.data = (cache.inv_std / n).asDiagonal() * dx.data;
  return dx;
}

void BatchNorm2d::update_running(const BatchStats& stats) {
  const Eigen::Index n = stats.count;
  const float unbias = n > 1 ? static_cast<float>(n) / static_cast<float>(n - 1) : 1.0f;
  running_mean_.col(0) = (1.0f - kMomentum) * running_mean_.col(0) + kMomentum * stats.mean;
  running_var_.col(0) =
      (1.0f - kMomentum) * running_var_.col(0) + kMomentum * unbias * stats.var;
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<Param>& params,
                          std::vector<Buffer>& buffers) {
  params.push_back({prefix + "/gamma", &gamma_, &gamma_grad_});
  params.push_back({prefix + "/beta", &beta_, &beta_grad_});
  buffers.push_back({prefix + "/running_mean", &running_mean_});
  buffers.push_back({prefix + "/running_var", &running_var_});
}

void ReLU::forward(Activation& x, Cache* cache) {
  if (cache != nullptr) *cache = x.data.array() > 0.0f;
  x.data = x.data.cwiseMax(0.0f);
}

void ReLU::backward(const Cache& cache, Activation& dy) {
  dy.data = cache.select(dy.data.array(), 0.0f).matrix();
}

Activation MaxPool2d::forward(const Activation& x, Cache* cache) const {
  const int c = x.channels();
  Activation y;
  y.batch = x.batch;
  y.height = (x.height + 2 * padding_ - kernel_) / stride_ + 1;
  y.width = (x.width + 2 * padding_ - kernel_) / stride_ + 1;
  y.data.resize(c, static_cast<Eigen::Index>(y.batch) * y.height * y.width);
  if (cache != nullptr) {
    cache->argmax.assign(static_cast<std::size_t>(y.data.size()), 0);
    cache->in_height = x.height;
    cache->in_width = x.width;
  }
  for (int b = 0; b < x.batch; ++b) {
    for (int oy = 0; oy < y.height; ++oy) {
      for (int ox = 0; ox < y.width; ++ox) {
        const Eigen::Index ocol = y.column(b, oy, ox);
        for (int ch = 0; ch < c; ++ch) {
          float best = -std::numeric_limits<float>::infinity();
          Eigen::Index best_at = 0;
          for (int ky = 0; ky < kernel_; ++ky) {
            const int iy = oy * stride_ - padding_ + ky;
            if (iy < 0 || iy >= x.height) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              const int ix = ox * stride_ - padding_ + kx;
              if (ix < 0 || ix >= x.width) continue;
              const Eigen::Index at = x.column(b, iy, ix) * c + ch;
              const float v = x.data.data()[at];
              if (v > best) {
                best = v;
                best_at = at;
              }
            }
          }
          y.data(ch, ocol) = best;
          if (cache != nullptr) cache->argmax[static_cast<std::size_t>(ocol * c + ch)] = best_at;
        }
      }
    }
  }
  return y;
}

Activation MaxPool2d::backward(const Cache& cache, const Activation& dy) const {
  Activation dx;
  dx.batch = dy.batch;
  dx.height = cache.in_height;
  dx.width = cache.in_width;
  dx.data = Matrix::Zero(dy.data.rows(), static_cast<Eigen::Index>(dx.batch) * dx.height * dx.width);
  const float* g = dy.data.data();
  float* out = dx.data.data();
  for (std::size_t i = 0; i < cache.argmax.size(); ++i) out[cache.argmax[i]] += g[i];
  return dx;
}

Matrix spatial_mean(const Activation& x) {
  const Eigen::Index area = static_cast<Eigen::Index>(x.height) * x.width;
  Matrix z(x.data.rows(), x.batch);
  for (int b = 0; b < x.batch; ++b) {
    z.col(b) = x.data.middleCols(b * area, area).rowwise().mean();
  }
  return z;
}

Activation spatial_mean_backward(const Matrix& dz, int height, int width) {
  const Eigen::Index area = static_cast<Eigen::Index>(height) * width;
  Activation dx;
  dx.batch = static_cast<int>(dz.cols());
  dx.height = height;
  dx.width = width;
  dx.data.resize(dz.rows(), dz.cols() * area);
  for (Eigen::Index b = 0; b < dz.cols(); ++b) {
    dx.data.middleCols(b * area, area) = (dz.col(b) / static_cast<float>(area)).replicate(1, area);
  }
  return dx;
}

Adam::Adam(Options options, const std::vector<Param>& params) : options_(options) {
  for (const Param& p : params) {
    m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
}

void Adam::step(const std::vector<Param>& params) {
  ++steps_;
  const double c1 = 1.0 - std::pow(static_cast<double>(options_.beta1), static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(static_cast<double>(options_.beta2), static_cast<double>(steps_));
  const float step_size = static_cast<float>(options_.learning_rate / c1);
  const float v_scale = static_cast<float>(1.0 / std::sqrt(c2));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = *params[i].grad;
    m_[i] = options_.beta1 * m_[i] + (1.0f - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0f - options_.beta2) * g.cwiseProduct(g);
    params[i].value->array() -=
        step_size * m_[i].array() / (v_[i].array().sqrt() * v_scale + options_.epsilon);
  }
}

void zero_grads(const std::vector<Param>& params) {
  for (const Param& p : params) p.grad->setZero();
}

}  // namespace cpcad::nn
