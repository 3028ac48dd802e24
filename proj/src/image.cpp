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

#include "cpcad/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cpcad/error.hpp"

namespace cpcad {
namespace {

cv::Mat decode(const std::filesystem::path& path) {
  cv::Mat raw;
  try {
    raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw ImageDecodeError(path.string() + ": " + e.what());
  }
  if (raw.empty()) throw ImageDecodeError("cannot decode " + path.string());
  double scale;
  switch (raw.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw ImageDecodeError("unsupported bit depth in " + path.string());
  }
  cv::Mat f;
  raw.convertTo(f, CV_32F, scale);
  return f;
}

Image luma(const cv::Mat& f) {
  Image out(f.rows, f.cols);
  const int ch = f.channels();
  for (int y = 0; y < f.rows; ++y) {
    const float* row = f.ptr<float>(y);
    for (int x = 0; x < f.cols; ++x) {
      const float* px = row + x * ch;
      if (ch == 1 || ch == 2) {
        out(y, x) = px[0];
      } else {
        // OpenCV channel order is B, G, R.
        out(y, x) = 0.114f * px[0] + 0.587f * px[1] + 0.299f * px[2];
      }
    }
  }
  return out.cwiseMax(0.0f).cwiseMin(1.0f);
}

void write(const std::filesystem::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    throw IOError(path.string() + ": " + e.what());
  }
  if (!ok) throw IOError("cannot write " + path.string());
}

}  // namespace

Interpolation parse_interpolation(const std::string& name) {
  if (name == "bilinear") return Interpolation::bilinear;
  if (name == "nearest") return Interpolation::nearest;
  if (name == "area") return Interpolation::area;
  throw ConfigError("unknown interpolation '" + name + "'");
}

std::string to_string(Interpolation interp) {
  switch (interp) {
    case Interpolation::bilinear: return "bilinear";
    case Interpolation::nearest: return "nearest";
    case Interpolation::area: return "area";
  }
  return "bilinear";
}

Image read_grayscale(const std::filesystem::path& path) {
  return luma(decode(path));
}

Mask read_mask(const std::filesystem::path& path) {
  const Image gray = luma(decode(path));
  return (gray > 0.5f).cast<std::uint8_t>();
}

Image resize_square(const Image& image, int side, Interpolation interp) {
  if (image.rows() == side && image.cols() == side) return image;
  cv::Mat src(static_cast<int>(image.rows()), static_cast<int>(image.cols()),
              CV_32F, const_cast<float*>(image.data()));
  cv::Mat dst;
  int flag = cv::INTER_LINEAR;
  if (interp == Interpolation::nearest) flag = cv::INTER_NEAREST;
  if (interp == Interpolation::area) flag = cv::INTER_AREA;
  cv::resize(src, dst, cv::Size(side, side), 0, 0, flag);
  Image out(side, side);
  for (int y = 0; y < side; ++y) {
    const float* row = dst.ptr<float>(y);
    for (int x = 0; x < side; ++x) out(y, x) = std::clamp(row[x], 0.0f, 1.0f);
  }
  return out;
}

Mask resize_mask(const Mask& mask, int side) {
  Image as_float = mask.cast<float>();
  Image resized = resize_square(as_float, side, Interpolation::nearest);
  return (resized > 0.5f).cast<std::uint8_t>();
}

void write_png8(const std::filesystem::path& path, const Image& image) {
  cv::Mat m(static_cast<int>(image.rows()), static_cast<int>(image.cols()), CV_8U);
  for (int y = 0; y < m.rows; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      row[x] = static_cast<std::uint8_t>(
          std::lround(std::clamp(image(y, x), 0.0f, 1.0f) * 255.0f));
    }
  }
  write(path, m);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat m(static_cast<int>(mask.rows()), static_cast<int>(mask.cols()), CV_8U);
  for (int y = 0; y < m.rows; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) row[x] = mask(y, x) ? 255 : 0;
  }
  write(path, m);
}

void write_png16(const std::filesystem::path& path, const Heatmap& values,
                 double lo, double hi) {
  cv::Mat m(static_cast<int>(values.rows()), static_cast<int>(values.cols()), CV_16U);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < m.rows; ++y) {
    auto* row = m.ptr<std::uint16_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      const double t = std::clamp((values(y, x) - lo) / span, 0.0, 1.0);
      row[x] = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    }
  }
  write(path, m);
}

}  // namespace cpcad
