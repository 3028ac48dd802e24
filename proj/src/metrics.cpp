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

#include "cpcad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "cpcad/error.hpp"

namespace cpcad {
namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError(std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) + " labels");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ShapeError("non-finite score");
  }
}

// Sum over positives of 2 * #(neg < p) + #(neg == p).
double twice_wins(std::vector<double>& pos, std::vector<double>& neg) {
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double p : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    wins += 2.0 * static_cast<double>(lo - neg.begin()) + static_cast<double>(hi - lo);
  }
  return wins;
}

double auroc_split(std::vector<double>& pos, std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) {
    throw DegenerateLabelsError("AUROC needs both classes, got " + std::to_string(pos.size()) +
                                " positive and " + std::to_string(neg.size()) + " negative");
  }
  return twice_wins(pos, neg) / (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

void check_pair(const Heatmap& h, const Mask& m) {
  if (h.rows() != m.rows() || h.cols() != m.cols()) {
    throw ShapeError("heatmap " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                     " vs mask " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  if (!h.allFinite()) throw ShapeError("non-finite heatmap value");
}

void split_pixels(const Heatmap& h, const Mask& m, std::vector<double>& pos, std::vector<double>& neg) {
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    (m.data()[i] != 0 ? pos : neg).push_back(h.data()[i]);
  }
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  return auroc_split(pos, neg);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateLabelsError("ROC curve needs both classes");

  RocCurve c;
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  c.fpr.push_back(0.0);
  c.tpr.push_back(0.0);
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] == 1 ? tp : fp) += 1.0;
    c.thresholds.push_back(t);
    c.fpr.push_back(fp / n_neg);
    c.tpr.push_back(tp / n_pos);
  }
  return c;
}

double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
  }
  return area;
}

double pixel_auroc(std::span<const Heatmap> heatmaps, std::span<const Mask> masks, PixelAveraging averaging) {
  if (heatmaps.size() != masks.size()) {
    throw ShapeError(std::to_string(heatmaps.size()) + " heatmaps for " + std::to_string(masks.size()) + " masks");
  }
  for (std::size_t i = 0; i < heatmaps.size(); ++i) check_pair(heatmaps[i], masks[i]);
  if (averaging == PixelAveraging::pooled) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < heatmaps.size(); ++i) split_pixels(heatmaps[i], masks[i], pos, neg);
    return auroc_split(pos, neg);
  }
  double sum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < heatmaps.size(); ++i) {
    std::vector<double> pos, neg;
    split_pixels(heatmaps[i], masks[i], pos, neg);
    if (pos.empty() || neg.empty()) continue;
    sum += auroc_split(pos, neg);
    ++used;
  }
  if (used == 0) throw DegenerateLabelsError("no mask holds both defect and background pixels");
  return sum / used;
}

bool is_texture_class(const std::string& name) {
  static const char* const kTextures[] = {"carpet", "grid", "leather", "tile", "wood"};
  for (const char* t : kTextures) {
    if (name == t) return true;
  }
  return name.starts_with("synth");
}

std::string metrics_json(const std::vector<ClassMetrics>& classes, PixelAveraging averaging) {
  nlohmann::json out;
  out["pixel_averaging"] = averaging == PixelAveraging::pooled ? "pooled" : "per_image_mean";
  nlohmann::json per_class = nlohmann::json::object();
  struct Acc {
    double image = 0, pixel = 0;
    int n = 0, n_pixel = 0;
  } all, texture, object;
  for (const ClassMetrics& m : classes) {
    nlohmann::json entry{{"image_auroc", m.image_auroc}, {"n_normal", m.n_normal}, {"n_anomalous", m.n_anomalous}};
    entry["pixel_auroc"] = m.pixel_auroc ? nlohmann::json(*m.pixel_auroc) : nlohmann::json(nullptr);
    entry["kind"] = is_texture_class(m.class_name) ? "texture" : "object";
    per_class[m.class_name] = entry;
    for (Acc* a : {&all, is_texture_class(m.class_name) ? &texture : &object}) {
      a->image += m.image_auroc;
      ++a->n;
      if (m.pixel_auroc) {
        a->pixel += *m.pixel_auroc;
        ++a->n_pixel;
      }
    }
  }
  out["classes"] = per_class;
  auto rollup = [](const Acc& a) {
    nlohmann::json j{{"classes", a.n}};
    j["image_auroc"] = a.n ? nlohmann::json(a.image / a.n) : nlohmann::json(nullptr);
    j["pixel_auroc"] = a.n_pixel ? nlohmann::json(a.pixel / a.n_pixel) : nlohmann::json(nullptr);
    return j;
  };
  out["mean"] = rollup(all);
  out["texture_mean"] = rollup(texture);
  out["object_mean"] = rollup(object);
  return out.dump(2);
}

}  // namespace cpcad
