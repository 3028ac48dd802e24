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

#ifndef CPCAD_METRICS_HPP_
#define CPCAD_METRICS_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpcad/image.hpp"

namespace cpcad {

// Area under the ROC curve, with ties counted as one half. Label 1 is the
// positive class. Throws DegenerateLabelsError unless both classes occur and
// ShapeError on a length mismatch or a non-finite score.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct RocCurve {
  std::vector<double> thresholds;  // descending; first is +inf
  std::vector<double> fpr;
  std::vector<double> tpr;
};

// One point per distinct score, plus the (0, 0) origin.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(const RocCurve& curve);

enum class PixelAveraging { pooled, per_image_mean };

// Pixel-level AUROC over predicted heatmaps and ground-truth masks. `pooled`
// ranks every pixel of every image together; `per_image_mean` averages the
// AUROC of images whose mask holds both classes.
double pixel_auroc(std::span<const Heatmap> heatmaps, std::span<const Mask> masks,
                   PixelAveraging averaging = PixelAveraging::pooled);

// carpet, grid, leather, tile, wood and synthetic classes.
bool is_texture_class(const std::string& name);

struct ClassMetrics {
  std::string class_name;
  double image_auroc = 0.0;
  std::optional<double> pixel_auroc;
  int n_normal = 0;
  int n_anomalous = 0;
};

// JSON object with per-class entries and mean / texture / object rollups.
std::string metrics_json(const std::vector<ClassMetrics>& classes, PixelAveraging averaging);

}  // namespace cpcad

#endif  // CPCAD_METRICS_HPP_
