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

// Reference implementations used by the tests. Each one is written the
// slow, obvious way and shares no code with the library.

#ifndef CPCAD_TESTS_ORACLES_HPP_
#define CPCAD_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vector = std::vector<double>;
using Matrix = std::vector<Vector>;  // row-major, m[r][c]

// a^T W b with explicit loops.
inline long double bilinear(const Vector& a, const Matrix& w, const Vector& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) s += static_cast<long double>(a[i]) * w[i][j] * b[j];
  }
  return s;
}

// -log(exp(l_0) / sum_j exp(l_j)) computed directly, no max shift.
inline double infonce(const Vector& context, const Vector& target, const std::vector<Vector>& negatives,
                      const Matrix& w) {
  const long double pos = std::exp(bilinear(target, w, context));
  long double denom = pos;
  for (const Vector& n : negatives) denom += std::exp(bilinear(n, w, context));
  return static_cast<double>(-std::log(pos / denom));
}

// Fraction of (positive, negative) pairs ranked correctly, ties one half.
inline double pairwise_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      twice += scores[i] > scores[j] ? 2 : scores[i] == scores[j] ? 1 : 0;
      ++pairs;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

// Mean of the m largest values, by full sort.
inline double top_mean(std::vector<double> values, std::size_t m) {
  std::sort(values.begin(), values.end());
  double s = 0;
  for (std::size_t i = 0; i < m; ++i) s += values[values.size() - 1 - i];
  return s / static_cast<double>(m);
}

}  // namespace oracle

#endif  // CPCAD_TESTS_ORACLES_HPP_
