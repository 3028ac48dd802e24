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

// Small configurations shared by the scoring, trainer and bundle tests.

#ifndef CPCAD_TESTS_FIXTURES_HPP_
#define CPCAD_TESTS_FIXTURES_HPP_

#include "cpcad/dataset.hpp"
#include "cpcad/trainer.hpp"

namespace cpcad::testing {

// 64-side images, 3x3 patches of 3x3 sub-patches on a 7x7 lattice.
inline GridSpec tiny_grid() { return {64, 32, 16, 16, 8}; }

inline EncoderConfig tiny_encoder() { return {Backbone::small_cnn, 16, 16}; }

inline TrainConfig tiny_train(int epochs = 1) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  c.offsets = {1, 2};
  c.seed = 5;
  return c;
}

inline DatasetSplit tiny_split(int n_train = 4) {
  SynthDefectConfig c;
  c.n_train = n_train;
  c.n_test_normal = 2;
  c.n_test_anomalous = 2;
  c.seed = 3;
  return generate_synthetic(c, 64);
}

// Trained for `epochs` epochs (0 leaves the seeded initialization).
inline ModelBundle tiny_bundle(int epochs = 0, const TrainConfig& base = tiny_train()) {
  TrainConfig c = base;
  c.epochs = std::max(epochs, 1);
  Trainer t(tiny_split(), tiny_grid(), tiny_encoder(), c);
  if (epochs > 0) return t.run();
  return t.state().bundle;
}

}  // namespace cpcad::testing

#endif  // CPCAD_TESTS_FIXTURES_HPP_
