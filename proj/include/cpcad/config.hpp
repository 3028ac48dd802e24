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

#ifndef CPCAD_CONFIG_HPP_
#define CPCAD_CONFIG_HPP_

// Sectioned key = value run configuration. The same text format is embedded
// in checkpoint bundles and copied next to every artifact.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "cpcad/dataset.hpp"
#include "cpcad/encoder.hpp"
#include "cpcad/geometry.hpp"
#include "cpcad/image.hpp"
#include "cpcad/scoring.hpp"
#include "cpcad/trainer.hpp"

namespace cpcad {

struct DatasetSection {
  // "mvtec" reads root/class_name; "synthetic" renders `synth` in memory.
  std::string source = "synthetic";
  std::string root;
  std::string class_name = "synthetic";
  Interpolation interpolation = Interpolation::bilinear;
  SynthDefectConfig synth;
};

struct RunConfig {
  DatasetSection dataset;
  GridSpec grid;
  EncoderConfig encoder;
  TrainConfig train;
  ScoringParams scoring;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
};

// Parses INI text. `overrides` are "section.key=value" strings applied on
// top. Unknown sections or keys and malformed values raise ConfigError; the
// result is validated (see validate below).
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

// Resolved configuration as INI text; parse_run_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& config);

// Cross-field checks: grid tiling (GeometryError), encoder, training and
// scoring values, sub-patch side == encoder input side, max(K) < sub-patches
// per patch axis (ConfigError / GeometryError).
void validate(const RunConfig& config);

// Config sections of a checkpoint bundle: [bundle], [grid], [encoder],
// [train]. read_bundle_tree fills the non-weight fields of `bundle` and
// throws CheckpointFormatError on missing or malformed entries.
boost::property_tree::ptree bundle_tree(const ModelBundle& bundle);
void read_bundle_tree(const boost::property_tree::ptree& tree, ModelBundle& bundle);
std::string bundle_config_text(const ModelBundle& bundle);

std::string write_ini(const boost::property_tree::ptree& tree);
boost::property_tree::ptree read_ini(const std::string& text);

// Seeds propagated from RunConfig::seed.
SynthDefectConfig synth_config(const RunConfig& config);
TrainConfig train_config(const RunConfig& config);

// Comma-separated list helpers shared with the CLI.
std::vector<int> parse_int_list(const std::string& text);
std::string join(const std::vector<int>& values);

}  // namespace cpcad

#endif  // CPCAD_CONFIG_HPP_
