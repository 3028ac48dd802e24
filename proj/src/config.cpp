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

#include "cpcad/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "cpcad/error.hpp"

namespace cpcad {
namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

long long parse_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_directions(const std::vector<Direction>& dirs) {
  std::string out;
  for (Direction d : dirs) {
    if (!out.empty()) out += ",";
    out += to_string(d);
  }
  return out;
}

// Visits every key of a ptree exactly once; leftovers are errors.
class SectionReader {
 public:
  SectionReader(const pt::ptree& tree, std::string section)
      : section_(std::move(section)) {
    if (auto child = tree.get_child_optional(section_)) {
      for (const auto& [key, value] : *child) entries_[key] = value.data();
    }
  }

  template <class Fn>
  void with(const std::string& key, Fn&& fn) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return;
    fn(section_ + "." + key, it->second);
    entries_.erase(it);
  }

  void integer(const std::string& key, int& out) {
    with(key, [&](const std::string& k, const std::string& v) { out = static_cast<int>(parse_integer(k, v)); });
  }
  void u64(const std::string& key, std::uint64_t& out) {
    with(key, [&](const std::string& k, const std::string& v) {
      const long long x = parse_integer(k, v);
      if (x < 0) throw ConfigError(k + ": must be non-negative");
      out = static_cast<std::uint64_t>(x);
    });
  }
  void size(const std::string& key, std::size_t& out) {
    std::uint64_t v = out;
    u64(key, v);
    out = static_cast<std::size_t>(v);
  }
  void real(const std::string& key, double& out) {
    with(key, [&](const std::string& k, const std::string& v) { out = parse_real(k, v); });
  }
  void boolean(const std::string& key, bool& out) {
    with(key, [&](const std::string& k, const std::string& v) { out = parse_bool(k, v); });
  }
  void text(const std::string& key, std::string& out) {
    with(key, [&](const std::string&, const std::string& v) { out = trim(v); });
  }

  void finish() const {
    if (!entries_.empty()) {
      throw ConfigError("unknown key '" + section_ + "." + entries_.begin()->first + "'");
    }
  }

 private:
  std::string section_;
  std::map<std::string, std::string> entries_;
};

void read_grid(SectionReader r, GridSpec& g) {
  r.integer("image_side", g.image_side);
  r.integer("patch_side", g.patch_side);
  r.integer("patch_stride", g.patch_stride);
  r.integer("subpatch_side", g.subpatch_side);
  r.integer("subpatch_stride", g.subpatch_stride);
  r.finish();
}

void read_encoder(SectionReader r, EncoderConfig& e) {
  r.with("backbone", [&](const std::string&, const std::string& v) { e.backbone = parse_backbone(trim(v)); });
  r.integer("embedding_dim", e.embedding_dim);
  r.integer("input_side", e.input_side);
  r.finish();
}

void read_train(SectionReader& r, TrainConfig& t) {
  r.integer("epochs", t.epochs);
  r.integer("batch_size", t.batch_size);
  r.real("learning_rate", t.learning_rate);
  r.real("beta1", t.beta1);
  r.real("beta2", t.beta2);
  r.real("adam_epsilon", t.adam_epsilon);
  r.integer("negatives", t.negatives);
  r.with("directions", [&](const std::string&, const std::string& v) {
    t.directions.clear();
    for (const std::string& d : split_list(v)) t.directions.push_back(parse_direction(d));
  });
  r.boolean("share_encoder", t.share_encoder);
  r.boolean("augment", t.augment);
  r.integer("micro_batch", t.micro_batch);
  r.integer("checkpoint_every", t.checkpoint_every);
  r.integer("threads", t.threads);
}

void put_grid(pt::ptree& tree, const GridSpec& g) {
  tree.put("grid.image_side", g.image_side);
  tree.put("grid.patch_side", g.patch_side);
  tree.put("grid.patch_stride", g.patch_stride);
  tree.put("grid.subpatch_side", g.subpatch_side);
  tree.put("grid.subpatch_stride", g.subpatch_stride);
}

void put_encoder(pt::ptree& tree, const EncoderConfig& e) {
  tree.put("encoder.backbone", to_string(e.backbone));
  tree.put("encoder.embedding_dim", e.embedding_dim);
  tree.put("encoder.input_side", e.input_side);
}

void put_train(pt::ptree& tree, const TrainConfig& t, bool with_runtime) {
  tree.put("train.epochs", t.epochs);
  tree.put("train.batch_size", t.batch_size);
  tree.put("train.learning_rate", format_double(t.learning_rate));
  tree.put("train.beta1", format_double(t.beta1));
  tree.put("train.beta2", format_double(t.beta2));
  tree.put("train.adam_epsilon", format_double(t.adam_epsilon));
  tree.put("train.negatives", t.negatives);
  tree.put("train.directions", join_directions(t.directions));
  tree.put("train.share_encoder", t.share_encoder ? "true" : "false");
  tree.put("train.augment", t.augment ? "true" : "false");
  tree.put("train.micro_batch", t.micro_batch);
  tree.put("train.checkpoint_every", t.checkpoint_every);
  if (with_runtime) tree.put("train.threads", t.threads);
}

void apply_override(pt::ptree& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' is not section.key=value");
  }
  tree.put(pt::ptree::path_type(trim(assignment.substr(0, eq)), '.'), trim(assignment.substr(eq + 1)));
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const std::string& item : split_list(text)) out.push_back(static_cast<int>(parse_integer("list", item)));
  return out;
}

std::string join(const std::vector<int>& values) {
  std::string out;
  for (int v : values) {
    if (!out.empty()) out += ",";
    out += std::to_string(v);
  }
  return out;
}

std::string write_ini(const pt::ptree& tree) {
  std::ostringstream out;
  pt::ini_parser::write_ini(out, tree);
  return out.str();
}

pt::ptree read_ini(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return tree;
}

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
  pt::ptree tree = read_ini(text);
  for (const std::string& o : overrides) apply_override(tree, o);
  static const std::set<std::string> kSections = {"run", "dataset", "grid", "encoder", "train", "scoring"};
  for (const auto& [name, child] : tree) {
    if (!kSections.count(name)) throw ConfigError("unknown section [" + name + "]");
    if (child.empty() && !child.data().empty()) throw ConfigError("key '" + name + "' outside a section");
  }

  RunConfig c;
  {
    SectionReader r(tree, "run");
    r.u64("seed", c.seed);
    r.text("out_dir", c.out_dir);
    r.finish();
  }
  {
    SectionReader r(tree, "dataset");
    DatasetSection& d = c.dataset;
    r.text("source", d.source);
    r.text("root", d.root);
    r.text("class", d.class_name);
    r.with("interpolation", [&](const std::string&, const std::string& v) { d.interpolation = parse_interpolation(trim(v)); });
    r.with("texture_kind", [&](const std::string&, const std::string& v) { d.synth.texture = parse_texture_kind(trim(v)); });
    r.with("defect_kind", [&](const std::string&, const std::string& v) { d.synth.defect = parse_defect_kind(trim(v)); });
    r.real("defect_size_min", d.synth.defect_size_min);
    r.real("defect_size_max", d.synth.defect_size_max);
    r.integer("n_train", d.synth.n_train);
    r.integer("n_test_normal", d.synth.n_test_normal);
    r.integer("n_test_anomalous", d.synth.n_test_anomalous);
    r.finish();
  }
  read_grid(SectionReader(tree, "grid"), c.grid);
  read_encoder(SectionReader(tree, "encoder"), c.encoder);
  {
    SectionReader r(tree, "train");
    read_train(r, c.train);
    r.finish();
  }
  {
    SectionReader r(tree, "scoring");
    r.with("offsets", [&](const std::string&, const std::string& v) { c.scoring.offsets = parse_int_list(v); });
    r.integer("negatives", c.scoring.negatives);
    r.real("top_fraction", c.scoring.top_fraction);
    r.size("bank_size", c.scoring.bank_size);
    r.with("negative_sampling_scope", [&](const std::string&, const std::string& v) {
      c.scoring.scope = parse_negative_scope(trim(v));
    });
    r.finish();
  }
  c.train.offsets = c.scoring.offsets;
  c.train.seed = c.seed;
  c.dataset.synth.seed = c.seed;
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

std::string to_ini(const RunConfig& c) {
  pt::ptree tree;
  tree.put("run.seed", c.seed);
  tree.put("run.out_dir", c.out_dir);
  tree.put("dataset.source", c.dataset.source);
  tree.put("dataset.root", c.dataset.root);
  tree.put("dataset.class", c.dataset.class_name);
  tree.put("dataset.interpolation", to_string(c.dataset.interpolation));
  tree.put("dataset.texture_kind", to_string(c.dataset.synth.texture));
  tree.put("dataset.defect_kind", to_string(c.dataset.synth.defect));
  tree.put("dataset.defect_size_min", format_double(c.dataset.synth.defect_size_min));
  tree.put("dataset.defect_size_max", format_double(c.dataset.synth.defect_size_max));
  tree.put("dataset.n_train", c.dataset.synth.n_train);
  tree.put("dataset.n_test_normal", c.dataset.synth.n_test_normal);
  tree.put("dataset.n_test_anomalous", c.dataset.synth.n_test_anomalous);
  put_grid(tree, c.grid);
  put_encoder(tree, c.encoder);
  put_train(tree, c.train, true);
  tree.put("scoring.offsets", join(c.scoring.offsets));
  tree.put("scoring.negatives", c.scoring.negatives);
  tree.put("scoring.top_fraction", format_double(c.scoring.top_fraction));
  tree.put("scoring.bank_size", c.scoring.bank_size);
  tree.put("scoring.negative_sampling_scope", to_string(c.scoring.scope));
  return write_ini(tree);
}

void validate(const RunConfig& c) {
  const GridLayout layout = plan_grid(c.grid);
  validate(c.encoder);
  if (c.grid.subpatch_side != c.encoder.input_side) {
    throw ConfigError("grid.subpatch_side (" + std::to_string(c.grid.subpatch_side) +
                      ") must equal encoder.input_side (" + std::to_string(c.encoder.input_side) + ")");
  }
  validate(train_config(c), layout);
  if (c.dataset.source != "synthetic" && c.dataset.source != "mvtec") {
    throw ConfigError("dataset.source must be 'synthetic' or 'mvtec'");
  }
  if (c.dataset.source == "synthetic") validate(synth_config(c), c.grid.image_side);
  if (c.scoring.negatives < 1) throw ConfigError("scoring.negatives must be >= 1");
  if (!(c.scoring.top_fraction > 0.0 && c.scoring.top_fraction <= 1.0)) {
    throw ConfigError("scoring.top_fraction must lie in (0, 1]");
  }
  if (c.scoring.bank_size < static_cast<std::size_t>(c.scoring.negatives)) {
    throw ConfigError("scoring.bank_size must be >= scoring.negatives");
  }
}

SynthDefectConfig synth_config(const RunConfig& config) {
  SynthDefectConfig s = config.dataset.synth;
  s.seed = config.seed;
  return s;
}

TrainConfig train_config(const RunConfig& config) {
  TrainConfig t = config.train;
  t.seed = config.seed;
  t.offsets = config.scoring.offsets;
  return t;
}

pt::ptree bundle_tree(const ModelBundle& bundle) {
  pt::ptree tree;
  tree.put("bundle.class_name", bundle.class_name);
  tree.put("bundle.version", kBundleVersion);
  tree.put("bundle.encoder_of", [&] {
    std::vector<int> v;
    for (std::size_t e : bundle.encoder_of) v.push_back(static_cast<int>(e));
    return join(v);
  }());
  put_grid(tree, bundle.grid);
  put_encoder(tree, bundle.encoder_config);
  put_train(tree, bundle.train_config, false);
  tree.put("train.seed", bundle.train_config.seed);
  tree.put("train.offsets", join(bundle.train_config.offsets));
  return tree;
}

void read_bundle_tree(const pt::ptree& tree, ModelBundle& bundle) {
  try {
    {
      SectionReader r(tree, "bundle");
      r.text("class_name", bundle.class_name);
      int version = -1;
      r.integer("version", version);
      if (version != static_cast<int>(kBundleVersion)) {
        throw CheckpointVersionError("config section carries version " + std::to_string(version));
      }
      r.with("encoder_of", [&](const std::string&, const std::string& v) {
        bundle.encoder_of.clear();
        for (int e : parse_int_list(v)) bundle.encoder_of.push_back(static_cast<std::size_t>(e));
      });
    }
    read_grid(SectionReader(tree, "grid"), bundle.grid);
    read_encoder(SectionReader(tree, "encoder"), bundle.encoder_config);
    SectionReader r(tree, "train");
    read_train(r, bundle.train_config);
    r.u64("seed", bundle.train_config.seed);
    r.with("offsets", [&](const std::string&, const std::string& v) { bundle.train_config.offsets = parse_int_list(v); });
    r.finish();
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(e.what());
  }
}

std::string bundle_config_text(const ModelBundle& bundle) { return write_ini(bundle_tree(bundle)); }

}  // namespace cpcad
