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

#include <bit>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/crc.hpp>
#include <json.hpp>

#include "cpcad/config.hpp"
#include "cpcad/error.hpp"
#include "cpcad/trainer.hpp"

namespace cpcad {
namespace {

static_assert(std::endian::native == std::endian::little,
              "bundle arrays are stored as native little-endian float32");

constexpr char kMagic[8] = {'C', 'P', 'C', 'A', 'D', 'B', 'N', 'D'};

struct Array {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<float> values;
};

using ArrayMap = std::map<std::string, Array>;

template <class T>
void put_pod(std::string& out, T value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get_pod(const std::string& in, std::size_t& at, const char* what) {
  if (in.size() < at + sizeof(T)) throw CheckpointFormatError(std::string("truncated ") + what);
  T value;
  std::memcpy(&value, in.data() + at, sizeof(T));
  at += sizeof(T);
  return value;
}

std::string get_block(const std::string& in, std::size_t& at, const char* what) {
  const auto len = get_pod<std::uint64_t>(in, at, what);
  if (len > in.size() - at) throw CheckpointFormatError(std::string("truncated ") + what);
  std::string out = in.substr(at, static_cast<std::size_t>(len));
  at += static_cast<std::size_t>(len);
  return out;
}

std::uint32_t crc32(const char* data, std::size_t size) {
  boost::crc_32_type crc;
  crc.process_bytes(data, size);
  return crc.checksum();
}

void add(ArrayMap& arrays, const std::string& name, const Eigen::MatrixXf& m) {
  Array a;
  a.rows = m.rows();
  a.cols = m.cols();
  a.values.assign(m.data(), m.data() + m.size());
  arrays[name] = std::move(a);
}

void take(const ArrayMap& arrays, const std::string& name, Eigen::MatrixXf& m) {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw CheckpointFormatError("missing array '" + name + "'");
  const Array& a = it->second;
  if (m.size() != 0 && (a.rows != m.rows() || a.cols != m.cols())) {
    throw CheckpointFormatError("array '" + name + "' has shape " + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + ", expected " + std::to_string(m.rows()) +
                                "x" + std::to_string(m.cols()));
  }
  m = Eigen::Map<const Eigen::MatrixXf>(a.values.data(), a.rows, a.cols);
}

void write_file(const std::filesystem::path& path, const std::string& config, const ArrayMap& arrays) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string data;
  for (const auto& [name, a] : arrays) {
    manifest.push_back({{"name", name},
                        {"shape", {a.rows, a.cols}},
                        {"offset", data.size()},
                        {"dtype", "float32"}});
    data.append(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(float));
  }
  std::string out(kMagic, sizeof(kMagic));
  put_pod<std::uint32_t>(out, kBundleVersion);
  put_pod<std::uint64_t>(out, config.size());
  out += config;
  const std::string manifest_text = manifest.dump();
  put_pod<std::uint64_t>(out, manifest_text.size());
  out += manifest_text;
  put_pod<std::uint64_t>(out, data.size());
  out += data;
  put_pod<std::uint32_t>(out, crc32(out.data(), out.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so an interrupted save never leaves a torn bundle.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IOError("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IOError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void read_file(const std::filesystem::path& path, std::string& config, ArrayMap& arrays) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string in = ss.str();

  std::size_t at = 0;
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointFormatError(path.string() + " is not a checkpoint bundle");
  }
  at = sizeof(kMagic);
  const auto version = get_pod<std::uint32_t>(in, at, "header");
  if (version != kBundleVersion) {
    throw CheckpointVersionError(path.string() + " has version " + std::to_string(version) +
                                 ", this reader understands " + std::to_string(kBundleVersion));
  }
  config = get_block(in, at, "config");
  const std::string manifest_text = get_block(in, at, "manifest");
  const std::string data = get_block(in, at, "array data");
  const std::size_t payload_end = at;
  const auto stored_crc = get_pod<std::uint32_t>(in, at, "checksum");
  if (at != in.size()) throw CheckpointFormatError("trailing bytes after checksum");
  if (crc32(in.data(), payload_end) != stored_crc) throw CheckpointFormatError("checksum mismatch");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
    for (const auto& entry : manifest) {
      Array a;
      a.rows = entry.at("shape").at(0).get<Eigen::Index>();
      a.cols = entry.at("shape").at(1).get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = static_cast<std::size_t>(a.rows * a.cols);
      if (a.rows < 0 || a.cols < 0 || offset + count * sizeof(float) > data.size()) {
        throw CheckpointFormatError("array '" + entry.at("name").get<std::string>() + "' out of bounds");
      }
      a.values.resize(count);
      std::memcpy(a.values.data(), data.data() + offset, count * sizeof(float));
      arrays[entry.at("name").get<std::string>()] = std::move(a);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(std::string("bad manifest: ") + e.what());
  }
}

ArrayMap weight_arrays(const ModelBundle& bundle) {
  ArrayMap arrays;
  for (std::size_t g = 0; g < bundle.encoders.size(); ++g) {
    for (const auto& [name, m] : bundle.encoders[g].tensors()) {
      add(arrays, "encoder/" + std::to_string(g) + "/" + name, *m);
    }
  }
  for (std::size_t p = 0; p < bundle.predictors.size(); ++p) {
    const auto& pred = bundle.predictors[p];
    for (std::size_t i = 0; i < pred.offsets.size(); ++i) {
      add(arrays, "predictor/" + std::to_string(p) + "/k" + std::to_string(pred.offsets[i]), pred.matrices[i]);
    }
  }
  return arrays;
}

ModelBundle rebuild(const std::string& config, const ArrayMap& arrays) {
  ModelBundle b;
  read_bundle_tree(read_ini(config), b);
  const std::size_t n_encoders = b.train_config.share_encoder ? 1 : b.train_config.directions.size();
  for (std::size_t g = 0; g < n_encoders; ++g) {
    Encoder e;
    try {
      e = Encoder(b.encoder_config, 0);
    } catch (const ConfigError& err) {
      throw CheckpointFormatError(err.what());
    }
    for (const nn::Param& p : e.parameters()) take(arrays, "encoder/" + std::to_string(g) + "/" + p.name, *p.value);
    for (const nn::Buffer& buf : e.buffers()) take(arrays, "encoder/" + std::to_string(g) + "/" + buf.name, *buf.value);
    b.encoders.push_back(std::move(e));
  }
  for (std::size_t p = 0; p < b.train_config.directions.size(); ++p) {
    DirectionalPredictor<float> pred;
    pred.direction = b.train_config.directions[p];
    pred.offsets = b.train_config.offsets;
    for (int k : pred.offsets) {
      Eigen::MatrixXf w = Eigen::MatrixXf::Zero(b.encoder_config.embedding_dim, b.encoder_config.embedding_dim);
      take(arrays, "predictor/" + std::to_string(p) + "/k" + std::to_string(k), w);
      pred.matrices.push_back(std::move(w));
    }
    b.predictors.push_back(std::move(pred));
  }
  try {
    b.validate();
  } catch (const ConfigError& e) {
    throw CheckpointFormatError(e.what());
  }
  return b;
}

// Parameter list in the order the trainer hands to Adam.
std::vector<nn::Param> optimizer_params(ModelBundle& b, std::size_t group,
                                        std::deque<Eigen::MatrixXf>& scratch) {
  std::vector<nn::Param> params = b.encoders[group].parameters();
  for (std::size_t p : b.predictors_of(group)) {
    for (auto& m : b.predictors[p].matrices) {
      scratch.emplace_back();
      params.push_back({"", &m, &scratch.back()});
    }
  }
  return params;
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  bundle.validate();
  write_file(path, bundle_config_text(bundle), weight_arrays(bundle));
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::string config;
  ArrayMap arrays;
  read_file(path, config, arrays);
  return rebuild(config, arrays);
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  state.bundle.validate();
  ArrayMap arrays = weight_arrays(state.bundle);
  boost::property_tree::ptree tree = bundle_tree(state.bundle);
  std::vector<int> steps;
  for (std::size_t g = 0; g < state.optimizers.size(); ++g) {
    const nn::Adam& adam = state.optimizers[g];
    steps.push_back(static_cast<int>(adam.steps()));
    for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
      add(arrays, "optimizer/" + std::to_string(g) + "/m/" + std::to_string(i), adam.first_moments()[i]);
      add(arrays, "optimizer/" + std::to_string(g) + "/v/" + std::to_string(i), adam.second_moments()[i]);
    }
  }
  tree.put("state.epochs_completed", state.epochs_completed);
  tree.put("state.adam_steps", join(steps));
  for (std::size_t e = 0; e < state.loss_history.size(); ++e) {
    std::string row;
    for (double v : state.loss_history[e]) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      if (!row.empty()) row += ",";
      row += buf;
    }
    tree.put("history.epoch_" + std::to_string(e + 1), row);
  }
  write_file(path, write_ini(tree), arrays);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::string config;
  ArrayMap arrays;
  read_file(path, config, arrays);
  TrainingState state;
  state.bundle = rebuild(config, arrays);
  const auto tree = read_ini(config);
  const auto epochs = tree.get_optional<int>("state.epochs_completed");
  const auto steps_text = tree.get_optional<std::string>("state.adam_steps");
  if (!epochs || !steps_text) throw CheckpointFormatError(path.string() + " holds no training state");
  state.epochs_completed = *epochs;
  const std::vector<int> steps = parse_int_list(*steps_text);
  if (steps.size() != state.bundle.encoders.size()) throw CheckpointFormatError("optimizer count mismatch");

  const TrainConfig& t = state.bundle.train_config;
  const nn::Adam::Options options{static_cast<float>(t.learning_rate), static_cast<float>(t.beta1),
                                  static_cast<float>(t.beta2), static_cast<float>(t.adam_epsilon)};
  for (std::size_t g = 0; g < steps.size(); ++g) {
    std::deque<Eigen::MatrixXf> scratch;
    const auto params = optimizer_params(state.bundle, g, scratch);
    nn::Adam adam(options, params);
    adam.set_steps(steps[g]);
    for (std::size_t i = 0; i < params.size(); ++i) {
      take(arrays, "optimizer/" + std::to_string(g) + "/m/" + std::to_string(i), adam.first_moments()[i]);
      take(arrays, "optimizer/" + std::to_string(g) + "/v/" + std::to_string(i), adam.second_moments()[i]);
    }
    state.optimizers.push_back(std::move(adam));
  }
  for (int e = 1; e <= state.epochs_completed; ++e) {
    const auto row = tree.get_optional<std::string>("history.epoch_" + std::to_string(e));
    if (!row) throw CheckpointFormatError("missing loss history for epoch " + std::to_string(e));
    std::vector<double> values;
    std::stringstream ss(*row);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
    state.loss_history.push_back(std::move(values));
  }
  return state;
}

}  // namespace cpcad
