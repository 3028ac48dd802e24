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

// cpcad: synthesize data, train, score, evaluate and visualize.
//
//   cpcad synth-data --config run.ini --out data/
//   cpcad train      --config run.ini --out runs/a
//   cpcad score      --config run.ini --bundle runs/a/model.cpcb --out runs/a/test
//   cpcad evaluate   --scores runs/a/test/scores.csv --masks runs/a/test/heatmaps
//                    --gt runs/a/test/gt --out runs/a/test
//   cpcad visualize  --image img.png --heatmap h.bin --gt gt.png --out fig.png
//
// Exit status: 0 success, 2 configuration or validation error, 3 runtime
// error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cpcad/config.hpp"
#include "cpcad/dataset.hpp"
#include "cpcad/error.hpp"
#include "cpcad/metrics.hpp"
#include "cpcad/scoring.hpp"
#include "cpcad/trainer.hpp"

namespace fs = std::filesystem;
using namespace cpcad;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config;
  std::string class_name;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool need_config = true) {
  auto* opt = cmd->add_option("--config", f.config, "run configuration (INI)");
  if (need_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--class", f.class_name, "dataset class (overrides [dataset] class)");
  cmd->add_option("--out", f.out, "output directory (overrides [run] out_dir)");
  cmd->add_option("--seed", f.seed, "global seed (overrides [run] seed)");
  cmd->add_option("--set", f.sets, "extra override, section.key=value")->take_all();
}

RunConfig resolve(const CommonFlags& f) {
  std::vector<std::string> overrides = f.sets;
  if (!f.class_name.empty()) overrides.push_back("dataset.class=" + f.class_name);
  if (!f.out.empty()) overrides.push_back("run.out_dir=" + f.out);
  if (f.seed) overrides.push_back("run.seed=" + std::to_string(*f.seed));
  return load_run_config(f.config, overrides);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IOError("cannot write " + path.string());
  f << text;
  if (!f) throw IOError("short write to " + path.string());
}

void archive_config(const RunConfig& config, const fs::path& dir) {
  write_text(dir / "run_config.ini", to_ini(config));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// "test/crack/003" -> "test_crack_003"
std::string file_stem(std::string id) {
  for (char& c : id) {
    if (c == '/' || c == '\\') c = '_';
  }
  return id;
}

DatasetSplit load_split(const RunConfig& c) {
  DatasetSplit split;
  if (c.dataset.source == "synthetic") {
    split = generate_synthetic(synth_config(c), c.grid.image_side);
  } else {
    split = load_mvtec_class(c.dataset.root, c.dataset.class_name, c.grid.image_side, c.dataset.interpolation);
  }
  validate(split);
  return split;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// synth-data ---------------------------------------------------------------

void cmd_synth_data(const CommonFlags& flags) {
  RunConfig c = resolve(flags);
  DatasetSplit split = generate_synthetic(synth_config(c), c.grid.image_side);
  split.class_name = c.dataset.class_name;
  const fs::path out = c.out_dir;
  write_mvtec_layout(split, out);
  archive_config(c, out);
  std::cerr << "wrote " << split.train.size() << " train and " << split.test.size() << " test images to "
            << (out / split.class_name).string() << "\n";
}

// train --------------------------------------------------------------------

std::string group_label(const ModelBundle& b, std::size_t g) {
  if (b.train_config.share_encoder) return "shared";
  return std::string(to_string(b.predictors[b.predictors_of(g).front()].direction));
}

void write_loss_csv(const TrainingState& s, const fs::path& path) {
  std::ostringstream csv;
  csv << "epoch,mean_loss";
  for (std::size_t g = 0; g < s.bundle.encoders.size(); ++g) csv << ",loss_" << group_label(s.bundle, g);
  csv << "\n";
  for (std::size_t e = 0; e < s.loss_history.size(); ++e) {
    double mean = 0.0;
    for (double v : s.loss_history[e]) mean += v;
    mean /= static_cast<double>(s.loss_history[e].size());
    csv << (e + 1) << "," << format_double(mean);
    for (double v : s.loss_history[e]) csv << "," << format_double(v);
    csv << "\n";
  }
  write_text(path, csv.str());
}

// A checkpoint may only be continued under the same model and optimizer
// settings; the epoch budget and bookkeeping knobs may change.
void check_resumable(const TrainConfig& saved, const TrainConfig& wanted) {
  TrainConfig a = saved, b = wanted;
  a.epochs = b.epochs;
  a.threads = b.threads;
  a.checkpoint_every = b.checkpoint_every;
  if (!(a == b)) throw ConfigError("checkpoint was trained with a different [train] configuration");
}

void cmd_train(const CommonFlags& flags, const std::string& resume) {
  const RunConfig c = resolve(flags);
  const fs::path out = c.out_dir;
  const DatasetSplit split = load_split(c);
  archive_config(c, out);

  std::optional<Trainer> trainer;
  if (!resume.empty()) {
    TrainingState state = load_checkpoint(resume);
    if (!(state.bundle.grid == c.grid) || !(state.bundle.encoder_config == c.encoder)) {
      throw ConfigError("checkpoint grid or encoder differs from the configuration");
    }
    check_resumable(state.bundle.train_config, train_config(c));
    state.bundle.train_config.epochs = c.train.epochs;
    state.bundle.train_config.threads = c.train.threads;
    state.bundle.train_config.checkpoint_every = c.train.checkpoint_every;
    std::cerr << "resuming at epoch " << state.epochs_completed << "\n";
    trainer.emplace(split, std::move(state));
  } else {
    trainer.emplace(split, c.grid, c.encoder, train_config(c));
    trainer->state().bundle.class_name = split.class_name;
  }

  const int every = c.train.checkpoint_every;
  const int epochs = c.train.epochs;
  auto t0 = std::chrono::steady_clock::now();
  const ModelBundle bundle = trainer->run([&](const TrainingState& s) {
    const auto& last = s.loss_history.back();
    double mean = 0.0;
    for (double v : last) mean += v;
    mean /= static_cast<double>(last.size());
    std::fprintf(stderr, "epoch %d/%d  loss %.5f  %.1fs\n", s.epochs_completed, epochs, mean, seconds_since(t0));
    write_loss_csv(s, out / "loss.csv");
    if ((every > 0 && s.epochs_completed % every == 0) || s.epochs_completed == epochs) {
      save_checkpoint(s, out / "checkpoint.cpcb");
    }
  });
  write_loss_csv(trainer->state(), out / "loss.csv");
  save_bundle(bundle, out / "model.cpcb");
  std::cerr << "wrote " << (out / "model.cpcb").string() << "\n";
}

// score --------------------------------------------------------------------

void cmd_score(const CommonFlags& flags, const std::string& bundle_path, const std::string& which) {
  const RunConfig c = resolve(flags);
  if (which != "test" && which != "train") throw ConfigError("--split must be test or train");
  const fs::path out = c.out_dir;
  const ModelBundle bundle = load_bundle(bundle_path);
  if (!(bundle.grid == c.grid) || !(bundle.encoder_config == c.encoder)) {
    throw ConfigError("bundle grid or encoder differs from the configuration");
  }
  const DatasetSplit split = load_split(c);
  archive_config(c, out);
  const GridLayout layout = plan_grid(bundle.grid);

  auto t0 = std::chrono::steady_clock::now();
  const NegativeBank bank =
      build_negative_bank(split, bundle, c.scoring.bank_size, derive_seed(c.seed, 0xba4c), c.scoring.negatives);
  std::fprintf(stderr, "negative bank: %zu embeddings per predictor (%.1fs)\n", bank.pool_size(), seconds_since(t0));

  const std::vector<ImageSample>& samples = which == "test" ? split.test : split.train;
  std::ostringstream csv;
  csv << "image_id,label,score\n";
  std::vector<std::pair<std::string, Heatmap>> heatmaps;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImageSample& s = samples[i];
    const ScoreMap map = score_image(s.pixels, bundle, bank, c.scoring, image_seed(c.seed, s.source_id));
    const double score = image_score(map, c.scoring.top_fraction);
    AnomalyMask mask = make_mask(map, layout);
    const std::string stem = file_stem(s.source_id);
    save_score_map(map, out / "scoremaps" / (stem + ".bin"));
    save_heatmap(mask.heatmap, out / "heatmaps" / (stem + ".bin"));
    const Mask gt = s.gt_mask ? *s.gt_mask : Mask::Zero(s.pixels.rows(), s.pixels.cols());
    write_mask_png(out / "gt" / (stem + ".png"), gt);
    lo = std::min(lo, mask.heatmap.minCoeff());
    hi = std::max(hi, mask.heatmap.maxCoeff());
    heatmaps.emplace_back(stem, std::move(mask.heatmap));
    csv << s.source_id << "," << to_string(s.label) << "," << format_double(score) << "\n";
    std::fprintf(stderr, "[%zu/%zu] %s  %.5f\n", i + 1, samples.size(), s.source_id.c_str(), score);
  }
  write_text(out / "scores.csv", csv.str());
  // One normalization for the whole split keeps PNG masks comparable.
  for (const auto& [stem, h] : heatmaps) write_png16(out / "masks" / (stem + ".png"), h, lo, hi);
  write_text(out / "normalization.json",
             nlohmann::json{{"low", lo}, {"high", hi}, {"encoding", "uint16 = round(65535 * (v - low) / (high - low))"}}
                     .dump(2) + "\n");
  std::fprintf(stderr, "scored %zu images in %.1fs\n", samples.size(), seconds_since(t0));
}

// evaluate -----------------------------------------------------------------

struct ScoreRow {
  std::string id;
  int label = 0;
  double score = 0.0;
};

std::vector<ScoreRow> read_scores(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IOError("cannot read " + path.string());
  std::string line;
  std::getline(f, line);
  if (line.rfind("image_id,label,score", 0) != 0) throw ConfigError(path.string() + ": unexpected header");
  std::vector<ScoreRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, label, score;
    if (!std::getline(ss, id, ',') || !std::getline(ss, label, ',') || !std::getline(ss, score)) {
      throw ConfigError(path.string() + ": malformed row '" + line + "'");
    }
    rows.push_back({id, parse_label(label) == Label::anomalous ? 1 : 0, std::stod(score)});
  }
  return rows;
}

Heatmap read_heatmap_any(const fs::path& path) {
  if (path.extension() == ".bin") return load_heatmap(path);
  return read_grayscale(path).cast<double>();
}

fs::path find_heatmap(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".bin", ".png"}) {
    const fs::path p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  throw IOError("no heatmap for " + stem + " in " + dir.string());
}

// Class recorded by `score` next to its scores.csv, else a positional name.
std::string archived_class(const fs::path& scores, std::size_t i) {
  const fs::path config = scores.parent_path() / "run_config.ini";
  if (fs::exists(config)) return load_run_config(config).dataset.class_name;
  return "class" + std::to_string(i);
}

struct EvalFlags {
  std::vector<std::string> scores, masks, gt, classes;
  std::string out = ".";
  std::string config;
  bool per_image_mean = false;
};

void cmd_evaluate(const EvalFlags& f) {
  const std::size_t n = f.scores.size();
  if (!f.masks.empty() && f.masks.size() != n) throw ConfigError("give one --masks per --scores");
  if (f.gt.size() != f.masks.size()) throw ConfigError("give one --gt per --masks");
  if (!f.classes.empty() && f.classes.size() != n) throw ConfigError("give one --class per --scores");
  const PixelAveraging averaging = f.per_image_mean ? PixelAveraging::per_image_mean : PixelAveraging::pooled;

  std::vector<ClassMetrics> results;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<ScoreRow> rows = read_scores(f.scores[i]);
    ClassMetrics m;
    m.class_name = f.classes.empty() ? archived_class(f.scores[i], i) : f.classes[i];
    std::vector<double> scores;
    std::vector<int> labels;
    for (const ScoreRow& r : rows) {
      scores.push_back(r.score);
      labels.push_back(r.label);
      (r.label ? m.n_anomalous : m.n_normal) += 1;
    }
    m.image_auroc = auroc(scores, labels);
    if (!f.masks.empty()) {
      std::vector<Heatmap> maps;
      std::vector<Mask> gts;
      for (const ScoreRow& r : rows) {
        const std::string stem = file_stem(r.id);
        maps.push_back(read_heatmap_any(find_heatmap(f.masks[i], stem)));
        const fs::path gt_path = fs::path(f.gt[i]) / (stem + ".png");
        if (fs::exists(gt_path)) {
          gts.push_back(read_mask(gt_path));
        } else if (r.label == 0) {
          gts.push_back(Mask::Zero(maps.back().rows(), maps.back().cols()));
        } else {
          throw MissingMaskError("no ground truth for anomalous image " + r.id);
        }
      }
      m.pixel_auroc = pixel_auroc(maps, gts, averaging);
    }
    std::fprintf(stderr, "%s: image AUROC %.4f", m.class_name.c_str(), m.image_auroc);
    if (m.pixel_auroc) std::fprintf(stderr, ", pixel AUROC %.4f", *m.pixel_auroc);
    std::fprintf(stderr, "\n");
    results.push_back(std::move(m));
  }
  const fs::path out = f.out;
  write_text(out / "metrics.json", metrics_json(results, averaging) + "\n");
  if (!f.config.empty()) {
    archive_config(load_run_config(f.config), out);
  } else {
    const fs::path archived = fs::path(f.scores.front()).parent_path() / "run_config.ini";
    if (fs::exists(archived) && fs::absolute(archived) != fs::absolute(out / "run_config.ini")) {
      fs::copy_file(archived, out / "run_config.ini", fs::copy_options::overwrite_existing);
    }
  }
}

// visualize ----------------------------------------------------------------

cv::Mat to_bgr(const Image& img) {
  cv::Mat gray(static_cast<int>(img.rows()), static_cast<int>(img.cols()), CV_8U);
  for (int y = 0; y < gray.rows; ++y)
    for (int x = 0; x < gray.cols; ++x)
      gray.at<std::uint8_t>(y, x) = cv::saturate_cast<std::uint8_t>(255.0f * img(y, x));
  cv::Mat bgr;
  cv::cvtColor(gray, bgr, cv::COLOR_GRAY2BGR);
  return bgr;
}

void cmd_visualize(const std::string& image_path, const std::string& heatmap_path, const std::string& gt_path,
                   const std::string& out_path) {
  const Image image = read_grayscale(image_path);
  const Heatmap heat = read_heatmap_any(heatmap_path);
  if (heat.rows() != image.rows() || heat.cols() != image.cols()) {
    throw ShapeError("heatmap is " + std::to_string(heat.rows()) + "x" + std::to_string(heat.cols()) +
                     ", image is " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()));
  }
  std::optional<Mask> gt;
  if (!gt_path.empty()) {
    gt = read_mask(gt_path);
    if (gt->rows() != image.rows() || gt->cols() != image.cols()) throw ShapeError("ground truth size differs from image");
  }
  const double lo = heat.minCoeff(), hi = heat.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  cv::Mat scaled(static_cast<int>(heat.rows()), static_cast<int>(heat.cols()), CV_8U);
  for (int y = 0; y < scaled.rows; ++y)
    for (int x = 0; x < scaled.cols; ++x)
      scaled.at<std::uint8_t>(y, x) = cv::saturate_cast<std::uint8_t>(255.0 * (heat(y, x) - lo) / span);
  cv::Mat colored, overlay;
  cv::applyColorMap(scaled, colored, cv::COLORMAP_INFERNO);
  const cv::Mat base = to_bgr(image);
  cv::addWeighted(base, 0.5, colored, 0.5, 0.0, overlay);
  std::vector<cv::Mat> panels{base, overlay};
  if (gt) {
    Image g(gt->rows(), gt->cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gt->data()[i] ? 1.0f : 0.0f;
    panels.push_back(to_bgr(g));
  }
  cv::Mat row;
  cv::hconcat(panels, row);
  const fs::path out = out_path;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (!cv::imwrite(out.string(), row)) throw IOError("cannot write " + out.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive predictive coding for anomaly detection and segmentation"};
  app.require_subcommand(1);

  CommonFlags synth_flags, train_flags, score_flags;
  std::string resume, bundle_path, which = "test";
  EvalFlags eval;
  std::string vis_image, vis_heatmap, vis_gt, vis_out;

  auto* synth = app.add_subcommand("synth-data", "render a synthetic dataset in MVTec layout");
  add_common(synth, synth_flags);

  auto* train = app.add_subcommand("train", "train directional models for one class");
  add_common(train, train_flags);
  train->add_option("--bundle", resume, "resume from this checkpoint")->check(CLI::ExistingFile);

  auto* score = app.add_subcommand("score", "score test (or train) images with a trained bundle");
  add_common(score, score_flags);
  score->add_option("--bundle", bundle_path, "trained model bundle")->required();
  score->add_option("--split", which, "test or train");

  auto* evaluate = app.add_subcommand("evaluate", "image and pixel AUROC from score artifacts");
  evaluate->add_option("--scores", eval.scores, "scores.csv (repeat per class)")->required();
  evaluate->add_option("--masks", eval.masks, "heatmap directory (repeat per class)");
  evaluate->add_option("--gt", eval.gt, "ground-truth mask directory (repeat per class)");
  evaluate->add_option("--class", eval.classes, "class name (repeat per class)");
  evaluate->add_option("--out", eval.out, "output directory");
  evaluate->add_option("--config", eval.config, "run configuration to archive")->check(CLI::ExistingFile);
  evaluate->add_flag("--per-image-mean", eval.per_image_mean, "average pixel AUROC per image instead of pooling");

  auto* visualize = app.add_subcommand("visualize", "input | heatmap overlay | ground truth panel");
  visualize->add_option("--image", vis_image, "input image")->required();
  visualize->add_option("--heatmap", vis_heatmap, "heatmap (.bin or .png)")->required();
  visualize->add_option("--gt", vis_gt, "ground-truth mask");
  visualize->add_option("--out", vis_out, "output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*synth) cmd_synth_data(synth_flags);
    if (*train) cmd_train(train_flags, resume);
    if (*score) cmd_score(score_flags, bundle_path, which);
    if (*evaluate) cmd_evaluate(eval);
    if (*visualize) cmd_visualize(vis_image, vis_heatmap, vis_gt, vis_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const GeometryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
