// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: corruption generation, training, evaluation, the
// checkerboard demo, model diagnostics, and gradient verification.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 runtime numeric
// failure (divergence, failed verification, corrupt data).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "atmosconv/atf.hpp"
#include "atmosconv/classic_filters.hpp"
#include "atmosconv/dataset.hpp"
#include "atmosconv/diagnostics.hpp"
#include "atmosconv/filter_algebra.hpp"
#include "atmosconv/gradcheck.hpp"
#include "atmosconv/io_util.hpp"
#include "atmosconv/net.hpp"
#include "atmosconv/ops.hpp"
#include "atmosconv/train.hpp"

namespace fs = std::filesystem;
using namespace atmosconv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

// ------------------------------------------------------------ dataset loading

/// Resolves a dataset spec:
///   synthetic:N[:seed[:HxW]]   built-in procedural shapes
///   path.raw                   raw float64 dump
///   path.bin[,path2.bin...]    CIFAR-10 binary batches
///   directory/                 PNG files + labels.csv
/// Relative paths that don't resolve locally are retried under
/// $ATMOSCONV_DATA_DIR.
Dataset load_dataset_spec(const std::string& spec) {
  if (spec.rfind("synthetic:", 0) == 0) {
    const auto parse_num = [&spec](const std::string& field) -> long long {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
      } catch (const std::exception&) {
        throw std::invalid_argument("dataset spec '" + spec + "': '" + field +
                                    "' is not a number (expected synthetic:N[:seed[:HxW]])");
      }
    };
    std::istringstream in(spec.substr(10));
    std::string field;
    if (!std::getline(in, field, ':')) {
      throw std::invalid_argument("dataset spec '" + spec + "': expected synthetic:N[:seed[:HxW]]");
    }
    const int n = static_cast<int>(parse_num(field));
    std::uint64_t seed = 0;
    int H = 20, W = 20;
    if (std::getline(in, field, ':')) seed = static_cast<std::uint64_t>(parse_num(field));
    if (std::getline(in, field, ':')) {
      const auto x = field.find('x');
      if (x == std::string::npos) {
        throw std::invalid_argument("dataset spec '" + spec + "': size must look like 20x20");
      }
      H = static_cast<int>(parse_num(field.substr(0, x)));
      W = static_cast<int>(parse_num(field.substr(x + 1)));
    }
    return generate_synthetic(n, seed, H, W);
  }

  auto resolve = [](std::string path) {
    if (!fs::exists(path) && fs::path(path).is_relative()) {
      if (const char* root = std::getenv("ATMOSCONV_DATA_DIR")) {
        const fs::path joined = fs::path(root) / path;
        if (fs::exists(joined)) return joined.string();
      }
    }
    return path;
  };

  if (spec.find(',') != std::string::npos) {  // multiple CIFAR batches
    std::vector<std::string> paths;
    std::istringstream in(spec);
    std::string p;
    while (std::getline(in, p, ',')) paths.push_back(resolve(p));
    return read_cifar10(paths);
  }

  const std::string path = resolve(spec);
  if (!fs::exists(path)) {
    throw std::invalid_argument("dataset '" + spec + "' not found (also tried $ATMOSCONV_DATA_DIR)");
  }
  if (fs::is_directory(path)) return read_png_dir(path);
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".raw") return load_raw(path);
  if (ext == ".bin") return read_cifar10({path});
  throw std::invalid_argument("dataset '" + spec + "': unrecognized format (want .raw, .bin, " +
                              "a PNG directory, or synthetic:N)");
}

// ------------------------------------------------------------------ snapshots

/// Every run leaves a key=value snapshot of its effective options so it can
/// be reproduced without the original command line.
void write_snapshot(const std::string& out_dir, const std::string& subcommand,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ostringstream text;
  text << "subcommand=" << subcommand << '\n';
  for (const auto& [k, v] : kv) text << k << '=' << v << '\n';
  write_text_file((fs::path(out_dir) / "config_snapshot.txt").string(), text.str());
}

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

void ensure_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw std::invalid_argument("--out directory is required");
  fs::create_directories(out_dir);
}

// -------------------------------------------------------------------- corrupt

int cmd_corrupt(const std::string& input, const std::string& variant_name, std::uint64_t seed,
                double severity, const std::string& out_dir, bool write_pngs) {
  ensure_out_dir(out_dir);
  const Variant variant = variant_from_string(variant_name);
  Dataset data = load_dataset_spec(input);

  auto [images, manifest] = corrupt_dataset(data.images, variant, seed, severity);
  Dataset corrupted = data;
  corrupted.images = std::move(images);

  save_raw((fs::path(out_dir) / "corrupted.raw").string(), corrupted);
  manifest.save((fs::path(out_dir) / "manifest.json").string());
  if (write_pngs) write_png_dir((fs::path(out_dir) / "png").string(), corrupted);

  write_snapshot(out_dir, "corrupt",
                 {{"input", input},
                  {"variant", variant_name},
                  {"seed", std::to_string(seed)},
                  {"severity", fmt(severity)},
                  {"png", write_pngs ? "1" : "0"}});

  // parameter ranges scale with severity: gain 1 +/- 0.3s, bias +/- 0.3s for
  // the constant set; the local sets widen to 0.5s
  std::cout << "corrupt: variant=" << variant_name << " seed=" << seed
            << " severity=" << severity << " images=" << corrupted.size() << '\n'
            << "  constant set draws gain in [" << 1.0 - 0.3 * severity << ", "
            << 1.0 + 0.3 * severity << "], bias in [" << -0.3 * severity << ", "
            << 0.3 * severity << "]\n"
            << "  wrote " << out_dir << "/corrupted.raw and manifest.json\n";
  return kExitOk;
}

// ---------------------------------------------------------------------- train

int cmd_train(const std::string& data_spec, const std::string& val_spec, ModelConfig mc,
              TrainHyper hyper, double low_shot_fraction, std::uint64_t subsample_seed,
              const std::string& out_dir, const std::string& paired_with) {
  ensure_out_dir(out_dir);

  if (!paired_with.empty()) {
    // adopt the sibling run's seeds so the only difference is the model
    const std::string text =
        read_text_file((fs::path(paired_with) / "config_snapshot.txt").string());
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "seed") hyper.seed = std::stoull(val);
      if (key == "init_seed") mc.init_seed = std::stoull(val);
      if (key == "subsample_seed") subsample_seed = std::stoull(val);
    }
  }

  Dataset train_set = load_dataset_spec(data_spec);
  if (low_shot_fraction < 1.0) {
    train_set = low_shot_subsample(train_set, low_shot_fraction, subsample_seed);
  }
  Dataset val_set;
  if (!val_spec.empty()) val_set = load_dataset_spec(val_spec);

  Model model = build_model(mc);
  std::cout << "train: " << mc.architecture << " conv_mode=" << mc.conv_mode
            << " norm=" << mc.norm_layer << " width=" << mc.width << " params=("
            << model.num_params() << " trainable)\n"
            << "  " << train_set.size() << " training images, " << hyper.epochs << " epochs\n";

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(model, train_set, val_set, hyper);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  model.save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string());
  write_train_log((fs::path(out_dir) / "train_log.csv").string(), result.log);
  write_text_file((fs::path(out_dir) / "model_config.txt").string(), model_config_kv(mc));

  Series train_acc{"train_acc", {}}, val_acc{"val_acc", {}};
  for (const EpochLog& e : result.log) {
    train_acc.y.push_back(e.train_acc);
    val_acc.y.push_back(e.val_acc);
  }
  std::vector<Series> series{train_acc};
  if (!val_set.size()) series.resize(1); else series.push_back(val_acc);
  write_text_file((fs::path(out_dir) / "curves.svg").string(),
                  svg_line_chart("accuracy per epoch", series));

  write_snapshot(out_dir, "train",
                 {{"data", data_spec},
                  {"val", val_spec},
                  {"architecture", mc.architecture},
                  {"conv_mode", mc.conv_mode},
                  {"norm_layer", mc.norm_layer},
                  {"use_affine", mc.use_affine},
                  {"width", std::to_string(mc.width)},
                  {"depth", std::to_string(mc.depth)},
                  {"init_seed", std::to_string(mc.init_seed)},
                  {"lr", fmt(hyper.lr)},
                  {"schedule", hyper.schedule},
                  {"epochs", std::to_string(hyper.epochs)},
                  {"batch_size", std::to_string(hyper.batch_size)},
                  {"weight_decay", fmt(hyper.weight_decay)},
                  {"reg_strength", fmt(hyper.reg_strength)},
                  {"augment_fraction", fmt(hyper.augment_fraction)},
                  {"seed", std::to_string(hyper.seed)},
                  {"low_shot_fraction", fmt(low_shot_fraction)},
                  {"subsample_seed", std::to_string(subsample_seed)}});

  const EpochLog& last = result.log.back();
  std::cout << "  final train_loss=" << last.train_loss << " train_acc=" << last.train_acc
            << " val_acc=" << last.val_acc << " (" << secs << " s)\n"
            << "  wrote " << out_dir << "/checkpoint.bin, train_log.csv, curves.svg\n";
  return kExitOk;
}

// ----------------------------------------------------------------------- eval

int cmd_eval(const std::string& checkpoint, const std::string& data_spec,
             const std::vector<std::string>& named_sets, const std::string& variants,
             std::uint64_t corrupt_seed, double severity, bool contrast_bins, bool with_flip_rate,
             int batch_size, const std::string& out_dir) {
  ensure_out_dir(out_dir);
  Model model = Model::load_checkpoint(checkpoint);

  nlohmann::json report;
  report["checkpoint"] = checkpoint;
  report["sets"] = nlohmann::json::object();

  std::optional<Dataset> clean;
  if (!data_spec.empty()) {
    clean = load_dataset_spec(data_spec);
    report["sets"]["D"] = evaluate(model, *clean, batch_size);
  }

  if (!variants.empty()) {
    if (!clean) throw std::invalid_argument("--corrupt-variants needs --data for the clean set");
    std::istringstream in(variants);
    std::string v;
    while (std::getline(in, v, ',')) {
      const Variant variant = variant_from_string(v);
      auto [images, manifest] = corrupt_dataset(clean->images, variant, corrupt_seed, severity);
      Dataset corrupted = *clean;
      corrupted.images = std::move(images);
      report["sets"]["D_" + v] = evaluate(model, corrupted, batch_size);
      if (with_flip_rate) {
        report["flip_rate"]["D_" + v] = flip_rate(model, *clean, corrupted);
      }
    }
    report["corrupt_seed"] = corrupt_seed;
    report["severity"] = severity;
  }

  for (const std::string& named : named_sets) {
    const auto eq = named.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set wants NAME=PATH, got '" + named + "'");
    }
    Dataset set = load_dataset_spec(named.substr(eq + 1));
    report["sets"][named.substr(0, eq)] = evaluate(model, set, batch_size);
  }

  if (contrast_bins) {
    if (!clean) throw std::invalid_argument("--contrast-bins needs --data");
    const ContrastBins bins = contrast_binned_accuracy(model, *clean);
    report["contrast_bins"]["accuracy"] = bins.accuracy;
    report["contrast_bins"]["count"] = bins.count;
    report["contrast_bins"]["degenerate"] = bins.degenerate;
  }

  if (report["sets"].empty()) {
    throw std::invalid_argument("eval: no sets requested; pass --data, --set, or --corrupt-variants");
  }

  const std::string json_text = report.dump(2) + "\n";
  write_text_file((fs::path(out_dir) / "eval_report.json").string(), json_text);
  write_snapshot(out_dir, "eval",
                 {{"checkpoint", checkpoint},
                  {"data", data_spec},
                  {"variants", variants},
                  {"corrupt_seed", std::to_string(corrupt_seed)},
                  {"severity", fmt(severity)},
                  {"batch_size", std::to_string(batch_size)}});
  std::cout << json_text;
  return kExitOk;
}

// --------------------------------------------------------------- demo-checker

int cmd_demo_checker(const std::string& out_dir, double ramp_span) {
  ensure_out_dir(out_dir);

  SceneSpec uniform;
  SceneSpec ramp;
  ramp.illumination = SceneSpec::Illumination::linear_ramp;
  ramp.ramp_lo = 1.0 - ramp_span;
  ramp.ramp_hi = 1.0 + ramp_span;

  Tensor flat_scene = checkerboard_scene(uniform);
  Tensor lit_scene = checkerboard_scene(ramp);

  FilterKernel norm_dog = dog_kernel(1.0, 2.0, 9, /*normalized=*/true);
  FilterKernel raw_dog = dog_kernel(1.0, 2.0, 9, /*normalized=*/false);

  const DemoResponse norm_flat = demo_response_analysis(flat_scene, norm_dog, uniform.tile_px);
  const DemoResponse norm_lit = demo_response_analysis(lit_scene, norm_dog, uniform.tile_px);
  const DemoResponse raw_flat = demo_response_analysis(flat_scene, raw_dog, uniform.tile_px);
  const DemoResponse raw_lit = demo_response_analysis(lit_scene, raw_dog, uniform.tile_px);

  // region stats: flat-region bias against edge magnitude, per filter and scene
  std::vector<std::vector<double>> stats{
      {0.0, norm_flat.flat_bias, norm_flat.edge_mag, norm_flat.flat_bias / norm_flat.edge_mag},
      {1.0, norm_lit.flat_bias, norm_lit.edge_mag, norm_lit.flat_bias / norm_lit.edge_mag},
      {2.0, raw_flat.flat_bias, raw_flat.edge_mag, raw_flat.flat_bias / raw_flat.edge_mag},
      {3.0, raw_lit.flat_bias, raw_lit.edge_mag, raw_lit.flat_bias / raw_lit.edge_mag}};
  write_csv((fs::path(out_dir) / "region_stats.csv").string(),
            {"row_normalized0_raw2_plus_lit", "flat_bias", "edge_mag", "ratio"}, stats);

  // two response profiles across the center row, lit scene
  std::vector<std::vector<double>> profile_rows;
  for (std::size_t i = 0; i < norm_lit.profile.size(); ++i) {
    profile_rows.push_back({static_cast<double>(i), norm_lit.profile[i], raw_lit.profile[i]});
  }
  write_csv((fs::path(out_dir) / "profiles.csv").string(),
            {"x", "normalized_response", "unnormalized_response"}, profile_rows);
  write_text_file((fs::path(out_dir) / "profiles.svg").string(),
                  svg_line_chart("center-row response under a lit checkerboard",
                                 {{"normalized", norm_lit.profile},
                                  {"unnormalized", raw_lit.profile}}));

  write_snapshot(out_dir, "demo-checker", {{"ramp_span", fmt(ramp_span)}});

  const double ratio_norm = norm_lit.flat_bias / norm_lit.edge_mag;
  const double ratio_raw = raw_lit.flat_bias / raw_lit.edge_mag;
  std::cout << "demo-checker: lit-scene flat_bias/edge_mag normalized=" << ratio_norm
            << " unnormalized=" << ratio_raw << " (improvement x" << ratio_raw / ratio_norm
            << ")\n  wrote " << out_dir << "/region_stats.csv, profiles.csv, profiles.svg\n";
  return kExitOk;
}

// ------------------------------------------------------------------- diagnose

int cmd_diagnose(const std::string& checkpoint, const std::string& data_spec,
                 const std::string& out_dir, int top_k, int gb_layer, int gb_images) {
  ensure_out_dir(out_dir);
  Model model = Model::load_checkpoint(checkpoint);
  Dataset data = load_dataset_spec(data_spec);

  const RatioHistogram hist = ratio_histogram(model);
  std::vector<std::vector<double>> hist_rows;
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    hist_rows.push_back({static_cast<double>(b) * 0.05, static_cast<double>(b + 1) * 0.05,
                         static_cast<double>(hist.counts[b])});
  }
  write_csv((fs::path(out_dir) / "ratio_histogram.csv").string(), {"bin_lo", "bin_hi", "count"},
            hist_rows);
  {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
      labels.push_back(fmt(0.05 * static_cast<double>(b)));
      values.push_back(hist.counts[b]);
    }
    write_text_file((fs::path(out_dir) / "ratio_histogram.svg").string(),
                    svg_bar_chart("|r| over all conv filters", labels, values));
  }

  const int n = static_cast<int>(data.size());
  FilterErrorReport errors = filter_error_analysis(model, data, std::min(top_k, n));
  std::vector<std::vector<double>> err_rows;
  for (const FilterErrorRow& r : errors.rows) {
    err_rows.push_back({static_cast<double>(r.filter), r.abs_ratio, r.mean_response,
                        r.misclassified_frac});
  }
  write_csv((fs::path(out_dir) / "filter_errors.csv").string(),
            {"filter", "abs_ratio", "mean_response", "misclassified_frac"}, err_rows);

  const GuidedBackpropReport gb = guided_backprop_similarity(model, gb_layer, data, gb_images);
  std::vector<std::vector<double>> gb_rows;
  for (std::size_t b = 0; b < gb.histogram.size(); ++b) {
    gb_rows.push_back({-1.0 + 0.1 * static_cast<double>(b), -1.0 + 0.1 * static_cast<double>(b + 1),
                       static_cast<double>(gb.histogram[b])});
  }
  write_csv((fs::path(out_dir) / "guided_backprop_histogram.csv").string(),
            {"corr_lo", "corr_hi", "count"}, gb_rows);

  write_snapshot(out_dir, "diagnose",
                 {{"checkpoint", checkpoint},
                  {"data", data_spec},
                  {"top_k", std::to_string(top_k)},
                  {"gb_layer", std::to_string(gb_layer)},
                  {"gb_images", std::to_string(gb_images)}});

  double mass_zero = hist.ratios.empty() ? 0.0 : 0.0;
  for (double r : hist.ratios) mass_zero += (r < 0.05) ? 1.0 : 0.0;
  std::cout << "diagnose: " << hist.ratios.size() << " filters, " << mass_zero
            << " with |r| < 0.05; filter-error spearman=" << errors.spearman
            << "; guided-backprop mean off-diagonal=" << gb.mean_offdiag << '\n'
            << "  wrote " << out_dir
            << "/ratio_histogram.csv, filter_errors.csv, guided_backprop_histogram.csv\n";
  return kExitOk;
}

// ------------------------------------------------------------------ gradcheck

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<GradCheckEntry> results = run_gradient_suite(seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = true;
  for (const GradCheckEntry& e : results) {
    const bool pass = e.worst_rel < tolerance;
    ok = ok && pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << e.op << ": worst rel err " << e.worst_rel
              << " over " << e.probes << " probes\n";
  }
  std::cout << "gradcheck: " << (ok ? "all gradients verified" : "verification FAILED") << " in "
            << secs << " s (tolerance " << tolerance << ")\n";
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"filter-normalized convolution toolkit"};
  app.require_subcommand(1);

  // corrupt
  std::string in_spec, out_dir, variant = "C";
  std::uint64_t seed = 0;
  double severity = 1.0;
  bool write_pngs = false;
  CLI::App* corrupt = app.add_subcommand("corrupt", "generate a corrupted copy of a dataset");
  corrupt->add_option("--data,--in", in_spec, "input dataset (path or synthetic:N)")->required();
  corrupt->add_option("--variant", variant, "C, L, B, or S");
  corrupt->add_option("--seed", seed, "corruption seed");
  corrupt->add_option("--severity", severity, "severity scale, 0 disables");
  corrupt->add_option("--out", out_dir, "output directory")->required();
  corrupt->add_flag("--png", write_pngs, "also write a PNG directory (8-bit, clamped)");

  // train
  ModelConfig mc;
  TrainHyper hyper;
  std::string val_spec, paired_with, config_file;
  double low_shot = 1.0;
  std::uint64_t subsample_seed = 0;
  CLI::App* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--data", in_spec, "training dataset")->required();
  tr->add_option("--val", val_spec, "validation dataset");
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--config", config_file, "key=value model config file (overridden by flags)");
  tr->add_option("--arch", mc.architecture, "tiny_cnn or mini_resnet");
  tr->add_option("--conv-mode", mc.conv_mode, "vanilla or normalized");
  tr->add_option("--norm-layer", mc.norm_layer, "none, batch, or instance");
  tr->add_option("--use-affine", mc.use_affine, "auto, on, or off");
  tr->add_option("--width", mc.width, "base channel width");
  tr->add_option("--depth", mc.depth, "residual blocks per stage");
  tr->add_option("--init-seed", mc.init_seed, "weight init seed");
  tr->add_option("--lr", hyper.lr, "initial learning rate");
  tr->add_option("--momentum", hyper.momentum, "SGD momentum");
  tr->add_option("--schedule", hyper.schedule, "cosine, step, or constant");
  tr->add_option("--epochs", hyper.epochs, "training epochs");
  tr->add_option("--batch-size", hyper.batch_size, "mini-batch size");
  tr->add_option("--weight-decay", hyper.weight_decay, "L2 on conv/dense weights");
  tr->add_option("--reg-strength", hyper.reg_strength, "part-sum regularizer weight");
  tr->add_option("--augment-fraction", hyper.augment_fraction,
                 "gain-bias augmentation max variation (0.1 = +/-10%)");
  tr->add_option("--seed", hyper.seed, "data order / augmentation seed");
  tr->add_option("--low-shot-fraction", low_shot, "stratified training subset fraction");
  tr->add_option("--subsample-seed", subsample_seed, "low-shot subsample seed");
  tr->add_option("--paired-with", paired_with,
                 "sibling run directory whose seeds this run adopts");

  // eval
  std::string checkpoint, variants;
  std::vector<std::string> named_sets;
  bool contrast_bins = false, with_flip_rate = false;
  int batch_size = 128;
  std::uint64_t corrupt_seed = 0;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ev->add_option("--data", in_spec, "clean evaluation set");
  ev->add_option("--set", named_sets, "extra NAME=PATH set (repeatable)");
  ev->add_option("--corrupt-variants", variants, "comma list from {C,L,B,S} derived from --data");
  ev->add_option("--corrupt-seed", corrupt_seed, "corruption seed");
  ev->add_option("--severity", severity, "corruption severity");
  ev->add_flag("--contrast-bins", contrast_bins, "report 9 contrast-binned accuracies");
  ev->add_flag("--flip-rate", with_flip_rate, "report prediction flip rate per variant");
  ev->add_option("--batch-size", batch_size, "evaluation batch size");
  ev->add_option("--out", out_dir, "output directory")->required();

  // demo-checker
  double ramp_span = 0.5;
  CLI::App* demo = app.add_subcommand("demo-checker",
                                      "checkerboard edge-detection demo under ramp lighting");
  demo->add_option("--out", out_dir, "output directory")->required();
  demo->add_option("--ramp-span", ramp_span, "illumination ramp half-range (0.5 = +/-50%)");

  // diagnose
  int top_k = 100, gb_layer = 0, gb_images = 8;
  CLI::App* diag = app.add_subcommand("diagnose", "filter ratio/error/similarity diagnostics");
  diag->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  diag->add_option("--data", in_spec, "diagnostic dataset")->required();
  diag->add_option("--out", out_dir, "output directory")->required();
  diag->add_option("--top-k", top_k, "images per filter in the error analysis");
  diag->add_option("--gb-layer", gb_layer, "conv layer for guided backprop");
  diag->add_option("--gb-images", gb_images, "images averaged in guided backprop");

  // gradcheck
  double tolerance = 1e-4;
  std::uint64_t gc_seed = 1;
  CLI::App* gc = app.add_subcommand("gradcheck", "verify analytic gradients");
  gc->add_option("--seed", gc_seed, "probe seed");
  gc->add_option("--tolerance", tolerance, "max allowed relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (corrupt->parsed()) {
      return cmd_corrupt(in_spec, variant, seed, severity, out_dir, write_pngs);
    }
    if (tr->parsed()) {
      if (!config_file.empty()) {
        ModelConfig file_mc = model_config_from_kv(read_text_file(config_file));
        // flags override the file: reparse flags on top of file defaults
        file_mc.architecture = tr->count("--arch") ? mc.architecture : file_mc.architecture;
        file_mc.conv_mode = tr->count("--conv-mode") ? mc.conv_mode : file_mc.conv_mode;
        file_mc.norm_layer = tr->count("--norm-layer") ? mc.norm_layer : file_mc.norm_layer;
        file_mc.use_affine = tr->count("--use-affine") ? mc.use_affine : file_mc.use_affine;
        file_mc.width = tr->count("--width") ? mc.width : file_mc.width;
        file_mc.depth = tr->count("--depth") ? mc.depth : file_mc.depth;
        file_mc.init_seed = tr->count("--init-seed") ? mc.init_seed : file_mc.init_seed;
        mc = file_mc;
      }
      return cmd_train(in_spec, val_spec, mc, hyper, low_shot, subsample_seed, out_dir,
                       paired_with);
    }
    if (ev->parsed()) {
      return cmd_eval(checkpoint, in_spec, named_sets, variants, corrupt_seed, severity,
                      contrast_bins, with_flip_rate, batch_size, out_dir);
    }
    if (demo->parsed()) return cmd_demo_checker(out_dir, ramp_span);
    if (diag->parsed()) {
      return cmd_diagnose(checkpoint, in_spec, out_dir, top_k, gb_layer, gb_images);
    }
    if (gc->parsed()) return cmd_gradcheck(gc_seed, tolerance);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
