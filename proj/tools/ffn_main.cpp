// Copyright 2026 The ffnsync Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry point: gen, train, infer, eval, bench, sweep.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "ffn/checkpoint.hpp"
#include "ffn/experiments.hpp"
#include "ffn/inference.hpp"
#include "ffn/metrics.hpp"
#include "ffn/training.hpp"
#include "ffn/volume.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace ffn;
using ffn::cli::RunConfig;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kTransport = 4 };

struct UsageError : Error {
  using Error::Error;
};

// Flag values land in `flags`; only the ones given on the command line are
// copied over the JSON config afterwards.
class Overrides {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, T RunConfig::*field, const std::string& help) {
    CLI::Option* opt = app->add_option(name, flags_.*field, help);
    appliers_.push_back({opt, [field, this](RunConfig& c) { c.*field = flags_.*field; }});
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& name, bool RunConfig::*field, bool value,
                        const std::string& help) {
    CLI::Option* opt = app->add_flag(name, help);
    appliers_.push_back({opt, [field, value](RunConfig& c) { c.*field = value; }});
    return opt;
  }

  void apply(RunConfig& config) const {
    for (const auto& [opt, fn] : appliers_)
      if (opt->count() > 0) fn(config);
  }

 private:
  RunConfig flags_;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> appliers_;
};

fs::path default_out(const std::string& command) {
  const char* root = std::getenv("FFN_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "runs") / command;
}

fs::path out_dir(const RunConfig& c, const std::string& command) {
  return c.out_dir.empty() ? default_out(command) : fs::path(c.out_dir);
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

void add_model_flags(Overrides& o, CLI::App* app) {
  o.add(app, "--modules", &RunConfig::num_modules, "residual modules");
  o.add(app, "--features", &RunConfig::features, "feature maps per convolution");
  o.add(app, "--fov", &RunConfig::fov_size, "field of view edge (odd)");
  o.add(app, "--delta", &RunConfig::delta, "FOV movement step");
}

void add_train_flags(Overrides& o, CLI::App* app) {
  add_model_flags(o, app);
  o.add(app, "--image", &RunConfig::image, "training image (FFNV gray8)");
  o.add(app, "--labels", &RunConfig::labels, "training labels (FFNV label32)");
  o.add(app, "--lr", &RunConfig::lr, "base learning rate");
  o.add(app, "--lr-policy", &RunConfig::lr_policy, "fixed, linear or sqrt")
      ->check(CLI::IsMember({"fixed", "linear", "sqrt"}));
  o.add(app, "--warmup-steps", &RunConfig::warmup_steps, "linear warm-up length");
  o.add(app, "--workers", &RunConfig::workers, "data-parallel workers");
  o.add(app, "--batch-per-worker", &RunConfig::batch_per_worker, "FOVs per worker per step");
  o.add(app, "--steps", &RunConfig::steps, "training steps");
  o.add(app, "--seed", &RunConfig::seed, "random seed");
  o.add(app, "--move-threshold", &RunConfig::move_threshold, "FOV movement threshold in (0, 1]");
  o.add(app, "--transport", &RunConfig::transport, "inproc or tcp")->check(CLI::IsMember({"inproc", "tcp"}));
  o.add(app, "--hosts", &RunConfig::hosts, "tcp ring endpoints host:port,...");
}

void log_effective_lr(const TrainOptions& t) {
  LrPolicy p = t.lr;
  p.batch_scale_k = t.workers * t.batch_per_worker;
  std::cout << "effective lr " << p.scaled_lr() << " (base " << p.base_lr << ", policy " << to_string(p.mode)
            << ", k=" << p.batch_scale_k << ", warmup " << p.warmup_steps << ")\n";
}

std::pair<Volume, LabelVolume> load_training_volumes(const RunConfig& c) {
  require(c.image, "--image");
  require(c.labels, "--labels");
  Volume image = load_volume<std::uint8_t>(c.image);
  LabelVolume labels = load_volume<std::uint32_t>(c.labels);
  if (image.dims() != labels.dims()) throw ShapeError("image and label volume dims differ");
  return {std::move(image), std::move(labels)};
}

int cmd_gen(RunConfig c) {
  if (c.dims.empty()) throw UsageError("--dims is required");
  if (c.dims.size() == 1) c.dims.assign(3, c.dims[0]);
  if (c.dims.size() != 3) throw UsageError("--dims takes one or three extents");
  const fs::path out = out_dir(c, "gen");
  const SyntheticVolume vol = gen_synthetic({c.dims[0], c.dims[1], c.dims[2]}, c.objects, c.noise_sigma, c.seed);
  write_config(out, c);
  save_volume(out / "image.ffnv", vol.image);
  save_volume(out / "labels.ffnv", vol.labels);
  std::cout << "wrote " << (out / "image.ffnv").string() << " and " << (out / "labels.ffnv").string() << '\n';
  return kOk;
}

int cmd_train(const RunConfig& c) {
  TrainOptions t = c.train_options();
  const auto [image, labels] = load_training_volumes(c);
  t.out_dir = out_dir(c, "train");
  write_config(t.out_dir, c);
  log_effective_lr(t);
  const TrainResult res = run_training(t, image, labels);
  if (!res.stats.rows.empty()) {
    const StepStats& last = res.stats.rows.back();
    std::cout << "step " << last.step << " loss " << last.loss << " f1 " << last.f1 << " fovs " << last.fovs
              << " (" << res.loop_seconds << " s)\n";
  }
  for (const auto& p : res.checkpoints) std::cout << "checkpoint " << p.string() << '\n';
  return kOk;
}

std::vector<fs::path> selected_checkpoints(const RunConfig& c) {
  if (!c.checkpoint.empty() && !c.checkpoint_dir.empty()) {
    throw UsageError("--checkpoint and --all-checkpoints are exclusive");
  }
  if (!c.checkpoint.empty()) return {c.checkpoint};
  if (c.checkpoint_dir.empty()) throw UsageError("--checkpoint or --all-checkpoints is required");
  auto list = list_checkpoints(c.checkpoint_dir);
  if (list.empty()) throw FormatError(FormatError::Kind::kIo, "no checkpoints in " + c.checkpoint_dir);
  return list;
}

bool model_explicit(const RunConfig& c) {
  const RunConfig d;
  return c.num_modules != d.num_modules || c.features != d.features || c.fov_size != d.fov_size ||
         c.delta != d.delta;
}

struct Segmented {
  Checkpoint checkpoint;
  LabelVolume labels;
};

Segmented segment_with(const RunConfig& c, const fs::path& ckpt_path, const Volume& image) {
  const FfnConfig expected = c.model();
  Checkpoint ckpt = load_checkpoint(ckpt_path, model_explicit(c) ? &expected : nullptr);
  RunConfig resolved = c;
  resolved.delta = ckpt.params.config.delta;
  const FloodFillOptions opts = flood_fill_options(ckpt.params.config, c.move_threshold);
  opts.validate();
  const SeedList seeds = find_seeds(image, resolved.seed_spacing(), ckpt.params.config.fov_radius());
  SegmentStats stats;
  LabelVolume seg = segment_volume(network_predictor(ckpt.params), image, seeds, opts, &stats);
  std::cout << ckpt_path.filename().string() << ": " << stats.objects << " objects from " << seeds.size()
            << " seeds, " << stats.fov_evaluations << " FOV evaluations\n";
  return {std::move(ckpt), std::move(seg)};
}

int cmd_infer(const RunConfig& c) {
  if (!(c.move_threshold > 0.0 && c.move_threshold <= 1.0)) throw ValueError("--move-threshold must lie in (0, 1]");
  require(c.image, "--image");
  const auto checkpoints = selected_checkpoints(c);
  const Volume image = load_volume<std::uint8_t>(c.image);
  const fs::path out = out_dir(c, "infer");
  write_config(out, c);
  for (const auto& path : checkpoints) {
    const Segmented s = segment_with(c, path, image);
    const fs::path target = out / ("seg-" + path.stem().string() + ".ffnv");
    save_volume(target, s.labels);
    std::cout << "wrote " << target.string() << '\n';
  }
  return kOk;
}

int cmd_eval(const RunConfig& c) {
  const MetricOptions metric = c.metric_options();
  require(c.truth, "--truth");
  const LabelVolume truth = load_volume<std::uint32_t>(c.truth);
  const fs::path out = out_dir(c, "eval");

  if (!c.checkpoint_dir.empty()) {
    if (!(c.move_threshold > 0.0 && c.move_threshold <= 1.0)) {
      throw ValueError("--move-threshold must lie in (0, 1]");
    }
    require(c.image, "--image");
    const Volume image = load_volume<std::uint8_t>(c.image);
    if (image.dims() != truth.dims()) throw ShapeError("image and truth dims differ");
    write_config(out, c);
    std::ofstream csv(out / "checkpoints.csv");
    csv << "checkpoint,step,are,voi_split,voi_merge,voi\n" << std::setprecision(9);
    for (const auto& path : list_checkpoints(c.checkpoint_dir)) {
      const Segmented s = segment_with(c, path, image);
      const Scores sc = evaluate_segmentation(s.labels, truth, metric);
      csv << path.filename().string() << ',' << s.checkpoint.step << ',' << sc.are << ',' << sc.voi_split << ','
          << sc.voi_merge << ',' << sc.voi << '\n';
      std::cout << path.filename().string() << " are " << sc.are << " voi " << sc.voi << '\n';
    }
    std::cout << "wrote " << (out / "checkpoints.csv").string() << '\n';
    return kOk;
  }

  require(c.pred, "--pred");
  const LabelVolume pred = load_volume<std::uint32_t>(c.pred);
  if (pred.dims() != truth.dims()) throw ShapeError("prediction and truth dims differ");
  const Scores sc = evaluate_segmentation(pred, truth, metric);
  write_config(out, c);
  std::ofstream(out / "scores.json") << scores_json(sc) << '\n';
  std::ofstream(out / "scores.csv") << scores_csv_header() << '\n' << scores_csv_row(sc) << '\n';
  std::cout << scores_json(sc) << '\n';
  return kOk;
}

int cmd_bench(const RunConfig& c) {
  TrainOptions t = c.train_options();
  const auto [image, labels] = load_training_volumes(c);
  BenchOptions b;
  b.workers = c.workers_list;
  b.batch_per_worker = c.batch_per_worker;
  b.steps = c.steps;
  b.allow_oversubscription = c.oversubscribe;
  const fs::path out = out_dir(c, "bench");
  write_config(out, c);
  const auto rows = bench_scaling(t, b, image, labels);
  std::ofstream csv(out / "scaling.csv");
  write_scaling_csv(csv, rows);
  write_scaling_csv(std::cout, rows);
  return kOk;
}

int cmd_sweep(const RunConfig& c) {
  TrainOptions t = c.train_options();
  const auto [image, labels] = load_training_volumes(c);
  SweepOptions s;
  s.workers = c.workers_list;
  s.lrs = c.lrs;
  s.batch_per_worker = c.batch_per_worker;
  s.steps = c.steps;
  s.readout_step = c.readout_step;
  s.max_seconds = c.max_seconds;
  const fs::path out = out_dir(c, "sweep");
  const double per_fov = time_fov_evaluation(t.model);
  std::cout << "estimated " << estimate_sweep_seconds(s, per_fov) << " s for " << s.workers.size() * s.lrs.size()
            << " runs\n";
  const auto rows = run_sweep(t, s, image, labels, per_fov);
  write_config(out, c);
  std::ofstream csv(out / "sweep.csv");
  write_sweep_csv(csv, rows);
  write_sweep_csv(std::cout, rows);
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Flood-filling network segmentation with synchronous data-parallel training"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON run config; flags override its values")->check(CLI::ExistingFile);
  Overrides o;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic image/label volume pair");
  o.add(gen, "--dims", &RunConfig::dims, "extent, or x,y,z extents")->delimiter(',');
  o.add(gen, "--objects", &RunConfig::objects, "number of objects");
  o.add(gen, "--noise", &RunConfig::noise_sigma, "Gaussian noise sigma in gray levels");
  o.add(gen, "--seed", &RunConfig::seed, "random seed");

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_train_flags(o, train);
  o.add(train, "--checkpoint-every", &RunConfig::checkpoint_every, "checkpoint period in steps (0: final only)");
  o.add(train, "--rank", &RunConfig::rank, "run only this rank (multi-process tcp)");
  o.add_flag(train, "--verify-replicas", &RunConfig::verify_replicas, true, "compare replica checksums each step");
  o.add_flag(train, "--no-wall-clock", &RunConfig::record_wall_time, false, "write wall_s as 0 in stats.csv");

  CLI::App* infer = app.add_subcommand("infer", "segment a volume with trained checkpoints");
  add_model_flags(o, infer);
  o.add(infer, "--image", &RunConfig::image, "image to segment (FFNV gray8)");
  o.add(infer, "--checkpoint", &RunConfig::checkpoint, "checkpoint file");
  o.add(infer, "--all-checkpoints", &RunConfig::checkpoint_dir, "segment with every checkpoint in a directory");
  o.add(infer, "--move-threshold", &RunConfig::move_threshold, "FOV movement threshold in (0, 1]");
  o.add(infer, "--min-spacing", &RunConfig::min_spacing, "minimum seed spacing (default: delta)");

  CLI::App* eval = app.add_subcommand("eval", "score segmentations against ground truth");
  add_model_flags(o, eval);
  o.add(eval, "--pred", &RunConfig::pred, "predicted labels (FFNV label32)");
  o.add(eval, "--truth", &RunConfig::truth, "ground-truth labels (FFNV label32)");
  o.add(eval, "--checkpoints", &RunConfig::checkpoint_dir, "score every checkpoint in a directory");
  o.add(eval, "--image", &RunConfig::image, "image to segment with --checkpoints");
  o.add(eval, "--move-threshold", &RunConfig::move_threshold, "FOV movement threshold in (0, 1]");
  o.add(eval, "--min-spacing", &RunConfig::min_spacing, "minimum seed spacing (default: delta)");
  o.add(eval, "--log-base", &RunConfig::log_base, "VOI logarithm base: e or 2")->check(CLI::IsMember({"e", "2"}));
  o.add_flag(eval, "--include-background", &RunConfig::include_background, true,
             "score voxels whose truth label is 0");

  CLI::App* bench = app.add_subcommand("bench", "throughput scaling over worker counts");
  add_train_flags(o, bench);
  o.add(bench, "--workers-list", &RunConfig::workers_list, "worker counts")->delimiter(',');
  o.add_flag(bench, "--oversubscribe", &RunConfig::oversubscribe, true, "allow more workers than cores");

  CLI::App* sweep = app.add_subcommand("sweep", "learning-rate by worker-count grid");
  add_train_flags(o, sweep);
  o.add(sweep, "--workers-list", &RunConfig::workers_list, "worker counts")->delimiter(',');
  o.add(sweep, "--lrs", &RunConfig::lrs, "base learning rates")->delimiter(',');
  o.add(sweep, "--readout-step", &RunConfig::readout_step, "step at which metrics are read (0: last)");
  o.add(sweep, "--max-seconds", &RunConfig::max_seconds, "refuse grids estimated to take longer");

  for (CLI::App* sub : {gen, train, infer, eval, bench, sweep}) {
    o.add(sub, "--out", &RunConfig::out_dir, "output directory (default $FFN_OUTPUT_ROOT/<command>)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  RunConfig config = config_path.empty() ? RunConfig{} : cli::load_config(config_path);
  o.apply(config);

  if (gen->parsed()) return cmd_gen(config);
  if (train->parsed()) return cmd_train(config);
  if (infer->parsed()) return cmd_infer(config);
  if (eval->parsed()) return cmd_eval(config);
  if (bench->parsed()) return cmd_bench(config);
  return cmd_sweep(config);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValueError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kUsage;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return kTransport;
  } catch (const WorkerError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.transport() ? kTransport : kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
