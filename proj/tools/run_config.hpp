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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ffn/experiments.hpp"
#include "ffn/inference.hpp"
#include "ffn/metrics.hpp"
#include "ffn/training.hpp"

namespace ffn::cli {

/// Every setting a command can take. Loaded from JSON, overridden by
/// flags, then written back as config.json next to the outputs.
struct RunConfig {
  // model
  int num_modules = 12;
  int features = 32;
  int fov_size = 33;
  int delta = 8;

  // optimisation
  double lr = 1.2e-3;
  std::string lr_policy = "fixed";
  std::int64_t warmup_steps = 0;
  int workers = 1;
  int batch_per_worker = 1;
  std::int64_t steps = 100;
  int checkpoint_every = 0;
  double move_threshold = 0.9;
  std::uint64_t seed = 1;

  // transport
  std::string transport = "inproc";
  std::string hosts;
  int rank = -1;  // -1: run every rank in this process
  bool verify_replicas = false;
  bool record_wall_time = true;

  // data
  std::string image;
  std::string labels;
  std::vector<std::int64_t> dims;
  int objects = 8;
  double noise_sigma = 15.0;

  // inference and evaluation
  std::string checkpoint;
  std::string checkpoint_dir;
  double min_spacing = 0;  // 0: delta
  std::string pred;
  std::string truth;
  bool include_background = false;
  std::string log_base = "e";

  // experiments
  std::vector<int> workers_list{1, 2, 4, 8};
  std::vector<double> lrs{3e-4, 1.2e-3, 4.8e-3};
  std::int64_t readout_step = 0;
  double max_seconds = 3600;
  bool oversubscribe = false;

  std::string out_dir;

  FfnConfig model() const;
  LrPolicy lr_policy_value() const;
  TrainOptions train_options() const;
  MetricOptions metric_options() const;
  FloodFillOptions flood_fill() const;
  double seed_spacing() const;
};

/// Unknown keys and type mismatches raise ValueError.
void merge_json(RunConfig& config, const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& config);

RunConfig load_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& dir, const RunConfig& config);

}  // namespace ffn::cli
