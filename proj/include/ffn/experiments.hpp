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

#include <iosfwd>
#include <string>
#include <vector>

#include "ffn/training.hpp"

namespace ffn {

/// s_0 = x_0, s_t = factor * s_{t-1} + (1 - factor) * x_t.
std::vector<double> exponential_smoothing(const std::vector<double>& series, double factor = 0.9);

/// Divides every value by the group maximum; a non-positive maximum maps
/// the group to zeros.
std::vector<double> normalize_by_max(const std::vector<double>& values);

struct ScalingRow {
  int workers = 0;
  double fovs_per_s = 0;
  double efficiency = 0;  // throughput(p) / (p * throughput(1))
};

struct BenchOptions {
  std::vector<int> workers{1, 2, 4, 8};
  int batch_per_worker = 1;
  std::int64_t steps = 20;
  bool allow_oversubscription = false;  // permit p above hardware_concurrency
};

/// Trains with each worker count for a fixed step budget and reports the
/// loop throughput. p = 1 is always measured since efficiency needs it.
std::vector<ScalingRow> bench_scaling(const TrainOptions& base, const BenchOptions& bench, const Volume& image,
                                      const LabelVolume& labels);

inline constexpr const char* kScalingCsvHeader = "p,fovs_per_s,efficiency";
void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows);

struct SweepOptions {
  std::vector<int> workers{1, 2};
  std::vector<double> lrs{3e-4, 1.2e-3, 4.8e-3};
  int batch_per_worker = 1;
  std::int64_t steps = 50;
  std::int64_t readout_step = 0;  // 0: final step
  double smoothing = 0.9;
  double max_seconds = 3600;      // refuse grids estimated above this
};

struct SweepRow {
  int workers = 0;
  int batch = 0;  // global batch: workers * batch_per_worker
  double lr = 0;
  std::int64_t step = 0;
  double smoothed_accuracy = 0;
  double smoothed_f1 = 0;
  double normalized_accuracy = 0;  // smoothed accuracy / max over the same batch
};

/// Seconds for one forward + backward FOV evaluation of `config`, timed on
/// this machine.
double time_fov_evaluation(const FfnConfig& config, int repeats = 2);

/// Estimated wall time of the sweep grid given a per-FOV cost.
double estimate_sweep_seconds(const SweepOptions& sweep, double seconds_per_fov);

/// Runs the (workers, lr) grid with the base options. Every cell uses
/// lr policy `base.lr.mode` with the listed base rate. Throws ValueError
/// with the estimate when it exceeds sweep.max_seconds.
std::vector<SweepRow> run_sweep(const TrainOptions& base, const SweepOptions& sweep, const Volume& image,
                                const LabelVolume& labels, double seconds_per_fov);

inline constexpr const char* kSweepCsvHeader =
    "workers,batch,lr,step,smoothed_accuracy,smoothed_f1,normalized_accuracy";
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace ffn
