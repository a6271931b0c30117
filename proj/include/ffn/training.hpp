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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ffn/collective.hpp"
#include "ffn/metrics.hpp"
#include "ffn/model.hpp"
#include "ffn/optimizer.hpp"
#include "ffn/training_data.hpp"

namespace ffn {

/// One network evaluation's worth of training input, all (1, f, f, f).
template <typename Scalar>
struct FovItem {
  Tensor<Scalar> image;
  Tensor<Scalar> pom;
  Tensor<Scalar> labels;
};

/// Gradient of the batch-mean loss on one worker, plus what the caller
/// needs afterwards (logits for the POM feedback, loss/confusion sums).
template <typename Scalar>
struct LocalGradient {
  FfnParams<Scalar> grads;
  std::vector<Tensor<Scalar>> logits;
  double loss_sum = 0;
  ConfusionCounts confusion;
};

template <typename Scalar>
LocalGradient<Scalar> compute_local_gradient(const FfnParams<Scalar>& params, std::span<const FovItem<Scalar>> batch);

struct SyncStepResult {
  double mean_loss = 0;       // over every FOV of every worker
  ConfusionCounts confusion;  // summed over every worker
  std::uint64_t fovs = 0;     // FOVs in this global step
};

/// One synchronous data-parallel step: local gradient, ring-allreduce
/// average of the flattened gradient, then an identical Adam step on every
/// replica. Optionally verifies replica checksums (ConsistencyError).
/// `logits_out`, when given, receives the forward outputs for the batch.
template <typename Scalar>
SyncStepResult sync_sgd_step(RingGroup& group, FfnParams<Scalar>& params, AdamState<Scalar>& state,
                             std::span<const FovItem<Scalar>> batch, double lr, bool verify_replicas = false,
                             std::vector<Tensor<Scalar>>* logits_out = nullptr);

/// Throws ConsistencyError on every rank unless all replicas hash equal.
template <typename Scalar>
void verify_replica_consistency(RingGroup& group, const FfnParams<Scalar>& params);

/// Per-example FOV schedule used during training. The first FOV is the
/// centred one for half of the examples and a random other lattice point
/// otherwise, so the network also sees FOVs whose centre lies outside the
/// seeded object. Then the inference movement rule (FIFO, face max >=
/// threshold, no revisits) restricted to FOVs inside the example, i.e.
/// centres on the lattice centre + {-delta, 0, delta}^3. Then the next example.
class FovScheduler {
 public:
  FovScheduler(const Volume& image, const LabelVolume& labels, const std::vector<ExampleRef>& examples,
               BalancedSampler sampler, const FfnConfig& config, double move_threshold,
               std::uint64_t start_seed = 0);

  FovItem<float> next();
  /// Feeds the network output of the last item back into the example's POM.
  void absorb(const Tensor<float>& logits);

 private:
  void start_example();

  const Volume& image_;
  const LabelVolume& labels_;
  const std::vector<ExampleRef>& examples_;
  BalancedSampler sampler_;
  FfnConfig config_;
  double move_threshold_;
  std::mt19937_64 start_rng_;

  TrainingExample<float> example_;
  Tensor<float> pom_;
  std::vector<Coord> pending_;  // FOV centres in subvolume coordinates
  std::size_t pending_pos_ = 0;
  Coord current_;
  bool have_example_ = false;
};

enum class TransportKind { kInproc, kTcp };

TransportKind parse_transport(const std::string& name);
std::string to_string(TransportKind kind);

struct TrainOptions {
  FfnConfig model;
  LrPolicy lr;  // batch_scale_k is taken from workers * batch_per_worker
  int workers = 1;
  int batch_per_worker = 1;
  std::int64_t steps = 100;
  std::uint64_t seed = 1;
  double move_threshold = 0.9;
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::filesystem::path out_dir;  // empty: no files written
  TransportKind transport = TransportKind::kInproc;
  std::vector<TcpEndpoint> tcp_hosts;
  std::optional<int> only_rank;  // run a single rank (multi-process TCP)
  bool verify_replicas = false;
  bool record_wall_time = true;

  void validate() const;
};

struct StepStats {
  std::int64_t step = 0;
  double loss = 0;
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::uint64_t fovs = 0;  // cumulative
  double wall_s = 0;       // since training start
  double lr = 0;
};

struct TrainStats {
  std::vector<StepStats> rows;

  /// Cumulative FOVs per second at the last row; 0 without timing.
  double throughput() const;
};

inline constexpr const char* kStatsCsvHeader = "step,loss,acc,prec,rec,f1,fovs,wall_s";
void write_stats_csv(std::ostream& os, const TrainStats& stats);

using StepHook = std::function<void(int rank, std::int64_t step, const FfnParams<float>& params)>;

struct TrainResult {
  FfnParams<float> params;
  AdamState<float> adam;
  TrainStats stats;
  std::vector<std::filesystem::path> checkpoints;
  double loop_seconds = 0;  // wall time of the step loop on rank 0
};

/// Synchronous data-parallel training with p workers (threads in this
/// process). Rank 0 records stats and writes checkpoints/stats.csv into
/// out_dir. A failing worker aborts the run with WorkerError.
TrainResult run_training(const TrainOptions& options, const Volume& image, const LabelVolume& labels,
                         const std::vector<ExampleRef>& examples, const StepHook& hook = {});

TrainResult run_training(const TrainOptions& options, const Volume& image, const LabelVolume& labels,
                         const StepHook& hook = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step);

}  // namespace ffn
