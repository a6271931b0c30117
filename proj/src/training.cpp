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

#include "ffn/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <ostream>
#include <thread>

#include "ffn/checkpoint.hpp"
#include "ffn/movement.hpp"

namespace ffn {

template <typename Scalar>
LocalGradient<Scalar> compute_local_gradient(const FfnParams<Scalar>& params, std::span<const FovItem<Scalar>> batch) {
  if (batch.empty()) throw ValueError("compute_local_gradient: empty batch");
  LocalGradient<Scalar> out;
  out.grads = FfnParams<Scalar>(params.config);
  ForwardCache<Scalar> cache;
  for (const auto& item : batch) {
    Tensor<Scalar> logits = forward(params, item.image, item.pom, &cache);
    const LossResult<Scalar> loss = sigmoid_ce_loss(logits, item.labels);
    const FfnParams<Scalar> g = backward(params, cache, loss.grad);
    for (std::size_t i = 0; i < g.tensor_count(); ++i) out.grads.tensor(i) += g.tensor(i);
    out.loss_sum += static_cast<double>(loss.loss);
    out.confusion += voxelwise_confusion(logits, item.labels);
    out.logits.push_back(std::move(logits));
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(batch.size());
  for (std::size_t i = 0; i < out.grads.tensor_count(); ++i) out.grads.tensor(i) *= inv;
  return out;
}

template <typename Scalar>
void verify_replica_consistency(RingGroup& group, const FfnParams<Scalar>& params) {
  // The mean of 16-bit hash slices equals the local slice on every rank only
  // when all ranks agree; a second reduction makes the verdict collective.
  const std::uint64_t h = checksum(params);
  std::array<double, 4> parts{};
  for (int i = 0; i < 4; ++i) parts[static_cast<std::size_t>(i)] = static_cast<double>((h >> (16 * i)) & 0xffffu);
  std::array<double, 4> mean = parts;
  ring_allreduce(group, std::span<double>(mean));
  double ok = mean == parts ? 1.0 : 0.0;
  ring_allreduce(group, std::span<double>(&ok, 1));
  if (ok != 1.0) {
    throw ConsistencyError("replica parameters diverged (rank " + std::to_string(group.rank()) + " checksum " +
                           std::to_string(h) + ")");
  }
}

template <typename Scalar>
SyncStepResult sync_sgd_step(RingGroup& group, FfnParams<Scalar>& params, AdamState<Scalar>& state,
                             std::span<const FovItem<Scalar>> batch, double lr, bool verify_replicas,
                             std::vector<Tensor<Scalar>>* logits_out) {
  LocalGradient<Scalar> local = compute_local_gradient(params, batch);
  Vector<Scalar> flat = flatten(local.grads);
  ring_allreduce(group, std::span<Scalar>(flat.data(), static_cast<std::size_t>(flat.size())));
  unflatten<Scalar>(flat, local.grads);
  adam_step(params, local.grads, state, lr);

  std::array<double, 6> totals{local.loss_sum,
                               static_cast<double>(local.confusion.tp),
                               static_cast<double>(local.confusion.fp),
                               static_cast<double>(local.confusion.tn),
                               static_cast<double>(local.confusion.fn),
                               static_cast<double>(batch.size())};
  ring_allreduce(group, std::span<double>(totals));
  const double p = group.size();
  auto count = [&](std::size_t i) { return static_cast<std::uint64_t>(std::llround(totals[i] * p)); };
  SyncStepResult r;
  r.fovs = count(5);
  r.mean_loss = totals[0] * p / static_cast<double>(r.fovs);
  r.confusion = {count(1), count(2), count(3), count(4)};

  if (verify_replicas) verify_replica_consistency(group, params);
  if (logits_out) *logits_out = std::move(local.logits);
  return r;
}

#define FFN_INSTANTIATE(T)                                                                                    \
  template LocalGradient<T> compute_local_gradient(const FfnParams<T>&, std::span<const FovItem<T>>);        \
  template void verify_replica_consistency(RingGroup&, const FfnParams<T>&);                                 \
  template SyncStepResult sync_sgd_step(RingGroup&, FfnParams<T>&, AdamState<T>&, std::span<const FovItem<T>>, \
                                        double, bool, std::vector<Tensor<T>>*);

FFN_INSTANTIATE(float)
FFN_INSTANTIATE(double)
#undef FFN_INSTANTIATE

// ---------------------------------------------------------------------------

FovScheduler::FovScheduler(const Volume& image, const LabelVolume& labels, const std::vector<ExampleRef>& examples,
                           BalancedSampler sampler, const FfnConfig& config, double move_threshold,
                           std::uint64_t start_seed)
    : image_(image),
      labels_(labels),
      examples_(examples),
      sampler_(std::move(sampler)),
      config_(config),
      move_threshold_(move_threshold),
      start_rng_(start_seed) {}

void FovScheduler::start_example() {
  const ExampleRef& ref = examples_[sampler_.next()];
  const int s = config_.subvol_size();
  example_ = make_example<float>(image_, labels_, ref, s);
  pom_ = Tensor<float>({1, s, s, s}, logit(kSoftLabelOut));
  const Index c = s / 2;
  pom_(0, c, c, c) = logit(kSoftLabelIn);
  Coord first{c, c, c};
  if (std::uniform_int_distribution<int>(0, 1)(start_rng_) == 1) {
    // Any of the 26 non-centre lattice points.
    int k = std::uniform_int_distribution<int>(0, 25)(start_rng_);
    if (k >= 13) ++k;
    first = Coord{c + (k / 9 - 1) * config_.delta, c + (k / 3 % 3 - 1) * config_.delta, c + (k % 3 - 1) * config_.delta};
  }
  pending_.assign(1, first);
  pending_pos_ = 0;
  have_example_ = true;
}

FovItem<float> FovScheduler::next() {
  if (!have_example_ || pending_pos_ >= pending_.size()) start_example();
  current_ = pending_[pending_pos_++];
  const Index r = config_.fov_radius();
  const Coord origin = current_ - Coord{r, r, r};
  const Coord size = config_.fov_shape();
  return {crop(example_.image, origin, size), crop(pom_, origin, size), crop(example_.mask, origin, size)};
}

void FovScheduler::absorb(const Tensor<float>& logits) {
  const Index r = config_.fov_radius();
  apply_pom_update(pom_, logits, current_ - Coord{r, r, r});
  // Follow the FOV queue as inference does, limited to the positions whose
  // FOV fits in the example: the 3^3 lattice centre + {-delta, 0, delta}.
  const Index c = config_.subvol_size() / 2;
  for (const Coord& off : scored_moves(pom_, current_, config_.delta, move_threshold_)) {
    const Coord next = current_ + off;
    bool inside = true;
    for (int a = 0; a < 3; ++a)
      if (next[a] < c - config_.delta || next[a] > c + config_.delta) inside = false;
    if (inside && std::find(pending_.begin(), pending_.end(), next) == pending_.end()) pending_.push_back(next);
  }
}

// ---------------------------------------------------------------------------

TransportKind parse_transport(const std::string& name) {
  if (name == "inproc") return TransportKind::kInproc;
  if (name == "tcp") return TransportKind::kTcp;
  throw ValueError("unknown transport '" + name + "' (expected inproc or tcp)");
}

std::string to_string(TransportKind kind) { return kind == TransportKind::kTcp ? "tcp" : "inproc"; }

void TrainOptions::validate() const {
  model.validate();
  lr.validate();
  if (workers < 1) throw ValueError("workers must be >= 1");
  if (batch_per_worker < 1) throw ValueError("batch_per_worker must be >= 1");
  if (steps < 0) throw ValueError("steps must be >= 0");
  if (!(move_threshold > 0.0 && move_threshold <= 1.0)) throw ValueError("move threshold must lie in (0, 1]");
  if (checkpoint_every < 0) throw ValueError("checkpoint_every must be >= 0");
  if (transport == TransportKind::kTcp && static_cast<int>(tcp_hosts.size()) != workers) {
    throw ValueError("tcp transport needs one host:port per worker");
  }
  if (only_rank && (*only_rank < 0 || *only_rank >= workers)) throw ValueError("rank outside [0, workers)");
  if (only_rank && transport != TransportKind::kTcp) throw ValueError("a single rank can only run over tcp");
}

double TrainStats::throughput() const {
  if (rows.empty() || rows.back().wall_s <= 0) return 0.0;
  return static_cast<double>(rows.back().fovs) / rows.back().wall_s;
}

void write_stats_row(std::ostream& os, const StepStats& r) {
  os << r.step << ',' << std::setprecision(9) << r.loss << ',' << r.accuracy << ',' << r.precision << ','
     << r.recall << ',' << r.f1 << ',' << r.fovs << ',' << r.wall_s << '\n';
}

void write_stats_csv(std::ostream& os, const TrainStats& stats) {
  os << kStatsCsvHeader << '\n';
  for (const auto& r : stats.rows) write_stats_row(os, r);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
  std::ostringstream name;
  name << "ckpt-" << std::setw(8) << std::setfill('0') << step << ".ffnc";
  return dir / name.str();
}

TrainResult run_training(const TrainOptions& options, const Volume& image, const LabelVolume& labels,
                         const StepHook& hook) {
  return run_training(options, image, labels, extract_examples(image, labels, options.model.subvol_size()), hook);
}

TrainResult run_training(const TrainOptions& options, const Volume& image, const LabelVolume& labels,
                         const std::vector<ExampleRef>& examples, const StepHook& hook) {
  options.validate();
  if (examples.empty()) throw ValueError("run_training: no training examples");
  const int p = options.workers;
  const int b = options.batch_per_worker;
  LrPolicy policy = options.lr;
  policy.batch_scale_k = p * b;

  std::shared_ptr<InprocFabric> fabric;
  if (options.transport == TransportKind::kInproc) fabric = InprocFabric::create(p);

  std::vector<int> ranks;
  if (options.only_rank) ranks.push_back(*options.only_rank);
  else
    for (int r = 0; r < p; ++r) ranks.push_back(r);
  const int reporter = ranks.front();

  if (!options.out_dir.empty() && reporter == 0) std::filesystem::create_directories(options.out_dir);

  TrainResult result;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(p));

  auto worker = [&](int rank) {
    try {
      std::unique_ptr<Transport> transport;
      if (fabric) transport = fabric->endpoint(rank);
      else transport = std::make_unique<TcpTransport>(rank, options.tcp_hosts);
      RingGroup group(std::move(transport));

      FfnParams<float> params = init_params<float>(options.model, options.seed);
      AdamState<float> adam(options.model);
      std::vector<FovScheduler> slots;
      for (int j = 0; j < b; ++j) {
        slots.emplace_back(image, labels, examples,
                           BalancedSampler(examples, {rank, p}, options.seed, static_cast<std::uint64_t>(j)),
                           options.model, options.move_threshold,
                           options.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(rank) * 1024 + j);
      }

      const bool report = rank == reporter;
      const bool write_files = report && rank == 0 && !options.out_dir.empty();
      std::ofstream csv;
      if (write_files) {
        csv.open(options.out_dir / "stats.csv");
        if (!csv) throw Error("cannot write " + (options.out_dir / "stats.csv").string());
        csv << kStatsCsvHeader << '\n';
      }

      const auto start = std::chrono::steady_clock::now();
      std::uint64_t fovs = 0;
      std::vector<FovItem<float>> batch(static_cast<std::size_t>(b));
      std::vector<Tensor<float>> logits;
      for (std::int64_t step = 0; step < options.steps; ++step) {
        for (int j = 0; j < b; ++j) batch[static_cast<std::size_t>(j)] = slots[static_cast<std::size_t>(j)].next();
        const double lr = effective_lr(policy, step);
        const SyncStepResult res = sync_sgd_step<float>(group, params, adam, batch, lr, options.verify_replicas, &logits);
        for (int j = 0; j < b; ++j) slots[static_cast<std::size_t>(j)].absorb(logits[static_cast<std::size_t>(j)]);
        fovs += res.fovs;

        if (report) {
          const VoxelMetrics m = voxel_metrics(res.confusion);
          StepStats row{step + 1, res.mean_loss, m.accuracy, m.precision, m.recall, m.f1, fovs, 0.0, lr};
          if (options.record_wall_time) {
            row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          }
          result.stats.rows.push_back(row);
          if (write_files) {
            write_stats_row(csv, row);
            csv.flush();
            const bool periodic = options.checkpoint_every > 0 && (step + 1) % options.checkpoint_every == 0;
            if (periodic && step + 1 != options.steps) {
              const auto path = checkpoint_path(options.out_dir, step + 1);
              save_checkpoint(path, params, &adam, static_cast<std::uint64_t>(step + 1));
              result.checkpoints.push_back(path);
            }
          }
        }
        if (hook) hook(rank, step + 1, params);
      }

      if (report) {
        result.loop_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (write_files) {
          const auto path = checkpoint_path(options.out_dir, options.steps);
          save_checkpoint(path, params, &adam, static_cast<std::uint64_t>(options.steps));
          result.checkpoints.push_back(path);
        }
        result.params = params;
        result.adam = adam;
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(rank)] = std::current_exception();
      if (fabric) fabric->shutdown(rank, e.what());
    } catch (...) {
      errors[static_cast<std::size_t>(rank)] = std::current_exception();
      if (fabric) fabric->shutdown(rank, "unknown error");
    }
  };

  if (ranks.size() == 1) {
    worker(ranks.front());
  } else {
    std::vector<std::thread> threads;
    for (int r : ranks) threads.emplace_back(worker, r);
    for (auto& t : threads) t.join();
  }

  // Report the root cause: a worker that failed on its own rather than one
  // that only saw its neighbour disappear.
  int failed = -1;
  for (int r : ranks) {
    const auto& err = errors[static_cast<std::size_t>(r)];
    if (!err) continue;
    bool secondary = false;
    try {
      std::rethrow_exception(err);
    } catch (const TransportError&) {
      secondary = fabric != nullptr;
    } catch (...) {
    }
    if (failed < 0) failed = r;
    if (!secondary) {
      failed = r;
      break;
    }
  }
  if (failed >= 0) {
    const std::string prefix = "training aborted: worker rank " + std::to_string(failed);
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(failed)]);
    } catch (const TransportError& e) {
      throw WorkerError(e.rank() >= 0 ? e.rank() : failed, prefix + ": " + e.what(), true);
    } catch (const std::exception& e) {
      throw WorkerError(failed, prefix + " failed: " + e.what());
    }
  }
  return result;
}

}  // namespace ffn
