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

// Acceptance suite: one PASS / FAIL / NOT EVALUABLE line per criterion.
//
// Exit status is the number of FAIL lines. `--only 3,5` runs a subset and
// `--fast` skips the end-to-end learning run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "ffn/checkpoint.hpp"
#include "ffn/collective.hpp"
#include "ffn/experiments.hpp"
#include "ffn/inference.hpp"
#include "ffn/metrics.hpp"
#include "ffn/model.hpp"
#include "ffn/optimizer.hpp"
#include "ffn/training.hpp"
#include "ffn/training_data.hpp"
#include "ffn/transport.hpp"
#include "ffn/volume.hpp"

namespace ffn {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Tolerances.
constexpr double kPrimitiveGradTol = 1e-7;
constexpr double kModelGradTol = 1e-4;
constexpr int kGradSeeds = 20;
constexpr int kMetricPairs = 20;
constexpr double kSyncRelTol = 1e-6;
constexpr int kSyncSteps = 50;
constexpr int kReplicaSteps = 100;
constexpr double kEfficiencySlack = 0.05;
constexpr double kMinSpeedupAt8 = 4.0;
constexpr double kTargetF1 = 0.85;
constexpr double kTargetAre = 0.1;

// End-to-end learning run.
constexpr int kE2eSteps = 3000;
constexpr int kE2eBatch = 8;
constexpr double kE2eSmoothing = 0.9;
constexpr std::uint64_t kTrainVolumeSeed = 7;
constexpr std::uint64_t kHeldOutVolumeSeed = 8;
constexpr double kNoiseSigma = 15.0;

enum class Verdict { kPass, kFail, kNotEvaluable };

struct Report {
  int failures = 0;

  void line(int id, const std::string& name, Verdict v, const std::string& detail, double seconds) {
    const char* tag = v == Verdict::kPass ? "PASS" : v == Verdict::kFail ? "FAIL" : "NOT EVALUABLE";
    if (v == Verdict::kFail) ++failures;
    std::printf("[%s] %d %s: %s (%.1f s)\n", tag, id, name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
  }
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename Scalar>
Tensor<Scalar> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<Scalar> t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(u(rng));
  return t;
}

Eigen::VectorXd as_vector(const Tensor<double>& t) { return t.values(); }

Tensor<double> from_vector(const Shape& shape, const Eigen::VectorXd& v) {
  Tensor<double> t(shape);
  t.values() = v;
  return t;
}

/// Runs body(group) on p in-process ranks and rethrows the first failure.
void run_ring(int p, const std::function<void(RingGroup&)>& body) {
  auto fabric = InprocFabric::create(p);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(p));
  std::vector<std::thread> threads;
  for (int r = 0; r < p; ++r) {
    threads.emplace_back([&, r] {
      try {
        RingGroup g(fabric->endpoint(r));
        body(g);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
        fabric->shutdown(r, "acceptance body failed");
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

FfnConfig tiny_config() {
  FfnConfig c;
  c.num_modules = 1;
  c.features = 4;
  c.fov_size = 7;
  c.delta = 2;
  return c;
}

TrainOptions tiny_training(int workers, int batch, std::int64_t steps) {
  TrainOptions o;
  o.model = tiny_config();
  o.workers = workers;
  o.batch_per_worker = batch;
  o.steps = steps;
  o.seed = 11;
  o.record_wall_time = false;
  return o;
}

// ---------------------------------------------------------------------------

void gradient_correctness(Report& report) {
  const auto t0 = Clock::now();
  double conv = 0, act = 0, loss = 0, model = 0;
  FfnConfig mc;
  mc.num_modules = 2;
  mc.features = 3;
  mc.fov_size = 5;
  mc.delta = 1;
  for (int seed = 1; seed <= kGradSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));

    // Convolution: objective <conv(x), r> for a random projection r.
    const auto x = random_tensor<double>({2, 4, 3, 5}, rng);
    ConvKernel<double> k(3, 2, 3);
    k.weights = random_tensor<double>(k.weights.shape(), rng);
    for (Index i = 0; i < k.bias.size(); ++i) k.bias[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto r = random_tensor<double>({3, 4, 3, 5}, rng);
    const auto g = conv3d_backward(x, k, r);
    auto f_in = [&](const Eigen::VectorXd& v) { return conv3d_forward(from_vector(x.shape(), v), k).values().dot(r.values()); };
    auto f_w = [&](const Eigen::VectorXd& v) {
      auto kk = k;
      kk.weights.values() = v;
      return conv3d_forward(x, kk).values().dot(r.values());
    };
    auto f_b = [&](const Eigen::VectorXd& v) {
      auto kk = k;
      kk.bias = v;
      return conv3d_forward(x, kk).values().dot(r.values());
    };
    conv = std::max({conv, finite_difference_check(f_in, as_vector(x), g.input.values(), 1e-3),
                     finite_difference_check(f_w, k.weights.values(), g.kernel.weights.values(), 1e-3),
                     finite_difference_check(f_b, k.bias, g.kernel.bias, 1e-3)});

    // ReLU away from the kink.
    auto y = random_tensor<double>({1, 3, 3, 3}, rng);
    for (Index i = 0; i < y.size(); ++i)
      if (std::abs(y[i]) < 1e-2) y[i] = 0.5;
    const auto ry = random_tensor<double>(y.shape(), rng);
    auto f_relu = [&](const Eigen::VectorXd& v) { return relu(from_vector(y.shape(), v)).values().dot(ry.values()); };
    act = std::max(act, finite_difference_check(f_relu, as_vector(y), relu_backward(y, ry).values(), 1e-3));

    // Sigmoid cross-entropy with hard labels.
    const auto logits = random_tensor<double>({1, 3, 4, 3}, rng, -4.0, 4.0);
    auto labels = random_tensor<double>(logits.shape(), rng, 0.0, 1.0);
    for (Index i = 0; i < labels.size(); ++i) labels[i] = labels[i] < 0.5 ? 0.0 : 1.0;
    auto f_ce = [&](const Eigen::VectorXd& v) { return sigmoid_ce_loss(from_vector(logits.shape(), v), labels).loss; };
    loss = std::max(loss, finite_difference_check(f_ce, as_vector(logits), sigmoid_ce_loss(logits, labels).grad.values(), 1e-4));

    // Full model, soft labels, 10 random coordinates.
    const Shape s{1, mc.fov_size, mc.fov_size, mc.fov_size};
    const auto params = init_params<double>(mc, static_cast<std::uint64_t>(seed));
    const auto image = random_tensor<double>(s, rng, -0.5, 0.5), pom = random_tensor<double>(s, rng, -3.0, 3.0);
    Tensor<double> soft(s);
    for (Index i = 0; i < soft.size(); ++i) soft[i] = (rng() & 1) ? 0.95 : 0.05;
    ForwardCache<double> cache;
    const auto out = forward(params, image, pom, &cache);
    const Eigen::VectorXd analytic = flatten(backward(params, cache, sigmoid_ce_loss(out, soft).grad));
    std::uniform_int_distribution<Index> pick(0, analytic.size() - 1);
    std::vector<Index> coords(10);
    for (auto& c : coords) c = pick(rng);
    auto f_model = [&](const Eigen::VectorXd& v) {
      FfnParams<double> q(mc);
      unflatten<double>(v, q);
      return sigmoid_ce_loss(forward(q, image, pom), soft).loss;
    };
    model = std::max(model, finite_difference_check(f_model, flatten(params), analytic, 1e-6, coords));
  }
  const double primitive = std::max({conv, act, loss});
  const bool ok = primitive <= kPrimitiveGradTol && model <= kModelGradTol;
  report.line(1, "gradient correctness", ok ? Verdict::kPass : Verdict::kFail,
              fmt("%d seeds; max rel err conv %.2e relu %.2e ce %.2e (tol %.0e), full model %.2e (tol %.0e)", kGradSeeds,
                  conv, act, loss, kPrimitiveGradTol, model, kModelGradTol),
              seconds_since(t0));
}

void metric_oracles(Report& report) {
  const auto t0 = Clock::now();
  bool ok = true;
  std::mt19937_64 rng(2024);
  for (int i = 0; i < kMetricPairs; ++i) {
    std::uniform_int_distribution<Index> dim(1, 12);
    const Index nx = dim(rng), ny = dim(rng), nz = dim(rng);
    LabelVolume pred(nx, ny, nz), truth(nx, ny, nz);
    std::uniform_int_distribution<std::uint32_t> pl(0, 1 + static_cast<std::uint32_t>(rng() % 8));
    std::uniform_int_distribution<std::uint32_t> tl(0, 1 + static_cast<std::uint32_t>(rng() % 8));
    for (auto& v : pred.voxels()) v = pl(rng);
    for (auto& v : truth.voxels()) v = tl(rng);
    for (bool background : {false, true}) {
      MetricOptions opt;
      opt.include_background = background;
      ok = ok && rand_counts_fast(pred, truth, opt) == rand_counts_bruteforce(pred, truth, opt);
    }
  }
  const std::vector<std::uint32_t> s{1, 1, 2, 2}, gt{1, 1, 1, 2};
  const RandCounts c = rand_counts_fast(s, gt);
  const Scores fixture = rand_scores(c);
  const bool fixture_ok = c.tp == 1 && c.fp == 1 && c.fn == 2 && c.tn == 2 && std::abs(fixture.are - 0.6) <= 1e-12;
  const Scores identity = evaluate_segmentation(LabelVolume(3, 3, 3, 4), LabelVolume(3, 3, 3, 4));
  LabelVolume many(4, 4, 4);
  for (std::size_t i = 0; i < many.voxels().size(); ++i) many.voxels()[i] = static_cast<std::uint32_t>(1 + i % 5);
  const Scores identity2 = evaluate_segmentation(many, many);
  const bool identity_ok = identity.are == 0.0 && identity.voi == 0.0 && identity2.are == 0.0 && identity2.voi == 0.0;
  ok = ok && fixture_ok && identity_ok;
  report.line(2, "metric oracle equivalence", ok ? Verdict::kPass : Verdict::kFail,
              fmt("%d random pairs fast == brute force; fixture TP=%llu FP=%llu FN=%llu TN=%llu ARE=%.4f; identity ARE=%g VOI=%g",
                  kMetricPairs, static_cast<unsigned long long>(c.tp), static_cast<unsigned long long>(c.fp),
                  static_cast<unsigned long long>(c.fn), static_cast<unsigned long long>(c.tn), fixture.are,
                  identity2.are, identity2.voi),
              seconds_since(t0));
}

/// Centred FOV items drawn from real examples, in a fixed order.
std::vector<FovItem<float>> example_items(const SyntheticVolume& data, const FfnConfig& c, std::size_t count,
                                          std::uint64_t seed) {
  const int s = c.subvol_size();
  const auto refs = extract_examples(data.image, data.labels, s);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, refs.size() - 1);
  const Index r = c.fov_radius();
  const Coord origin{s / 2 - r, s / 2 - r, s / 2 - r};
  std::vector<FovItem<float>> items;
  for (std::size_t i = 0; i < count; ++i) {
    const auto ex = make_example<float>(data.image, data.labels, refs[pick(rng)], s);
    Tensor<float> pom({1, c.fov_size, c.fov_size, c.fov_size}, logit(kSoftLabelOut));
    pom(0, r, r, r) = logit(kSoftLabelIn);
    items.push_back({crop(ex.image, origin, c.fov_shape()), std::move(pom), crop(ex.mask, origin, c.fov_shape())});
  }
  return items;
}

void sync_sgd_equivalence(Report& report) {
  const auto t0 = Clock::now();
  const FfnConfig c = tiny_config();
  const auto data = gen_synthetic({24, 24, 24}, 4, kNoiseSigma, 3);
  const int b = 2;
  const double lr = 1.2e-3;
  std::string detail;
  bool ok = true;
  for (int p : {2, 4}) {
    const auto items = example_items(data, c, static_cast<std::size_t>(kSyncSteps * p * b), 100 + p);
    const auto init = init_params<float>(c, 5);
    auto batch = [&](int step) {
      return std::span<const FovItem<float>>(items).subspan(static_cast<std::size_t>(step * p * b),
                                                          static_cast<std::size_t>(p * b));
    };

    std::vector<Eigen::VectorXf> single_traj;
    run_ring(1, [&](RingGroup& g) {
      auto params = init;
      AdamState<float> st(c);
      for (int step = 0; step < kSyncSteps; ++step) {
        sync_sgd_step<float>(g, params, st, batch(step), lr);
        single_traj.push_back(flatten(params));
      }
    });
    std::vector<Eigen::VectorXf> multi_traj;
    run_ring(p, [&](RingGroup& g) {
      auto params = init;
      AdamState<float> st(c);
      for (int step = 0; step < kSyncSteps; ++step) {
        sync_sgd_step<float>(g, params, st, batch(step).subspan(static_cast<std::size_t>(g.rank() * b), b), lr);
        if (g.rank() == 0) multi_traj.push_back(flatten(params));
      }
    });
    double worst = 0;
    for (int step = 0; step < kSyncSteps; ++step) {
      const auto& a = single_traj[static_cast<std::size_t>(step)];
      const auto& m = multi_traj[static_cast<std::size_t>(step)];
      worst = std::max(worst, static_cast<double>((a - m).norm() / a.norm()));
    }
    ok = ok && worst <= kSyncRelTol;
    detail += fmt("p=%d b=%d vs 1x%d: max rel diff over %d steps %.2e; ", p, b, p * b, kSyncSteps, worst);
  }
  report.line(3, "synchronous SGD equivalence", ok ? Verdict::kPass : Verdict::kFail,
              detail + fmt("tol %.0e", kSyncRelTol), seconds_since(t0));
}

void replica_consistency(Report& report) {
  const auto t0 = Clock::now();
  const auto data = gen_synthetic({24, 24, 24}, 4, kNoiseSigma, 4);
  const int p = 4;
  std::vector<std::vector<std::uint64_t>> sums(p, std::vector<std::uint64_t>(kReplicaSteps + 1, 0));
  auto options = tiny_training(p, 1, kReplicaSteps);
  options.verify_replicas = true;
  run_training(options, data.image, data.labels, [&](int rank, std::int64_t step, const FfnParams<float>& params) {
    sums[static_cast<std::size_t>(rank)][static_cast<std::size_t>(step)] = checksum(params);
  });
  int mismatches = 0, recorded = 0;
  for (int step = 1; step <= kReplicaSteps; ++step) {
    const auto s0 = sums[0][static_cast<std::size_t>(step)];
    recorded += s0 != 0;
    for (int r = 1; r < p; ++r) mismatches += sums[static_cast<std::size_t>(r)][static_cast<std::size_t>(step)] != s0;
  }
  const bool ok = mismatches == 0 && recorded == kReplicaSteps;
  report.line(4, "replica consistency", ok ? Verdict::kPass : Verdict::kFail,
              fmt("p=%d, %d steps, %d checksum mismatches, %d steps observed", p, kReplicaSteps, mismatches, recorded),
              seconds_since(t0));
}

void ring_contract(Report& report) {
  const auto t0 = Clock::now();
  bool ok = true;
  int cases = 0;
  for (int p : {2, 3, 4, 8}) {
    for (std::size_t n : {std::size_t{1}, std::size_t{37}, std::size_t{1000}, std::size_t{4099}}) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(p) * 7919 + n);
      std::uniform_real_distribution<float> u(-1e3f, 1e3f);
      std::vector<std::vector<float>> in(static_cast<std::size_t>(p), std::vector<float>(n));
      for (auto& v : in)
        for (auto& x : v) x = u(rng);
      // Fixed-order reference: chunk c summed over ranks c, c+1, ... then / p.
      const std::size_t chunk = (n + static_cast<std::size_t>(p) - 1) / static_cast<std::size_t>(p);
      std::vector<float> want(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i / chunk;
        float acc = in[c][i];
        for (std::size_t k = 1; k < static_cast<std::size_t>(p); ++k) acc = acc + in[(c + k) % p][i];
        want[i] = acc / static_cast<float>(p);
      }
      std::vector<std::vector<float>> out(static_cast<std::size_t>(p));
      std::vector<TransportCounters> counters(static_cast<std::size_t>(p));
      run_ring(p, [&](RingGroup& g) {
        auto v = in[static_cast<std::size_t>(g.rank())];
        ring_allreduce<float>(g, v);
        out[static_cast<std::size_t>(g.rank())] = std::move(v);
        counters[static_cast<std::size_t>(g.rank())] = g.transport().counters();
      });
      for (int r = 0; r < p; ++r) {
        ok = ok && std::memcmp(out[static_cast<std::size_t>(r)].data(), want.data(), n * sizeof(float)) == 0;
        ok = ok && counters[static_cast<std::size_t>(r)].payload_bytes_sent ==
                       2 * static_cast<std::uint64_t>(p - 1) * chunk * sizeof(float);
      }
      ++cases;
    }
  }
  report.line(5, "ring-allreduce contract", ok ? Verdict::kPass : Verdict::kFail,
              fmt("%d (p, n) cases bit-equal to the fixed-order average; each rank sent 2(p-1)ceil(n/p) elements", cases),
              seconds_since(t0));
}

void scaling(Report& report) {
  const auto t0 = Clock::now();
  const auto data = gen_synthetic({32, 32, 32}, 4, kNoiseSigma, 6);
  BenchOptions bench;
  bench.workers = {1, 2, 4, 8};
  bench.steps = 10;
  bench.allow_oversubscription = true;
  TrainOptions base = tiny_training(1, 1, bench.steps);
  base.record_wall_time = true;
  const auto rows = bench_scaling(base, bench, data.image, data.labels);
  bool monotone = true;
  std::string table;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    table += fmt("p=%d %.1f fov/s eff %.2f; ", rows[i].workers, rows[i].fovs_per_s, rows[i].efficiency);
    if (i > 0 && rows[i].efficiency > rows[i - 1].efficiency + kEfficiencySlack) monotone = false;
  }
  const double speedup = rows.back().fovs_per_s / rows.front().fovs_per_s;
  const unsigned cores = std::thread::hardware_concurrency();
  report.line(6, "scaling: efficiency monotone", monotone ? Verdict::kPass : Verdict::kFail,
              table + fmt("slack %.2f", kEfficiencySlack), seconds_since(t0));
  if (cores < 8) {
    report.line(6, "scaling: p=8 throughput", Verdict::kNotEvaluable,
                fmt("host has %u core(s), needs >= 8; measured p=8/p=1 = %.2fx", cores, speedup), 0.0);
  } else {
    report.line(6, "scaling: p=8 throughput", speedup >= kMinSpeedupAt8 ? Verdict::kPass : Verdict::kFail,
                fmt("p=8/p=1 = %.2fx (need >= %.1fx)", speedup, kMinSpeedupAt8), 0.0);
  }
}

TrainOptions e2e_training() {
  TrainOptions o;
  o.model.num_modules = 4;
  o.model.features = 8;
  o.model.fov_size = 17;
  o.model.delta = 4;
  o.lr.base_lr = 1.2e-3;
  o.lr.mode = LrMode::kFixed;
  o.workers = 1;
  o.batch_per_worker = kE2eBatch;
  o.steps = kE2eSteps;
  o.seed = 1;
  o.record_wall_time = false;
  return o;
}

void end_to_end(Report& report) {
  const auto t0 = Clock::now();
  const auto train = gen_synthetic({64, 64, 64}, 8, kNoiseSigma, kTrainVolumeSeed);
  const auto held_out = gen_synthetic({64, 64, 64}, 8, kNoiseSigma, kHeldOutVolumeSeed);
  const auto result = run_training(e2e_training(), train.image, train.labels);

  std::vector<double> f1;
  for (const auto& row : result.stats.rows) f1.push_back(row.f1);
  const auto smooth = exponential_smoothing(f1, kE2eSmoothing);
  std::int64_t reached = -1;
  for (std::size_t i = 0; i < smooth.size(); ++i)
    if (smooth[i] >= kTargetF1) {
      reached = result.stats.rows[i].step;
      break;
    }
  const double best = smooth.empty() ? 0.0 : *std::max_element(smooth.begin(), smooth.end());
  const double train_s = seconds_since(t0);
  report.line(7, "end-to-end learning: F1", reached > 0 ? Verdict::kPass : Verdict::kFail,
              reached > 0 ? fmt("smoothed voxelwise F1 >= %.2f at step %lld of %d (best %.3f)", kTargetF1,
                                static_cast<long long>(reached), kE2eSteps, best)
                          : fmt("smoothed voxelwise F1 never reached %.2f in %d steps (best %.3f)", kTargetF1,
                                kE2eSteps, best),
              train_s);

  const auto t1 = Clock::now();
  SegmentStats st;
  const auto seg = segment_volume(result.params, held_out.image, 0.9, &st);
  const Scores scores = evaluate_segmentation(seg, held_out.labels);
  report.line(7, "end-to-end learning: held-out ARE", scores.are <= kTargetAre ? Verdict::kPass : Verdict::kFail,
              fmt("ARE %.4f (need <= %.2f), VOI split %.3f merge %.3f, %d objects, %llu FOVs", scores.are, kTargetAre,
                  scores.voi_split, scores.voi_merge, st.objects, static_cast<unsigned long long>(st.fov_evaluations)),
              seconds_since(t1));
}

void lr_policy(Report& report) {
  const auto t0 = Clock::now();
  bool exact = true;
  for (int k : {1, 2, 4, 8, 16, 64, 1024}) {
    LrPolicy lin{1.2e-3, LrMode::kLinear, k, 0};
    LrPolicy sq{1.2e-3, LrMode::kSqrt, k, 0};
    exact = exact && effective_lr(lin, 1) == 1.2e-3 * k && effective_lr(sq, 1) == 1.2e-3 * std::sqrt(double(k));
  }

  const auto data = gen_synthetic({24, 24, 24}, 4, kNoiseSigma, 9);
  SweepOptions sweep;
  sweep.workers = {1, 2};
  sweep.lrs = {3e-4, 1.2e-3, 4.8e-3};
  sweep.steps = 20;
  const auto rows = run_sweep(tiny_training(1, 1, sweep.steps), sweep, data.image, data.labels,
                              time_fov_evaluation(tiny_config()));
  bool normalized = true;
  std::string best;
  for (int w : sweep.workers) {
    double max_norm = 0, best_acc = -1, best_lr = 0;
    for (const auto& r : rows) {
      if (r.workers != w) continue;
      max_norm = std::max(max_norm, r.normalized_accuracy);
      if (r.smoothed_accuracy > best_acc) best_acc = r.smoothed_accuracy, best_lr = r.lr;
    }
    normalized = normalized && max_norm == 1.0;
    best += fmt("batch %d best lr %g; ", w, best_lr);
  }
  const bool ok = exact && normalized && rows.size() == sweep.workers.size() * sweep.lrs.size();
  report.line(8, "learning-rate policy plumbing", ok ? Verdict::kPass : Verdict::kFail,
              fmt("linear and sqrt scaling exact: %s; per-batch normalized max == 1: %s; ", exact ? "yes" : "no",
                  normalized ? "yes" : "no") +
                  best + "(reported only)",
              seconds_since(t0));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void reproducibility(Report& report) {
  const auto t0 = Clock::now();
  const auto data = gen_synthetic({24, 24, 24}, 4, kNoiseSigma, 10);
  const fs::path root = fs::temp_directory_path() / ("ffn-acceptance-" + std::to_string(::getpid()));
  std::vector<fs::path> dirs{root / "a", root / "b"};
  for (const auto& d : dirs) {
    auto o = tiny_training(2, 2, 30);
    o.checkpoint_every = 10;
    o.out_dir = d;
    run_training(o, data.image, data.labels);
  }
  int files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    const auto name = entry.path().filename();
    if (name == "config.json") continue;
    ++files;
    differing += slurp(entry.path()) != slurp(dirs[1] / name);
  }
  fs::remove_all(root);
  const bool ok = files >= 4 && differing == 0;
  report.line(9, "reproducibility", ok ? Verdict::kPass : Verdict::kFail,
              fmt("two seeded p=2 runs: %d output files compared, %d differ", files, differing), seconds_since(t0));
}

}  // namespace
}  // namespace ffn

int main(int argc, char** argv) {
  CLI::App app{"ffnsync acceptance suite"};
  std::vector<int> only;
  bool fast = false;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_flag("--fast", fast, "skip the end-to-end learning run");
  CLI11_PARSE(app, argc, argv);

  using Fn = void (*)(ffn::Report&);
  const std::vector<std::pair<int, Fn>> criteria{
      {1, ffn::gradient_correctness}, {2, ffn::metric_oracles},       {3, ffn::sync_sgd_equivalence},
      {4, ffn::replica_consistency},  {5, ffn::ring_contract},        {6, ffn::scaling},
      {7, ffn::end_to_end},           {8, ffn::lr_policy},            {9, ffn::reproducibility},
  };
  ffn::Report report;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    if (fast && id == 7) {
      std::printf("[SKIPPED] 7 end-to-end learning (--fast)\n");
      continue;
    }
    try {
      fn(report);
    } catch (const std::exception& e) {
      report.line(id, "error", ffn::Verdict::kFail, e.what(), 0.0);
    }
  }
  std::printf("%d criterion line(s) failed\n", report.failures);
  return report.failures;
}
