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

#include "ffn/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace ffn {

std::vector<double> exponential_smoothing(const std::vector<double>& series, double factor) {
  if (!(factor >= 0.0 && factor < 1.0)) throw ValueError("smoothing factor must lie in [0, 1)");
  std::vector<double> out;
  out.reserve(series.size());
  for (double x : series) out.push_back(out.empty() ? x : factor * out.back() + (1.0 - factor) * x);
  return out;
}

std::vector<double> normalize_by_max(const std::vector<double>& values) {
  if (values.empty()) return {};
  const double top = *std::max_element(values.begin(), values.end());
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(top > 0 ? v / top : 0.0);
  return out;
}

std::vector<ScalingRow> bench_scaling(const TrainOptions& base, const BenchOptions& bench, const Volume& image,
                                      const LabelVolume& labels) {
  if (bench.workers.empty()) throw ValueError("bench_scaling: empty worker list");
  if (bench.steps < 1) throw ValueError("bench_scaling: steps must be >= 1");
  std::vector<int> ps = bench.workers;
  ps.push_back(1);
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  const int cores = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (!bench.allow_oversubscription && ps.back() > cores) {
    throw ValueError("bench_scaling: p=" + std::to_string(ps.back()) + " exceeds the " + std::to_string(cores) +
                     " available hardware threads");
  }

  const auto examples = extract_examples(image, labels, base.model.subvol_size());
  std::vector<ScalingRow> rows;
  for (int p : ps) {
    TrainOptions opt = base;
    opt.workers = p;
    opt.batch_per_worker = bench.batch_per_worker;
    opt.steps = bench.steps;
    opt.out_dir.clear();
    opt.only_rank.reset();
    opt.record_wall_time = true;
    const TrainResult res = run_training(opt, image, labels, examples);
    const double fovs = static_cast<double>(res.stats.rows.back().fovs);
    rows.push_back({p, res.loop_seconds > 0 ? fovs / res.loop_seconds : 0.0, 0.0});
  }
  const double single = rows.front().fovs_per_s;
  for (auto& row : rows) row.efficiency = single > 0 ? row.fovs_per_s / (row.workers * single) : 0.0;
  return rows;
}

void write_scaling_csv(std::ostream& os, const std::vector<ScalingRow>& rows) {
  os << kScalingCsvHeader << '\n' << std::setprecision(9);
  for (const auto& r : rows) os << r.workers << ',' << r.fovs_per_s << ',' << r.efficiency << '\n';
}

double time_fov_evaluation(const FfnConfig& config, int repeats) {
  config.validate();
  const FfnParams<float> params = init_params<float>(config, 0);
  const Index f = config.fov_size;
  std::vector<FovItem<float>> batch{{Tensor<float>({1, f, f, f}), Tensor<float>({1, f, f, f}),
                                     Tensor<float>({1, f, f, f}, 0.5f)}};
  compute_local_gradient<float>(params, batch);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) compute_local_gradient<float>(params, batch);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / std::max(repeats, 1);
}

double estimate_sweep_seconds(const SweepOptions& sweep, double seconds_per_fov) {
  double fovs = 0;
  for (int p : sweep.workers) fovs += static_cast<double>(p) * sweep.batch_per_worker * sweep.steps;
  return fovs * static_cast<double>(sweep.lrs.size()) * seconds_per_fov;
}

std::vector<SweepRow> run_sweep(const TrainOptions& base, const SweepOptions& sweep, const Volume& image,
                                const LabelVolume& labels, double seconds_per_fov) {
  if (sweep.workers.empty() || sweep.lrs.empty()) throw ValueError("sweep: empty grid");
  if (sweep.steps < 1) throw ValueError("sweep: steps must be >= 1");
  if (sweep.readout_step < 0 || sweep.readout_step > sweep.steps) {
    throw ValueError("sweep: readout step outside [1, steps]");
  }
  const double estimate = estimate_sweep_seconds(sweep, seconds_per_fov);
  if (estimate > sweep.max_seconds) {
    std::ostringstream msg;
    msg << "sweep grid too large: estimated " << std::fixed << std::setprecision(0) << estimate << " s exceeds limit "
        << sweep.max_seconds << " s";
    throw ValueError(msg.str());
  }

  const auto examples = extract_examples(image, labels, base.model.subvol_size());
  const std::int64_t readout = sweep.readout_step == 0 ? sweep.steps : sweep.readout_step;
  std::vector<SweepRow> rows;
  for (int p : sweep.workers)
    for (double lr : sweep.lrs) {
      TrainOptions opt = base;
      opt.workers = p;
      opt.batch_per_worker = sweep.batch_per_worker;
      opt.steps = sweep.steps;
      opt.lr.base_lr = lr;
      opt.out_dir.clear();
      opt.only_rank.reset();
      opt.record_wall_time = false;
      const TrainResult res = run_training(opt, image, labels, examples);
      std::vector<double> acc, f1;
      for (const auto& row : res.stats.rows) {
        acc.push_back(row.accuracy);
        f1.push_back(row.f1);
      }
      const auto i = static_cast<std::size_t>(readout - 1);
      rows.push_back({p, p * sweep.batch_per_worker, lr, readout, exponential_smoothing(acc, sweep.smoothing)[i],
                      exponential_smoothing(f1, sweep.smoothing)[i], 0.0});
    }

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[rows[i].batch].push_back(i);
  for (const auto& [batch, members] : groups) {
    std::vector<double> values;
    for (std::size_t i : members) values.push_back(rows[i].smoothed_accuracy);
    const auto normalized = normalize_by_max(values);
    for (std::size_t k = 0; k < members.size(); ++k) rows[members[k]].normalized_accuracy = normalized[k];
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepCsvHeader << '\n' << std::setprecision(9);
  for (const auto& r : rows) {
    os << r.workers << ',' << r.batch << ',' << r.lr << ',' << r.step << ',' << r.smoothed_accuracy << ','
       << r.smoothed_f1 << ',' << r.normalized_accuracy << '\n';
  }
}

}  // namespace ffn
