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

#include <gtest/gtest.h>

#include <map>
#include <sstream>
#include <thread>

#include "ffn/experiments.hpp"
#include "test_util.hpp"

namespace ffn {
namespace {

TrainOptions tiny_options() {
  TrainOptions o;
  o.model.num_modules = 1;
  o.model.features = 2;
  o.model.fov_size = 5;
  o.model.delta = 1;
  o.record_wall_time = false;
  return o;
}

TEST(Smoothing, ConstantSeriesIsAFixedPoint) {
  const auto s = exponential_smoothing(std::vector<double>(25, 1.0));
  for (double v : s) EXPECT_EQ(v, 1.0);
}

TEST(Smoothing, Recurrence) {
  const auto s = exponential_smoothing({0.0, 1.0, 1.0}, 0.9);
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_DOUBLE_EQ(s[1], 0.1);
  EXPECT_DOUBLE_EQ(s[2], 0.9 * 0.1 + 0.1);
  EXPECT_TRUE(exponential_smoothing({}).empty());
  EXPECT_THROW(exponential_smoothing({1.0}, 1.0), ValueError);
}

TEST(Normalize, MaxBecomesOne) {
  const auto n = normalize_by_max({0.2, 0.8, 0.4});
  EXPECT_EQ(*std::max_element(n.begin(), n.end()), 1.0);
  EXPECT_DOUBLE_EQ(n[0], 0.25);
  EXPECT_EQ(normalize_by_max({0.0, 0.0}), (std::vector<double>{0.0, 0.0}));
}

TEST(Sweep, GridShapeAndNormalization) {
  const auto s = gen_synthetic({12, 12, 12}, 2, 5.0, 1);
  SweepOptions sweep;
  sweep.workers = {1, 2};
  sweep.lrs = {1e-3, 3e-3, 1e-2};
  sweep.steps = 4;
  const auto rows = run_sweep(tiny_options(), sweep, s.image, s.labels, 1e-4);
  ASSERT_EQ(rows.size(), 6u);
  std::map<int, double> best;
  for (const auto& r : rows) {
    EXPECT_EQ(r.batch, r.workers * sweep.batch_per_worker);
    EXPECT_EQ(r.step, 4);
    best[r.batch] = std::max(best[r.batch], r.normalized_accuracy);
  }
  for (const auto& [batch, m] : best) EXPECT_EQ(m, 1.0) << "batch " << batch;

  std::ostringstream os;
  write_sweep_csv(os, rows);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, kSweepCsvHeader);
  int n = 0;
  while (std::getline(is, line)) ++n;
  EXPECT_EQ(n, 6);
}

TEST(Sweep, RefusesOversizedGridWithEstimate) {
  const auto s = gen_synthetic({12, 12, 12}, 2, 5.0, 1);
  SweepOptions sweep;
  sweep.steps = 1000;
  sweep.max_seconds = 1;
  try {
    run_sweep(tiny_options(), sweep, s.image, s.labels, 0.5);
    FAIL();
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("estimated"), std::string::npos) << e.what();
  }
  EXPECT_GT(estimate_sweep_seconds(sweep, 0.5), 1.0);
  EXPECT_GT(time_fov_evaluation(tiny_options().model, 1), 0.0);
}

TEST(Bench, UnitWorkerHasUnitEfficiency) {
  const auto s = gen_synthetic({12, 12, 12}, 2, 5.0, 1);
  BenchOptions bench;
  bench.workers = {2};
  bench.steps = 3;
  bench.allow_oversubscription = true;
  const auto rows = bench_scaling(tiny_options(), bench, s.image, s.labels);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].workers, 1);
  EXPECT_EQ(rows[0].efficiency, 1.0);
  EXPECT_GT(rows[1].fovs_per_s, 0.0);
  std::ostringstream os;
  write_scaling_csv(os, rows);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kScalingCsvHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Bench, RefusesOversubscription) {
  const auto s = gen_synthetic({12, 12, 12}, 2, 5.0, 1);
  BenchOptions bench;
  bench.workers = {static_cast<int>(std::thread::hardware_concurrency()) + 1};
  EXPECT_THROW(bench_scaling(tiny_options(), bench, s.image, s.labels), ValueError);
}

}  // namespace
}  // namespace ffn
