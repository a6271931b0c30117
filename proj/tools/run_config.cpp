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

#include "run_config.hpp"

#include <fstream>

namespace ffn::cli {

// Every serialised field, in the order written to config.json.
#define FFN_CONFIG_FIELDS(X)                                                                                   \
  X(num_modules) X(features) X(fov_size) X(delta) X(lr) X(lr_policy) X(warmup_steps) X(workers)                \
  X(batch_per_worker) X(steps) X(checkpoint_every) X(move_threshold) X(seed) X(transport) X(hosts) X(rank)    \
  X(verify_replicas) X(record_wall_time) X(image) X(labels) X(dims) X(objects) X(noise_sigma) X(checkpoint)   \
  X(checkpoint_dir) X(min_spacing) X(pred) X(truth) X(include_background) X(log_base) X(workers_list) X(lrs) \
  X(readout_step) X(max_seconds) X(oversubscribe) X(out_dir)

void merge_json(RunConfig& config, const nlohmann::json& j) {
  if (!j.is_object()) throw ValueError("config: top level must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
#define FFN_READ(name)                      \
  if (key == #name) {                       \
    value.get_to(config.name);              \
    known = true;                           \
  }
      FFN_CONFIG_FIELDS(FFN_READ)
#undef FFN_READ
    } catch (const nlohmann::json::exception& e) {
      throw ValueError("config: bad value for '" + key + "': " + e.what());
    }
    if (!known) throw ValueError("config: unknown key '" + key + "'");
  }
}

nlohmann::ordered_json to_json(const RunConfig& config) {
  nlohmann::ordered_json j;
#define FFN_WRITE(name) j[#name] = config.name;
  FFN_CONFIG_FIELDS(FFN_WRITE)
#undef FFN_WRITE
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValueError("config " + path.string() + ": " + e.what());
  }
  RunConfig config;
  merge_json(config, j);
  return config;
}

void write_config(const std::filesystem::path& dir, const RunConfig& config) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.json");
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + (dir / "config.json").string());
  out << to_json(config).dump(2) << '\n';
}

FfnConfig RunConfig::model() const {
  FfnConfig m;
  m.num_modules = num_modules;
  m.features = features;
  m.fov_size = fov_size;
  m.delta = delta;
  m.validate();
  return m;
}

LrPolicy RunConfig::lr_policy_value() const {
  LrPolicy p;
  p.base_lr = lr;
  p.mode = parse_lr_mode(lr_policy);
  p.warmup_steps = warmup_steps;
  p.validate();
  return p;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions t;
  t.model = model();
  t.lr = lr_policy_value();
  t.workers = workers;
  t.batch_per_worker = batch_per_worker;
  t.steps = steps;
  t.seed = seed;
  t.move_threshold = move_threshold;
  t.checkpoint_every = checkpoint_every;
  t.transport = parse_transport(transport);
  if (t.transport == TransportKind::kTcp) t.tcp_hosts = parse_endpoints(hosts);
  if (rank >= 0) t.only_rank = rank;
  t.verify_replicas = verify_replicas;
  t.record_wall_time = record_wall_time;
  t.validate();
  return t;
}

MetricOptions RunConfig::metric_options() const {
  MetricOptions m;
  m.include_background = include_background;
  if (log_base == "e") m.log_base = LogBase::kNats;
  else if (log_base == "2") m.log_base = LogBase::kBits;
  else throw ValueError("log_base must be 'e' or '2'");
  return m;
}

FloodFillOptions RunConfig::flood_fill() const {
  FloodFillOptions o = flood_fill_options(model(), move_threshold);
  o.validate();
  return o;
}

double RunConfig::seed_spacing() const { return min_spacing > 0 ? min_spacing : static_cast<double>(delta); }

}  // namespace ffn::cli
