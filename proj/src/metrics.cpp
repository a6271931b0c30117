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

#include "ffn/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace ffn {
namespace {

std::uint64_t pairs(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("label arrays differ in length: " + std::to_string(a) + " vs " + std::to_string(b));
}

void check_dims(const LabelVolume& a, const LabelVolume& b) {
  if (a.dims() != b.dims()) throw ShapeError("prediction and ground-truth volume dims differ");
}

std::span<const std::uint32_t> as_span(const LabelVolume& v) { return v.voxels(); }

}  // namespace

ContingencyTable::ContingencyTable(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
                                   const MetricOptions& options) {
  check_lengths(pred.size(), truth.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!options.include_background && truth[i] == 0) continue;
    ++joint_[key(pred[i], truth[i])];
    ++pred_[pred[i]];
    ++truth_[truth[i]];
    ++total_;
  }
}

RandCounts rand_counts_bruteforce(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
                                  const MetricOptions& options) {
  check_lengths(pred.size(), truth.size());
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (options.include_background || truth[i] != 0) kept.push_back(i);

  RandCounts c;
  for (std::size_t a = 0; a < kept.size(); ++a) {
    for (std::size_t b = a + 1; b < kept.size(); ++b) {
      const bool same_s = pred[kept[a]] == pred[kept[b]];
      const bool same_g = truth[kept[a]] == truth[kept[b]];
      if (same_s && same_g) ++c.tp;
      else if (!same_s && !same_g) ++c.tn;
      else if (same_s) ++c.fp;
      else ++c.fn;
    }
  }
  return c;
}

RandCounts rand_counts_bruteforce(const LabelVolume& pred, const LabelVolume& truth, const MetricOptions& options) {
  check_dims(pred, truth);
  return rand_counts_bruteforce(as_span(pred), as_span(truth), options);
}

RandCounts rand_counts(const ContingencyTable& table) {
  RandCounts c;
  for (const auto& [k, n] : table.joint()) c.tp += pairs(n);
  std::uint64_t same_pred = 0;
  for (const auto& [id, n] : table.pred_sizes()) same_pred += pairs(n);
  std::uint64_t same_truth = 0;
  for (const auto& [id, n] : table.truth_sizes()) same_truth += pairs(n);
  c.fp = same_pred - c.tp;
  c.fn = same_truth - c.tp;
  c.tn = pairs(table.total()) - c.tp - c.fp - c.fn;
  return c;
}

RandCounts rand_counts_fast(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
                            const MetricOptions& options) {
  return rand_counts(ContingencyTable(pred, truth, options));
}

RandCounts rand_counts_fast(const LabelVolume& pred, const LabelVolume& truth, const MetricOptions& options) {
  check_dims(pred, truth);
  return rand_counts_fast(as_span(pred), as_span(truth), options);
}

Scores rand_scores(const RandCounts& c) {
  Scores s;
  const auto tp = static_cast<double>(c.tp);
  const double total = static_cast<double>(c.total());
  s.accuracy = total > 0 ? (tp + static_cast<double>(c.tn)) / total : 0.0;
  if (c.tp + c.fp > 0) s.precision = tp / static_cast<double>(c.tp + c.fp);
  else s.degenerate = true;
  if (c.tp + c.fn > 0) s.recall = tp / static_cast<double>(c.tp + c.fn);
  else s.degenerate = true;
  const double pr = s.precision + s.recall;
  s.f1 = pr > 0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  s.are = 1.0 - s.f1;
  return s;
}

VoiResult voi(const ContingencyTable& table, LogBase base) {
  if (table.total() == 0) throw ValueError("voi: no voxels to compare");
  const double n = static_cast<double>(table.total());
  const double scale = base == LogBase::kBits ? 1.0 / std::log(2.0) : 1.0;
  // H(P|T) = -sum p_ij log(p_ij / p_j), H(T|P) = -sum p_ij log(p_ij / p_i).
  VoiResult r;
  for (const auto& [k, count] : table.joint()) {
    const auto pred_id = static_cast<std::uint32_t>(k >> 32);
    const auto truth_id = static_cast<std::uint32_t>(k & 0xffffffffu);
    const double pij = static_cast<double>(count) / n;
    const double pi = static_cast<double>(table.pred_sizes().at(pred_id)) / n;
    const double pj = static_cast<double>(table.truth_sizes().at(truth_id)) / n;
    r.split -= pij * std::log(pij / pj);
    r.merge -= pij * std::log(pij / pi);
  }
  r.split = std::max(0.0, r.split * scale);
  r.merge = std::max(0.0, r.merge * scale);
  r.total = r.split + r.merge;
  return r;
}

VoiResult voi(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
              const MetricOptions& options) {
  return voi(ContingencyTable(pred, truth, options), options.log_base);
}

VoiResult voi(const LabelVolume& pred, const LabelVolume& truth, const MetricOptions& options) {
  check_dims(pred, truth);
  return voi(as_span(pred), as_span(truth), options);
}

Scores evaluate_segmentation(const LabelVolume& pred, const LabelVolume& truth, const MetricOptions& options) {
  check_dims(pred, truth);
  const ContingencyTable table(as_span(pred), as_span(truth), options);
  Scores s = rand_scores(rand_counts(table));
  const VoiResult v = voi(table, options.log_base);
  s.voi_split = v.split;
  s.voi_merge = v.merge;
  s.voi = v.total;
  s.log_base = options.log_base == LogBase::kBits ? "2" : "e";
  return s;
}

VoxelMetrics voxel_metrics(const ConfusionCounts& c) {
  VoxelMetrics m;
  const double total = static_cast<double>(c.tp + c.fp + c.tn + c.fn);
  m.accuracy = total > 0 ? static_cast<double>(c.tp + c.tn) / total : 0.0;
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  else m.degenerate = true;
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  else m.degenerate = true;
  const double pr = m.precision + m.recall;
  m.f1 = pr > 0 ? 2.0 * m.precision * m.recall / pr : 0.0;
  return m;
}

template <typename Scalar>
ConfusionCounts voxelwise_confusion(const Tensor<Scalar>& logits, const Tensor<Scalar>& labels, double threshold) {
  if (!same_shape(logits, labels)) {
    throw ShapeError("voxelwise metrics: " + shape_string(logits.shape()) + " vs " + shape_string(labels.shape()));
  }
  ConfusionCounts c;
  for (Index i = 0; i < logits.size(); ++i) {
    const bool predicted = static_cast<double>(sigmoid(logits[i])) >= threshold;
    const bool actual = labels[i] >= Scalar(0.5);
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

template ConfusionCounts voxelwise_confusion(const Tensor<float>&, const Tensor<float>&, double);
template ConfusionCounts voxelwise_confusion(const Tensor<double>&, const Tensor<double>&, double);

std::string scores_json(const Scores& s) {
  nlohmann::ordered_json j;
  j["accuracy"] = s.accuracy;
  j["precision"] = s.precision;
  j["recall"] = s.recall;
  j["f1"] = s.f1;
  j["are"] = s.are;
  j["voi_split"] = s.voi_split;
  j["voi_merge"] = s.voi_merge;
  j["voi"] = s.voi;
  j["log_base"] = s.log_base;
  j["degenerate"] = s.degenerate;
  return j.dump(2);
}

std::string scores_csv_header() { return "accuracy,precision,recall,f1,are,voi_split,voi_merge,voi,log_base,degenerate"; }

std::string scores_csv_row(const Scores& s) {
  std::ostringstream os;
  os << std::setprecision(10) << s.accuracy << ',' << s.precision << ',' << s.recall << ',' << s.f1 << ',' << s.are
     << ',' << s.voi_split << ',' << s.voi_merge << ',' << s.voi << ',' << s.log_base << ','
     << (s.degenerate ? 1 : 0);
  return os.str();
}

}  // namespace ffn
