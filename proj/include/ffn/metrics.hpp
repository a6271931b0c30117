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
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ffn/tensor.hpp"
#include "ffn/volume.hpp"

namespace ffn {

/// Pair counts over all voxel pairs i < j.
struct RandCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const RandCounts&, const RandCounts&) = default;
};

enum class LogBase { kNats, kBits };

struct MetricOptions {
  /// Voxels whose ground-truth label is 0 are skipped unless this is set.
  bool include_background = false;
  LogBase log_base = LogBase::kNats;
};

/// Sparse joint label counts n_ij with marginals.
class ContingencyTable {
 public:
  ContingencyTable(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
                   const MetricOptions& options = {});

  std::uint64_t total() const noexcept { return total_; }
  const std::unordered_map<std::uint64_t, std::uint64_t>& joint() const noexcept { return joint_; }
  const std::unordered_map<std::uint32_t, std::uint64_t>& pred_sizes() const noexcept { return pred_; }
  const std::unordered_map<std::uint32_t, std::uint64_t>& truth_sizes() const noexcept { return truth_; }

  static std::uint64_t key(std::uint32_t pred, std::uint32_t truth) {
    return (static_cast<std::uint64_t>(pred) << 32) | truth;
  }

 private:
  std::unordered_map<std::uint64_t, std::uint64_t> joint_;
  std::unordered_map<std::uint32_t, std::uint64_t> pred_;
  std::unordered_map<std::uint32_t, std::uint64_t> truth_;
  std::uint64_t total_ = 0;
};

/// Literal O(n^2) enumeration of every voxel pair. Test oracle only.
RandCounts rand_counts_bruteforce(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
                                  const MetricOptions& options = {});
RandCounts rand_counts_bruteforce(const LabelVolume& pred, const LabelVolume& truth,
                                  const MetricOptions& options = {});

/// Same counts from binomial sums over the contingency table.
RandCounts rand_counts_fast(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
                            const MetricOptions& options = {});
RandCounts rand_counts_fast(const LabelVolume& pred, const LabelVolume& truth, const MetricOptions& options = {});
RandCounts rand_counts(const ContingencyTable& table);

struct Scores {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double are = 1;
  double voi_split = 0;
  double voi_merge = 0;
  double voi = 0;
  std::string log_base = "e";
  /// Precision or recall had an empty denominator and was set to 0.
  bool degenerate = false;
};

/// Accuracy, precision, recall, F1 (harmonic mean) and ARE = 1 - F1.
Scores rand_scores(const RandCounts& counts);

struct VoiResult {
  double split = 0;  // H(pred | truth): truth objects broken into several segments
  double merge = 0;  // H(truth | pred): segments spanning several truth objects
  double total = 0;
};

VoiResult voi(const ContingencyTable& table, LogBase base = LogBase::kNats);
VoiResult voi(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth,
              const MetricOptions& options = {});
VoiResult voi(const LabelVolume& pred, const LabelVolume& truth, const MetricOptions& options = {});

/// Full Rand + VOI evaluation of a segmentation.
Scores evaluate_segmentation(const LabelVolume& pred, const LabelVolume& truth, const MetricOptions& options = {});

/// Binary confusion counts; additive across batches and workers.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

struct VoxelMetrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool degenerate = false;
};

VoxelMetrics voxel_metrics(const ConfusionCounts& counts);

/// Binarises sigmoid(logit) >= threshold against label >= 0.5.
template <typename Scalar>
ConfusionCounts voxelwise_confusion(const Tensor<Scalar>& logits, const Tensor<Scalar>& labels,
                                    double threshold = 0.5);

template <typename Scalar>
VoxelMetrics voxelwise_training_metrics(const Tensor<Scalar>& logits, const Tensor<Scalar>& labels,
                                        double threshold = 0.5) {
  return voxel_metrics(voxelwise_confusion(logits, labels, threshold));
}

std::string scores_json(const Scores& scores);
std::string scores_csv_header();
std::string scores_csv_row(const Scores& scores);

}  // namespace ffn
