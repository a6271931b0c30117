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

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "ffn/volume.hpp"

namespace ffn {

inline constexpr int kFractionClasses = 17;
inline constexpr float kSoftLabelIn = 0.95f;
inline constexpr float kSoftLabelOut = 0.05f;

/// Uniform fraction bins: min(floor(17 f), 16).
int partition_class(double fraction);

/// A training subvolume by reference: the crop is built on demand by
/// make_example().
struct ExampleRef {
  Coord center;
  double fraction = 0;  // share of voxels in the center's object
  int class_id = 0;

  friend bool operator==(const ExampleRef&, const ExampleRef&) = default;
};

/// Every subvolume of `subvol_size`^3 that fits in the volume and whose
/// centre voxel is labelled (non-zero).
std::vector<ExampleRef> extract_examples(const Volume& image, const LabelVolume& labels, int subvol_size);

/// Materialised example: normalised image crop and soft-label mask, both
/// (1, s, s, s).
template <typename Scalar>
struct TrainingExample {
  Tensor<Scalar> image;
  Tensor<Scalar> mask;
  Coord center;
  int class_id = 0;
  double fraction = 0;
};

template <typename Scalar>
TrainingExample<Scalar> make_example(const Volume& image, const LabelVolume& labels, const ExampleRef& ref,
                                     int subvol_size);

struct ShardSpec {
  int worker_id = 0;
  int num_workers = 1;
  void validate() const;
};

/// Indices of `count` examples owned by `shard`: round-robin over a
/// seed-shuffled order, so shards partition the set.
std::vector<std::size_t> shard_indices(std::size_t count, const ShardSpec& shard, std::uint64_t seed);

/// Endless stream of example indices: a uniformly random non-empty fraction
/// class, then a uniformly random member of it, restricted to one shard.
class BalancedSampler {
 public:
  /// `seed` fixes the shard partition; `stream` selects an independent draw
  /// sequence within the shard.
  BalancedSampler(const std::vector<ExampleRef>& examples, const ShardSpec& shard, std::uint64_t seed,
                  std::uint64_t stream = 0);

  std::size_t next();
  const std::vector<std::size_t>& shard() const noexcept { return shard_; }
  int nonempty_classes() const noexcept { return static_cast<int>(classes_.size()); }

 private:
  std::vector<std::size_t> shard_;
  std::vector<std::vector<std::size_t>> classes_;  // non-empty buckets only
  std::mt19937_64 rng_;
};

}  // namespace ffn
