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
#include <functional>
#include <optional>
#include <vector>

#include "ffn/model.hpp"
#include "ffn/volume.hpp"

namespace ffn {

/// 3D Sobel-Feldman gradient magnitude as a (1, z, y, x) tensor. Each axis
/// derivative is the [-1 0 1] difference smoothed by [1 2 1] on the other
/// two axes. Border voxels are +inf so they never become seeds.
Tensor<double> sobel_magnitude_3d(const Volume& volume);

struct Seed {
  Coord position;
  double score = 0;  // smoothed gradient magnitude; lower is more interior

  friend bool operator==(const Seed&, const Seed&) = default;
};

using SeedList = std::vector<Seed>;

/// Local minima of the 3^3 box-smoothed Sobel magnitude, accepted greedily
/// in ascending score (ties by z, y, x) while keeping Euclidean distance
/// >= min_spacing to every accepted seed. Seeds lie at least `margin`
/// voxels from every face.
SeedList find_seeds(const Volume& volume, double min_spacing, Index margin = 0);

/// Maps an image FOV and a POM FOV (both (1, f, f, f), POM as logits) to
/// output logits of the same shape.
using FovPredictor = std::function<Tensor<float>(const Tensor<float>& image, const Tensor<float>& pom)>;

FovPredictor network_predictor(const FfnParams<float>& params);

/// Label volume under construction. A voxel is claimed iff its id is
/// non-zero; ids are handed out consecutively from 1.
class SegmentationCanvas {
 public:
  SegmentationCanvas(Index nx, Index ny, Index nz) : labels_(nx, ny, nz, 0) {}

  const LabelVolume& labels() const noexcept { return labels_; }
  LabelVolume release() { return std::move(labels_); }
  bool claimed(Coord c) const { return labels_.at(c) != 0; }
  std::uint32_t next_id() const noexcept { return next_id_; }
  std::uint64_t claimed_count() const noexcept { return claimed_count_; }

  /// Claims `voxels` that are still free under a fresh id. Returns the
  /// number claimed; no id is consumed when that is zero.
  std::uint64_t claim(const std::vector<Coord>& voxels);

 private:
  LabelVolume labels_;
  std::uint32_t next_id_ = 1;
  std::uint64_t claimed_count_ = 0;
};

struct FloodFillOptions {
  int fov_size = 33;
  int delta = 8;
  double move_threshold = 0.9;
  double mask_threshold = 0.5;

  void validate() const;
};

FloodFillOptions flood_fill_options(const FfnConfig& config, double move_threshold = 0.9);

struct FloodFillResult {
  bool skipped = false;            // seed was already claimed
  std::uint32_t id = 0;            // 0 when nothing was claimed
  std::uint64_t claimed = 0;
  std::vector<Coord> visited;      // FOV centres in evaluation order
};

/// Segments one object starting at `seed` and claims its free voxels on
/// the canvas. `image` is the normalised (1, z, y, x) volume. FOV moves
/// that would leave the volume are clamped to the nearest valid centre.
FloodFillResult flood_fill_object(const FovPredictor& predictor, const Tensor<float>& image,
                                  SegmentationCanvas& canvas, Coord seed, const FloodFillOptions& options);

struct SegmentStats {
  int objects = 0;
  int skipped_claimed = 0;
  int skipped_border = 0;  // seed too close to the border for a full FOV
  std::uint64_t fov_evaluations = 0;
};

/// Runs flood_fill_object for every seed in order; first claim wins.
LabelVolume segment_volume(const FovPredictor& predictor, const Volume& volume, const SeedList& seeds,
                           const FloodFillOptions& options, SegmentStats* stats = nullptr);

LabelVolume segment_volume(const FfnParams<float>& params, const Volume& volume, const SeedList& seeds,
                           double move_threshold = 0.9, SegmentStats* stats = nullptr);

/// Seeds with the default spacing (delta) and a full-FOV border margin,
/// then segments.
LabelVolume segment_volume(const FfnParams<float>& params, const Volume& volume, double move_threshold = 0.9,
                           SegmentStats* stats = nullptr);

}  // namespace ffn
