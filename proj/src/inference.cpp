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

#include "ffn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "ffn/movement.hpp"
#include "ffn/training_data.hpp"

namespace ffn {

Tensor<double> sobel_magnitude_3d(const Volume& volume) {
  const Index nx = volume.nx(), ny = volume.ny(), nz = volume.nz();
  if (nx < 3 || ny < 3 || nz < 3) throw ShapeError("sobel_magnitude_3d: every extent must be >= 3");
  constexpr double kSmooth[3] = {1, 2, 1};
  Tensor<double> out({1, nz, ny, nx}, std::numeric_limits<double>::infinity());
  auto v = [&](Index x, Index y, Index z) { return static_cast<double>(volume(x, y, z)); };
  for (Index z = 1; z + 1 < nz; ++z)
    for (Index y = 1; y + 1 < ny; ++y)
      for (Index x = 1; x + 1 < nx; ++x) {
        double gx = 0, gy = 0, gz = 0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            const double w = kSmooth[a] * kSmooth[b];
            gx += w * (v(x + 1, y + a - 1, z + b - 1) - v(x - 1, y + a - 1, z + b - 1));
            gy += w * (v(x + a - 1, y + 1, z + b - 1) - v(x + a - 1, y - 1, z + b - 1));
            gz += w * (v(x + a - 1, y + b - 1, z + 1) - v(x + a - 1, y + b - 1, z - 1));
          }
        out(0, z, y, x) = std::sqrt(gx * gx + gy * gy + gz * gz);
      }
  return out;
}

namespace {

// 3^3 box mean; any infinite input in the window makes the result infinite.
Tensor<double> box_smooth(const Tensor<double>& t) {
  const Index nz = t.dim(1), ny = t.dim(2), nx = t.dim(3);
  Tensor<double> out({1, nz, ny, nx}, std::numeric_limits<double>::infinity());
  for (Index z = 1; z + 1 < nz; ++z)
    for (Index y = 1; y + 1 < ny; ++y)
      for (Index x = 1; x + 1 < nx; ++x) {
        double s = 0;
        for (Index dz = -1; dz <= 1; ++dz)
          for (Index dy = -1; dy <= 1; ++dy)
            for (Index dx = -1; dx <= 1; ++dx) s += t(0, z + dz, y + dy, x + dx);
        out(0, z, y, x) = s / 27.0;
      }
  return out;
}

struct CellKey {
  Index z, y, x;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept { return CoordHash{}(Coord{k.z, k.y, k.x}); }
};

double squared_distance(Coord a, Coord b) {
  const double dz = static_cast<double>(a.z - b.z), dy = static_cast<double>(a.y - b.y),
               dx = static_cast<double>(a.x - b.x);
  return dz * dz + dy * dy + dx * dx;
}

}  // namespace

SeedList find_seeds(const Volume& volume, double min_spacing, Index margin) {
  if (!(min_spacing >= 0)) throw ValueError("find_seeds: min_spacing must be >= 0");
  if (margin < 0) throw ValueError("find_seeds: margin must be >= 0");
  const Tensor<double> smooth = box_smooth(sobel_magnitude_3d(volume));
  const Index nz = volume.nz(), ny = volume.ny(), nx = volume.nx();

  SeedList candidates;
  for (Index z = margin; z < nz - margin; ++z)
    for (Index y = margin; y < ny - margin; ++y)
      for (Index x = margin; x < nx - margin; ++x) {
        const double s = smooth(0, z, y, x);
        if (!std::isfinite(s)) continue;
        bool minimum = true;
        for (Index dz = -1; dz <= 1 && minimum; ++dz)
          for (Index dy = -1; dy <= 1 && minimum; ++dy)
            for (Index dx = -1; dx <= 1 && minimum; ++dx) {
              const Index zz = z + dz, yy = y + dy, xx = x + dx;
              if (zz < 0 || yy < 0 || xx < 0 || zz >= nz || yy >= ny || xx >= nx) continue;
              if (smooth(0, zz, yy, xx) < s) minimum = false;
            }
        if (minimum) candidates.push_back({{z, y, x}, s});
      }
  std::sort(candidates.begin(), candidates.end(), [](const Seed& a, const Seed& b) {
    return a.score != b.score ? a.score < b.score : a.position < b.position;
  });

  // Spatial hash with cells of edge min_spacing: conflicts can only come
  // from the 27 surrounding cells.
  const double cell = std::max(min_spacing, 1.0);
  const double limit = min_spacing * min_spacing;
  std::unordered_map<CellKey, std::vector<Coord>, CellKeyHash> grid;
  auto key_of = [&](Coord c) {
    return CellKey{static_cast<Index>(std::floor(c.z / cell)), static_cast<Index>(std::floor(c.y / cell)),
                   static_cast<Index>(std::floor(c.x / cell))};
  };
  SeedList seeds;
  for (const Seed& cand : candidates) {
    const CellKey k = key_of(cand.position);
    bool ok = true;
    for (Index dz = -1; dz <= 1 && ok; ++dz)
      for (Index dy = -1; dy <= 1 && ok; ++dy)
        for (Index dx = -1; dx <= 1 && ok; ++dx) {
          auto it = grid.find({k.z + dz, k.y + dy, k.x + dx});
          if (it == grid.end()) continue;
          for (const Coord& other : it->second)
            if (squared_distance(other, cand.position) < limit) {
              ok = false;
              break;
            }
        }
    if (!ok) continue;
    grid[k].push_back(cand.position);
    seeds.push_back(cand);
  }
  return seeds;
}

FovPredictor network_predictor(const FfnParams<float>& params) {
  return [&params](const Tensor<float>& image, const Tensor<float>& pom) { return forward(params, image, pom); };
}

std::uint64_t SegmentationCanvas::claim(const std::vector<Coord>& voxels) {
  std::uint64_t n = 0;
  for (const Coord& c : voxels) {
    std::uint32_t& v = labels_.at(c);
    if (v == 0) {
      v = next_id_;
      ++n;
    }
  }
  if (n > 0) {
    ++next_id_;
    claimed_count_ += n;
  }
  return n;
}

void FloodFillOptions::validate() const {
  if (fov_size < 1 || fov_size % 2 == 0) throw ValueError("fov_size must be odd and positive");
  if (delta < 1 || delta > fov_size / 2) throw ValueError("delta must lie in [1, fov_size/2]");
  if (!(move_threshold > 0.0 && move_threshold <= 1.0)) throw ValueError("move threshold must lie in (0, 1]");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) throw ValueError("mask threshold must lie in (0, 1)");
}

FloodFillOptions flood_fill_options(const FfnConfig& config, double move_threshold) {
  return {config.fov_size, config.delta, move_threshold, 0.5};
}

namespace {

// POM over a box of the volume that grows in delta-sized slabs as the FOV
// wanders, so an object never needs a full-volume map.
class WorkingRegion {
 public:
  WorkingRegion(Coord extent, Index delta) : extent_(extent), delta_(delta) {}

  void cover(Coord lo, Coord hi) {  // hi exclusive
    if (!pom_.empty() && contains(lo, hi)) return;
    Coord new_lo = lo, new_hi = hi;
    if (!pom_.empty()) {
      for (int a = 0; a < 3; ++a) {
        new_lo[a] = lo_[a];
        while (new_lo[a] > lo[a]) new_lo[a] = std::max<Index>(new_lo[a] - delta_, 0);
        new_hi[a] = hi_[a];
        while (new_hi[a] < hi[a]) new_hi[a] = std::min<Index>(new_hi[a] + delta_, extent_[a]);
      }
    }
    const Coord size = new_hi - new_lo;
    Tensor<float> grown({1, size.z, size.y, size.x}, logit(kSoftLabelOut));
    if (!pom_.empty()) paste(grown, pom_, lo_ - new_lo);
    pom_ = std::move(grown);
    lo_ = new_lo;
    hi_ = new_hi;
  }

  Tensor<float>& pom() { return pom_; }
  Coord lo() const { return lo_; }
  Coord hi() const { return hi_; }

 private:
  bool contains(Coord lo, Coord hi) const {
    for (int a = 0; a < 3; ++a)
      if (lo[a] < lo_[a] || hi[a] > hi_[a]) return false;
    return true;
  }

  Coord extent_;
  Index delta_;
  Coord lo_, hi_;
  Tensor<float> pom_;
};

}  // namespace

FloodFillResult flood_fill_object(const FovPredictor& predictor, const Tensor<float>& image,
                                  SegmentationCanvas& canvas, Coord seed, const FloodFillOptions& options) {
  options.validate();
  const Coord extent{image.dim(1), image.dim(2), image.dim(3)};
  if (canvas.labels().extent() != extent) throw ShapeError("flood_fill_object: canvas and image dims differ");
  const Index r = options.fov_size / 2;
  const Coord radius{r, r, r};
  const Coord fov{options.fov_size, options.fov_size, options.fov_size};
  auto fits = [&](Coord c) {
    for (int a = 0; a < 3; ++a)
      if (c[a] < r || c[a] + r >= extent[a]) return false;
    return true;
  };
  if (!fits(seed)) throw ValueError("flood_fill_object: FOV around seed " + seed.str() + " leaves the volume");

  FloodFillResult result;
  if (canvas.claimed(seed)) {
    result.skipped = true;
    return result;
  }

  WorkingRegion region(extent, options.delta);
  region.cover(seed - radius, seed + radius + Coord{1, 1, 1});
  region.pom()(0, seed.z - region.lo().z, seed.y - region.lo().y, seed.x - region.lo().x) = logit(kSoftLabelIn);

  // Positions live on the lattice seed + k * delta; clamping happens only
  // when a lattice point is mapped to a centre, so border moves never seed
  // a shifted lattice.
  auto centre_of = [&](Coord k) {
    Coord c = seed + Coord{k.z * options.delta, k.y * options.delta, k.x * options.delta};
    for (int a = 0; a < 3; ++a) c[a] = std::clamp<Index>(c[a], r, extent[a] - 1 - r);
    return c;
  };
  std::deque<Coord> queue{Coord{0, 0, 0}};
  std::unordered_set<Coord, CoordHash> visited{seed};
  while (!queue.empty()) {
    const Coord k = queue.front();
    queue.pop_front();
    const Coord pos = centre_of(k);
    result.visited.push_back(pos);

    region.cover(pos - radius, pos + radius + Coord{1, 1, 1});
    const Coord window = pos - radius - region.lo();
    const Tensor<float> logits = predictor(crop(image, pos - radius, fov), crop(region.pom(), window, fov));
    apply_pom_update(region.pom(), logits, window);

    const auto offsets = move_offsets(options.delta);
    const auto steps = move_offsets(1);
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      const float face = face_max_logit(region.pom(), pos - region.lo(), offsets[i], options.delta);
      if (static_cast<double>(sigmoid(face)) < options.move_threshold) continue;
      const Coord next = k + steps[i];
      if (visited.insert(centre_of(next)).second) queue.push_back(next);
    }
  }

  const float cutoff = logit(static_cast<float>(options.mask_threshold));
  const Coord lo = region.lo(), hi = region.hi();
  std::vector<Coord> voxels;
  for (Index z = lo.z; z < hi.z; ++z)
    for (Index y = lo.y; y < hi.y; ++y)
      for (Index x = lo.x; x < hi.x; ++x)
        if (region.pom()(0, z - lo.z, y - lo.y, x - lo.x) >= cutoff) voxels.push_back({z, y, x});
  const std::uint32_t id = canvas.next_id();
  result.claimed = canvas.claim(voxels);
  if (result.claimed > 0) result.id = id;
  return result;
}

LabelVolume segment_volume(const FovPredictor& predictor, const Volume& volume, const SeedList& seeds,
                           const FloodFillOptions& options, SegmentStats* stats) {
  options.validate();
  const Tensor<float> image = normalize_image<float>(volume);
  SegmentationCanvas canvas(volume.nx(), volume.ny(), volume.nz());
  SegmentStats local;
  const Index r = options.fov_size / 2;
  for (const Seed& seed : seeds) {
    const Coord c = seed.position;
    bool fits = true;
    for (int a = 0; a < 3; ++a)
      if (c[a] < r || c[a] + r >= canvas.labels().extent()[a]) fits = false;
    if (!fits) {
      ++local.skipped_border;
      continue;
    }
    const FloodFillResult res = flood_fill_object(predictor, image, canvas, c, options);
    if (res.skipped) ++local.skipped_claimed;
    if (res.claimed > 0) ++local.objects;
    local.fov_evaluations += res.visited.size();
  }
  if (stats) *stats = local;
  return canvas.release();
}

LabelVolume segment_volume(const FfnParams<float>& params, const Volume& volume, const SeedList& seeds,
                           double move_threshold, SegmentStats* stats) {
  return segment_volume(network_predictor(params), volume, seeds, flood_fill_options(params.config, move_threshold),
                        stats);
}

LabelVolume segment_volume(const FfnParams<float>& params, const Volume& volume, double move_threshold,
                           SegmentStats* stats) {
  const SeedList seeds = find_seeds(volume, params.config.delta, params.config.fov_radius());
  return segment_volume(params, volume, seeds, move_threshold, stats);
}

}  // namespace ffn
