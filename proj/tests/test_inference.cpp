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

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <unordered_set>

#include "ffn/inference.hpp"
#include "ffn/movement.hpp"
#include "test_util.hpp"

namespace ffn {
namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

/// Pointwise oracle model: +20 where the normalised image is bright, -20
/// elsewhere. Ignores the POM, so its decisions do not depend on visit order.
Tensor<float> bright_is_object(const Tensor<float>& image, const Tensor<float>&) {
  Tensor<float> out(image.shape());
  for (Index i = 0; i < image.size(); ++i) out[i] = image[i] > 0.0f ? 20.0f : -20.0f;
  return out;
}

Volume sphere_volume(Index n, Coord centre, double radius) {
  Volume v(n, n, n, 0);
  for (Index z = 0; z < n; ++z)
    for (Index y = 0; y < n; ++y)
      for (Index x = 0; x < n; ++x) {
        const double d2 = double((z - centre.z) * (z - centre.z) + (y - centre.y) * (y - centre.y) +
                                 (x - centre.x) * (x - centre.x));
        if (d2 <= radius * radius) v(x, y, z) = 255;
      }
  return v;
}

std::set<Coord> as_set(const std::vector<Coord>& v) { return {v.begin(), v.end()}; }

TEST(Sobel, ConstantVolumeHasZeroInteriorAndInfiniteBorder) {
  const Volume v(6, 7, 8, 77);
  const auto g = sobel_magnitude_3d(v);
  EXPECT_EQ(g.shape(), (Shape{1, 8, 7, 6}));
  EXPECT_EQ(g(0, 3, 3, 3), 0.0);
  EXPECT_TRUE(std::isinf(g(0, 0, 3, 3)));
  EXPECT_TRUE(std::isinf(g(0, 3, 6, 3)));
  EXPECT_THROW(sobel_magnitude_3d(Volume(2, 5, 5)), ShapeError);
}

TEST(Sobel, StepEdgePeaksOnTheEdgePlanes) {
  Volume v(10, 10, 10, 0);
  for (Index z = 0; z < 10; ++z)
    for (Index y = 0; y < 10; ++y)
      for (Index x = 5; x < 10; ++x) v(x, y, z) = 100;
  const auto g = sobel_magnitude_3d(v);
  // [-1 0 1] along x sees the step at x = 4 and x = 5; 16 = (1+2+1)^2.
  EXPECT_DOUBLE_EQ(g(0, 4, 4, 4), 1600.0);
  EXPECT_DOUBLE_EQ(g(0, 4, 4, 5), 1600.0);
  EXPECT_EQ(g(0, 4, 4, 2), 0.0);
  EXPECT_EQ(g(0, 4, 4, 7), 0.0);
}

TEST(Sobel, SymmetricUnderAxisPermutation) {
  std::mt19937_64 rng(1);
  Volume v(7, 7, 7);
  for (Index z = 0; z < 7; ++z)
    for (Index y = 0; y < 7; ++y)
      for (Index x = 0; x < 7; ++x) v(x, y, z) = static_cast<std::uint8_t>(rng());
  Volume t(7, 7, 7);
  for (Index z = 0; z < 7; ++z)
    for (Index y = 0; y < 7; ++y)
      for (Index x = 0; x < 7; ++x) t(z, x, y) = v(x, y, z);  // (x,y,z) -> (z,x,y)
  const auto a = sobel_magnitude_3d(v), b = sobel_magnitude_3d(t);
  for (Index z = 1; z < 6; ++z)
    for (Index y = 1; y < 6; ++y)
      for (Index x = 1; x < 6; ++x) EXPECT_NEAR(a(0, z, y, x), b(0, y, x, z), 1e-9);
}

TEST(FindSeeds, ConstantVolumeTieBreakAndSpacing) {
  const Volume v(12, 12, 12, 50);
  const auto seeds = find_seeds(v, 3.0);
  ASSERT_FALSE(seeds.empty());
  // All scores tie, so acceptance is in lexicographic (z, y, x) order.
  EXPECT_EQ(seeds.front().position, (Coord{2, 2, 2}));
  for (std::size_t i = 1; i < seeds.size(); ++i) EXPECT_LT(seeds[i - 1].position, seeds[i].position);
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j) {
      const Coord d = seeds[i].position - seeds[j].position;
      EXPECT_GE(std::sqrt(double(d.z * d.z + d.y * d.y + d.x * d.x)), 3.0);
    }
}

TEST(FindSeeds, HugeSpacingGivesOneSeed) {
  const auto s = gen_synthetic({16, 16, 16}, 3, 4.0, 2);
  EXPECT_EQ(find_seeds(s.image, 1000.0).size(), 1u);
}

TEST(FindSeeds, EveryObjectOfANoiselessVolumeIsSeeded) {
  const auto s = gen_synthetic({32, 32, 32}, 2, 0.0, 6);
  const auto seeds = find_seeds(s.image, 4.0);
  std::set<std::uint32_t> hit;
  for (const auto& seed : seeds) hit.insert(s.labels.at(seed.position));
  EXPECT_TRUE(hit.count(1));
  EXPECT_TRUE(hit.count(2));
}

TEST(FindSeeds, MarginKeepsSeedsAwayFromFaces) {
  const auto s = gen_synthetic({24, 24, 24}, 4, 6.0, 3);
  for (const auto& seed : find_seeds(s.image, 2.0, 5))
    for (int a = 0; a < 3; ++a) {
      EXPECT_GE(seed.position[a], 5);
      EXPECT_LT(seed.position[a], 24 - 5);
    }
}

TEST(Canvas, ConsecutiveIdsAndFirstWins) {
  SegmentationCanvas c(4, 4, 4);
  EXPECT_EQ(c.claim({{0, 0, 0}, {0, 0, 1}}), 2u);
  EXPECT_EQ(c.claim({{0, 0, 1}}), 0u);  // already taken: no id consumed
  EXPECT_EQ(c.next_id(), 2u);
  EXPECT_EQ(c.claim({{0, 0, 1}, {3, 3, 3}}), 1u);
  EXPECT_EQ(c.labels().at({0, 0, 1}), 1u);
  EXPECT_EQ(c.labels().at({3, 3, 3}), 2u);
  EXPECT_EQ(c.claimed_count(), 3u);
}

TEST(FloodFill, NegativeInfinityModelStopsAfterSeedFov) {
  const Volume v(20, 20, 20, 128);
  const auto image = normalize_image<float>(v);
  SegmentationCanvas canvas(20, 20, 20);
  FovPredictor never = [](const Tensor<float>& im, const Tensor<float>&) { return Tensor<float>(im.shape(), -kInf); };
  const FloodFillOptions opt{9, 3, 0.9, 0.5};
  const auto r = flood_fill_object(never, image, canvas, {10, 10, 10}, opt);
  EXPECT_EQ(r.visited.size(), 1u);
  EXPECT_EQ(r.claimed, 0u);
  EXPECT_EQ(r.id, 0u);
  EXPECT_EQ(canvas.next_id(), 1u);
}

TEST(FloodFill, SphereOracle) {
  const Coord centre{20, 20, 20};
  const Volume v = sphere_volume(40, centre, 8.0);
  const auto image = normalize_image<float>(v);
  SegmentationCanvas canvas(40, 40, 40);
  const FloodFillOptions opt{9, 3, 0.9, 0.5};
  const auto r = flood_fill_object(bright_is_object, image, canvas, centre, opt);

  // Independent BFS over lattice centres: move along an axis when any
  // sphere voxel lies on that face sub-plane.
  auto inside = [&](Coord c) { return v.contains(c) && v.at(c) == 255; };
  std::vector<Coord> order{centre};
  std::set<Coord> seen{centre};
  for (std::size_t head = 0; head < order.size(); ++head) {
    const Coord c = order[head];
    for (const Coord& off : move_offsets(3)) {
      bool hit = false;
      for (Index a = -3; a <= 3 && !hit; ++a)
        for (Index b = -3; b <= 3 && !hit; ++b) {
          Coord q = c + off;
          int k = 0;
          for (int axis = 0; axis < 3; ++axis) {
            if (off[axis] != 0) continue;
            q[axis] += k++ == 0 ? a : b;
          }
          hit = inside(q);
        }
      if (hit && seen.insert(c + off).second) order.push_back(c + off);
    }
  }
  EXPECT_EQ(r.visited, order);

  std::set<Coord> expect;
  for (const Coord& c : order)
    for (Index dz = -4; dz <= 4; ++dz)
      for (Index dy = -4; dy <= 4; ++dy)
        for (Index dx = -4; dx <= 4; ++dx)
          if (inside(c + Coord{dz, dy, dx})) expect.insert(c + Coord{dz, dy, dx});
  std::set<Coord> got;
  for (Index z = 0; z < 40; ++z)
    for (Index y = 0; y < 40; ++y)
      for (Index x = 0; x < 40; ++x)
        if (canvas.labels()(x, y, z) != 0) got.insert({z, y, x});
  EXPECT_EQ(got, expect);
  EXPECT_EQ(r.claimed, expect.size());
}

TEST(FloodFill, VisitedPositionsAreUniqueForAnyModel) {
  std::mt19937_64 rng(4);
  const auto s = gen_synthetic({30, 30, 30}, 4, 20.0, 4);
  const auto image = normalize_image<float>(s.image);
  // A model that says "object" almost everywhere reaches the borders, where
  // lattice points are clamped.
  FovPredictor greedy = [](const Tensor<float>& im, const Tensor<float>&) { return Tensor<float>(im.shape(), 5.0f); };
  SegmentationCanvas canvas(30, 30, 30);
  const auto r = flood_fill_object(greedy, image, canvas, {15, 15, 15}, {9, 3, 0.9, 0.5});
  EXPECT_EQ(as_set(r.visited).size(), r.visited.size());
  for (const Coord& c : r.visited)
    for (int a = 0; a < 3; ++a) {
      EXPECT_GE(c[a], 4);
      EXPECT_LE(c[a], 25);
    }
  EXPECT_EQ(r.claimed, 27000u);
}

TEST(FloodFill, RaisingMoveThresholdNeverEnlargesVisitedSet) {
  std::mt19937_64 rng(5);
  Volume v(36, 36, 36);
  for (auto& x : v.voxels()) x = static_cast<std::uint8_t>(rng());
  const auto image = normalize_image<float>(v);
  FovPredictor pointwise = [](const Tensor<float>& im, const Tensor<float>&) {
    Tensor<float> out(im.shape());
    for (Index i = 0; i < im.size(); ++i) out[i] = 7.0f * im[i];
    return out;
  };
  std::set<Coord> previous;
  bool first = true;
  for (double t : {0.5, 0.8, 0.9, 0.95, 0.97}) {
    SegmentationCanvas canvas(36, 36, 36);
    const auto visited = as_set(flood_fill_object(pointwise, image, canvas, {18, 18, 18}, {9, 3, t, 0.5}).visited);
    if (!first) {
      EXPECT_TRUE(std::includes(previous.begin(), previous.end(), visited.begin(), visited.end())) << t;
    }
    previous = visited;
    first = false;
  }
}

TEST(FloodFill, ErrorsAndSkip) {
  const Volume v(20, 20, 20, 200);
  const auto image = normalize_image<float>(v);
  SegmentationCanvas canvas(20, 20, 20);
  const FloodFillOptions opt{9, 3, 0.9, 0.5};
  EXPECT_THROW(flood_fill_object(bright_is_object, image, canvas, {2, 10, 10}, opt), ValueError);
  canvas.claim({{10, 10, 10}});
  EXPECT_TRUE(flood_fill_object(bright_is_object, image, canvas, {10, 10, 10}, opt).skipped);
  EXPECT_THROW(flood_fill_object(bright_is_object, image, canvas, {10, 10, 10}, FloodFillOptions{8, 3, 0.9, 0.5}),
               ValueError);
}

TEST(SegmentVolume, EmptySeedsGiveBackground) {
  const Volume v = sphere_volume(24, {12, 12, 12}, 5);
  const auto labels = segment_volume(bright_is_object, v, {}, {9, 3, 0.9, 0.5});
  EXPECT_TRUE(std::all_of(labels.voxels().begin(), labels.voxels().end(), [](auto x) { return x == 0; }));
}

TEST(SegmentVolume, SecondSeedInClaimedObjectIsSkipped) {
  const Volume v = sphere_volume(30, {15, 15, 15}, 6);
  SegmentStats stats;
  const SeedList seeds{{{15, 15, 15}, 0}, {{15, 16, 15}, 0}, {{1, 1, 1}, 0}};
  const auto labels = segment_volume(bright_is_object, v, seeds, {9, 3, 0.9, 0.5}, &stats);
  EXPECT_EQ(stats.objects, 1);
  EXPECT_EQ(stats.skipped_claimed, 1);
  EXPECT_EQ(stats.skipped_border, 1);
  std::set<std::uint32_t> ids(labels.voxels().begin(), labels.voxels().end());
  EXPECT_EQ(ids, (std::set<std::uint32_t>{0, 1}));
}

TEST(SegmentVolume, DeterministicWithConsecutiveIds) {
  const auto s = gen_synthetic({28, 28, 28}, 4, 10.0, 9);
  FfnConfig c;
  c.num_modules = 1;
  c.features = 2;
  c.fov_size = 7;
  c.delta = 2;
  auto params = init_params<float>(c, 3);
  params.output_stage().bias[0] = 1.0f;  // push the untrained model towards moving
  SegmentStats st;
  const auto a = segment_volume(params, s.image, 0.9, &st);
  const auto b = segment_volume(params, s.image, 0.9);
  EXPECT_TRUE(a == b);
  std::set<std::uint32_t> ids(a.voxels().begin(), a.voxels().end());
  ids.erase(0);
  std::uint32_t expect = 1;
  for (std::uint32_t id : ids) EXPECT_EQ(id, expect++);
  EXPECT_EQ(static_cast<int>(ids.size()), st.objects);
}

}  // namespace
}  // namespace ffn
