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

#include "ffn/training_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace ffn {

int partition_class(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValueError("partition_class: fraction outside [0,1]");
  return std::min(static_cast<int>(std::floor(kFractionClasses * fraction)), kFractionClasses - 1);
}

namespace {

// Summed-volume table of a binary mask, padded by one on the low side.
class IntegralVolume {
 public:
  IntegralVolume(const LabelVolume& labels, std::uint32_t id)
      : sx_(labels.nx() + 1), sy_(labels.ny() + 1), sums_(static_cast<std::size_t>(sx_ * sy_ * (labels.nz() + 1)), 0) {
    for (Index z = 0; z < labels.nz(); ++z)
      for (Index y = 0; y < labels.ny(); ++y)
        for (Index x = 0; x < labels.nx(); ++x) {
          const std::int64_t v = labels(x, y, z) == id ? 1 : 0;
          at(x + 1, y + 1, z + 1) = v + at(x, y + 1, z + 1) + at(x + 1, y, z + 1) + at(x + 1, y + 1, z) -
                                    at(x, y, z + 1) - at(x, y + 1, z) - at(x + 1, y, z) + at(x, y, z);
        }
  }

  // Count within [lo, lo + n) on every axis.
  std::int64_t box(Coord lo, Index n) const {
    const Index x0 = lo.x, y0 = lo.y, z0 = lo.z, x1 = lo.x + n, y1 = lo.y + n, z1 = lo.z + n;
    return get(x1, y1, z1) - get(x0, y1, z1) - get(x1, y0, z1) - get(x1, y1, z0) + get(x0, y0, z1) +
           get(x0, y1, z0) + get(x1, y0, z0) - get(x0, y0, z0);
  }

 private:
  std::int64_t& at(Index x, Index y, Index z) { return sums_[static_cast<std::size_t>(x + sx_ * (y + sy_ * z))]; }
  std::int64_t get(Index x, Index y, Index z) const { return sums_[static_cast<std::size_t>(x + sx_ * (y + sy_ * z))]; }

  Index sx_, sy_;
  std::vector<std::int64_t> sums_;
};

}  // namespace

std::vector<ExampleRef> extract_examples(const Volume& image, const LabelVolume& labels, int subvol_size) {
  if (image.dims() != labels.dims()) throw ShapeError("extract_examples: image and label dims differ");
  if (subvol_size < 1) throw ValueError("extract_examples: subvol_size must be >= 1");
  const Index s = subvol_size;
  if (labels.nx() < s || labels.ny() < s || labels.nz() < s) {
    throw ShapeError("extract_examples: volume smaller than subvolume size " + std::to_string(s));
  }
  const Index r = s / 2;

  // Group candidate centres by object so each needs one summed-volume table.
  std::map<std::uint32_t, std::vector<Coord>> by_label;
  for (Index z = r; z + (s - r) <= labels.nz(); ++z)
    for (Index y = r; y + (s - r) <= labels.ny(); ++y)
      for (Index x = r; x + (s - r) <= labels.nx(); ++x) {
        const std::uint32_t id = labels(x, y, z);
        if (id != 0) by_label[id].push_back({z, y, x});
      }

  std::vector<ExampleRef> out;
  const double total = static_cast<double>(s * s * s);
  for (const auto& [id, centers] : by_label) {
    const IntegralVolume table(labels, id);
    for (const Coord& c : centers) {
      const double f = static_cast<double>(table.box(c - Coord{r, r, r}, s)) / total;
      out.push_back({c, f, partition_class(f)});
    }
  }
  std::sort(out.begin(), out.end(), [](const ExampleRef& a, const ExampleRef& b) { return a.center < b.center; });
  return out;
}

template <typename Scalar>
TrainingExample<Scalar> make_example(const Volume& image, const LabelVolume& labels, const ExampleRef& ref,
                                     int subvol_size) {
  const Index s = subvol_size;
  const Index r = s / 2;
  const Coord lo = ref.center - Coord{r, r, r};
  if (!labels.contains(lo) || !labels.contains(lo + Coord{s - 1, s - 1, s - 1})) {
    throw ShapeError("make_example: subvolume around " + ref.center.str() + " leaves the volume");
  }
  TrainingExample<Scalar> ex{Tensor<Scalar>({1, s, s, s}), Tensor<Scalar>({1, s, s, s}), ref.center, ref.class_id,
                             ref.fraction};
  const std::uint32_t id = labels.at(ref.center);
  Index i = 0;
  for (Index z = 0; z < s; ++z)
    for (Index y = 0; y < s; ++y)
      for (Index x = 0; x < s; ++x, ++i) {
        ex.image[i] = static_cast<Scalar>(image(lo.x + x, lo.y + y, lo.z + z)) / Scalar(255) - Scalar(0.5);
        ex.mask[i] = labels(lo.x + x, lo.y + y, lo.z + z) == id ? Scalar(kSoftLabelIn) : Scalar(kSoftLabelOut);
      }
  return ex;
}

template TrainingExample<float> make_example(const Volume&, const LabelVolume&, const ExampleRef&, int);
template TrainingExample<double> make_example(const Volume&, const LabelVolume&, const ExampleRef&, int);

void ShardSpec::validate() const {
  if (num_workers < 1 || worker_id < 0 || worker_id >= num_workers) {
    throw ValueError("invalid shard: worker " + std::to_string(worker_id) + " of " + std::to_string(num_workers));
  }
}

std::vector<std::size_t> shard_indices(std::size_t count, const ShardSpec& shard, std::uint64_t seed) {
  shard.validate();
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> mine;
  for (std::size_t i = static_cast<std::size_t>(shard.worker_id); i < count;
       i += static_cast<std::size_t>(shard.num_workers)) {
    mine.push_back(order[i]);
  }
  return mine;
}

BalancedSampler::BalancedSampler(const std::vector<ExampleRef>& examples, const ShardSpec& shard,
                                 std::uint64_t seed, std::uint64_t stream)
    : shard_(shard_indices(examples.size(), shard, seed)),
      rng_(seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(shard.worker_id + 1)) ^
           (0xD1B54A32D192ED03ull * stream)) {
  if (examples.empty()) throw ValueError("BalancedSampler: empty example list");
  if (shard_.empty()) throw ValueError("BalancedSampler: shard " + std::to_string(shard.worker_id) + " is empty");
  std::array<std::vector<std::size_t>, kFractionClasses> buckets;
  for (std::size_t idx : shard_) buckets[static_cast<std::size_t>(examples[idx].class_id)].push_back(idx);
  for (auto& b : buckets)
    if (!b.empty()) classes_.push_back(std::move(b));
}

std::size_t BalancedSampler::next() {
  std::uniform_int_distribution<std::size_t> pick_class(0, classes_.size() - 1);
  const auto& bucket = classes_[pick_class(rng_)];
  std::uniform_int_distribution<std::size_t> pick(0, bucket.size() - 1);
  return bucket[pick(rng_)];
}

}  // namespace ffn
