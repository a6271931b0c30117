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

#include "ffn/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <set>

#include "binary_io.hpp"

namespace ffn {
namespace {

constexpr char kMagic[4] = {'F', 'F', 'N', 'V'};
constexpr double kMembraneGray = 40.0;
constexpr double kInteriorGray = 190.0;

const char* dtype_name(VolumeDtype d) { return d == VolumeDtype::kGray8 ? "u8 grayscale" : "u32 labels"; }

std::array<std::uint64_t, 3> read_header(detail::BinaryReader& r, VolumeDtype& dtype) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "bad magic: " + r.path().string() + " is not an FFNV volume");
  }
  const auto code = r.value<std::uint8_t>();
  if (code > 1) throw FormatError(FormatError::Kind::kDtype, "unknown dtype code " + std::to_string(code));
  dtype = static_cast<VolumeDtype>(code);
  std::array<std::uint64_t, 3> dims{};
  for (auto& d : dims) d = r.value<std::uint64_t>();
  return dims;
}

}  // namespace

template <typename Voxel>
void save_volume(const std::filesystem::path& path, const VoxelVolume<Voxel>& volume) {
  detail::BinaryWriter w(path);
  w.bytes(kMagic, 4);
  w.value<std::uint8_t>(static_cast<std::uint8_t>(dtype_of<Voxel>()));
  for (Index d : volume.dims()) w.value<std::uint64_t>(static_cast<std::uint64_t>(d));
  w.bytes(volume.voxels().data(), sizeof(Voxel) * volume.voxels().size());
  w.close();
}

template <typename Voxel>
VoxelVolume<Voxel> load_volume(const std::filesystem::path& path) {
  detail::BinaryReader r(path, "volume");
  VolumeDtype dtype{};
  const auto dims = read_header(r, dtype);
  if (dtype != dtype_of<Voxel>()) {
    throw FormatError(FormatError::Kind::kDtype, "dtype mismatch: " + path.string() + " holds " +
                                                     dtype_name(dtype) + ", expected " +
                                                     dtype_name(dtype_of<Voxel>()));
  }
  constexpr std::uint64_t kMaxExtent = std::uint64_t(1) << 20;
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[0] > kMaxExtent || dims[1] > kMaxExtent ||
      dims[2] > kMaxExtent) {
    throw FormatError(FormatError::Kind::kShapeMismatch, "invalid volume dims in " + path.string());
  }
  VoxelVolume<Voxel> volume(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]), static_cast<Index>(dims[2]));
  r.bytes(volume.voxels().data(), sizeof(Voxel) * volume.voxels().size());
  if (!r.at_end()) throw FormatError(FormatError::Kind::kShapeMismatch, "trailing bytes in " + path.string());
  return volume;
}

VolumeDtype peek_volume_dtype(const std::filesystem::path& path) {
  detail::BinaryReader r(path, "volume");
  VolumeDtype dtype{};
  read_header(r, dtype);
  return dtype;
}

template void save_volume(const std::filesystem::path&, const Volume&);
template void save_volume(const std::filesystem::path&, const LabelVolume&);
template Volume load_volume(const std::filesystem::path&);
template LabelVolume load_volume(const std::filesystem::path&);

template <typename Scalar>
Tensor<Scalar> normalize_image(const Volume& volume) {
  Tensor<Scalar> t({1, volume.nz(), volume.ny(), volume.nx()});
  // Tensor (z, y, x) with x fastest has the same linear order as the volume.
  for (Index i = 0; i < volume.size(); ++i) {
    t[i] = static_cast<Scalar>(volume.voxels()[static_cast<std::size_t>(i)]) / Scalar(255) - Scalar(0.5);
  }
  return t;
}

template Tensor<float> normalize_image(const Volume&);
template Tensor<double> normalize_image(const Volume&);

SyntheticVolume gen_synthetic(std::array<Index, 3> dims, int num_objects, double noise_sigma, std::uint64_t seed) {
  const auto [nx, ny, nz] = dims;
  if (num_objects < 1) throw ValueError("gen_synthetic: num_objects must be >= 1");
  if (noise_sigma < 0) throw ValueError("gen_synthetic: noise_sigma must be >= 0");
  if (nx < 3 || ny < 3 || nz < 3 || nx * ny * nz < 27 * static_cast<Index>(num_objects)) {
    throw ShapeError("gen_synthetic: dims too small for " + std::to_string(num_objects) + " objects");
  }

  std::mt19937_64 rng(seed);
  std::set<Coord> taken;
  std::vector<Coord> centers;
  std::uniform_int_distribution<Index> ux(0, nx - 1), uy(0, ny - 1), uz(0, nz - 1);
  while (static_cast<int>(centers.size()) < num_objects) {
    const Coord c{uz(rng), uy(rng), ux(rng)};
    if (!taken.insert(c).second) continue;
    centers.push_back(c);
  }

  SyntheticVolume out{Volume(nx, ny, nz), LabelVolume(nx, ny, nz)};
  for (Index z = 0; z < nz; ++z)
    for (Index y = 0; y < ny; ++y)
      for (Index x = 0; x < nx; ++x) {
        Index best = std::numeric_limits<Index>::max();
        std::uint32_t id = 0;
        for (std::size_t k = 0; k < centers.size(); ++k) {
          const Index dz = z - centers[k].z, dy = y - centers[k].y, dx = x - centers[k].x;
          const Index d2 = dz * dz + dy * dy + dx * dx;
          if (d2 < best) {
            best = d2;
            id = static_cast<std::uint32_t>(k + 1);
          }
        }
        out.labels(x, y, z) = id;
      }

  // Voxels with another cell in their 26-neighbourhood form the membrane:
  // dark in the image and background (0) in the labels, leaving each object
  // its eroded cell. No two eroded cells touch, even at a corner.
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  const LabelVolume cells = out.labels;
  for (Index z = 0; z < nz; ++z)
    for (Index y = 0; y < ny; ++y)
      for (Index x = 0; x < nx; ++x) {
        const std::uint32_t id = cells(x, y, z);
        bool membrane = false;
        for (Index dz = -1; dz <= 1 && !membrane; ++dz)
          for (Index dy = -1; dy <= 1 && !membrane; ++dy)
            for (Index dx = -1; dx <= 1 && !membrane; ++dx) {
              const Coord n{z + dz, y + dy, x + dx};
              membrane = cells.contains(n) && cells.at(n) != id;
            }
        if (membrane) out.labels(x, y, z) = 0;
        double v = membrane ? kMembraneGray : kInteriorGray;
        if (noise_sigma > 0) v += noise(rng);
        out.image(x, y, z) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

}  // namespace ffn
