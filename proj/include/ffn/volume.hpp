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
#include <filesystem>
#include <type_traits>
#include <vector>

#include "ffn/geometry.hpp"
#include "ffn/tensor.hpp"

namespace ffn {

/// Dense voxel grid stored x-fastest. `dims` are (x, y, z) extents.
template <typename Voxel>
class VoxelVolume {
 public:
  using value_type = Voxel;

  VoxelVolume() = default;
  VoxelVolume(Index nx, Index ny, Index nz, Voxel fill = Voxel{}) : dims_{nx, ny, nz} {
    if (nx < 1 || ny < 1 || nz < 1) throw ShapeError("volume extents must be >= 1");
    voxels_.assign(static_cast<std::size_t>(nx * ny * nz), fill);
  }

  const std::array<Index, 3>& dims() const noexcept { return dims_; }
  Index nx() const noexcept { return dims_[0]; }
  Index ny() const noexcept { return dims_[1]; }
  Index nz() const noexcept { return dims_[2]; }
  Index size() const noexcept { return static_cast<Index>(voxels_.size()); }
  /// Extents as a (z, y, x) coordinate.
  Coord extent() const noexcept { return {dims_[2], dims_[1], dims_[0]}; }

  Index index(Index x, Index y, Index z) const { return x + dims_[0] * (y + dims_[1] * z); }
  Index index(Coord c) const { return index(c.x, c.y, c.z); }
  bool contains(Coord c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < dims_[0] && c.y < dims_[1] && c.z < dims_[2];
  }

  Voxel& operator()(Index x, Index y, Index z) { return voxels_[static_cast<std::size_t>(index(x, y, z))]; }
  Voxel operator()(Index x, Index y, Index z) const { return voxels_[static_cast<std::size_t>(index(x, y, z))]; }
  Voxel& at(Coord c) { return voxels_[static_cast<std::size_t>(index(c))]; }
  Voxel at(Coord c) const { return voxels_[static_cast<std::size_t>(index(c))]; }

  std::vector<Voxel>& voxels() noexcept { return voxels_; }
  const std::vector<Voxel>& voxels() const noexcept { return voxels_; }

  friend bool operator==(const VoxelVolume&, const VoxelVolume&) = default;

 private:
  std::array<Index, 3> dims_{0, 0, 0};
  std::vector<Voxel> voxels_;
};

/// 8-bit grayscale image.
using Volume = VoxelVolume<std::uint8_t>;
/// Object ids; 0 is background.
using LabelVolume = VoxelVolume<std::uint32_t>;

enum class VolumeDtype : std::uint8_t { kGray8 = 0, kLabel32 = 1 };

template <typename Voxel>
constexpr VolumeDtype dtype_of() {
  static_assert(std::is_same_v<Voxel, std::uint8_t> || std::is_same_v<Voxel, std::uint32_t>);
  return std::is_same_v<Voxel, std::uint8_t> ? VolumeDtype::kGray8 : VolumeDtype::kLabel32;
}

/// "FFNV" | u8 dtype | u64 nx, ny, nz | raw little-endian voxels, x fastest.
template <typename Voxel>
void save_volume(const std::filesystem::path& path, const VoxelVolume<Voxel>& volume);

template <typename Voxel>
VoxelVolume<Voxel> load_volume(const std::filesystem::path& path);

/// Reads only the dtype byte of an FFNV file.
VolumeDtype peek_volume_dtype(const std::filesystem::path& path);

/// Maps gray values to [-0.5, 0.5] as a (1, z, y, x) tensor.
template <typename Scalar>
Tensor<Scalar> normalize_image(const Volume& volume);

struct SyntheticVolume {
  Volume image;
  LabelVolume labels;
};

/// Voronoi cells around random seed points, each cell eroded by one voxel
/// into a dark membrane, plus Gaussian intensity noise. Labels are the
/// eroded cells (ids 1..num_objects); membrane voxels are background 0.
SyntheticVolume gen_synthetic(std::array<Index, 3> dims, int num_objects, double noise_sigma, std::uint64_t seed);

}  // namespace ffn
