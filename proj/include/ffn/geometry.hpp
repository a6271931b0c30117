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

#include <algorithm>
#include <compare>
#include <cstddef>
#include <functional>
#include <string>

#include "ffn/tensor.hpp"

namespace ffn {

/// Voxel coordinate, z-major to match the (z, y, x) storage order.
struct Coord {
  Index z = 0;
  Index y = 0;
  Index x = 0;

  friend auto operator<=>(const Coord&, const Coord&) = default;
  friend Coord operator+(Coord a, Coord b) { return {a.z + b.z, a.y + b.y, a.x + b.x}; }
  friend Coord operator-(Coord a, Coord b) { return {a.z - b.z, a.y - b.y, a.x - b.x}; }
  Index& operator[](int axis) { return axis == 0 ? z : (axis == 1 ? y : x); }
  Index operator[](int axis) const { return axis == 0 ? z : (axis == 1 ? y : x); }
  std::string str() const {
    return "(" + std::to_string(z) + "," + std::to_string(y) + "," + std::to_string(x) + ")";
  }
};

struct CoordHash {
  std::size_t operator()(const Coord& c) const noexcept {
    std::size_t h = std::hash<Index>{}(c.z);
    h = h * 1000003u ^ std::hash<Index>{}(c.y);
    return h * 1000003u ^ std::hash<Index>{}(c.x);
  }
};

/// Copies the (channels, size.z, size.y, size.x) window starting at `origin`.
template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& t, Coord origin, Coord size) {
  if (t.rank() != 4) throw ShapeError("crop: expected (c,z,y,x) tensor, got " + shape_string(t.shape()));
  if (origin.z < 0 || origin.y < 0 || origin.x < 0 || origin.z + size.z > t.dim(1) ||
      origin.y + size.y > t.dim(2) || origin.x + size.x > t.dim(3)) {
    throw ShapeError("crop: window at " + origin.str() + " size " + size.str() + " exceeds " +
                     shape_string(t.shape()));
  }
  Tensor<Scalar> out({t.dim(0), size.z, size.y, size.x});
  for (Index c = 0; c < t.dim(0); ++c)
    for (Index z = 0; z < size.z; ++z)
      for (Index y = 0; y < size.y; ++y) {
        const Scalar* src = t.data() + t.offset(c, origin.z + z, origin.y + y, origin.x);
        std::copy(src, src + size.x, out.data() + out.offset(c, z, y, 0));
      }
  return out;
}

/// Writes `window` into `t` at `origin`; inverse of crop.
template <typename Scalar>
void paste(Tensor<Scalar>& t, const Tensor<Scalar>& window, Coord origin) {
  if (t.rank() != 4 || window.rank() != 4 || t.dim(0) != window.dim(0)) {
    throw ShapeError("paste: incompatible " + shape_string(window.shape()) + " into " + shape_string(t.shape()));
  }
  if (origin.z < 0 || origin.y < 0 || origin.x < 0 || origin.z + window.dim(1) > t.dim(1) ||
      origin.y + window.dim(2) > t.dim(2) || origin.x + window.dim(3) > t.dim(3)) {
    throw ShapeError("paste: window " + shape_string(window.shape()) + " at " + origin.str() + " exceeds " +
                     shape_string(t.shape()));
  }
  for (Index c = 0; c < window.dim(0); ++c)
    for (Index z = 0; z < window.dim(1); ++z)
      for (Index y = 0; y < window.dim(2); ++y) {
        const Scalar* src = window.data() + window.offset(c, z, y, 0);
        std::copy(src, src + window.dim(3), t.data() + t.offset(c, origin.z + z, origin.y + y, origin.x));
      }
}

}  // namespace ffn
