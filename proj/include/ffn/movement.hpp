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
#include <array>
#include <limits>
#include <vector>

#include "ffn/geometry.hpp"
#include "ffn/tensor.hpp"

namespace ffn {

/// The six FOV moves in a fixed order: -z, +z, -y, +y, -x, +x.
inline std::array<Coord, 6> move_offsets(Index delta) {
  return {Coord{-delta, 0, 0}, Coord{delta, 0, 0}, Coord{0, -delta, 0},
          Coord{0, delta, 0},  Coord{0, 0, -delta}, Coord{0, 0, delta}};
}

/// Largest POM logit on the face sub-plane towards `offset`: the plane at
/// `center + offset`, limited to +-delta around the centre on the other
/// two axes. `pom` is (1, z, y, x) and must contain that plane.
template <typename Scalar>
Scalar face_max_logit(const Tensor<Scalar>& pom, Coord center, Coord offset, Index delta) {
  Coord lo = center - Coord{delta, delta, delta};
  Coord hi = center + Coord{delta, delta, delta};
  for (int axis = 0; axis < 3; ++axis) {
    if (offset[axis] != 0) lo[axis] = hi[axis] = center[axis] + offset[axis];
  }
  for (int axis = 0; axis < 3; ++axis) {
    lo[axis] = std::max<Index>(lo[axis], 0);
    hi[axis] = std::min<Index>(hi[axis], pom.dim(axis + 1) - 1);
  }
  Scalar best = -std::numeric_limits<Scalar>::infinity();
  for (Index z = lo.z; z <= hi.z; ++z)
    for (Index y = lo.y; y <= hi.y; ++y)
      for (Index x = lo.x; x <= hi.x; ++x) best = std::max(best, pom(0, z, y, x));
  return best;
}

/// Offsets whose face reaches sigmoid(max logit) >= threshold, in
/// move_offsets() order.
template <typename Scalar>
std::vector<Coord> scored_moves(const Tensor<Scalar>& pom, Coord center, Index delta, double threshold) {
  std::vector<Coord> out;
  for (const Coord& off : move_offsets(delta)) {
    if (static_cast<double>(sigmoid(face_max_logit(pom, center, off, delta))) >= threshold) out.push_back(off);
  }
  return out;
}

}  // namespace ffn
