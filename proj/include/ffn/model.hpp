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
#include <string>
#include <vector>

#include "ffn/geometry.hpp"
#include "ffn/tensor.hpp"

namespace ffn {

/// Architecture hyperparameters of the flood-filling network.
struct FfnConfig {
  int num_modules = 12;
  int features = 32;
  int fov_size = 33;  // odd, voxels per axis
  int delta = 8;      // FOV movement step
  int kernel_extent = 3;

  /// Training subvolume extent: one movement step of slack on every side.
  int subvol_size() const { return fov_size + 2 * delta; }
  int fov_radius() const { return fov_size / 2; }
  Coord fov_shape() const { return {fov_size, fov_size, fov_size}; }

  /// Throws ValueError on an inconsistent configuration.
  void validate() const;

  friend bool operator==(const FfnConfig&, const FfnConfig&) = default;
};

/// Network weights. `layers` holds, in canonical order: the input stage
/// (2 -> features), two convolutions per residual module, and the output
/// stage (features -> 1). Gradients reuse the same type.
template <typename Scalar>
struct FfnParams {
  FfnConfig config;
  std::vector<ConvKernel<Scalar>> layers;

  FfnParams() = default;
  /// Zero-initialised parameters shaped for `config`.
  explicit FfnParams(const FfnConfig& config);

  std::size_t layer_count() const { return layers.size(); }
  ConvKernel<Scalar>& input_stage() { return layers.front(); }
  const ConvKernel<Scalar>& input_stage() const { return layers.front(); }
  ConvKernel<Scalar>& output_stage() { return layers.back(); }
  const ConvKernel<Scalar>& output_stage() const { return layers.back(); }
  ConvKernel<Scalar>& module_conv(int module, int which) { return layers[1 + 2 * module + which]; }
  const ConvKernel<Scalar>& module_conv(int module, int which) const { return layers[1 + 2 * module + which]; }

  // Named-tensor view: tensor 2i is layer i's weights, 2i+1 its bias.
  std::size_t tensor_count() const { return 2 * layers.size(); }
  std::string tensor_name(std::size_t i) const;
  Shape tensor_shape(std::size_t i) const;
  Eigen::Map<Vector<Scalar>> tensor(std::size_t i);
  Eigen::Map<const Vector<Scalar>> tensor(std::size_t i) const;

  Index parameter_count() const;
  bool allFinite() const;
  FfnParams& setZero();

  template <typename To>
  FfnParams<To> cast() const {
    FfnParams<To> out(config);
    for (std::size_t i = 0; i < tensor_count(); ++i) out.tensor(i) = tensor(i).template cast<To>();
    return out;
  }
};

template <typename Scalar>
bool operator==(const FfnParams<Scalar>& a, const FfnParams<Scalar>& b);

/// He-style initialisation: N(0, 2 / fan_in) weights, zero biases.
template <typename Scalar>
FfnParams<Scalar> init_params(const FfnConfig& config, std::uint64_t seed);

/// Canonical flattening order: layers in order, weights then bias for each.
template <typename Scalar>
Vector<Scalar> flatten(const FfnParams<Scalar>& params);

template <typename Scalar>
void unflatten(const Eigen::Ref<const Vector<Scalar>>& flat, FfnParams<Scalar>& params);

/// 64-bit FNV-1a hash over the raw parameter bytes in canonical order.
template <typename Scalar>
std::uint64_t checksum(const FfnParams<Scalar>& params);

/// Activations retained by forward() for the backward pass.
template <typename Scalar>
struct ForwardCache {
  Tensor<Scalar> input;                 // (2, f, f, f): image and POM
  Tensor<Scalar> stem;                  // input stage pre-activation
  std::vector<Tensor<Scalar>> trunk;    // module inputs (post-ReLU)
  std::vector<Tensor<Scalar>> inner;    // first conv of each module, pre-ReLU
  std::vector<Tensor<Scalar>> summed;   // module input + second conv, pre-ReLU
  Tensor<Scalar> head;                  // input to the output stage

  bool empty() const { return input.empty(); }
};

/// Runs the network on one field of view. `image` and `pom` are
/// (1, fov, fov, fov); the image is expected in [-0.5, 0.5] and the POM as
/// logits. Returns (1, fov, fov, fov) logits.
template <typename Scalar>
Tensor<Scalar> forward(const FfnParams<Scalar>& params, const Tensor<Scalar>& image, const Tensor<Scalar>& pom,
                       ForwardCache<Scalar>* cache = nullptr);

template <typename Scalar>
FfnParams<Scalar> backward(const FfnParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                           const Tensor<Scalar>& grad_logits);

/// Overwrites the POM window at `origin` (corner, not centre) with `logits`.
template <typename Scalar>
void apply_pom_update(Tensor<Scalar>& pom, const Tensor<Scalar>& logits, Coord origin);

}  // namespace ffn
