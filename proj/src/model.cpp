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

#include "ffn/model.hpp"

#include <cstring>
#include <random>

namespace ffn {

void FfnConfig::validate() const {
  if (num_modules < 1) throw ValueError("num_modules must be >= 1");
  if (features < 1) throw ValueError("features must be >= 1");
  if (fov_size < 1 || fov_size % 2 == 0) throw ValueError("fov_size must be a positive odd number");
  if (delta < 1) throw ValueError("delta must be >= 1");
  if (delta > fov_size / 2) throw ValueError("delta must not exceed the FOV radius");
  if (kernel_extent < 1 || kernel_extent % 2 == 0) throw ValueError("kernel_extent must be odd");
}

template <typename Scalar>
FfnParams<Scalar>::FfnParams(const FfnConfig& cfg) : config(cfg) {
  config.validate();
  const Index f = config.features;
  const Index k = config.kernel_extent;
  layers.reserve(static_cast<std::size_t>(2 * config.num_modules + 2));
  layers.emplace_back(f, 2, k);
  for (int m = 0; m < 2 * config.num_modules; ++m) layers.emplace_back(f, f, k);
  layers.emplace_back(1, f, k);
}

template <typename Scalar>
std::string FfnParams<Scalar>::tensor_name(std::size_t i) const {
  const std::size_t layer = i / 2;
  std::string base;
  if (layer == 0) {
    base = "input";
  } else if (layer + 1 == layers.size()) {
    base = "output";
  } else {
    const std::size_t m = (layer - 1) / 2;
    base = "module" + std::to_string(m) + (((layer - 1) % 2 == 0) ? ".conv_a" : ".conv_b");
  }
  return base + (i % 2 == 0 ? ".weight" : ".bias");
}

template <typename Scalar>
Shape FfnParams<Scalar>::tensor_shape(std::size_t i) const {
  const auto& layer = layers.at(i / 2);
  return i % 2 == 0 ? layer.weights.shape() : Shape{layer.bias.size()};
}

template <typename Scalar>
Eigen::Map<Vector<Scalar>> FfnParams<Scalar>::tensor(std::size_t i) {
  auto& layer = layers.at(i / 2);
  if (i % 2 == 0) return {layer.weights.data(), layer.weights.size()};
  return {layer.bias.data(), layer.bias.size()};
}

template <typename Scalar>
Eigen::Map<const Vector<Scalar>> FfnParams<Scalar>::tensor(std::size_t i) const {
  const auto& layer = layers.at(i / 2);
  if (i % 2 == 0) return {layer.weights.data(), layer.weights.size()};
  return {layer.bias.data(), layer.bias.size()};
}

template <typename Scalar>
Index FfnParams<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& layer : layers) n += layer.parameter_count();
  return n;
}

template <typename Scalar>
bool FfnParams<Scalar>::allFinite() const {
  for (const auto& layer : layers)
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

template <typename Scalar>
FfnParams<Scalar>& FfnParams<Scalar>::setZero() {
  for (auto& layer : layers) layer.setZero();
  return *this;
}

template <typename Scalar>
bool operator==(const FfnParams<Scalar>& a, const FfnParams<Scalar>& b) {
  if (!(a.config == b.config) || a.tensor_count() != b.tensor_count()) return false;
  for (std::size_t i = 0; i < a.tensor_count(); ++i) {
    const auto ta = a.tensor(i);
    const auto tb = b.tensor(i);
    if (ta.size() != tb.size()) return false;
    if (std::memcmp(ta.data(), tb.data(), sizeof(Scalar) * static_cast<std::size_t>(ta.size())) != 0) return false;
  }
  return true;
}

template <typename Scalar>
FfnParams<Scalar> init_params(const FfnConfig& config, std::uint64_t seed) {
  FfnParams<Scalar> params(config);
  std::mt19937_64 rng(seed);
  for (auto& layer : params.layers) {
    const Index fan_in = layer.in_features() * layer.extent() * layer.extent() * layer.extent();
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (Index i = 0; i < layer.weights.size(); ++i) layer.weights[i] = static_cast<Scalar>(dist(rng));
    layer.bias.setZero();
  }
  return params;
}

template <typename Scalar>
Vector<Scalar> flatten(const FfnParams<Scalar>& params) {
  Vector<Scalar> flat(params.parameter_count());
  Index at = 0;
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    const auto t = params.tensor(i);
    flat.segment(at, t.size()) = t;
    at += t.size();
  }
  return flat;
}

template <typename Scalar>
void unflatten(const Eigen::Ref<const Vector<Scalar>>& flat, FfnParams<Scalar>& params) {
  if (flat.size() != params.parameter_count()) {
    throw ShapeError("unflatten: " + std::to_string(flat.size()) + " values for " +
                     std::to_string(params.parameter_count()) + " parameters");
  }
  Index at = 0;
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    auto t = params.tensor(i);
    t = flat.segment(at, t.size());
    at += t.size();
  }
}

template <typename Scalar>
std::uint64_t checksum(const FfnParams<Scalar>& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    const auto t = params.tensor(i);
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t b = 0; b < sizeof(Scalar) * static_cast<std::size_t>(t.size()); ++b) {
      h ^= bytes[b];
      h *= 1099511628211ull;
    }
  }
  return h;
}

template <typename Scalar>
Tensor<Scalar> forward(const FfnParams<Scalar>& params, const Tensor<Scalar>& image, const Tensor<Scalar>& pom,
                       ForwardCache<Scalar>* cache) {
  const Index f = params.config.fov_size;
  const Shape expected{1, f, f, f};
  if (image.shape() != expected) throw ShapeError("forward: image " + shape_string(image.shape()) + " != " + shape_string(expected));
  if (pom.shape() != expected) throw ShapeError("forward: pom " + shape_string(pom.shape()) + " != " + shape_string(expected));

  Tensor<Scalar> input({2, f, f, f});
  const Index n = image.size();
  input.values().head(n) = image.values();
  input.values().tail(n) = pom.values();

  Tensor<Scalar> stem = conv3d_forward(input, params.input_stage());
  Tensor<Scalar> h = relu(stem);
  if (cache) {
    cache->trunk.clear();
    cache->inner.clear();
    cache->summed.clear();
  }
  for (int m = 0; m < params.config.num_modules; ++m) {
    Tensor<Scalar> a = conv3d_forward(h, params.module_conv(m, 0));
    Tensor<Scalar> s = conv3d_forward(relu(a), params.module_conv(m, 1));
    s.values() += h.values();
    Tensor<Scalar> next = relu(s);
    if (cache) {
      cache->trunk.push_back(std::move(h));
      cache->inner.push_back(std::move(a));
      cache->summed.push_back(std::move(s));
    }
    h = std::move(next);
  }
  Tensor<Scalar> logits = conv3d_forward(h, params.output_stage());
  if (cache) {
    cache->input = std::move(input);
    cache->stem = std::move(stem);
    cache->head = std::move(h);
  }
  return logits;
}

template <typename Scalar>
FfnParams<Scalar> backward(const FfnParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                           const Tensor<Scalar>& grad_logits) {
  if (cache.empty()) throw Error("backward: missing forward cache");
  FfnParams<Scalar> grads(params.config);

  auto out = conv3d_backward(cache.head, params.output_stage(), grad_logits);
  grads.output_stage() = std::move(out.kernel);
  Tensor<Scalar> gh = std::move(out.input);

  for (int m = params.config.num_modules - 1; m >= 0; --m) {
    const auto mi = static_cast<std::size_t>(m);
    const Tensor<Scalar> gs = relu_backward(cache.summed[mi], gh);
    auto b = conv3d_backward(relu(cache.inner[mi]), params.module_conv(m, 1), gs);
    grads.module_conv(m, 1) = std::move(b.kernel);
    const Tensor<Scalar> ga = relu_backward(cache.inner[mi], b.input);
    auto a = conv3d_backward(cache.trunk[mi], params.module_conv(m, 0), ga);
    grads.module_conv(m, 0) = std::move(a.kernel);
    gh = gs;
    gh.values() += a.input.values();
  }

  const Tensor<Scalar> gstem = relu_backward(cache.stem, gh);
  grads.input_stage() = conv3d_backward(cache.input, params.input_stage(), gstem, false).kernel;
  return grads;
}

template <typename Scalar>
void apply_pom_update(Tensor<Scalar>& pom, const Tensor<Scalar>& logits, Coord origin) {
  paste(pom, logits, origin);
}

#define FFN_INSTANTIATE(T)                                                                      \
  template struct FfnParams<T>;                                                                \
  template bool operator==(const FfnParams<T>&, const FfnParams<T>&);                          \
  template FfnParams<T> init_params<T>(const FfnConfig&, std::uint64_t);                       \
  template Vector<T> flatten(const FfnParams<T>&);                                             \
  template void unflatten(const Eigen::Ref<const Vector<T>>&, FfnParams<T>&);                  \
  template std::uint64_t checksum(const FfnParams<T>&);                                        \
  template Tensor<T> forward(const FfnParams<T>&, const Tensor<T>&, const Tensor<T>&,          \
                             ForwardCache<T>*);                                                \
  template FfnParams<T> backward(const FfnParams<T>&, const ForwardCache<T>&, const Tensor<T>&); \
  template void apply_pom_update(Tensor<T>&, const Tensor<T>&, Coord);

FFN_INSTANTIATE(float)
FFN_INSTANTIATE(double)
#undef FFN_INSTANTIATE

}  // namespace ffn
