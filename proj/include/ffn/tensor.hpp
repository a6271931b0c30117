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

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "ffn/error.hpp"

namespace ffn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Shape& shape);

/// Dense n-dimensional array with the last axis fastest. Feature maps use
/// (channel, z, y, x).
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    Index n = 1;
    for (Index extent : shape_) {
      if (extent < 1) throw ShapeError("tensor extent must be >= 1, got " + shape_string(shape_));
      n *= extent;
    }
    data_ = Vector<Scalar>::Constant(shape_.empty() ? 0 : n, fill);
  }
  Tensor(std::initializer_list<Index> shape, Scalar fill = Scalar(0)) : Tensor(Shape(shape), fill) {}

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.size() == 0; }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  Vector<Scalar>& values() noexcept { return data_; }
  const Vector<Scalar>& values() const noexcept { return data_; }
  std::span<Scalar> span() noexcept { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> span() const noexcept {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // 4-D accessors for (c, z, y, x) feature maps.
  Index offset(Index c, Index z, Index y, Index x) const {
    return ((c * shape_[1] + z) * shape_[2] + y) * shape_[3] + x;
  }
  Scalar& operator()(Index c, Index z, Index y, Index x) { return data_[offset(c, z, y, x)]; }
  Scalar operator()(Index c, Index z, Index y, Index x) const { return data_[offset(c, z, y, x)]; }

  /// Leading axis as rows, everything else flattened into columns.
  MatrixMap matrix() { return MatrixMap(data_.data(), shape_.at(0), data_.size() / shape_.at(0)); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data_.data(), shape_.at(0), data_.size() / shape_.at(0));
  }

  bool allFinite() const { return data_.allFinite(); }

  template <typename To>
  Tensor<To> cast() const {
    Tensor<To> out(shape_);
    out.values() = data_.template cast<To>();
    return out;
  }

  Tensor& setZero() {
    data_.setZero();
    return *this;
  }

 private:
  Shape shape_;
  Vector<Scalar> data_;
};

template <typename Scalar>
bool same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return a.shape() == b.shape();
}

/// Cubic convolution filter bank: weights (out, in, k, k, k) plus one bias per
/// output feature.
template <typename Scalar>
struct ConvKernel {
  Tensor<Scalar> weights;
  Vector<Scalar> bias;

  ConvKernel() = default;
  ConvKernel(Index out_features, Index in_features, Index extent = 3)
      : weights({out_features, in_features, extent, extent, extent}),
        bias(Vector<Scalar>::Zero(out_features)) {}

  Index out_features() const { return weights.dim(0); }
  Index in_features() const { return weights.dim(1); }
  Index extent() const { return weights.dim(2); }
  Index parameter_count() const { return weights.size() + bias.size(); }

  /// (out, in * k^3) row-major view used by the im2col products.
  typename Tensor<Scalar>::MatrixMap matrix() { return weights.matrix(); }
  typename Tensor<Scalar>::ConstMatrixMap matrix() const { return weights.matrix(); }

  ConvKernel& setZero() {
    weights.setZero();
    bias.setZero();
    return *this;
  }
};

template <typename Scalar>
struct ConvGradients {
  Tensor<Scalar> input;  // empty when not requested
  ConvKernel<Scalar> kernel;
};

/// Stride-1 convolution with zero "same" padding; output spatial shape equals
/// the input's. `input` is (in, z, y, x).
template <typename Scalar>
Tensor<Scalar> conv3d_forward(const Tensor<Scalar>& input, const ConvKernel<Scalar>& kernel);

/// Exact gradients of conv3d_forward. Skips the input gradient when
/// `want_input_grad` is false (first layer of a network).
template <typename Scalar>
ConvGradients<Scalar> conv3d_backward(const Tensor<Scalar>& input, const ConvKernel<Scalar>& kernel,
                                      const Tensor<Scalar>& grad_out, bool want_input_grad = true);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);

/// Passes grad_out where x > 0; the subgradient at 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out);

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Tensor<Scalar> grad;
};

/// Mean per-voxel logistic cross-entropy and its gradient with respect to the
/// logits. Labels may be soft but must lie in [0, 1].
template <typename Scalar>
LossResult<Scalar> sigmoid_ce_loss(const Tensor<Scalar>& logits, const Tensor<Scalar>& labels);

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
inline Scalar logit(Scalar p) {
  return std::log(p / (Scalar(1) - p));
}

/// Central-difference gradient check. Returns the largest relative error
/// |a - n| / max(|a|, |n|, 1e-8) over `coords` (all coordinates when empty).
double finite_difference_check(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& point, const Eigen::VectorXd& analytic,
                               double epsilon, std::span<const Index> coords = {});

}  // namespace ffn
