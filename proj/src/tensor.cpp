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

#include "ffn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace ffn {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {

// Upper bound on im2col buffer elements; the spatial axis is processed in z-slabs.
constexpr Index kColumnBudget = Index(1) << 22;

struct ConvGeometry {
  Index channels, depth, height, width, extent, pad;
  Index plane() const { return height * width; }
  Index slab_planes(Index rows) const {
    return std::clamp<Index>(kColumnBudget / std::max<Index>(rows * plane(), 1), 1, depth);
  }
};

ConvGeometry geometry_of(const Shape& input, const Shape& weights, const char* op) {
  if (input.size() != 4) {
    throw ShapeError(std::string(op) + ": input must be (channels,z,y,x), got " + shape_string(input));
  }
  if (weights.size() != 5 || weights[2] != weights[3] || weights[2] != weights[4] || weights[2] % 2 == 0) {
    throw ShapeError(std::string(op) + ": kernel must be (out,in,k,k,k) with odd k, got " +
                     shape_string(weights));
  }
  if (input[0] != weights[1]) {
    throw ShapeError(std::string(op) + ": input channels " + std::to_string(input[0]) +
                     " != kernel in_features " + std::to_string(weights[1]));
  }
  return {input[0], input[1], input[2], input[3], weights[2], weights[2] / 2};
}

// Rows are (channel, kz, ky, kx); columns are voxels of planes [z0, z0 + nz).
template <typename Scalar>
void im2col(const Tensor<Scalar>& input, const ConvGeometry& g, Index z0, Index nz,
            RowMatrix<Scalar>& cols) {
  const Index k = g.extent;
  cols.resize(g.channels * k * k * k, nz * g.plane());
  for (Index c = 0; c < g.channels; ++c) {
    for (Index kz = 0; kz < k; ++kz) {
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          Scalar* row = cols.row(((c * k + kz) * k + ky) * k + kx).data();
          const Index dx = kx - g.pad;
          const Index x_lo = std::max<Index>(0, -dx);
          const Index x_hi = std::min<Index>(g.width, g.width - dx);
          for (Index zz = 0; zz < nz; ++zz) {
            const Index sz = z0 + zz + kz - g.pad;
            for (Index y = 0; y < g.height; ++y) {
              Scalar* dst = row + (zz * g.height + y) * g.width;
              const Index sy = y + ky - g.pad;
              if (sz < 0 || sz >= g.depth || sy < 0 || sy >= g.height || x_lo >= x_hi) {
                std::fill(dst, dst + g.width, Scalar(0));
                continue;
              }
              std::fill(dst, dst + x_lo, Scalar(0));
              const Scalar* src = input.data() + input.offset(c, sz, sy, 0);
              std::memcpy(dst + x_lo, src + x_lo + dx, sizeof(Scalar) * static_cast<std::size_t>(x_hi - x_lo));
              std::fill(dst + x_hi, dst + g.width, Scalar(0));
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds column gradients back into the input layout.
template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, const ConvGeometry& g, Index z0, Index nz,
                Tensor<Scalar>& grad_input) {
  const Index k = g.extent;
  for (Index c = 0; c < g.channels; ++c) {
    for (Index kz = 0; kz < k; ++kz) {
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          const Scalar* row = cols.row(((c * k + kz) * k + ky) * k + kx).data();
          const Index dx = kx - g.pad;
          const Index x_lo = std::max<Index>(0, -dx);
          const Index x_hi = std::min<Index>(g.width, g.width - dx);
          for (Index zz = 0; zz < nz; ++zz) {
            const Index sz = z0 + zz + kz - g.pad;
            if (sz < 0 || sz >= g.depth) continue;
            for (Index y = 0; y < g.height; ++y) {
              const Index sy = y + ky - g.pad;
              if (sy < 0 || sy >= g.height) continue;
              const Scalar* src = row + (zz * g.height + y) * g.width;
              Scalar* dst = grad_input.data() + grad_input.offset(c, sz, sy, 0);
              for (Index x = x_lo; x < x_hi; ++x) dst[x + dx] += src[x];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv3d_forward(const Tensor<Scalar>& input, const ConvKernel<Scalar>& kernel) {
  const ConvGeometry g = geometry_of(input.shape(), kernel.weights.shape(), "conv3d_forward");
  if (kernel.bias.size() != kernel.out_features()) throw ShapeError("conv3d_forward: bias length != out_features");

  Tensor<Scalar> out({kernel.out_features(), g.depth, g.height, g.width});
  auto out_m = out.matrix();
  const auto w = kernel.matrix();
  const Index slab = g.slab_planes(w.cols());
  // Reused across calls: the column buffer is megabytes and would otherwise
  // be mapped and faulted in on every convolution.
  thread_local RowMatrix<Scalar> cols;
  for (Index z0 = 0; z0 < g.depth; z0 += slab) {
    const Index nz = std::min(slab, g.depth - z0);
    im2col(input, g, z0, nz, cols);
    auto block = out_m.middleCols(z0 * g.plane(), nz * g.plane());
    block.noalias() = w * cols;
    block.colwise() += kernel.bias;
  }
  return out;
}

template <typename Scalar>
ConvGradients<Scalar> conv3d_backward(const Tensor<Scalar>& input, const ConvKernel<Scalar>& kernel,
                                      const Tensor<Scalar>& grad_out, bool want_input_grad) {
  const ConvGeometry g = geometry_of(input.shape(), kernel.weights.shape(), "conv3d_backward");
  const Shape expected{kernel.out_features(), g.depth, g.height, g.width};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv3d_backward: grad_out shape " + shape_string(grad_out.shape()) + " != " +
                     shape_string(expected));
  }

  ConvGradients<Scalar> grads;
  grads.kernel = ConvKernel<Scalar>(kernel.out_features(), kernel.in_features(), kernel.extent());
  if (want_input_grad) grads.input = Tensor<Scalar>(input.shape());

  const auto gout = grad_out.matrix();
  const auto w = kernel.matrix();
  auto gw = grads.kernel.matrix();
  grads.kernel.bias = gout.rowwise().sum();

  const Index slab = g.slab_planes(w.cols());
  thread_local RowMatrix<Scalar> cols;
  thread_local RowMatrix<Scalar> gcols;
  for (Index z0 = 0; z0 < g.depth; z0 += slab) {
    const Index nz = std::min(slab, g.depth - z0);
    const auto gblock = gout.middleCols(z0 * g.plane(), nz * g.plane());
    im2col(input, g, z0, nz, cols);
    gw.noalias() += gblock * cols.transpose();
    if (want_input_grad) {
      gcols.noalias() = w.transpose() * gblock;
      col2im_add(gcols, g, z0, nz, grads.input);
    }
  }
  return grads;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.values() = x.values().cwiseMax(Scalar(0));
  return y;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out) {
  if (!same_shape(x, grad_out)) {
    throw ShapeError("relu_backward: " + shape_string(x.shape()) + " vs " + shape_string(grad_out.shape()));
  }
  Tensor<Scalar> g(x.shape());
  g.values() = (x.values().array() > Scalar(0)).select(grad_out.values(), Scalar(0));
  return g;
}

template <typename Scalar>
LossResult<Scalar> sigmoid_ce_loss(const Tensor<Scalar>& logits, const Tensor<Scalar>& labels) {
  if (!same_shape(logits, labels)) {
    throw ShapeError("sigmoid_ce_loss: logits " + shape_string(logits.shape()) + " vs labels " +
                     shape_string(labels.shape()));
  }
  const auto y = labels.values().array();
  if ((y < Scalar(0)).any() || (y > Scalar(1)).any()) throw ValueError("sigmoid_ce_loss: label outside [0,1]");

  const auto x = logits.values().array();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(logits.size());
  LossResult<Scalar> r;
  // max(x,0) - x*y + log(1 + exp(-|x|)), summed in double to keep the mean stable.
  const Eigen::ArrayXd per_voxel =
      (x.max(Scalar(0)) - x * y + (-x.abs()).exp().log1p()).template cast<double>();
  r.loss = static_cast<Scalar>(per_voxel.sum() / static_cast<double>(logits.size()));
  r.grad = Tensor<Scalar>(logits.shape());
  r.grad.values() = (x.unaryExpr([](Scalar v) { return sigmoid(v); }) - y) * inv_n;
  return r;
}

double finite_difference_check(const std::function<double(const Eigen::VectorXd&)>& f,
                               const Eigen::VectorXd& point, const Eigen::VectorXd& analytic,
                               double epsilon, std::span<const Index> coords) {
  if (!(epsilon > 0)) throw ValueError("finite_difference_check: epsilon must be > 0");
  if (analytic.size() != point.size()) throw ShapeError("finite_difference_check: gradient length mismatch");

  std::vector<Index> all;
  if (coords.empty()) {
    all.resize(static_cast<std::size_t>(point.size()));
    for (Index i = 0; i < point.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    coords = all;
  }
  Eigen::VectorXd probe = point;
  double worst = 0.0;
  for (Index i : coords) {
    probe[i] = point[i] + epsilon;
    const double up = f(probe);
    probe[i] = point[i] - epsilon;
    const double down = f(probe);
    probe[i] = point[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw ValueError("finite_difference_check: non-finite function value at coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

#define FFN_INSTANTIATE(T)                                                                         \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const ConvKernel<T>&);                      \
  template ConvGradients<T> conv3d_backward(const Tensor<T>&, const ConvKernel<T>&,               \
                                            const Tensor<T>&, bool);                               \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template LossResult<T> sigmoid_ce_loss(const Tensor<T>&, const Tensor<T>&);

FFN_INSTANTIATE(float)
FFN_INSTANTIATE(double)
#undef FFN_INSTANTIATE

}  // namespace ffn
