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

#include "ffn/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace ffn {

template <typename Scalar>
void adam_step(FfnParams<Scalar>& params, const FfnParams<Scalar>& grads, AdamState<Scalar>& state, double lr) {
  if (!(lr >= 0) || !std::isfinite(lr)) throw ValueError("adam_step: learning rate must be finite and >= 0");
  if (params.tensor_count() != grads.tensor_count() || params.tensor_count() != state.m.tensor_count()) {
    throw ShapeError("adam_step: parameter, gradient and moment layouts differ");
  }
  for (std::size_t i = 0; i < grads.tensor_count(); ++i) {
    if (grads.tensor(i).size() != params.tensor(i).size()) {
      throw ShapeError("adam_step: gradient " + grads.tensor_name(i) + " has wrong size");
    }
    if (!grads.tensor(i).allFinite()) throw ValueError("adam_step: non-finite gradient in " + grads.tensor_name(i));
  }

  state.t += 1;
  const auto t = static_cast<double>(state.t);
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto eps = static_cast<Scalar>(state.epsilon);
  const auto correction1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, t));
  const auto correction2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, t));
  const auto step = static_cast<Scalar>(lr);

  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    auto p = params.tensor(i).array();
    const auto g = grads.tensor(i).array();
    auto m = state.m.tensor(i).array();
    auto v = state.v.tensor(i).array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    p -= step * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

template void adam_step(FfnParams<float>&, const FfnParams<float>&, AdamState<float>&, double);
template void adam_step(FfnParams<double>&, const FfnParams<double>&, AdamState<double>&, double);

LrMode parse_lr_mode(const std::string& name) {
  if (name == "fixed") return LrMode::kFixed;
  if (name == "linear") return LrMode::kLinear;
  if (name == "sqrt") return LrMode::kSqrt;
  throw ValueError("unknown lr policy '" + name + "' (expected fixed, linear or sqrt)");
}

std::string to_string(LrMode mode) {
  switch (mode) {
    case LrMode::kLinear:
      return "linear";
    case LrMode::kSqrt:
      return "sqrt";
    case LrMode::kFixed:
      break;
  }
  return "fixed";
}

void LrPolicy::validate() const {
  if (!(base_lr > 0) || !std::isfinite(base_lr)) throw ValueError("base_lr must be positive");
  if (batch_scale_k < 1) throw ValueError("batch_scale_k must be >= 1");
  if (warmup_steps < 0) throw ValueError("warmup_steps must be >= 0");
}

double LrPolicy::scaled_lr() const {
  switch (mode) {
    case LrMode::kLinear:
      return base_lr * batch_scale_k;
    case LrMode::kSqrt:
      return base_lr * std::sqrt(static_cast<double>(batch_scale_k));
    case LrMode::kFixed:
      break;
  }
  return base_lr;
}

double effective_lr(const LrPolicy& policy, std::int64_t step) {
  const double target = policy.scaled_lr();
  if (policy.warmup_steps <= 0 || step >= policy.warmup_steps) return target;
  const double progress = static_cast<double>(std::max<std::int64_t>(step, 0)) / policy.warmup_steps;
  return policy.base_lr + (target - policy.base_lr) * progress;
}

}  // namespace ffn
