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

#include "ffn/model.hpp"

namespace ffn {

/// Adam moments mirroring an FfnParams layout.
template <typename Scalar>
struct AdamState {
  FfnParams<Scalar> m;
  FfnParams<Scalar> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(const FfnConfig& config) : m(config), v(config) {}

  friend bool operator==(const AdamState& a, const AdamState& b) {
    return a.t == b.t && a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.epsilon == b.epsilon && a.m == b.m &&
           a.v == b.v;
  }
};

/// One bias-corrected Adam update in place. Rejects non-finite gradients
/// before touching any state. `lr` may be zero (moments still advance).
template <typename Scalar>
void adam_step(FfnParams<Scalar>& params, const FfnParams<Scalar>& grads, AdamState<Scalar>& state, double lr);

enum class LrMode { kFixed, kLinear, kSqrt };

LrMode parse_lr_mode(const std::string& name);
std::string to_string(LrMode mode);

/// Batch-size-aware learning-rate policy with an optional linear warm-up
/// from base_lr to the scaled rate.
struct LrPolicy {
  double base_lr = 1.2e-3;
  LrMode mode = LrMode::kFixed;
  int batch_scale_k = 1;  // effective batch / reference batch
  int warmup_steps = 0;

  void validate() const;
  double scaled_lr() const;
};

double effective_lr(const LrPolicy& policy, std::int64_t step);

}  // namespace ffn
