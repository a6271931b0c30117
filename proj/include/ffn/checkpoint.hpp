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
#include <filesystem>
#include <optional>
#include <vector>

#include "ffn/model.hpp"
#include "ffn/optimizer.hpp"

namespace ffn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  FfnParams<float> params;
  std::optional<AdamState<float>> adam;
  std::uint64_t step = 0;
};

/// Writes an "FFNC" checkpoint. Layout (little-endian):
///   "FFNC" | u32 version | u32 num_modules, features, fov_size, delta, kernel_extent
///   | u64 step | u32 tensor_count | tensor records
///   | u8 has_adam [ u64 t | f64 beta1, beta2, epsilon | m records | v records ]
/// A tensor record is u32 name_len | name | u32 rank | rank x u64 dims | f32 data.
void save_checkpoint(const std::filesystem::path& path, const FfnParams<float>& params,
                     const AdamState<float>* adam, std::uint64_t step);

/// Reads a checkpoint. When `expected` is given every tensor must match the
/// shapes implied by that config; a mismatch names the offending tensor.
Checkpoint load_checkpoint(const std::filesystem::path& path, const FfnConfig* expected = nullptr);

/// Checkpoints in `dir` with the .ffnc extension, ordered by step.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir);

}  // namespace ffn
