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

#include "ffn/checkpoint.hpp"

#include <algorithm>
#include <cstring>

#include "binary_io.hpp"

namespace ffn {
namespace {

constexpr char kMagic[4] = {'F', 'F', 'N', 'C'};

void write_tensors(detail::BinaryWriter& w, const FfnParams<float>& p, const std::string& prefix) {
  for (std::size_t i = 0; i < p.tensor_count(); ++i) {
    w.text(prefix + p.tensor_name(i));
    const Shape shape = p.tensor_shape(i);
    w.value<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (Index d : shape) w.value<std::uint64_t>(static_cast<std::uint64_t>(d));
    const auto t = p.tensor(i);
    w.bytes(t.data(), sizeof(float) * static_cast<std::size_t>(t.size()));
  }
}

void read_tensors(detail::BinaryReader& r, FfnParams<float>& p, const std::string& prefix) {
  for (std::size_t i = 0; i < p.tensor_count(); ++i) {
    const std::string expected_name = prefix + p.tensor_name(i);
    const std::string name = r.text();
    if (name != expected_name) {
      throw FormatError(FormatError::Kind::kShapeMismatch,
                        "checkpoint tensor '" + name + "' where '" + expected_name + "' was expected");
    }
    const auto rank = r.value<std::uint32_t>();
    if (rank > 8) throw FormatError(FormatError::Kind::kShapeMismatch, "tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<Index>(r.value<std::uint64_t>());
    if (shape != p.tensor_shape(i)) {
      throw FormatError(FormatError::Kind::kShapeMismatch, "shape mismatch for tensor '" + name + "': file has " +
                                                               shape_string(shape) + ", config expects " +
                                                               shape_string(p.tensor_shape(i)));
    }
    auto t = p.tensor(i);
    r.bytes(t.data(), sizeof(float) * static_cast<std::size_t>(t.size()));
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FfnParams<float>& params,
                     const AdamState<float>* adam, std::uint64_t step) {
  detail::BinaryWriter w(path);
  w.bytes(kMagic, 4);
  w.value<std::uint32_t>(kCheckpointVersion);
  const FfnConfig& c = params.config;
  for (int v : {c.num_modules, c.features, c.fov_size, c.delta, c.kernel_extent}) {
    w.value<std::uint32_t>(static_cast<std::uint32_t>(v));
  }
  w.value<std::uint64_t>(step);
  w.value<std::uint32_t>(static_cast<std::uint32_t>(params.tensor_count()));
  write_tensors(w, params, "");
  w.value<std::uint8_t>(adam ? 1 : 0);
  if (adam) {
    w.value<std::uint64_t>(adam->t);
    w.value<double>(adam->beta1);
    w.value<double>(adam->beta2);
    w.value<double>(adam->epsilon);
    write_tensors(w, adam->m, "adam.m.");
    write_tensors(w, adam->v, "adam.v.");
  }
  w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const FfnConfig* expected) {
  detail::BinaryReader r(path, "checkpoint");
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "bad magic: " + path.string() + " is not an FFNC checkpoint");
  }
  const auto version = r.value<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::kVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  FfnConfig stored;
  stored.num_modules = static_cast<int>(r.value<std::uint32_t>());
  stored.features = static_cast<int>(r.value<std::uint32_t>());
  stored.fov_size = static_cast<int>(r.value<std::uint32_t>());
  stored.delta = static_cast<int>(r.value<std::uint32_t>());
  stored.kernel_extent = static_cast<int>(r.value<std::uint32_t>());
  try {
    stored.validate();
  } catch (const ValueError& e) {
    throw FormatError(FormatError::Kind::kShapeMismatch, std::string("invalid config block: ") + e.what());
  }

  Checkpoint ck;
  ck.step = r.value<std::uint64_t>();
  const auto count = r.value<std::uint32_t>();

  // Tensors are validated against the caller's config when one is given, so a
  // mismatch is reported for the first tensor whose shape disagrees.
  const FfnConfig layout = expected ? *expected : stored;
  ck.params = FfnParams<float>(layout);
  if (count != ck.params.tensor_count() && !expected) {
    throw FormatError(FormatError::Kind::kShapeMismatch, "tensor count " + std::to_string(count) +
                                                             " does not match config block");
  }
  read_tensors(r, ck.params, "");
  if (count != ck.params.tensor_count()) {
    throw FormatError(FormatError::Kind::kShapeMismatch, "checkpoint holds " + std::to_string(count) +
                                                             " tensors, config expects " +
                                                             std::to_string(ck.params.tensor_count()));
  }

  const auto has_adam = r.value<std::uint8_t>();
  if (has_adam > 1) throw FormatError(FormatError::Kind::kShapeMismatch, "corrupt optimizer flag");
  if (has_adam) {
    AdamState<float> adam(layout);
    adam.t = r.value<std::uint64_t>();
    adam.beta1 = r.value<double>();
    adam.beta2 = r.value<double>();
    adam.epsilon = r.value<double>();
    read_tensors(r, adam.m, "adam.m.");
    read_tensors(r, adam.v, "adam.v.");
    ck.adam = std::move(adam);
  }
  if (!r.at_end()) throw FormatError(FormatError::Kind::kShapeMismatch, "trailing bytes in " + path.string());
  return ck;
}

std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir) {
  std::vector<std::pair<std::uint64_t, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ffnc") continue;
    detail::BinaryReader r(entry.path(), "checkpoint");
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) continue;
    r.value<std::uint32_t>();
    for (int i = 0; i < 5; ++i) r.value<std::uint32_t>();
    found.emplace_back(r.value<std::uint64_t>(), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> paths;
  for (auto& [step, p] : found) paths.push_back(std::move(p));
  return paths;
}

}  // namespace ffn
