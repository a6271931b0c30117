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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <type_traits>

#include "ffn/error.hpp"

namespace ffn::detail {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

/// Little-endian record writer over a binary file.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw FormatError(FormatError::Kind::kIo, "write failed: " + path_.string());
  }
  template <typename T>
  void value(T v) {
    static_assert(std::is_arithmetic_v<T>);
    bytes(&v, sizeof(T));
  }
  void text(const std::string& s) {
    value<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void close() {
    out_.close();
    if (!out_) throw FormatError(FormatError::Kind::kIo, "close failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Reader that reports short reads as truncation.
class BinaryReader {
 public:
  BinaryReader(const std::filesystem::path& path, std::string what) : path_(path), what_(std::move(what)), in_(path, std::ios::binary) {
    if (!in_) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(FormatError::Kind::kTruncated, "truncated " + what_ + ": " + path_.string());
    }
  }
  template <typename T>
  T value() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  std::string text(std::size_t max_len = 4096) {
    const auto n = value<std::uint32_t>();
    if (n > max_len) throw FormatError(FormatError::Kind::kShapeMismatch, "implausible string length in " + path_.string());
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::string what_;
  std::ifstream in_;
};

}  // namespace ffn::detail
