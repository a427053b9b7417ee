// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint layout:
//   bytes 0..7   magic "PANOCKPT"
//   bytes 8..11  format version, uint32 little-endian
//   bytes 12..19 manifest length in bytes, uint64 little-endian
//   manifest     UTF-8 JSON: {"params": [{"name", "shape", "offset", "count"}], ...}
//   payload      float32 little-endian arrays; offsets are bytes into the payload

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "panoavoid/tensor.hpp"

namespace panoavoid {

inline constexpr std::array<char, 8> kCheckpointMagic = {'P', 'A', 'N', 'O',
                                                         'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct CheckpointData {
  nlohmann::json meta = nlohmann::json::object();  // extra manifest fields
  std::vector<NamedArray> arrays;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xffu));
  }
}

template <class U>
U get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<U>(v);
}

}  // namespace detail

inline std::string encode_checkpoint(const CheckpointData& ck) {
  nlohmann::json manifest = ck.meta;
  manifest["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : ck.arrays) {
    if (numel(a.shape) != a.values.size()) {
      throw CheckpointError("checkpoint: array '" + a.name + "' shape/size mismatch");
    }
    manifest["params"].push_back(
        {{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.values.size()}});
    offset += 4 * a.values.size();
  }
  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& a : ck.arrays) {
    for (float f : a.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline CheckpointData decode_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic.data(), 8) != 0) {
    throw CheckpointError("checkpoint: bad magic");
  }
  const auto version = detail::get_le<std::uint32_t>(p + 8);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto mlen = detail::get_le<std::uint64_t>(p + 12);
  if (20 + mlen > bytes.size()) throw CheckpointError("checkpoint: truncated manifest");
  CheckpointData ck;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(20, mlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: manifest is not JSON: ") + e.what());
  }
  const std::size_t payload = 20 + mlen;
  for (const auto& entry : manifest.at("params")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<Shape>();
    const auto off = entry.at("offset").get<std::uint64_t>();
    const auto count = entry.at("count").get<std::uint64_t>();
    if (count != numel(a.shape) || payload + off + 4 * count > bytes.size()) {
      throw CheckpointError("checkpoint: array '" + a.name + "' out of bounds");
    }
    a.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      a.values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + payload + off + 4 * i));
    }
    ck.arrays.push_back(std::move(a));
  }
  manifest.erase("params");
  ck.meta = std::move(manifest);
  return ck;
}

inline void write_checkpoint(const std::string& path, const CheckpointData& ck) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
  const std::string bytes = encode_checkpoint(ck);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

inline CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace panoavoid
