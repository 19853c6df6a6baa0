#pragma once

// Descriptor/embedding container and its binary file format:
//   "CSGD" u32 version=1, u32 dim, u64 count,
//   count x { u16 id length, id bytes (UTF-8), dim x f32 }

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coseg/binio.hpp"
#include "coseg/error.hpp"

namespace coseg {

using Vector = std::vector<double>;

struct DescriptorSet {
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<Vector> values;

  std::size_t size() const { return values.size(); }

  void add(std::string id, Vector v) {
    if (values.empty() && dim == 0) dim = v.size();
    if (v.size() != dim)
      throw ContractError("descriptor '" + id + "' has dimension " + std::to_string(v.size()) + ", expected " +
                          std::to_string(dim));
    for (double x : v)
      if (!std::isfinite(x)) throw ContractError("descriptor '" + id + "' has a non-finite entry");
    ids.push_back(std::move(id));
    values.push_back(std::move(v));
  }
};

inline constexpr std::uint32_t kDescriptorFormatVersion = 1;

inline std::vector<std::uint8_t> encode_descriptors(const DescriptorSet& set) {
  binio::Writer w;
  w.magic("CSGD");
  w.u32(kDescriptorFormatVersion);
  w.u32(static_cast<std::uint32_t>(set.dim));
  w.u64(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.str16(set.ids[i]);
    for (double x : set.values[i]) w.f32(static_cast<float>(x));
  }
  return std::move(w).take();
}

inline DescriptorSet decode_descriptors(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  r.expect_magic("CSGD");
  const auto version = r.u32();
  if (version != kDescriptorFormatVersion)
    throw DecodeError(DecodeError::Kind::kUnsupportedVersion, "descriptor file version " + std::to_string(version));
  DescriptorSet set;
  set.dim = r.u32();
  const std::uint64_t count = r.u64();
  // Each record needs at least 2 + 4*dim bytes; reject absurd counts early.
  if (count > r.remaining() / (2 + 4 * set.dim))
    throw DecodeError(DecodeError::Kind::kTruncated, "record count exceeds file size");
  set.ids.reserve(count);
  set.values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    set.ids.push_back(r.str16());
    Vector v(set.dim);
    for (auto& x : v) {
      x = r.f32();
      if (!std::isfinite(x)) throw DecodeError(DecodeError::Kind::kMalformed, "non-finite value in " + set.ids.back());
    }
    set.values.push_back(std::move(v));
  }
  if (!r.at_end()) throw DecodeError(DecodeError::Kind::kMalformed, "trailing bytes after descriptor records");
  return set;
}

inline void save_descriptors(const std::string& path, const DescriptorSet& set) {
  binio::write_file(path, encode_descriptors(set));
}

inline DescriptorSet load_descriptors(const std::string& path) { return decode_descriptors(binio::read_file(path)); }

}  // namespace coseg
