#pragma once

// Minimal raster types and binary Netpbm I/O (P4 bitmaps, P5 graymaps, P6
// pixmaps, maxval <= 255), plus patch-to-descriptor conversion.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "coseg/descriptors.hpp"
#include "coseg/error.hpp"
#include "coseg/geometry.hpp"

namespace coseg {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgb> pixels;  // row-major

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, Rgb fill = {}) : width(w), height(h), pixels(w * h, fill) {}

  Rgb& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  const Rgb& at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Binary mask, 1 = foreground.
struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // row-major, values 0/1

  Mask() = default;
  Mask(std::size_t w, std::size_t h, bool fill = false) : width(w), height(h), bits(w * h, fill ? 1 : 0) {}

  bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
  void set(std::size_t x, std::size_t y, bool v) { bits[y * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }

  // Foreground rectangle clipped to the mask extent.
  static Mask from_box(std::size_t w, std::size_t h, const BoundingBox& box) {
    Mask m(w, h);
    const auto x0 = std::clamp<std::int64_t>(box.x, 0, static_cast<std::int64_t>(w));
    const auto y0 = std::clamp<std::int64_t>(box.y, 0, static_cast<std::int64_t>(h));
    const auto x1 = std::clamp<std::int64_t>(box.x + box.w, 0, static_cast<std::int64_t>(w));
    const auto y1 = std::clamp<std::int64_t>(box.y + box.h, 0, static_cast<std::int64_t>(h));
    for (auto y = y0; y < y1; ++y)
      for (auto x = x0; x < x1; ++x) m.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), true);
    return m;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

namespace detail {

class PnmHeaderReader {
 public:
  PnmHeaderReader(std::span<const std::uint8_t> bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  std::string magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P') fail("not a Netpbm file");
    pos_ = 2;
    return std::string{static_cast<char>(bytes_[0]), static_cast<char>(bytes_[1])};
  }

  std::size_t number() {
    skip_space_and_comments();
    std::size_t v = 0;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 24)) fail("header value too large");
      ++pos_;
    }
    if (pos_ == start) fail("expected a number in header");
    return v;
  }

  // Exactly one whitespace byte separates the header from raster data.
  std::span<const std::uint8_t> raster() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing whitespace before raster");
    return bytes_.subspan(pos_ + 1);
  }

  [[noreturn]] void fail(const std::string& what) const { throw DecodeError(DecodeError::Kind::kMalformed, name_ + ": " + what); }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline void require(std::span<const std::uint8_t> raster, std::size_t n, const std::string& name) {
  if (raster.size() < n) throw DecodeError(DecodeError::Kind::kTruncated, name + ": raster shorter than header implies");
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void append_header(std::vector<std::uint8_t>& out, const std::string& header) {
  out.insert(out.end(), header.begin(), header.end());
}

}  // namespace detail

// Decodes P5 (gray, replicated to RGB) or P6.
inline RgbImage decode_pnm(std::span<const std::uint8_t> bytes, const std::string& name = "image") {
  detail::PnmHeaderReader h(bytes, name);
  const auto magic = h.magic();
  if (magic != "P5" && magic != "P6") h.fail("unsupported format " + magic + " (expected P5 or P6)");
  const std::size_t w = h.number();
  const std::size_t hgt = h.number();
  const std::size_t maxval = h.number();
  if (w == 0 || hgt == 0) h.fail("zero image dimension");
  if (maxval == 0 || maxval > 255) h.fail("maxval must be in 1..255");
  const auto raster = h.raster();
  RgbImage img(w, hgt);
  const bool color = magic == "P6";
  detail::require(raster, w * hgt * (color ? 3 : 1), name);
  auto scale = [maxval](std::uint8_t v) {
    return static_cast<std::uint8_t>(maxval == 255 ? v : (std::min<std::size_t>(v, maxval) * 255 + maxval / 2) / maxval);
  };
  for (std::size_t i = 0; i < w * hgt; ++i) {
    if (color) {
      img.pixels[i] = {scale(raster[3 * i]), scale(raster[3 * i + 1]), scale(raster[3 * i + 2])};
    } else {
      const auto g = scale(raster[i]);
      img.pixels[i] = {g, g, g};
    }
  }
  return img;
}

inline RgbImage read_pnm(const std::string& path) { return decode_pnm(detail::read_bytes(path), path); }

inline std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  std::vector<std::uint8_t> out;
  detail::append_header(out, "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n");
  out.reserve(out.size() + img.pixels.size() * 3);
  for (const auto& p : img.pixels) {
    out.push_back(p.r);
    out.push_back(p.g);
    out.push_back(p.b);
  }
  return out;
}

inline void write_ppm(const std::string& path, const RgbImage& img) { detail::write_bytes(path, encode_ppm(img)); }

// P5 with the green channel (inputs written by write_pgm are gray anyway).
inline std::vector<std::uint8_t> encode_pgm(const RgbImage& img) {
  std::vector<std::uint8_t> out;
  detail::append_header(out, "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n");
  for (const auto& p : img.pixels) out.push_back(p.g);
  return out;
}

inline void write_pgm(const std::string& path, const RgbImage& img) { detail::write_bytes(path, encode_pgm(img)); }

// P4: rows packed MSB-first, padded to whole bytes, 1 = black = foreground.
inline Mask decode_pbm(std::span<const std::uint8_t> bytes, const std::string& name = "mask") {
  detail::PnmHeaderReader h(bytes, name);
  if (h.magic() != "P4") h.fail("expected P4 bitmap");
  const std::size_t w = h.number();
  const std::size_t hgt = h.number();
  if (w == 0 || hgt == 0) h.fail("zero mask dimension");
  const auto raster = h.raster();
  const std::size_t stride = (w + 7) / 8;
  detail::require(raster, stride * hgt, name);
  Mask m(w, hgt);
  for (std::size_t y = 0; y < hgt; ++y)
    for (std::size_t x = 0; x < w; ++x) m.set(x, y, (raster[y * stride + x / 8] >> (7 - x % 8)) & 1);
  return m;
}

inline Mask read_pbm(const std::string& path) { return decode_pbm(detail::read_bytes(path), path); }

inline std::vector<std::uint8_t> encode_pbm(const Mask& m) {
  std::vector<std::uint8_t> out;
  detail::append_header(out, "P4\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n");
  const std::size_t stride = (m.width + 7) / 8;
  for (std::size_t y = 0; y < m.height; ++y) {
    std::vector<std::uint8_t> row(stride, 0);
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.at(x, y)) row[x / 8] |= static_cast<std::uint8_t>(0x80 >> (x % 8));
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

inline void write_pbm(const std::string& path, const Mask& m) { detail::write_bytes(path, encode_pbm(m)); }

// Pixel coordinate of output sample i when mapping `out` samples onto `in`
// source pixels starting at `origin` (nearest neighbour, integer arithmetic).
inline std::int64_t nearest_source(std::size_t i, std::size_t out, std::int64_t in, std::int64_t origin) {
  return origin + static_cast<std::int64_t>(i) * in / static_cast<std::int64_t>(out);
}

// Copies a box out of an image; coordinates outside the image clamp to the edge.
inline RgbImage crop(const RgbImage& img, const BoundingBox& box) {
  if (!box.valid()) throw ContractError("crop box must have positive size");
  RgbImage out(static_cast<std::size_t>(box.w), static_cast<std::size_t>(box.h));
  const auto maxx = static_cast<std::int64_t>(img.width) - 1;
  const auto maxy = static_cast<std::int64_t>(img.height) - 1;
  for (std::int64_t y = 0; y < box.h; ++y)
    for (std::int64_t x = 0; x < box.w; ++x)
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) =
          img.at(static_cast<std::size_t>(std::clamp(box.x + x, std::int64_t{0}, maxx)),
                 static_cast<std::size_t>(std::clamp(box.y + y, std::int64_t{0}, maxy)));
  return out;
}

inline constexpr std::size_t kPatchSide = 32;

// side x side grayscale samples of the box (nearest neighbour), scaled to [0,1].
inline Vector patch_descriptor(const RgbImage& img, const BoundingBox& box, std::size_t side = kPatchSide) {
  if (!box.valid()) throw ContractError("patch box must have positive size");
  if (img.width == 0 || img.height == 0) throw ContractError("empty image");
  Vector v;
  v.reserve(side * side);
  const auto maxx = static_cast<std::int64_t>(img.width) - 1;
  const auto maxy = static_cast<std::int64_t>(img.height) - 1;
  for (std::size_t j = 0; j < side; ++j) {
    const auto sy = std::clamp(nearest_source(j, side, box.h, box.y), std::int64_t{0}, maxy);
    for (std::size_t i = 0; i < side; ++i) {
      const auto sx = std::clamp(nearest_source(i, side, box.w, box.x), std::int64_t{0}, maxx);
      const Rgb& p = img.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy));
      const unsigned gray = (299u * p.r + 587u * p.g + 114u * p.b + 500u) / 1000u;
      v.push_back(static_cast<double>(gray) / 255.0);
    }
  }
  return v;
}

}  // namespace coseg
