#pragma once

// Small synthetic cosegmentation dataset: each class is a coloured shape on a
// noisy background. Writes images (P6), ground-truth masks (P4), a manifest and
// a proposal file whose boxes jitter around the object plus a few background
// boxes.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "coseg/dataset.hpp"
#include "coseg/geometry.hpp"
#include "coseg/image.hpp"
#include "coseg/rng.hpp"

namespace coseg {

struct SyntheticOptions {
  std::size_t classes = 4;  // at most 4 shape kinds, colours cycle beyond that
  std::size_t images_per_class = 8;
  std::size_t image_side = 64;
  std::uint64_t seed = 1;
};

struct SyntheticPaths {
  std::filesystem::path manifest;
  std::filesystem::path proposals;
};

inline SyntheticPaths make_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& opt = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  static const Rgb palette[] = {{220, 40, 40}, {40, 200, 60}, {50, 80, 230}, {240, 220, 40}};
  Rng rng(opt.seed);
  const auto side = static_cast<std::int64_t>(opt.image_side);

  Manifest manifest;
  std::vector<Proposal> proposals;
  for (std::size_t c = 0; c < opt.classes; ++c) {
    const std::string cls = "class" + std::to_string(c);
    for (std::size_t n = 0; n < opt.images_per_class; ++n) {
      const std::string id = cls + "_" + std::to_string(n);
      RgbImage img(opt.image_side, opt.image_side);
      for (auto& p : img.pixels) {
        const auto g = static_cast<std::uint8_t>(90 + rng.below(60));
        p = {g, g, g};
      }
      const std::int64_t size = side * 3 / 8 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(side / 4)));
      const std::int64_t x0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(side - size)));
      const std::int64_t y0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(side - size)));
      Mask mask(opt.image_side, opt.image_side);
      const double r = static_cast<double>(size) / 2.0;
      for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x) {
          const double dx = static_cast<double>(x) + 0.5 - r, dy = static_cast<double>(y) + 0.5 - r;
          bool inside = true;
          switch (c % 4) {
            case 0: inside = true; break;                                            // square
            case 1: inside = dx * dx + dy * dy <= r * r; break;                      // disc
            case 2: inside = std::abs(dx) <= (static_cast<double>(y) + 0.5) / 2.0; break;  // triangle
            case 3: inside = std::abs(dx) <= r / 3.0 || std::abs(dy) <= r / 3.0; break;    // cross
          }
          if (!inside) continue;
          img.at(static_cast<std::size_t>(x0 + x), static_cast<std::size_t>(y0 + y)) = palette[c % 4];
          mask.set(static_cast<std::size_t>(x0 + x), static_cast<std::size_t>(y0 + y), true);
        }
      const fs::path image_rel = fs::path("images") / (id + ".ppm");
      const fs::path mask_rel = fs::path("masks") / (id + ".pbm");
      write_ppm((dir / image_rel).string(), img);
      write_pbm((dir / mask_rel).string(), mask);

      const BoundingBox gt{x0, y0, size, size};
      ManifestRecord rec;
      rec.item_id = id;
      rec.image_path = (dir / image_rel).string();
      rec.class_name = cls;
      rec.gt_box = gt;
      rec.gt_mask_path = (dir / mask_rel).string();
      manifest.records.push_back(rec);

      auto jitter = [&](std::int64_t v, std::int64_t amount) {
        return v + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * amount + 1))) - amount;
      };
      for (int j = 0; j < 4; ++j) {
        BoundingBox b{jitter(x0, 3), jitter(y0, 3), jitter(size, 3), jitter(size, 3)};
        b.x = std::clamp<std::int64_t>(b.x, 0, side - 1);
        b.y = std::clamp<std::int64_t>(b.y, 0, side - 1);
        b.w = std::clamp<std::int64_t>(b.w, 1, side - b.x);
        b.h = std::clamp<std::int64_t>(b.h, 1, side - b.y);
        proposals.push_back({id, b, 0.95 - 0.05 * j, "synthetic"});
      }
      for (int j = 0; j < 2; ++j) {
        const std::int64_t s = side / 4 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(side / 4)));
        proposals.push_back({id,
                             {static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(side - s))),
                              static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(side - s))), s, s},
                             0.3 - 0.1 * j,
                             "synthetic"});
      }
    }
  }
  SyntheticPaths paths{dir / "manifest.csv", dir / "proposals.csv"};
  {
    std::ofstream m(paths.manifest, std::ios::trunc);
    write_manifest(m, manifest, dir);
  }
  std::ofstream p(paths.proposals, std::ios::trunc);
  for (const auto& prop : proposals) write_proposal(p, prop);
  return paths;
}

}  // namespace coseg
