#pragma once

// Distance-ranked collage: up to ten segmented objects on a 512x512 canvas,
// the closest object in the largest slot, background showing elsewhere.
//
// Slot tiling (x, y, w, h):
//   0: (0,0,256,256)
//   1: (256,0,128,128)    2: (384,0,128,128)
//   3: (256,128,128,128)  4: (384,128,128,128)
//   5..9: bottom strip y=256, h=256, widths 103,103,102,102,102 from x=0

#include <algorithm>
#include <array>
#include <numeric>
#include <vector>

#include "coseg/error.hpp"
#include "coseg/geometry.hpp"
#include "coseg/image.hpp"

namespace coseg {

inline constexpr std::size_t kCollageSide = 512;
inline constexpr std::size_t kCollageSlots = 10;
inline constexpr Rgb kSkyBlue{135, 206, 235};

struct CollageSpec {
  std::size_t width = kCollageSide;
  std::size_t height = kCollageSide;
  std::array<BoundingBox, kCollageSlots> slots = {{{0, 0, 256, 256},
                                                   {256, 0, 128, 128},
                                                   {384, 0, 128, 128},
                                                   {256, 128, 128, 128},
                                                   {384, 128, 128, 128},
                                                   {0, 256, 103, 256},
                                                   {103, 256, 103, 256},
                                                   {206, 256, 102, 256},
                                                   {308, 256, 102, 256},
                                                   {410, 256, 102, 256}}};
  Rgb background = kSkyBlue;

  void validate() const {
    const auto canvas_w = static_cast<std::int64_t>(width), canvas_h = static_cast<std::int64_t>(height);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& s = slots[i];
      if (!s.valid() || s.x < 0 || s.y < 0 || s.x + s.w > canvas_w || s.y + s.h > canvas_h)
        throw ContractError("collage slot " + std::to_string(i) + " lies outside the canvas");
      if (i > 0 && s.area() >= slots[0].area()) throw ContractError("slot 0 must be strictly the largest");
      for (std::size_t j = 0; j < i; ++j)
        if (intersection_area(s, slots[j]) > 0)
          throw ContractError("collage slots " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
    }
  }

  // Index of the slot containing the pixel, or kCollageSlots.
  std::size_t slot_at(std::size_t x, std::size_t y) const {
    const auto px = static_cast<std::int64_t>(x), py = static_cast<std::int64_t>(y);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& s = slots[i];
      if (px >= s.x && px < s.x + s.w && py >= s.y && py < s.y + s.h) return i;
    }
    return kCollageSlots;
  }
};

struct CollageItem {
  RgbImage region;
  Mask mask;
  double distance = 0.0;
};

// slot_of_item[i] is the slot of items[i]. Ascending distance (ties by input
// order) fills slots 0, 1, 2, ...
inline std::vector<std::size_t> layout(const std::vector<CollageItem>& items) {
  if (items.size() > kCollageSlots)
    throw ContractError("collage holds at most 10 items, got " + std::to_string(items.size()));
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return items[a].distance < items[b].distance; });
  std::vector<std::size_t> slot_of_item(items.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) slot_of_item[order[rank]] = rank;
  return slot_of_item;
}

inline RgbImage compose(const std::vector<CollageItem>& items, const std::vector<std::size_t>& slot_of_item,
                        const CollageSpec& spec = {}) {
  spec.validate();
  if (slot_of_item.size() != items.size()) throw ContractError("assignment size does not match item count");
  std::array<bool, kCollageSlots> used{};
  for (std::size_t s : slot_of_item) {
    if (s >= kCollageSlots || used[s]) throw ContractError("invalid slot assignment");
    used[s] = true;
  }
  RgbImage canvas(spec.width, spec.height, spec.background);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    if (item.region.width == 0 || item.region.height == 0) throw ContractError("collage item has an empty region");
    if (item.mask.width != item.region.width || item.mask.height != item.region.height)
      throw ContractError("collage item mask does not match its region");
    const auto& slot = spec.slots[slot_of_item[i]];
    const auto sw = static_cast<std::size_t>(slot.w), sh = static_cast<std::size_t>(slot.h);
    for (std::size_t y = 0; y < sh; ++y) {
      const auto src_y = static_cast<std::size_t>(nearest_source(y, sh, static_cast<std::int64_t>(item.region.height), 0));
      for (std::size_t x = 0; x < sw; ++x) {
        const auto src_x =
            static_cast<std::size_t>(nearest_source(x, sw, static_cast<std::int64_t>(item.region.width), 0));
        if (item.mask.at(src_x, src_y))
          canvas.at(static_cast<std::size_t>(slot.x) + x, static_cast<std::size_t>(slot.y) + y) =
              item.region.at(src_x, src_y);
      }
    }
  }
  return canvas;
}

inline RgbImage make_collage(const std::vector<CollageItem>& items, const CollageSpec& spec = {}) {
  return compose(items, layout(items), spec);
}

}  // namespace coseg
