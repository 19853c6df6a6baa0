#pragma once

// Pixel precision and Jaccard similarity against ground-truth masks, averaged
// per item within a class and then unweighted across classes.

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coseg/error.hpp"
#include "coseg/image.hpp"

namespace coseg {

namespace detail {

struct PixelCounts {
  std::size_t seg = 0;
  std::size_t gt = 0;
  std::size_t both = 0;
};

inline PixelCounts count_pixels(const Mask& seg, const Mask& gt) {
  if (seg.width != gt.width || seg.height != gt.height)
    throw ContractError("mask size " + std::to_string(seg.width) + "x" + std::to_string(seg.height) +
                        " does not match ground truth " + std::to_string(gt.width) + "x" +
                        std::to_string(gt.height));
  PixelCounts c;
  for (std::size_t i = 0; i < seg.bits.size(); ++i) {
    const bool s = seg.bits[i] != 0, g = gt.bits[i] != 0;
    c.seg += s;
    c.gt += g;
    c.both += s && g;
  }
  return c;
}

}  // namespace detail

// |seg & gt| / |seg|; 0 for an empty segmentation.
inline double precision(const Mask& seg, const Mask& gt) {
  const auto c = detail::count_pixels(seg, gt);
  return c.seg == 0 ? 0.0 : static_cast<double>(c.both) / static_cast<double>(c.seg);
}

// |seg & gt| / |seg | gt|; 1 when both are empty.
inline double jaccard(const Mask& seg, const Mask& gt) {
  const auto c = detail::count_pixels(seg, gt);
  const std::size_t uni = c.seg + c.gt - c.both;
  return uni == 0 ? 1.0 : static_cast<double>(c.both) / static_cast<double>(uni);
}

struct ClassScore {
  double precision = 0.0;
  double jaccard = 0.0;
  std::size_t count = 0;
};

struct ItemError {
  std::string item_id;
  std::string reason;
};

struct MetricsReport {
  std::map<std::string, ClassScore> per_class;
  double avg_precision = 0.0;
  double avg_jaccard = 0.0;
  std::size_t scored = 0;
  std::vector<std::string> empty_segmentations;  // precision defined as 0
  std::vector<ItemError> errors;                 // excluded from averages

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["avg_precision"] = avg_precision;
    j["avg_jaccard"] = avg_jaccard;
    j["scored"] = scored;
    j["per_class"] = nlohmann::ordered_json::object();
    for (const auto& [name, s] : per_class)
      j["per_class"][name] = {{"precision", s.precision}, {"jaccard", s.jaccard}, {"count", s.count}};
    j["empty_segmentations"] = empty_segmentations;
    j["errors"] = nlohmann::ordered_json::array();
    for (const auto& e : errors) j["errors"].push_back({{"item", e.item_id}, {"reason", e.reason}});
    return j;
  }
};

// Scores each item id against its ground truth. Items with a missing mask or a
// size mismatch are reported in `errors` and excluded.
inline MetricsReport evaluate(const std::vector<std::string>& item_ids, const std::map<std::string, Mask>& masks,
                              const std::map<std::string, Mask>& gt_masks,
                              const std::map<std::string, std::string>& class_map) {
  MetricsReport report;
  struct Sum {
    double p = 0.0, j = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Sum> sums;
  for (const auto& id : item_ids) {
    const auto cls = class_map.find(id);
    const auto seg = masks.find(id);
    const auto gt = gt_masks.find(id);
    if (cls == class_map.end()) {
      report.errors.push_back({id, "no class"});
      continue;
    }
    if (seg == masks.end()) {
      report.errors.push_back({id, "missing segmentation mask"});
      continue;
    }
    if (gt == gt_masks.end()) {
      report.errors.push_back({id, "missing ground-truth mask"});
      continue;
    }
    if (seg->second.width != gt->second.width || seg->second.height != gt->second.height) {
      report.errors.push_back({id, "mask size mismatch"});
      continue;
    }
    if (seg->second.count() == 0) report.empty_segmentations.push_back(id);
    auto& s = sums[cls->second];
    s.p += precision(seg->second, gt->second);
    s.j += jaccard(seg->second, gt->second);
    ++s.n;
    ++report.scored;
  }
  for (const auto& [name, s] : sums) {
    const double n = static_cast<double>(s.n);
    report.per_class[name] = {s.p / n, s.j / n, s.n};
    report.avg_precision += s.p / n;
    report.avg_jaccard += s.j / n;
  }
  if (!sums.empty()) {
    report.avg_precision /= static_cast<double>(sums.size());
    report.avg_jaccard /= static_cast<double>(sums.size());
  }
  return report;
}

}  // namespace coseg
