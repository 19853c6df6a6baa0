#pragma once

// Box arithmetic and proposal filtering: IoU, greedy NMS, near-duplicate
// rejection and top-k selection. All functions are pure.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "coseg/error.hpp"

namespace coseg {

struct BoundingBox {
  std::int64_t x = 0;  // left
  std::int64_t y = 0;  // top
  std::int64_t w = 1;
  std::int64_t h = 1;

  std::int64_t area() const { return w * h; }
  bool valid() const { return w >= 1 && h >= 1; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Proposal {
  std::string image_id;
  BoundingBox box;
  double score = 0.0;  // objectness in [0,1]
  std::string source;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

inline constexpr double kDefaultNmsIou = 0.7;
inline constexpr double kDefaultDedupIou = 0.95;
inline constexpr std::size_t kDefaultTopK = 10;

inline std::int64_t intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const std::int64_t iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const std::int64_t ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  return (iw > 0 && ih > 0) ? iw * ih : 0;
}

// Pixel-area IoU; area = w*h on integer boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const std::int64_t inter = intersection_area(a, b);
  if (inter == 0) return 0.0;
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

inline void check_proposals(const std::vector<Proposal>& props, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw ContractError("iou threshold must be in (0,1], got " + std::to_string(iou_threshold));
  for (const auto& p : props) {
    if (!p.box.valid()) throw ContractError("proposal with non-positive box size on " + p.image_id);
    if (p.image_id != props.front().image_id)
      throw ContractError("proposals from mixed images: '" + props.front().image_id + "' and '" + p.image_id + "'");
  }
}

// Indices in descending score order, ties by input position.
inline std::vector<std::size_t> score_order(const std::vector<Proposal>& props) {
  std::vector<std::size_t> order(props.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return props[a].score > props[b].score; });
  return order;
}

}  // namespace detail

// Greedy non-maximum suppression. A proposal is dropped when its IoU with an
// already kept, higher-ranked proposal is >= iou_threshold.
inline std::vector<Proposal> nms(const std::vector<Proposal>& props, double iou_threshold) {
  detail::check_proposals(props, iou_threshold);
  std::vector<Proposal> kept;
  for (std::size_t i : detail::score_order(props)) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Proposal& k) {
      return iou(k.box, props[i].box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(props[i]);
  }
  return kept;
}

// Score-agnostic duplicate removal: the later-indexed member of any pair with
// IoU >= iou_threshold is removed; input order is preserved.
inline std::vector<Proposal> dedup_near(const std::vector<Proposal>& props, double iou_threshold) {
  detail::check_proposals(props, iou_threshold);
  std::vector<Proposal> kept;
  for (const auto& p : props) {
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const Proposal& k) {
      return iou(k.box, p.box) >= iou_threshold;
    });
    if (!dup) kept.push_back(p);
  }
  return kept;
}

inline std::vector<Proposal> top_k(const std::vector<Proposal>& props, std::size_t k) {
  if (k == 0) throw ContractError("top_k requires k >= 1");
  const auto order = detail::score_order(props);
  std::vector<Proposal> out;
  out.reserve(std::min(k, props.size()));
  for (std::size_t i = 0; i < order.size() && i < k; ++i) out.push_back(props[order[i]]);
  return out;
}

// ---------------------------------------------------------------------------
// Proposal files: `image_id,x,y,w,h,score,source` per line.

inline Proposal parse_proposal_line(const std::string& line, const std::string& source_name, std::size_t lineno) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) f.push_back(tok);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  if (f.size() != 7) throw ParseError(source_name, lineno, "expected 7 fields, got " + std::to_string(f.size()));
  Proposal p;
  p.image_id = f[0];
  if (p.image_id.empty()) throw ParseError(source_name, lineno, "empty image_id");
  try {
    std::size_t used = 0;
    auto to_i = [&](const std::string& s) {
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return static_cast<std::int64_t>(v);
    };
    p.box = {to_i(f[1]), to_i(f[2]), to_i(f[3]), to_i(f[4])};
    p.score = std::stod(f[5], &used);
    if (used != f[5].size()) throw std::invalid_argument(f[5]);
  } catch (const std::logic_error&) {
    throw ParseError(source_name, lineno, "non-numeric field");
  }
  if (!p.box.valid()) throw ParseError(source_name, lineno, "box width and height must be >= 1");
  if (!(p.score >= 0.0 && p.score <= 1.0)) throw ParseError(source_name, lineno, "score outside [0,1]");
  p.source = f[6];
  return p;
}

inline std::vector<Proposal> read_proposals(std::istream& in, const std::string& source_name) {
  std::vector<Proposal> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_proposal_line(line, source_name, lineno));
  }
  return out;
}

inline std::vector<Proposal> read_proposals(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open proposals file " + path);
  return read_proposals(in, path);
}

inline void write_proposal(std::ostream& out, const Proposal& p) {
  std::ostringstream score;
  score.precision(17);
  score << p.score;
  out << p.image_id << ',' << p.box.x << ',' << p.box.y << ',' << p.box.w << ',' << p.box.h << ','
      << score.str() << ',' << p.source << '\n';
}

}  // namespace coseg
