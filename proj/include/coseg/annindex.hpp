#pragma once

// Forest of random-projection trees for approximate nearest-neighbour search.
//
// Every internal node splits its items with the hyperplane equidistant from two
// sampled items p and q: normal = p - q, offset = normal . (p + q) / 2. Items
// with normal . x - offset > 0 go right, the rest go left. Queries walk all
// trees best-first from one shared priority queue keyed by the smallest plane
// margin seen on the path, collect candidates until the search budget is met,
// and re-rank the candidate union by exact distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "coseg/binio.hpp"
#include "coseg/error.hpp"
#include "coseg/rng.hpp"

namespace coseg {

enum class Metric : std::uint8_t { kEuclidean = 0, kCosine = 1 };

struct IndexConfig {
  std::size_t n_trees = 350;
  std::size_t search_k = 50;
  std::size_t leaf_capacity = 16;
  std::uint64_t seed = 0;
  Metric metric = Metric::kEuclidean;

  void validate() const {
    if (n_trees < 1) throw ContractError("n_trees must be >= 1");
    if (search_k < 1) throw ContractError("search_k must be >= 1");
    if (leaf_capacity < 2) throw ContractError("leaf_capacity must be >= 2");
    if (metric != Metric::kEuclidean && metric != Metric::kCosine) throw ContractError("unknown metric");
  }

  friend bool operator==(const IndexConfig&, const IndexConfig&) = default;
};

struct Neighbor {
  std::size_t id = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Ascending by distance, ties by id; no duplicate ids.
using RetrievalResult = std::vector<Neighbor>;

// Node of one tree. Children are indices into the owning tree's node array.
struct RpNode {
  std::vector<double> normal;  // empty for leaves
  double offset = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::vector<std::uint32_t> items;  // leaves only

  bool is_leaf() const { return normal.empty(); }

  double margin(std::span<const float> x) const { return margin_of(x); }
  double margin(std::span<const double> x) const { return margin_of(x); }

 private:
  template <class T>
  double margin_of(std::span<const T> x) const {
    double s = -offset;
    for (std::size_t i = 0; i < normal.size(); ++i) s += normal[i] * static_cast<double>(x[i]);
    return s;
  }
};

struct RpTree {
  std::vector<RpNode> nodes;  // nodes[0] is the root
};

struct SplitPlane {
  std::vector<double> normal;
  double offset = 0.0;
};

namespace detail {

inline bool same_point(std::span<const float> a, std::span<const float> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

inline SplitPlane plane_through(std::span<const float> p, std::span<const float> q) {
  SplitPlane s;
  s.normal.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i], qi = q[i];
    s.normal[i] = pi - qi;
    s.offset += s.normal[i] * (pi + qi) * 0.5;
  }
  return s;
}

}  // namespace detail

inline constexpr int kSplitDraws = 3;

// Chooses the hyperplane equidistant from two distinct sampled points. Makes
// kSplitDraws random draws, then falls back to a scan for any point differing
// from the first one. Returns nullopt when every point is identical.
inline std::optional<SplitPlane> split_plane(std::span<const std::span<const float>> points, Rng& rng) {
  if (points.size() < 2) return std::nullopt;
  for (int attempt = 0; attempt < kSplitDraws; ++attempt) {
    const std::size_t i = rng.below(points.size());
    std::size_t j = rng.below(points.size() - 1);
    if (j >= i) ++j;
    if (!detail::same_point(points[i], points[j])) return detail::plane_through(points[i], points[j]);
  }
  for (std::size_t j = 1; j < points.size(); ++j)
    if (!detail::same_point(points[0], points[j])) return detail::plane_through(points[0], points[j]);
  return std::nullopt;
}

class AnnIndex {
 public:
  AnnIndex() = default;

  static AnnIndex build(std::span<const std::vector<double>> items, const IndexConfig& cfg,
                        unsigned threads = 0) {
    cfg.validate();
    if (items.empty()) throw ContractError("cannot build an index over zero items");
    if (items.size() > std::numeric_limits<std::uint32_t>::max()) throw ContractError("too many items");
    const std::size_t dim = items.front().size();
    if (dim == 0) throw ContractError("items have dimension 0");
    AnnIndex idx;
    idx.cfg_ = cfg;
    idx.dim_ = dim;
    idx.count_ = items.size();
    idx.data_.reserve(items.size() * dim);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].size() != dim)
        throw ContractError("item " + std::to_string(i) + " has dimension " + std::to_string(items[i].size()) +
                            ", expected " + std::to_string(dim));
      const auto v = idx.prepare<float>(items[i]);
      idx.data_.insert(idx.data_.end(), v.begin(), v.end());
    }
    idx.build_trees(threads);
    return idx;
  }

  const IndexConfig& config() const { return cfg_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return count_; }
  const std::vector<RpTree>& trees() const { return trees_; }

  // Stored item in index space (unit-normalized under the cosine metric).
  std::span<const float> item(std::size_t id) const { return {data_.data() + id * dim_, dim_}; }

  // Distance between a query and a stored item in index space.
  double distance_to(std::span<const double> q, std::size_t id) const {
    check_query(q);
    const auto v = prepare<double>(q);
    return distance(v, item(id));
  }

  RetrievalResult query(std::span<const double> q, std::size_t k) const { return query(q, k, cfg_.search_k); }

  RetrievalResult query(std::span<const double> q, std::size_t k, std::size_t search_k) const {
    check_query(q);
    if (k == 0) throw ContractError("k must be >= 1");
    if (search_k == 0) throw ContractError("search_k must be >= 1");
    const auto v = prepare<double>(q);
    const std::size_t budget = std::max(search_k, k * cfg_.n_trees);

    // (priority, tree, node); larger priority pops first.
    using Entry = std::tuple<double, std::uint32_t, std::uint32_t>;
    std::priority_queue<Entry> queue;
    for (std::uint32_t t = 0; t < trees_.size(); ++t) queue.emplace(std::numeric_limits<double>::infinity(), t, 0);

    std::vector<char> seen(count_, 0);
    std::vector<std::uint32_t> candidates;
    while (candidates.size() < budget && !queue.empty()) {
      const auto [priority, t, n] = queue.top();
      queue.pop();
      const RpNode& node = trees_[t].nodes[n];
      if (node.is_leaf()) {
        for (auto id : node.items)
          if (!seen[id]) {
            seen[id] = 1;
            candidates.push_back(id);
          }
      } else {
        const double m = node.margin(v);
        queue.emplace(std::min(priority, m), t, node.right);
        queue.emplace(std::min(priority, -m), t, node.left);
      }
    }

    RetrievalResult out;
    out.reserve(candidates.size());
    for (auto id : candidates) out.push_back({id, distance(v, item(id))});
    const std::size_t keep = std::min(k, out.size());
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep), out.end(), neighbor_less);
    out.resize(keep);
    return out;
  }

  // Exhaustive scan; the reference answer for query().
  RetrievalResult brute_force(std::span<const double> q, std::size_t k) const {
    check_query(q);
    const auto v = prepare<double>(q);
    RetrievalResult out;
    for (std::size_t id = 0; id < count_; ++id) out.push_back({id, distance(v, item(id))});
    const std::size_t keep = std::min(k, out.size());
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep), out.end(), neighbor_less);
    out.resize(keep);
    return out;
  }

  // -------------------------------------------------------------------------
  // File format: "CSGI" u32 version,
  //   config: u32 n_trees, u32 search_k, u32 leaf_capacity, u64 seed, u8 metric
  //   items:  u32 dim, u64 count, count*dim f32
  //   trees:  pre-order; u8 tag (0 leaf, 1 split)
  //           leaf:  u32 n, n x u32 item id
  //           split: dim x f64 normal, f64 offset, left subtree, right subtree

  static constexpr std::uint32_t kFormatVersion = 1;

  std::vector<std::uint8_t> save() const {
    binio::Writer w;
    w.magic("CSGI");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(cfg_.n_trees));
    w.u32(static_cast<std::uint32_t>(cfg_.search_k));
    w.u32(static_cast<std::uint32_t>(cfg_.leaf_capacity));
    w.u64(cfg_.seed);
    w.u8(static_cast<std::uint8_t>(cfg_.metric));
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u64(count_);
    for (float x : data_) w.f32(x);
    for (const auto& tree : trees_) write_node(w, tree, 0);
    return std::move(w).take();
  }

  static AnnIndex load(std::span<const std::uint8_t> bytes) {
    using K = DecodeError::Kind;
    binio::Reader r(bytes);
    r.expect_magic("CSGI");
    const auto version = r.u32();
    if (version != kFormatVersion) throw DecodeError(K::kUnsupportedVersion, "index version " + std::to_string(version));
    AnnIndex idx;
    idx.cfg_.n_trees = r.u32();
    idx.cfg_.search_k = r.u32();
    idx.cfg_.leaf_capacity = r.u32();
    idx.cfg_.seed = r.u64();
    const auto metric = r.u8();
    if (metric > 1) throw DecodeError(K::kMalformed, "unknown metric tag " + std::to_string(metric));
    idx.cfg_.metric = static_cast<Metric>(metric);
    try {
      idx.cfg_.validate();
    } catch (const ContractError& e) {
      throw DecodeError(K::kMalformed, e.what());
    }
    idx.dim_ = r.u32();
    idx.count_ = r.u64();
    if (idx.dim_ == 0 || idx.count_ == 0) throw DecodeError(K::kMalformed, "empty item block");
    if (idx.count_ > r.remaining() / 4 / idx.dim_) throw DecodeError(K::kTruncated, "item block exceeds file size");
    idx.data_.resize(idx.count_ * idx.dim_);
    for (auto& x : idx.data_) x = r.f32();
    idx.trees_.resize(idx.cfg_.n_trees);
    for (auto& tree : idx.trees_) {
      read_node(r, idx, tree, 0);
      idx.check_coverage(tree);
    }
    if (!r.at_end()) throw DecodeError(K::kMalformed, "trailing bytes after trees");
    return idx;
  }

  void save_file(const std::string& path) const { binio::write_file(path, save()); }
  static AnnIndex load_file(const std::string& path) { return load(binio::read_file(path)); }

 private:
  static bool neighbor_less(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  }

  void check_query(std::span<const double> q) const {
    if (q.size() != dim_)
      throw ContractError("query dimension " + std::to_string(q.size()) + " does not match index dimension " +
                          std::to_string(dim_));
  }

  // Items are stored as f32, queries stay in double. Cosine uses unit vectors.
  template <class T>
  std::vector<T> prepare(std::span<const double> x) const {
    std::vector<T> v(x.begin(), x.end());
    if (cfg_.metric == Metric::kCosine) {
      double norm = 0.0;
      for (double c : x) norm += c * c;
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(x[i] / norm);
    }
    return v;
  }

  static double distance(std::span<const double> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      s += d * d;
    }
    return std::sqrt(s);
  }

  void build_trees(unsigned threads) {
    trees_.assign(cfg_.n_trees, {});
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg_.n_trees));
    auto work = [this, threads](unsigned worker) {
      for (std::size_t t = worker; t < cfg_.n_trees; t += threads) build_tree(t);
    };
    if (threads <= 1) {
      work(0);
      return;
    }
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
  }

  void build_tree(std::size_t t) {
    Rng rng(mix_seed(cfg_.seed, t));
    std::vector<std::uint32_t> all(count_);
    for (std::uint32_t i = 0; i < count_; ++i) all[i] = i;
    RpTree& tree = trees_[t];
    tree.nodes.emplace_back();
    split_node(tree, 0, std::move(all), rng);
  }

  void split_node(RpTree& tree, std::uint32_t node_id, std::vector<std::uint32_t> ids, Rng& rng) {
    if (ids.size() <= cfg_.leaf_capacity) {
      tree.nodes[node_id].items = std::move(ids);
      return;
    }
    std::vector<std::span<const float>> points;
    points.reserve(ids.size());
    for (auto id : ids) points.push_back(item(id));
    std::vector<std::uint32_t> left, right;
    RpNode probe;
    for (int attempt = 0; attempt < kSplitDraws && (left.empty() || right.empty()); ++attempt) {
      auto plane = split_plane(points, rng);
      if (!plane) break;  // indistinguishable duplicates
      left.clear();
      right.clear();
      probe.normal = std::move(plane->normal);
      probe.offset = plane->offset;
      for (auto id : ids) (probe.margin(item(id)) > 0.0 ? right : left).push_back(id);
    }
    if (left.empty() || right.empty()) {
      tree.nodes[node_id].items = std::move(ids);
      return;
    }
    ids.clear();
    ids.shrink_to_fit();

    const auto l = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto r = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    RpNode& node = tree.nodes[node_id];
    node.normal = std::move(probe.normal);
    node.offset = probe.offset;
    node.left = l;
    node.right = r;
    split_node(tree, l, std::move(left), rng);
    split_node(tree, r, std::move(right), rng);
  }

  void write_node(binio::Writer& w, const RpTree& tree, std::uint32_t n) const {
    const RpNode& node = tree.nodes[n];
    if (node.is_leaf()) {
      w.u8(0);
      w.u32(static_cast<std::uint32_t>(node.items.size()));
      for (auto id : node.items) w.u32(id);
      return;
    }
    w.u8(1);
    for (double x : node.normal) w.f64(x);
    w.f64(node.offset);
    write_node(w, tree, node.left);
    write_node(w, tree, node.right);
  }

  // Rebuilds node indices in the same allocation order as split_node.
  static void read_node(binio::Reader& r, const AnnIndex& idx, RpTree& tree, std::uint32_t n) {
    using K = DecodeError::Kind;
    if (n == 0) tree.nodes.emplace_back();
    if (tree.nodes.size() > 2 * idx.count_ + 1) throw DecodeError(K::kMalformed, "tree has more nodes than items allow");
    const auto tag = r.u8();
    if (tag == 0) {
      const auto count = r.u32();
      if (count > r.remaining() / 4) throw DecodeError(K::kTruncated, "leaf exceeds file size");
      std::vector<std::uint32_t> items(count);
      for (auto& id : items) {
        id = r.u32();
        if (id >= idx.count_) throw DecodeError(K::kMalformed, "leaf item id out of range");
      }
      tree.nodes[n].items = std::move(items);
      return;
    }
    if (tag != 1) throw DecodeError(K::kMalformed, "unknown node tag " + std::to_string(tag));
    r.need((idx.dim_ + 1) * sizeof(double));
    std::vector<double> normal(idx.dim_);
    for (auto& x : normal) x = r.f64();
    if (std::all_of(normal.begin(), normal.end(), [](double x) { return x == 0.0; }))
      throw DecodeError(K::kMalformed, "split node with zero normal");
    const double offset = r.f64();
    const auto l = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    const auto rr = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[n].normal = std::move(normal);
    tree.nodes[n].offset = offset;
    tree.nodes[n].left = l;
    tree.nodes[n].right = rr;
    read_node(r, idx, tree, l);
    read_node(r, idx, tree, rr);
  }

  void check_coverage(const RpTree& tree) const {
    std::vector<char> seen(count_, 0);
    for (const auto& node : tree.nodes)
      for (auto id : node.items) {
        if (seen[id]) throw DecodeError(DecodeError::Kind::kMalformed, "item listed in two leaves of one tree");
        seen[id] = 1;
      }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
      throw DecodeError(DecodeError::Kind::kMalformed, "tree does not cover every item");
  }

  IndexConfig cfg_;
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<float> data_;  // row-major count x dim
  std::vector<RpTree> trees_;
};

}  // namespace coseg
