#pragma once

// Image manifests, stratified train/test splitting and proposal ingestion.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coseg/descriptors.hpp"
#include "coseg/error.hpp"
#include "coseg/geometry.hpp"
#include "coseg/image.hpp"
#include "coseg/rng.hpp"

namespace coseg {

enum class Split { kUnassigned, kTrain, kTest };

struct ManifestRecord {
  std::string item_id;
  std::string image_path;  // resolved against the manifest directory
  std::string class_name;
  Split split = Split::kUnassigned;
  std::optional<BoundingBox> gt_box;
  std::optional<std::string> gt_mask_path;
};

struct Manifest {
  std::vector<ManifestRecord> records;

  const ManifestRecord* find(const std::string& item_id) const {
    for (const auto& r : records)
      if (r.item_id == item_id) return &r;
    return nullptr;
  }
};

// CSV columns: item_id,image_path,class,split,gt_x,gt_y,gt_w,gt_h,gt_mask_path.
// split may be train, test or empty; the ground-truth columns may be empty.
// A first line starting with "item_id," is a header.
inline Manifest read_manifest(std::istream& in, const std::string& source, const std::filesystem::path& base_dir) {
  Manifest m;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("item_id,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (line.back() == ',') f.emplace_back();
    while (f.size() < 9) f.emplace_back();
    if (f.size() != 9) throw ParseError(source, lineno, "expected at most 9 fields, got " + std::to_string(f.size()));
    ManifestRecord r;
    r.item_id = f[0];
    if (r.item_id.empty()) throw ParseError(source, lineno, "empty item_id");
    if (!seen.insert(r.item_id).second) throw ParseError(source, lineno, "duplicate item_id '" + r.item_id + "'");
    if (f[1].empty()) throw ParseError(source, lineno, "empty image_path");
    r.image_path = (base_dir / f[1]).lexically_normal().string();
    r.class_name = f[2];
    if (r.class_name.empty()) throw ParseError(source, lineno, "empty class");
    if (f[3] == "train") {
      r.split = Split::kTrain;
    } else if (f[3] == "test") {
      r.split = Split::kTest;
    } else if (!f[3].empty()) {
      throw ParseError(source, lineno, "split must be train, test or empty, got '" + f[3] + "'");
    }
    const bool any_box = !f[4].empty() || !f[5].empty() || !f[6].empty() || !f[7].empty();
    if (any_box) {
      try {
        BoundingBox b{std::stoll(f[4]), std::stoll(f[5]), std::stoll(f[6]), std::stoll(f[7])};
        if (!b.valid()) throw ParseError(source, lineno, "ground-truth box needs positive size");
        r.gt_box = b;
      } catch (const std::logic_error&) {
        throw ParseError(source, lineno, "ground-truth box needs four integers");
      }
    }
    if (!f[8].empty()) r.gt_mask_path = (base_dir / f[8]).lexically_normal().string();
    m.records.push_back(std::move(r));
  }
  return m;
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  return read_manifest(in, path, std::filesystem::path(path).parent_path());
}

inline void write_manifest(std::ostream& out, const Manifest& m, const std::filesystem::path& base_dir) {
  out << "item_id,image_path,class,split,gt_x,gt_y,gt_w,gt_h,gt_mask_path\n";
  for (const auto& r : m.records) {
    out << r.item_id << ',' << std::filesystem::path(r.image_path).lexically_relative(base_dir).string() << ','
        << r.class_name << ',' << (r.split == Split::kTrain ? "train" : r.split == Split::kTest ? "test" : "") << ',';
    if (r.gt_box) out << r.gt_box->x << ',' << r.gt_box->y << ',' << r.gt_box->w << ',' << r.gt_box->h << ',';
    else out << ",,,,";
    if (r.gt_mask_path) out << std::filesystem::path(*r.gt_mask_path).lexically_relative(base_dir).string();
    out << '\n';
  }
}

struct SplitResult {
  std::vector<std::size_t> train;  // record indices, manifest order
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;
};

// Per-class stratified split of the given records: round(fraction * n) items of
// each class go to train (at least one, and at least one left for test when
// n >= 2). Classes are visited in name order with one shared shuffle stream.
inline SplitResult split_dataset(const Manifest& manifest, const std::vector<std::size_t>& records, double fraction,
                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ContractError("train fraction must be in (0,1), got " + std::to_string(fraction));
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (auto i : records) by_class[manifest.records.at(i).class_name].push_back(i);
  Rng rng(seed);
  SplitResult out;
  for (auto& [name, items] : by_class) {
    if (items.size() == 1) {
      out.warnings.push_back("class '" + name + "' has a single item; assigned to train");
      out.train.push_back(items[0]);
      continue;
    }
    for (std::size_t i = items.size() - 1; i > 0; --i) std::swap(items[i], items[rng.below(i + 1)]);
    auto n_train = static_cast<std::size_t>(fraction * static_cast<double>(items.size()) + 0.5);
    n_train = std::clamp<std::size_t>(n_train, 1, items.size() - 1);
    out.train.insert(out.train.end(), items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

inline SplitResult split_dataset(const Manifest& manifest, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> all(manifest.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return split_dataset(manifest, all, fraction, seed);
}

// Records with an explicit split keep it; the rest are split by class.
inline SplitResult resolve_splits(const Manifest& manifest, double fraction, std::uint64_t seed) {
  SplitResult out;
  std::vector<std::size_t> unassigned;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    switch (manifest.records[i].split) {
      case Split::kTrain: out.train.push_back(i); break;
      case Split::kTest: out.test.push_back(i); break;
      case Split::kUnassigned: unassigned.push_back(i); break;
    }
  }
  if (!unassigned.empty()) {
    auto s = split_dataset(manifest, unassigned, fraction, seed);
    out.train.insert(out.train.end(), s.train.begin(), s.train.end());
    out.test.insert(out.test.end(), s.test.begin(), s.test.end());
    out.warnings = std::move(s.warnings);
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
  }
  return out;
}

struct IngestOptions {
  double dedup_iou = kDefaultDedupIou;
  double nms_iou = kDefaultNmsIou;
  std::size_t top_k = kDefaultTopK;
  std::size_t patch_side = kPatchSide;
};

// dedup_near -> nms -> top_k on one image's proposals.
inline std::vector<Proposal> filter_image_proposals(const std::vector<Proposal>& props, const IngestOptions& opt) {
  if (props.empty()) return {};
  return top_k(nms(dedup_near(props, opt.dedup_iou), opt.nms_iou), opt.top_k);
}

// Surviving proposals with their descriptors. Descriptor ids are
// "<image_id>#<rank>" with rank the position after filtering.
struct IngestedSet {
  DescriptorSet descriptors;
  std::vector<Proposal> proposals;      // parallel to descriptors
  std::vector<std::string> class_names; // parallel to descriptors
};

struct IngestResult {
  IngestedSet train;
  IngestedSet test;
  std::vector<std::string> warnings;
};

inline std::string descriptor_id(const std::string& image_id, std::size_t rank) {
  return image_id + "#" + std::to_string(rank);
}

inline IngestResult ingest(const Manifest& manifest, const std::vector<Proposal>& proposals,
                           const SplitResult& split, const IngestOptions& opt) {
  IngestResult out;
  out.warnings = split.warnings;
  if (proposals.empty()) out.warnings.push_back("proposal file is empty; dataset is empty");

  std::map<std::string, std::vector<Proposal>> by_image;
  for (const auto& p : proposals) {
    if (!manifest.find(p.image_id)) throw ContractError("proposal references unknown image '" + p.image_id + "'");
    by_image[p.image_id].push_back(p);
  }

  auto add_records = [&](const std::vector<std::size_t>& indices, IngestedSet& dst) {
    dst.descriptors.dim = opt.patch_side * opt.patch_side;
    for (auto idx : indices) {
      const auto& rec = manifest.records[idx];
      const auto it = by_image.find(rec.item_id);
      if (it == by_image.end()) {
        if (!proposals.empty()) out.warnings.push_back("image '" + rec.item_id + "' has no proposals");
        continue;
      }
      if (!std::filesystem::exists(rec.image_path))
        throw std::runtime_error("image file for '" + rec.item_id + "' not found: " + rec.image_path);
      const RgbImage img = read_pnm(rec.image_path);
      const auto kept = filter_image_proposals(it->second, opt);
      for (std::size_t rank = 0; rank < kept.size(); ++rank) {
        dst.descriptors.add(descriptor_id(rec.item_id, rank), patch_descriptor(img, kept[rank].box, opt.patch_side));
        dst.proposals.push_back(kept[rank]);
        dst.class_names.push_back(rec.class_name);
      }
    }
  };
  add_records(split.train, out.train);
  add_records(split.test, out.test);
  return out;
}

}  // namespace coseg
