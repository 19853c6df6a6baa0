#pragma once

// Embedding test descriptors, per-anchor k-NN groups with preserved distances,
// and the ground-truth IoU filter applied to group members.

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coseg/annindex.hpp"
#include "coseg/embedder.hpp"
#include "coseg/geometry.hpp"

namespace coseg {

struct SimilarityGroup {
  std::size_t anchor = 0;
  RetrievalResult members;  // anchor excluded, ascending distance
  std::optional<std::string> class_hint;

  friend bool operator==(const SimilarityGroup&, const SimilarityGroup&) = default;
};

inline std::vector<Embedding> embed_all(const EncoderParams& params, std::span<const Vector> descriptors) {
  std::vector<Embedding> out;
  out.reserve(descriptors.size());
  for (const auto& d : descriptors) out.push_back(forward(params, d));
  return out;
}

// One group per embedding. embeddings[i] must be the vector stored as item i
// of the index; the anchor itself is dropped from its own result.
inline std::vector<SimilarityGroup> retrieve_similar(const AnnIndex& index, std::span<const Embedding> embeddings,
                                                     std::size_t k, std::size_t search_k,
                                                     const std::vector<std::string>* class_names = nullptr) {
  if (class_names && class_names->size() != embeddings.size())
    throw ContractError("class name count does not match embedding count");
  std::vector<SimilarityGroup> groups;
  groups.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    SimilarityGroup g;
    g.anchor = i;
    for (const auto& n : index.query(embeddings[i], k + 1, search_k))
      if (n.id != i) g.members.push_back(n);
    if (g.members.size() > k) g.members.resize(k);
    if (class_names) g.class_hint = (*class_names)[i];
    groups.push_back(std::move(g));
  }
  return groups;
}

// Keeps members whose proposal box reaches `threshold` IoU with the ground-truth
// box of its image. Members whose image has no ground truth pass through.
inline SimilarityGroup filter_candidates(const SimilarityGroup& group, std::span<const Proposal> proposals,
                                         const std::map<std::string, BoundingBox>& gt_boxes,
                                         double threshold = 0.5) {
  SimilarityGroup out{group.anchor, {}, group.class_hint};
  for (const auto& m : group.members) {
    if (m.id >= proposals.size())
      throw ContractError("group member " + std::to_string(m.id) + " has no proposal");
    const Proposal& p = proposals[m.id];
    const auto gt = gt_boxes.find(p.image_id);
    if (gt == gt_boxes.end() || iou(p.box, gt->second) >= threshold) out.members.push_back(m);
  }
  return out;
}

// JSON Lines: {"anchor":0,"members":[{"id":3,"distance":0.12}],"class_hint":"cat"}
inline nlohmann::ordered_json group_to_json(const SimilarityGroup& g) {
  nlohmann::ordered_json j;
  j["anchor"] = g.anchor;
  j["members"] = nlohmann::ordered_json::array();
  for (const auto& m : g.members) j["members"].push_back({{"id", m.id}, {"distance", m.distance}});
  j["class_hint"] = g.class_hint ? nlohmann::ordered_json(*g.class_hint) : nlohmann::ordered_json(nullptr);
  return j;
}

inline SimilarityGroup group_from_json(const nlohmann::json& j) {
  SimilarityGroup g;
  g.anchor = j.at("anchor").get<std::size_t>();
  for (const auto& m : j.at("members")) g.members.push_back({m.at("id").get<std::size_t>(), m.at("distance").get<double>()});
  if (j.contains("class_hint") && !j["class_hint"].is_null()) g.class_hint = j["class_hint"].get<std::string>();
  return g;
}

inline void write_groups(std::ostream& out, std::span<const SimilarityGroup> groups) {
  for (const auto& g : groups) out << group_to_json(g).dump() << '\n';
}

inline std::vector<SimilarityGroup> read_groups(std::istream& in, const std::string& source_name) {
  std::vector<SimilarityGroup> groups;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      groups.push_back(group_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source_name, lineno, e.what());
    }
  }
  return groups;
}

}  // namespace coseg
