#pragma once

// Flat `key = value` configuration with namespaced keys. Every key has a
// default; unknown keys are rejected.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coseg/error.hpp"

namespace coseg {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "master seed for splitting, training and index build (env COSEG_SEED overrides)"},
      {"data.manifest", "", "manifest CSV: item_id,image_path,class,split,gt_x,gt_y,gt_w,gt_h,gt_mask_path"},
      {"data.proposals", "", "proposal CSV: image_id,x,y,w,h,score,source"},
      {"data.train_fraction", "0.8", "per-class training fraction for records without a split"},
      {"out.dir", "coseg_out", "artifact directory"},
      {"ingest.dedup_iou", "0.95", "near-duplicate IoU threshold"},
      {"ingest.nms_iou", "0.7", "non-maximum suppression IoU threshold"},
      {"ingest.top_k", "10", "proposals kept per image"},
      {"ingest.patch", "32", "descriptor patch side (descriptor dim = patch^2)"},
      {"train.lr", "0.01", "learning rate"},
      {"train.momentum", "0.9", "SGD momentum"},
      {"train.batch", "128", "pairs per mini-batch"},
      {"train.margin", "1", "contrastive margin"},
      {"train.iterations", "100000", "SGD iterations"},
      {"train.mining", "aggressive", "pair selection: aggressive | random"},
      {"train.pool_factor", "10", "candidate pool size multiplier for aggressive mining"},
      {"train.loss", "linear-hinge", "linear-hinge: max(0,m-D^2) | squared-hinge: max(0,m-D)^2"},
      {"train.hidden", "128", "comma-separated hidden layer widths (empty for none)"},
      {"train.embedding", "256", "embedding dimension"},
      {"index.n_trees", "350", "random projection trees"},
      {"index.search_k", "50", "default candidate budget stored in the index"},
      {"index.leaf_capacity", "16", "maximum items per leaf"},
      {"index.metric", "euclidean", "euclidean | cosine"},
      {"retrieve.k", "10", "neighbours per anchor"},
      {"retrieve.search_k", "50", "candidate budget per query"},
      {"retrieve.iou", "0.5", "ground-truth IoU filter for group members"},
      {"evaluate.mask_mode", "box", "box: proposal box is the mask | file: read <mask_dir>/<item>.pbm"},
      {"evaluate.mask_dir", "", "directory of segmentation masks for mask_mode=file"},
      {"collage.background", "135,206,235", "background RGB"},
  };
  return keys;
}

class Config {
 public:
  Config() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  static bool known(std::string_view key) {
    for (const auto& k : config_keys())
      if (key == k.name) return true;
    return false;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  const std::string& required(const std::string& key) const {
    const auto& v = str(key);
    if (v.empty()) throw ConfigError("missing required config key '" + key + "'");
    return v;
  }

  double real(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::logic_error&) {
    }
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }

  std::uint64_t integer(const std::string& key) const {
    const auto& v = str(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
      throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
  }

  std::vector<std::size_t> integer_list(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream ss(str(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || v == 0)
        throw ConfigError("config key '" + key + "' expects positive integers, got '" + tok + "'");
      out.push_back(v);
    }
    return out;
  }

  // Lines of `key = value`; '#' starts a comment line.
  void load(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source, lineno, "expected key = value");
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (!known(key)) throw ParseError(source, lineno, "unknown config key '" + key + "'");
      values_[key] = value;
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    load(in, path);
  }

  // COSEG_SEED replaces the configured seed when set.
  void apply_environment() {
    if (const char* s = std::getenv("COSEG_SEED"); s && *s) {
      values_["seed"] = s;
      (void)integer("seed");
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace coseg
