#pragma once

// End-to-end stages over an artifact directory. Each stage reads only the
// artifacts of earlier stages plus the config, so any stage can be re-run on
// its own.
//
//   ingest   -> train.csgd test.csgd train_proposals.csv test_proposals.csv
//   train    -> model.csgm loss_trace.csv
//   embed    -> test_embeddings.csgd
//   index    -> index.csgi
//   retrieve -> groups.jsonl
//   evaluate -> report.json
//   collage  -> collage_<class>.ppm

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coseg/annindex.hpp"
#include "coseg/collage.hpp"
#include "coseg/config.hpp"
#include "coseg/dataset.hpp"
#include "coseg/embedder.hpp"
#include "coseg/metrics.hpp"
#include "coseg/retrieval.hpp"

namespace coseg {

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

namespace fs = std::filesystem;

class Pipeline {
 public:
  Pipeline(Config cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log), dir_(cfg_.str("out.dir")) {}

  static const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"ingest", "train", "embed", "index", "retrieve", "evaluate", "collage"};
    return names;
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void ingest() {
    const Manifest manifest = load_manifest();
    const auto proposals = read_proposals(cfg_.required("data.proposals"));
    const auto split = resolve_splits(manifest, cfg_.real("data.train_fraction"), cfg_.integer("seed"));
    IngestOptions opt;
    opt.dedup_iou = cfg_.real("ingest.dedup_iou");
    opt.nms_iou = cfg_.real("ingest.nms_iou");
    opt.top_k = cfg_.integer("ingest.top_k");
    opt.patch_side = cfg_.integer("ingest.patch");
    const auto result = coseg::ingest(manifest, proposals, split, opt);
    for (const auto& w : result.warnings) log_ << "warning: " << w << '\n';
    fs::create_directories(dir_);
    save_descriptors(path("train.csgd").string(), result.train.descriptors);
    save_descriptors(path("test.csgd").string(), result.test.descriptors);
    write_proposal_file(path("train_proposals.csv"), result.train.proposals);
    write_proposal_file(path("test_proposals.csv"), result.test.proposals);
    log_ << "ingest: " << result.train.descriptors.size() << " train / " << result.test.descriptors.size()
         << " test descriptors\n";
  }

  void train() {
    const Manifest manifest = load_manifest();
    const auto train_set = load_descriptors(path("train.csgd").string());
    auto data = LabeledSet::from_named(train_set.values, classes_of(manifest, train_set.ids));
    const auto result = coseg::train(data, train_config());
    save_model(path("model.csgm").string(), result.params);
    std::ofstream trace(path("loss_trace.csv"), std::ios::trunc);
    trace << "iteration,loss\n";
    trace.precision(17);
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) trace << i << ',' << result.loss_trace[i] << '\n';
    log_ << "train: " << result.loss_trace.size() << " iterations";
    if (!result.loss_trace.empty()) log_ << ", final batch loss " << result.loss_trace.back();
    log_ << '\n';
  }

  void embed() {
    const auto params = load_model(path("model.csgm").string());
    const auto test_set = load_descriptors(path("test.csgd").string());
    DescriptorSet out;
    out.dim = params.output_dim();
    const auto emb = embed_all(params, test_set.values);
    for (std::size_t i = 0; i < emb.size(); ++i) out.add(test_set.ids[i], emb[i]);
    save_descriptors(path("test_embeddings.csgd").string(), out);
    log_ << "embed: " << out.size() << " embeddings of dimension " << out.dim << '\n';
  }

  void index() {
    const auto emb = load_descriptors(path("test_embeddings.csgd").string());
    const auto idx = AnnIndex::build(emb.values, index_config());
    idx.save_file(path("index.csgi").string());
    log_ << "index: " << idx.size() << " items, " << idx.config().n_trees << " trees\n";
  }

  void retrieve() {
    const Manifest manifest = load_manifest();
    const auto emb = load_descriptors(path("test_embeddings.csgd").string());
    const auto idx = AnnIndex::load_file(path("index.csgi").string());
    if (idx.size() != emb.size() || idx.dim() != emb.dim)
      throw ContractError("index does not match test_embeddings.csgd");
    const auto proposals = read_proposals(path("test_proposals.csv").string());
    if (proposals.size() != emb.size()) throw ContractError("test_proposals.csv does not match test_embeddings.csgd");
    const auto classes = classes_of(manifest, emb.ids);
    auto groups = retrieve_similar(idx, emb.values, cfg_.integer("retrieve.k"), cfg_.integer("retrieve.search_k"),
                                   &classes);
    std::map<std::string, BoundingBox> gt_boxes;
    for (const auto& r : manifest.records)
      if (r.gt_box) gt_boxes[r.item_id] = *r.gt_box;
    for (auto& g : groups) g = filter_candidates(g, proposals, gt_boxes, cfg_.real("retrieve.iou"));
    std::ofstream out(path("groups.jsonl"), std::ios::trunc);
    write_groups(out, groups);
    log_ << "retrieve: " << groups.size() << " groups\n";
  }

  void evaluate() {
    const Manifest manifest = load_manifest();
    const auto emb = load_descriptors(path("test_embeddings.csgd").string());
    const auto proposals = read_proposals(path("test_proposals.csv").string());
    const auto groups = load_groups();
    if (proposals.size() != emb.size()) throw ContractError("test_proposals.csv does not match test_embeddings.csgd");

    std::set<std::size_t> items;
    for (const auto& g : groups) {
      items.insert(g.anchor);
      for (const auto& m : g.members) items.insert(m.id);
    }
    std::vector<std::string> ids;
    std::map<std::string, Mask> masks, gt_masks;
    std::map<std::string, std::string> class_map;
    const bool file_masks = mask_mode_is_file();
    for (auto i : items) {
      if (i >= emb.size()) throw ContractError("group references unknown item " + std::to_string(i));
      const auto& id = emb.ids[i];
      const auto* rec = manifest.find(image_of(id));
      if (!rec) throw ContractError("no manifest record for " + id);
      ids.push_back(id);
      class_map[id] = rec->class_name;
      const auto& img = image(rec->image_path);
      if (file_masks) {
        const auto mp = segmentation_mask_path(id);
        if (fs::exists(mp)) masks[id] = read_pbm(mp.string());
      } else {
        masks[id] = Mask::from_box(img.width, img.height, proposals[i].box);
      }
      if (rec->gt_mask_path) {
        gt_masks[id] = read_pbm(*rec->gt_mask_path);
      } else if (rec->gt_box) {
        gt_masks[id] = Mask::from_box(img.width, img.height, *rec->gt_box);
      }
    }
    const auto report = coseg::evaluate(ids, masks, gt_masks, class_map);
    for (const auto& e : report.errors) log_ << "warning: " << e.item_id << ": " << e.reason << '\n';
    for (const auto& e : report.empty_segmentations) log_ << "warning: " << e << ": empty segmentation mask\n";
    std::ofstream out(path("report.json"), std::ios::trunc);
    out << report.to_json().dump(2) << '\n';
    log_ << "evaluate: P=" << report.avg_precision << " J=" << report.avg_jaccard << " over "
         << report.per_class.size() << " classes\n";
  }

  // One collage per class: the first anchor of that class and its members.
  void collage() {
    const Manifest manifest = load_manifest();
    const auto emb = load_descriptors(path("test_embeddings.csgd").string());
    const auto proposals = read_proposals(path("test_proposals.csv").string());
    const auto groups = load_groups();
    CollageSpec spec;
    spec.background = parse_rgb(cfg_.str("collage.background"));
    const bool file_masks = mask_mode_is_file();

    std::set<std::string> done;
    std::size_t written = 0;
    for (const auto& g : groups) {
      if (g.anchor >= emb.size()) throw ContractError("group references unknown item " + std::to_string(g.anchor));
      const auto* rec = manifest.find(image_of(emb.ids[g.anchor]));
      if (!rec || !done.insert(rec->class_name).second) continue;
      std::vector<CollageItem> items;
      items.push_back(collage_item(manifest, emb, proposals, g.anchor, 0.0, file_masks));
      for (const auto& m : g.members) {
        if (items.size() == kCollageSlots) break;
        items.push_back(collage_item(manifest, emb, proposals, m.id, m.distance, file_masks));
      }
      write_ppm(path("collage_" + sanitize(rec->class_name) + ".ppm").string(), make_collage(items, spec));
      ++written;
    }
    log_ << "collage: " << written << " collages\n";
  }

  // Runs every stage in order. With resume, stages whose outputs all exist are
  // skipped. Failures are reported as StageError; finished artifacts remain.
  void run(bool resume) {
    cfg_.required("data.manifest");
    cfg_.required("data.proposals");
    fs::create_directories(dir_);
    run_stage("ingest", resume, {"train.csgd", "test.csgd", "train_proposals.csv", "test_proposals.csv"},
              [this] { ingest(); });
    run_stage("train", resume, {"model.csgm"}, [this] { train(); });
    run_stage("embed", resume, {"test_embeddings.csgd"}, [this] { embed(); });
    run_stage("index", resume, {"index.csgi"}, [this] { index(); });
    run_stage("retrieve", resume, {"groups.jsonl"}, [this] { retrieve(); });
    run_stage("evaluate", resume, {"report.json"}, [this] { evaluate(); });
    run_stage("collage", false, {}, [this] { collage(); });
  }

  void run_stage(const std::string& name, bool resume, const std::vector<std::string>& outputs,
                 const std::function<void()>& body) {
    if (resume && !outputs.empty() &&
        std::all_of(outputs.begin(), outputs.end(), [&](const std::string& o) { return fs::exists(path(o)); })) {
      log_ << name << ": outputs present, skipped\n";
      return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
    log_ << name << ": " << ms.count() << " ms\n";
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.learning_rate = cfg_.real("train.lr");
    t.momentum = cfg_.real("train.momentum");
    t.batch_size = cfg_.integer("train.batch");
    t.margin = cfg_.real("train.margin");
    t.iterations = cfg_.integer("train.iterations");
    t.seed = cfg_.integer("seed");
    const auto& mining = cfg_.str("train.mining");
    if (mining == "aggressive") t.mining = Mining::kAggressive;
    else if (mining == "random") t.mining = Mining::kRandom;
    else throw ConfigError("train.mining must be aggressive or random, got '" + mining + "'");
    t.pool_factor = cfg_.integer("train.pool_factor");
    const auto& loss = cfg_.str("train.loss");
    if (loss == "linear-hinge") t.loss_form = LossForm::kLinearHinge;
    else if (loss == "squared-hinge") t.loss_form = LossForm::kSquaredHinge;
    else throw ConfigError("train.loss must be linear-hinge or squared-hinge, got '" + loss + "'");
    t.hidden = cfg_.integer_list("train.hidden");
    t.embedding_dim = cfg_.integer("train.embedding");
    return t;
  }

  IndexConfig index_config() const {
    IndexConfig c;
    c.n_trees = cfg_.integer("index.n_trees");
    c.search_k = cfg_.integer("index.search_k");
    c.leaf_capacity = cfg_.integer("index.leaf_capacity");
    c.seed = cfg_.integer("seed");
    const auto& metric = cfg_.str("index.metric");
    if (metric == "euclidean") c.metric = Metric::kEuclidean;
    else if (metric == "cosine") c.metric = Metric::kCosine;
    else throw ConfigError("index.metric must be euclidean or cosine, got '" + metric + "'");
    return c;
  }

  static Rgb parse_rgb(const std::string& s) {
    std::stringstream ss(s);
    std::string tok;
    std::vector<int> v;
    while (std::getline(ss, tok, ',')) {
      try {
        v.push_back(std::stoi(tok));
      } catch (const std::logic_error&) {
        v.push_back(-1);
      }
    }
    if (v.size() != 3 || std::any_of(v.begin(), v.end(), [](int c) { return c < 0 || c > 255; }))
      throw ConfigError("collage.background must be R,G,B in 0..255, got '" + s + "'");
    return {static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2])};
  }

  // "img7#3" -> "img7"
  static std::string image_of(const std::string& descriptor_id) {
    const auto hash = descriptor_id.rfind('#');
    return hash == std::string::npos ? descriptor_id : descriptor_id.substr(0, hash);
  }

 private:
  Manifest load_manifest() const { return read_manifest(cfg_.required("data.manifest")); }

  std::vector<SimilarityGroup> load_groups() const {
    std::ifstream in(path("groups.jsonl"));
    if (!in) throw std::runtime_error("cannot open " + path("groups.jsonl").string());
    return read_groups(in, path("groups.jsonl").string());
  }

  static std::vector<std::string> classes_of(const Manifest& manifest, const std::vector<std::string>& ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      const auto* rec = manifest.find(image_of(id));
      if (!rec) throw ContractError("descriptor '" + id + "' has no manifest record");
      out.push_back(rec->class_name);
    }
    return out;
  }

  static void write_proposal_file(const fs::path& p, const std::vector<Proposal>& props) {
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    for (const auto& prop : props) write_proposal(out, prop);
  }

  bool mask_mode_is_file() const {
    const auto& mode = cfg_.str("evaluate.mask_mode");
    if (mode == "box") return false;
    if (mode == "file") {
      cfg_.required("evaluate.mask_dir");
      return true;
    }
    throw ConfigError("evaluate.mask_mode must be box or file, got '" + mode + "'");
  }

  fs::path segmentation_mask_path(const std::string& id) const {
    return fs::path(cfg_.str("evaluate.mask_dir")) / (sanitize(id) + ".pbm");
  }

  static std::string sanitize(const std::string& s) {
    std::string out = s;
    for (auto& c : out)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
    return out;
  }

  const RgbImage& image(const std::string& p) {
    auto it = images_.find(p);
    if (it == images_.end()) it = images_.emplace(p, read_pnm(p)).first;
    return it->second;
  }

  CollageItem collage_item(const Manifest& manifest, const DescriptorSet& emb, const std::vector<Proposal>& proposals,
                           std::size_t i, double distance, bool file_masks) {
    if (i >= emb.size() || i >= proposals.size()) throw ContractError("group references unknown item " + std::to_string(i));
    const auto* rec = manifest.find(image_of(emb.ids[i]));
    if (!rec) throw ContractError("no manifest record for " + emb.ids[i]);
    const auto& box = proposals[i].box;
    CollageItem item;
    item.region = crop(image(rec->image_path), box);
    item.distance = distance;
    item.mask = Mask(item.region.width, item.region.height, true);
    if (file_masks) {
      const auto mp = segmentation_mask_path(emb.ids[i]);
      if (fs::exists(mp)) {
        const Mask full = read_pbm(mp.string());
        for (std::size_t y = 0; y < item.mask.height; ++y)
          for (std::size_t x = 0; x < item.mask.width; ++x) {
            const auto fx = box.x + static_cast<std::int64_t>(x), fy = box.y + static_cast<std::int64_t>(y);
            const bool inside = fx >= 0 && fy >= 0 && fx < static_cast<std::int64_t>(full.width) &&
                                fy < static_cast<std::int64_t>(full.height);
            item.mask.set(x, y, inside && full.at(static_cast<std::size_t>(fx), static_cast<std::size_t>(fy)));
          }
      }
    }
    return item;
  }

  Config cfg_;
  std::ostream& log_;
  fs::path dir_;
  std::map<std::string, RgbImage> images_;
};

}  // namespace coseg
