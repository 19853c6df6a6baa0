#include "coseg/dataset.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "test_util.hpp"

namespace coseg {
namespace {

Manifest parse(const std::string& text) {
  std::istringstream in(text);
  return read_manifest(in, "mem", "/data");
}

ManifestRecord record(std::string id, std::string path, std::string cls) {
  ManifestRecord r;
  r.item_id = std::move(id);
  r.image_path = std::move(path);
  r.class_name = std::move(cls);
  return r;
}

Manifest classes_of_size(const std::vector<std::pair<std::string, std::size_t>>& sizes) {
  Manifest m;
  for (const auto& [name, n] : sizes)
    for (std::size_t i = 0; i < n; ++i) m.records.push_back(record(name + std::to_string(i), "x.ppm", name));
  return m;
}

TEST(ManifestTest, ParsesFieldsAndResolvesPaths) {
  const auto m = parse(
      "item_id,image_path,class,split,gt_x,gt_y,gt_w,gt_h,gt_mask_path\n"
      "a,img/a.ppm,cat,train,1,2,3,4,masks/a.pbm\n"
      "# comment\n"
      "b,b.ppm,dog,,,,,,\n"
      "c,c.ppm,dog,test\n");
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(m.records[0].image_path, "/data/img/a.ppm");
  EXPECT_EQ(m.records[0].split, Split::kTrain);
  EXPECT_EQ(m.records[0].gt_box, (BoundingBox{1, 2, 3, 4}));
  EXPECT_EQ(m.records[0].gt_mask_path, std::optional<std::string>("/data/masks/a.pbm"));
  EXPECT_EQ(m.records[1].split, Split::kUnassigned);
  EXPECT_FALSE(m.records[1].gt_box.has_value());
  EXPECT_EQ(m.records[2].split, Split::kTest);
  EXPECT_EQ(m.find("c"), &m.records[2]);
  EXPECT_EQ(m.find("zzz"), nullptr);

  std::ostringstream out;
  write_manifest(out, m, "/data");
  std::istringstream back(out.str());
  const auto again = read_manifest(back, "mem", "/data");
  ASSERT_EQ(again.records.size(), 3u);
  EXPECT_EQ(again.records[0].gt_mask_path, m.records[0].gt_mask_path);
  EXPECT_EQ(again.records[2].image_path, m.records[2].image_path);
}

TEST(ManifestTest, ErrorsCarryLineNumbers) {
  const std::vector<std::pair<std::string, std::size_t>> bad = {
      {"a,a.ppm,cat\na,b.ppm,cat\n", 2},
      {"a,a.ppm,cat,maybe\n", 1},
      {"a,a.ppm,cat,,1,2,x,4\n", 1},
      {"a,a.ppm,cat,,1,2,0,4\n", 1},
      {"ok,a.ppm,cat\n\n,b.ppm,cat\n", 3},
      {"a,,cat\n", 1},
      {"a,a.ppm,\n", 1},
      {"a,a.ppm,cat,,1,2,3,4,m,extra\n", 1},
  };
  for (const auto& [text, line] : bad) {
    try {
      parse(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << text;
    }
  }
}

TEST(SplitTest, StratifiedCountsPerClass) {
  const auto m = classes_of_size({{"a", 10}, {"b", 10}, {"c", 2}});
  const auto s = split_dataset(m, 0.8, 3);
  std::map<std::string, std::size_t> tr, te;
  for (auto i : s.train) ++tr[m.records[i].class_name];
  for (auto i : s.test) ++te[m.records[i].class_name];
  EXPECT_EQ(tr["a"], 8u);
  EXPECT_EQ(te["a"], 2u);
  EXPECT_EQ(tr["c"], 1u);
  EXPECT_EQ(te["c"], 1u);
  EXPECT_TRUE(s.warnings.empty());

  const auto s7 = split_dataset(classes_of_size({{"a", 10}}), 0.7, 3);
  EXPECT_EQ(s7.train.size(), 7u);
  EXPECT_EQ(s7.test.size(), 3u);
}

TEST(SplitTest, PartitionIsDisjointCompleteAndDeterministic) {
  const auto m = classes_of_size({{"a", 13}, {"b", 7}, {"c", 21}});
  const auto s = split_dataset(m, 0.6, 99);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
  EXPECT_EQ(all.size(), m.records.size());

  const auto again = split_dataset(m, 0.6, 99);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.test, s.test);
  bool differs = false;
  for (std::uint64_t seed = 100; seed < 110 && !differs; ++seed) differs = split_dataset(m, 0.6, seed).train != s.train;
  EXPECT_TRUE(differs);
}

TEST(SplitTest, SingleItemClassGoesToTrainWithWarning) {
  const auto m = classes_of_size({{"solo", 1}, {"pair", 2}});
  const auto s = split_dataset(m, 0.5, 1);
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("solo"), std::string::npos);
  EXPECT_NE(std::find(s.train.begin(), s.train.end(), 0u), s.train.end());
  EXPECT_THROW(split_dataset(m, 1.0, 1), ContractError);
  EXPECT_THROW(split_dataset(m, 0.0, 1), ContractError);
}

TEST(SplitTest, ExplicitSplitsAreKept) {
  auto m = classes_of_size({{"a", 6}});
  m.records[0].split = Split::kTest;
  m.records[1].split = Split::kTrain;
  const auto s = resolve_splits(m, 0.5, 2);
  EXPECT_NE(std::find(s.test.begin(), s.test.end(), 0u), s.test.end());
  EXPECT_NE(std::find(s.train.begin(), s.train.end(), 1u), s.train.end());
  EXPECT_EQ(s.train.size() + s.test.size(), 6u);
}

class IngestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = coseg::testing::scratch_dir("ingest");
    RgbImage img(40, 40);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = {static_cast<std::uint8_t>(i), 0, 0};
    write_ppm((dir_ / "a.ppm").string(), img);
    manifest_.records.push_back(record("a", (dir_ / "a.ppm").string(), "cat"));
    manifest_.records.push_back(record("b", (dir_ / "b.ppm").string(), "cat"));
  }
  std::filesystem::path dir_;
  Manifest manifest_;
};

TEST_F(IngestTest, EmptyProposalsYieldEmptySetsAndWarning) {
  const auto r = ingest(manifest_, {}, SplitResult{{0, 1}, {}, {}}, {});
  EXPECT_EQ(r.train.descriptors.size(), 0u);
  EXPECT_EQ(r.test.descriptors.size(), 0u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("empty"), std::string::npos);
}

TEST_F(IngestTest, MatchesComposedFilterOracle) {
  std::mt19937 rng(12);
  std::uniform_int_distribution<std::int64_t> pos(0, 30), size(4, 10);
  std::uniform_real_distribution<double> score(0, 1);
  std::vector<Proposal> props;
  for (int i = 0; i < 30; ++i) props.push_back({"a", {pos(rng), pos(rng), size(rng), size(rng)}, score(rng), "t"});
  const auto r = ingest(manifest_, props, SplitResult{{}, {0}, {}}, {});
  const auto expect = top_k(nms(dedup_near(props, 0.95), 0.7), 10);
  ASSERT_LE(r.test.proposals.size(), 10u);
  EXPECT_EQ(r.test.proposals, expect);
  ASSERT_EQ(r.test.descriptors.size(), expect.size());
  const auto img = read_pnm((dir_ / "a.ppm").string());
  for (std::size_t i = 0; i < expect.size(); ++i) {
    EXPECT_EQ(r.test.descriptors.ids[i], "a#" + std::to_string(i));
    EXPECT_EQ(r.test.descriptors.values[i], patch_descriptor(img, expect[i].box));
    EXPECT_EQ(r.test.class_names[i], "cat");
  }
  // Image b has no proposals: warned about, not fatal.
  const auto both = ingest(manifest_, props, SplitResult{{0, 1}, {}, {}}, {});
  EXPECT_EQ(both.warnings.size(), 1u);
}

TEST_F(IngestTest, UnknownImageOrMissingFileFails) {
  EXPECT_THROW(ingest(manifest_, {{"nope", {0, 0, 2, 2}, 1, ""}}, SplitResult{{0}, {}, {}}, {}), ContractError);
  try {
    ingest(manifest_, {{"b", {0, 0, 2, 2}, 1, ""}}, SplitResult{{1}, {}, {}}, {});
    ADD_FAILURE();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("b.ppm"), std::string::npos);
  }
}

}  // namespace
}  // namespace coseg
