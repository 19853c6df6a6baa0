#include "coseg/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

namespace coseg {
namespace {

Mask random_mask(std::mt19937& rng, std::size_t w, std::size_t h, double density) {
  std::bernoulli_distribution on(density);
  Mask m(w, h);
  for (auto& b : m.bits) b = on(rng);
  return m;
}

Mask transpose(const Mask& m) {
  Mask t(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) t.set(y, x, m.at(x, y));
  return t;
}

TEST(PrecisionTest, Examples) {
  const Mask gt = Mask::from_box(8, 8, {2, 2, 3, 3});
  EXPECT_EQ(precision(gt, gt), 1.0);
  EXPECT_EQ(precision(Mask::from_box(8, 8, {6, 6, 2, 2}), gt), 0.0);
  // 2x2 block with three pixels inside the ground truth.
  Mask seg = Mask::from_box(8, 8, {4, 4, 2, 2});
  Mask gt3(8, 8);
  gt3.set(4, 4, true);
  gt3.set(5, 4, true);
  gt3.set(4, 5, true);
  EXPECT_EQ(precision(seg, gt3), 0.75);
  EXPECT_EQ(precision(Mask(8, 8), gt), 0.0);
  EXPECT_THROW(precision(Mask(8, 7), gt), ContractError);
}

TEST(JaccardTest, Examples) {
  const Mask a = Mask::from_box(20, 20, {0, 0, 10, 10});
  EXPECT_EQ(jaccard(a, a), 1.0);
  EXPECT_EQ(jaccard(a, Mask::from_box(20, 20, {10, 10, 10, 10})), 0.0);
  // |seg| = |gt| = 100 with 50 shared pixels.
  const Mask b = Mask::from_box(20, 20, {5, 0, 10, 10});
  EXPECT_DOUBLE_EQ(jaccard(a, b), 1.0 / 3.0);
  EXPECT_EQ(jaccard(Mask(4, 4), Mask(4, 4)), 1.0);
  EXPECT_THROW(jaccard(Mask(4, 4), Mask(5, 4)), ContractError);
}

TEST(MetricPropertiesTest, BoundsSymmetryAndTransposition) {
  std::mt19937 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Mask a = random_mask(rng, 17, 11, 0.4), b = random_mask(rng, 17, 11, 0.3);
    EXPECT_EQ(jaccard(a, b), jaccard(b, a));
    if (a.count() > 0) {
      EXPECT_LE(jaccard(a, b), precision(a, b));
    }
    EXPECT_EQ(precision(transpose(a), transpose(b)), precision(a, b));
    EXPECT_EQ(jaccard(transpose(a), transpose(b)), jaccard(a, b));
  }
  // Precision is not symmetric: a small mask inside a large one.
  const Mask small = Mask::from_box(10, 10, {2, 2, 2, 2}), large = Mask::from_box(10, 10, {0, 0, 8, 8});
  EXPECT_EQ(precision(small, large), 1.0);
  EXPECT_EQ(precision(large, small), 4.0 / 64.0);
}

TEST(EvaluateTest, PerfectSingleClass) {
  const Mask m = Mask::from_box(6, 6, {1, 1, 3, 3});
  const auto r = evaluate({"x"}, {{"x", m}}, {{"x", m}}, {{"x", "cat"}});
  EXPECT_EQ(r.avg_precision, 1.0);
  EXPECT_EQ(r.avg_jaccard, 1.0);
  EXPECT_EQ(r.per_class.at("cat").count, 1u);
}

TEST(EvaluateTest, UnweightedMeanOverClasses) {
  const Mask m = Mask::from_box(6, 6, {0, 0, 3, 3}), other = Mask::from_box(6, 6, {3, 3, 3, 3});
  // Class "a" has two perfect items, class "b" one miss: the class mean is 0.5.
  const auto r = evaluate({"a1", "a2", "b1"}, {{"a1", m}, {"a2", m}, {"b1", m}},
                          {{"a1", m}, {"a2", m}, {"b1", other}}, {{"a1", "a"}, {"a2", "a"}, {"b1", "b"}});
  EXPECT_EQ(r.avg_precision, 0.5);
  EXPECT_EQ(r.avg_jaccard, 0.5);
  EXPECT_EQ(r.per_class.at("a").count, 2u);
  EXPECT_EQ(r.scored, 3u);
}

TEST(EvaluateTest, MissingMasksAreNamedAndExcluded) {
  const Mask m = Mask::from_box(6, 6, {0, 0, 3, 3});
  const auto r = evaluate({"ok", "noseg", "nogt", "empty"}, {{"ok", m}, {"nogt", m}, {"empty", Mask(6, 6)}},
                          {{"ok", m}, {"noseg", m}, {"empty", m}},
                          {{"ok", "a"}, {"noseg", "a"}, {"nogt", "a"}, {"empty", "a"}});
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors[0].item_id, "noseg");
  EXPECT_EQ(r.errors[1].item_id, "nogt");
  EXPECT_EQ(r.empty_segmentations, std::vector<std::string>{"empty"});
  EXPECT_EQ(r.scored, 2u);
  EXPECT_EQ(r.avg_precision, 0.5);
  const auto j = r.to_json();
  EXPECT_EQ(j["errors"].size(), 2u);
  EXPECT_EQ(j["per_class"]["a"]["count"], 2);
}

TEST(EvaluateTest, RandomMasksMatchPixelCountingOracle) {
  std::mt19937 rng(17);
  std::vector<std::string> ids;
  std::map<std::string, Mask> seg, gt;
  std::map<std::string, std::string> cls;
  std::map<std::string, std::pair<double, double>> sums;
  std::map<std::string, int> counts;
  for (int i = 0; i < 60; ++i) {
    const std::string id = "item" + std::to_string(i), c = "c" + std::to_string(i % 3);
    const Mask s = random_mask(rng, 32, 32, 0.5), g = random_mask(rng, 32, 32, 0.5);
    ids.push_back(id);
    seg[id] = s;
    gt[id] = g;
    cls[id] = c;
    int ns = 0, ng = 0, both = 0;
    for (std::size_t k = 0; k < s.bits.size(); ++k) {
      ns += s.bits[k];
      ng += g.bits[k];
      both += s.bits[k] & g.bits[k];
    }
    sums[c].first += static_cast<double>(both) / ns;
    sums[c].second += static_cast<double>(both) / (ns + ng - both);
    ++counts[c];
  }
  const auto r = evaluate(ids, seg, gt, cls);
  double p = 0, j = 0;
  for (const auto& [c, s] : sums) {
    EXPECT_DOUBLE_EQ(r.per_class.at(c).precision, s.first / counts[c]);
    p += s.first / counts[c];
    j += s.second / counts[c];
  }
  EXPECT_DOUBLE_EQ(r.avg_precision, p / 3);
  EXPECT_DOUBLE_EQ(r.avg_jaccard, j / 3);
}

}  // namespace
}  // namespace coseg
