#include "coseg/geometry.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

namespace coseg {
namespace {

Proposal P(BoundingBox b, double score, std::string image = "img") { return {std::move(image), b, score, "test"}; }

// Counts covered pixels one by one; independent of the closed-form area math.
double raster_iou(const BoundingBox& a, const BoundingBox& b) {
  long inter = 0, uni = 0;
  const auto x0 = std::min(a.x, b.x), y0 = std::min(a.y, b.y);
  const auto x1 = std::max(a.x + a.w, b.x + b.w), y1 = std::max(a.y + a.h, b.y + b.h);
  for (auto y = y0; y < y1; ++y)
    for (auto x = x0; x < x1; ++x) {
      const bool in_a = x >= a.x && x < a.x + a.w && y >= a.y && y < a.y + a.h;
      const bool in_b = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BoundingBox random_box(std::mt19937& rng, int extent = 40, int max_side = 20) {
  std::uniform_int_distribution<int> pos(0, extent), side(1, max_side);
  return {pos(rng), pos(rng), side(rng), side(rng)};
}

TEST(IouTest, IdentityDisjointAndPartial) {
  EXPECT_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_EQ(iou({0, 0, 10, 10}, {20, 20, 5, 5}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 5, 10, 10}), 25.0 / 175.0);
  EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 5, 10, 10}), 0.142857, 1e-6);
  // Touching edges share no pixels.
  EXPECT_EQ(iou({0, 0, 10, 10}, {10, 0, 10, 10}), 0.0);
}

TEST(IouTest, MatchesPixelRasterAndIsSymmetric) {
  std::mt19937 rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_box(rng), b = random_box(rng);
    EXPECT_DOUBLE_EQ(iou(a, b), raster_iou(a, b));
    EXPECT_EQ(iou(a, b), iou(b, a));
    EXPECT_EQ(iou(a, a), 1.0);
  }
}

TEST(NmsTest, Examples) {
  const auto single = nms({P({0, 0, 5, 5}, 0.4)}, 0.5);
  ASSERT_EQ(single.size(), 1u);

  const auto dup = nms({P({0, 0, 10, 10}, 0.8), P({0, 0, 10, 10}, 0.9)}, 0.5);
  ASSERT_EQ(dup.size(), 1u);
  EXPECT_EQ(dup[0].score, 0.9);

  const Proposal a = P({0, 0, 10, 10}, 0.9), b = P({5, 5, 10, 10}, 0.8), c = P({40, 40, 10, 10}, 0.7);
  EXPECT_EQ(nms({a, b, c}, 0.1), (std::vector<Proposal>{a, c}));
}

TEST(NmsTest, RejectsMixedImagesAndBadThreshold) {
  EXPECT_THROW(nms({P({0, 0, 5, 5}, 0.4, "a"), P({0, 0, 5, 5}, 0.4, "b")}, 0.5), ContractError);
  EXPECT_THROW(nms({P({0, 0, 5, 5}, 0.4)}, 0.0), ContractError);
  EXPECT_THROW(nms({P({0, 0, 5, 5}, 0.4)}, 1.5), ContractError);
  EXPECT_TRUE(nms({}, 0.5).empty());
}

TEST(NmsTest, PropertiesOnRandomSets) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Proposal> props;
    const int n = 1 + trial % 30;
    for (int i = 0; i < n; ++i) props.push_back(P(random_box(rng), std::round(score(rng) * 10) / 10));
    const double thr = 0.3 + 0.05 * (trial % 10);
    const auto out = nms(props, thr);
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_NE(std::find(props.begin(), props.end(), out[i]), props.end());
      if (i > 0) {
        EXPECT_GE(out[i - 1].score, out[i].score);
      }
      for (std::size_t j = i + 1; j < out.size(); ++j) EXPECT_LT(iou(out[i].box, out[j].box), thr);
    }
    EXPECT_EQ(nms(out, thr), out);
  }
}

TEST(DedupTest, Examples) {
  EXPECT_TRUE(dedup_near({}, 0.6).empty());
  const auto twins = dedup_near({P({0, 0, 4, 4}, 0.1), P({0, 0, 4, 4}, 0.9)}, 0.95);
  ASSERT_EQ(twins.size(), 1u);
  EXPECT_EQ(twins[0].score, 0.1);  // score-agnostic: first wins

  EXPECT_NEAR(iou({0, 0, 10, 10}, {1, 1, 10, 10}), 81.0 / 119.0, 1e-15);
  const Proposal a = P({0, 0, 10, 10}, 0.2), b = P({1, 1, 10, 10}, 0.9), c = P({30, 0, 10, 10}, 0.5);
  EXPECT_EQ(dedup_near({a, b, c}, 0.6), (std::vector<Proposal>{a, c}));
}

TEST(TopKTest, Examples) {
  const std::vector<Proposal> three = {P({0, 0, 1, 1}, 0.1), P({0, 0, 2, 2}, 0.9), P({0, 0, 3, 3}, 0.5)};
  const auto all = top_k(three, 10);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].score, 0.9);
  EXPECT_EQ(all[1].score, 0.5);
  EXPECT_EQ(all[2].score, 0.1);
  const auto two = top_k(three, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[1].score, 0.5);
  EXPECT_THROW(top_k(three, 0), ContractError);
}

TEST(TopKTest, EqualsStableSortPrefix) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> score(0, 5);  // many ties
  std::vector<Proposal> props;
  for (int i = 0; i < 30; ++i) props.push_back(P({i, 0, 1 + i, 1}, score(rng) / 5.0));
  auto sorted = props;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  sorted.resize(10);
  EXPECT_EQ(top_k(props, 10), sorted);
}

TEST(ProposalFileTest, ParsesAndReportsLineNumbers) {
  std::istringstream ok("img1,0,0,10,10,0.5,mcg\n# comment\n\nimg1,2,3,4,5,1,ss\n");
  const auto props = read_proposals(ok, "p.csv");
  ASSERT_EQ(props.size(), 2u);
  EXPECT_EQ(props[1].box, (BoundingBox{2, 3, 4, 5}));
  EXPECT_EQ(props[1].source, "ss");

  std::istringstream bad("img1,0,0,10,10,0.5,mcg\nimg1,0,0,0,10,0.5,mcg\n");
  try {
    read_proposals(bad, "p.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream score("img1,0,0,1,1,1.5,x\n");
  EXPECT_THROW(read_proposals(score, "p.csv"), ParseError);
  std::istringstream fields("img1,0,0,1,1\n");
  EXPECT_THROW(read_proposals(fields, "p.csv"), ParseError);
}

TEST(ProposalFileTest, WriteReadRoundTrip) {
  std::mt19937 rng(9);
  std::vector<Proposal> props;
  for (int i = 0; i < 20; ++i) props.push_back(P(random_box(rng), std::generate_canonical<double, 53>(rng)));
  std::stringstream ss;
  for (const auto& p : props) write_proposal(ss, p);
  EXPECT_EQ(read_proposals(ss, "mem"), props);
}

}  // namespace
}  // namespace coseg
