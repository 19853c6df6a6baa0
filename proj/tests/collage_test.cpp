#include "coseg/collage.hpp"

#include <gtest/gtest.h>

#include <random>

namespace coseg {
namespace {

CollageItem solid(std::size_t w, std::size_t h, Rgb color, double distance, bool full_mask = true) {
  CollageItem item;
  item.region = RgbImage(w, h, color);
  item.mask = Mask(w, h, full_mask);
  item.distance = distance;
  return item;
}

TEST(CollageSpecTest, DefaultTilingIsValidAndCoversCanvas) {
  CollageSpec spec;
  EXPECT_NO_THROW(spec.validate());
  std::int64_t area = 0;
  for (const auto& s : spec.slots) area += s.area();
  EXPECT_EQ(area, 512 * 512);
  EXPECT_EQ(spec.slots[0].area(), 256 * 256);
  EXPECT_EQ(spec.background, (Rgb{135, 206, 235}));

  CollageSpec overlap = spec;
  overlap.slots[3] = {250, 0, 10, 10};
  EXPECT_THROW(overlap.validate(), ContractError);
  CollageSpec outside = spec;
  outside.slots[9].w = 200;
  EXPECT_THROW(outside.validate(), ContractError);
}

TEST(LayoutTest, Examples) {
  EXPECT_EQ(layout({solid(1, 1, {}, 0.7)}), (std::vector<std::size_t>{0}));
  EXPECT_EQ(layout({solid(1, 1, {}, 0.3), solid(1, 1, {}, 0.1)}), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(layout({solid(1, 1, {}, 0.5), solid(1, 1, {}, 0.5)}), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(layout(std::vector<CollageItem>(11, solid(1, 1, {}, 0))), ContractError);
}

TEST(LayoutTest, MatchesFullSortOracle) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> d(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CollageItem> items;
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t i = 0; i < 10; ++i) {
      items.push_back(solid(1, 1, {}, d(rng)));
      keyed.emplace_back(items.back().distance, i);
    }
    std::sort(keyed.begin(), keyed.end());
    const auto slots = layout(items);
    for (std::size_t rank = 0; rank < 10; ++rank) EXPECT_EQ(slots[keyed[rank].second], rank);
  }
}

TEST(ComposeTest, EmptyAndSingleItem) {
  const auto blank = make_collage({});
  ASSERT_EQ(blank.width, 512u);
  ASSERT_EQ(blank.height, 512u);
  for (const auto& p : blank.pixels) ASSERT_EQ(p, kSkyBlue);

  const Rgb red{255, 0, 0};
  const auto one = make_collage({solid(30, 20, red, 0.4)});
  for (std::size_t y = 0; y < 512; ++y)
    for (std::size_t x = 0; x < 512; ++x) ASSERT_EQ(one.at(x, y), (x < 256 && y < 256) ? red : kSkyBlue);
}

TEST(ComposeTest, MaskHolesShowBackgroundAndScalingIsNearest) {
  CollageItem item = solid(2, 2, {10, 20, 30}, 0.0);
  item.region.at(1, 0) = {200, 0, 0};
  item.mask.set(0, 1, false);
  const auto img = make_collage({item});
  EXPECT_EQ(img.at(0, 0), (Rgb{10, 20, 30}));
  EXPECT_EQ(img.at(127, 127), (Rgb{10, 20, 30}));
  EXPECT_EQ(img.at(128, 0), (Rgb{200, 0, 0}));
  EXPECT_EQ(img.at(0, 128), kSkyBlue);
  EXPECT_EQ(img.at(255, 255), (Rgb{10, 20, 30}));
}

TEST(ComposeTest, ContractErrors) {
  CollageItem bad = solid(3, 3, {}, 0);
  bad.mask = Mask(2, 3);
  EXPECT_THROW(make_collage({bad}), ContractError);
  const auto items = std::vector<CollageItem>{solid(1, 1, {}, 0), solid(1, 1, {}, 1)};
  EXPECT_THROW(compose(items, {0, 0}), ContractError);
  EXPECT_THROW(compose(items, {0, 10}), ContractError);
  EXPECT_THROW(compose(items, {0}), ContractError);
}

TEST(ComposeTest, ByteStableAcrossRuns) {
  std::mt19937 rng(8);
  std::vector<CollageItem> items;
  for (int i = 0; i < 7; ++i) {
    CollageItem it = solid(5 + i, 9 - i, {static_cast<std::uint8_t>(rng()), 3, 4}, i * 0.1);
    for (auto& b : it.mask.bits) b = rng() % 2;
    items.push_back(it);
  }
  EXPECT_EQ(encode_ppm(make_collage(items)), encode_ppm(make_collage(items)));
}

}  // namespace
}  // namespace coseg
