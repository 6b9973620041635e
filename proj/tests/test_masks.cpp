#include <catch2/catch_amalgamated.hpp>

#include "dance/masks.hpp"

using namespace dance;

TEST_CASE("singleton masks cover a 4x4 grid of pixels", "[masks]") {
  auto masks = build_masks({4, 4, 1}, 1, 16, 1, 3);
  REQUIRE(masks.size() == 16);
  PatchGrid grid = make_patch_grid({4, 4, 1}, 1);
  verify_masks(masks, grid, 1);
  for (const Mask& m : masks) {
    REQUIRE(m.patch_ids.size() == 1);
    REQUIRE(l1_norm(m.m) == 1.0);
  }
}

TEST_CASE("exact tiling gives one tile per mask", "[masks]") {
  auto masks = build_masks({6, 6, 1}, 3, 4, 1, 0);
  REQUIRE(masks.size() == 4);
  PatchGrid grid = make_patch_grid({6, 6, 1}, 3);
  REQUIRE(grid.patches.size() == 4);
  verify_masks(masks, grid, 1);
  for (const Mask& m : masks) REQUIRE(l1_norm(m.m) == 9.0);
}

TEST_CASE("remainder tiles become smaller edge patches", "[masks]") {
  PatchGrid grid = make_patch_grid({16, 16, 1}, 3);
  REQUIRE(grid.rows == 6);
  REQUIRE(grid.cols == 6);
  REQUIRE(grid.patches.size() == 36);
  int px = 0;
  for (const auto& p : grid.patches) px += static_cast<int>(p.features.size());
  REQUIRE(px == 256);  // total cover, no overlap
  REQUIRE(grid.patches[0].features.size() == 9);
  REQUIRE(grid.patches[5].features.size() == 3);   // right edge 3x1
  REQUIRE(grid.patches[35].features.size() == 1);  // corner 1x1
}

TEST_CASE("golden mask layout covers everything and is stable", "[masks]") {
  auto masks = build_masks({16, 16, 1}, 3, 9, 4, 7);
  REQUIRE(masks.size() == 9);
  PatchGrid grid = make_patch_grid({16, 16, 1}, 3);
  verify_masks(masks, grid, 4);
  REQUIRE(mask_layout_hash(masks) == mask_layout_hash(build_masks({16, 16, 1}, 3, 9, 4, 7)));
  REQUIRE(mask_layout_hash(masks) != mask_layout_hash(build_masks({16, 16, 1}, 3, 9, 4, 8)));
  // frozen golden layout (integer-derived, platform independent)
  REQUIRE(mask_layout_hash(masks) == "0631612d8ebe00da");
}

TEST_CASE("infeasible budgets are refused with guidance", "[masks]") {
  REQUIRE_THROWS_WITH(build_masks({16, 16, 1}, 3, 8, 4, 0),
                      Catch::Matchers::ContainsSubstring("n >= 9"));
  REQUIRE_THROWS_AS(build_masks({6, 6, 1}, 3, 3, 1, 0), ConfigError);
  REQUIRE_THROWS_AS(build_masks({6, 6, 1}, 0, 4, 1, 0), ConfigError);
}

TEST_CASE("fixed-coverage sweeps pack for n in {4, 8, 16}", "[masks]") {
  for (int n : {4, 8, 16}) {
    int m = (36 + n - 1) / n;
    auto masks = build_masks({16, 16, 1}, 3, n, m, 11);
    REQUIRE(static_cast<int>(masks.size()) == n);
    verify_masks(masks, make_patch_grid({16, 16, 1}, 3), m);
  }
}

TEST_CASE("adjacency can make a sufficient budget unpackable", "[masks]") {
  // 2x2 grid: all four cells touch pairwise, so two-per-mask is impossible
  REQUIRE_THROWS_WITH(build_masks({4, 4, 1}, 2, 2, 2, 5),
                      Catch::Matchers::ContainsSubstring("larger n"));
}

TEST_CASE("greedy fallback handles small n on a line grid", "[masks]") {
  // 1x4 grid of flat chunks: {0,2} and {1,3} are the only valid pairs
  auto masks = build_masks({8}, 2, 2, 2, 5);
  verify_masks(masks, make_patch_grid({8}, 2), 2);
  REQUIRE(masks.size() == 2);
}

TEST_CASE("flat feature groups chunk a vector input", "[masks]") {
  PatchGrid grid = make_patch_grid({10}, 3);
  REQUIRE(grid.patches.size() == 4);
  REQUIRE(grid.patches[3].features == std::vector<int>{9});
  auto masks = build_masks({10}, 3, 4, 1, 1);
  verify_masks(masks, grid, 1);
}
