#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "dance/hash.hpp"
#include "dance/rng.hpp"
#include "dance/tensor.hpp"

namespace dance {

struct FeatureGroup {
  std::vector<int> features;  // flat input indices, sorted, no duplicates
};

struct Mask {
  Tensor m;  // binary, input-shaped
  std::vector<FeatureGroup> groups;
  std::vector<int> patch_ids;  // grid ids covered by this mask
};

// Stride-P tiling over the image; remainder rows/columns become smaller edge
// patches so every pixel belongs to exactly one patch. A patch spans all
// channels of its pixel block.
struct PatchGrid {
  int rows = 0, cols = 0;  // grid dimensions
  int patch = 0;
  std::vector<int> input_shape;
  std::vector<FeatureGroup> patches;  // scan order, rows * cols entries
};

inline PatchGrid make_patch_grid(const std::vector<int>& input_shape, int patch) {
  if (patch < 1) throw ConfigError("patch size must be positive");
  if (input_shape.size() != 3 && input_shape.size() != 1)
    throw ConfigError("patch grid needs {H, W, C} or flat {d} input");
  PatchGrid grid;
  grid.patch = patch;
  grid.input_shape = input_shape;
  if (input_shape.size() == 1) {
    // flat input: contiguous runs of length patch act as generic feature groups
    const int d = input_shape[0];
    grid.rows = 1;
    grid.cols = (d + patch - 1) / patch;
    for (int c = 0; c < grid.cols; ++c) {
      FeatureGroup g;
      for (int i = c * patch; i < std::min((c + 1) * patch, d); ++i) g.features.push_back(i);
      grid.patches.push_back(std::move(g));
    }
    return grid;
  }
  const int h = input_shape[0], w = input_shape[1], ch = input_shape[2];
  grid.rows = (h + patch - 1) / patch;
  grid.cols = (w + patch - 1) / patch;
  for (int gr = 0; gr < grid.rows; ++gr)
    for (int gc = 0; gc < grid.cols; ++gc) {
      FeatureGroup g;
      for (int y = gr * patch; y < std::min((gr + 1) * patch, h); ++y)
        for (int x = gc * patch; x < std::min((gc + 1) * patch, w); ++x)
          for (int c = 0; c < ch; ++c) g.features.push_back((y * w + x) * ch + c);
      grid.patches.push_back(std::move(g));
    }
  return grid;
}

namespace detail {

// Patches touch when their grid cells are within Chebyshev distance 1; masks
// only aggregate patches that do not touch.
inline bool cells_adjacent(int a, int b, int cols) {
  int ra = a / cols, ca = a % cols, rb = b / cols, cb = b % cols;
  return std::max(std::abs(ra - rb), std::abs(ca - cb)) <= 1;
}

inline Mask assemble_mask(const PatchGrid& grid, std::vector<int> patch_ids) {
  std::sort(patch_ids.begin(), patch_ids.end());
  Mask mask;
  mask.m = Tensor(grid.input_shape);
  for (int pid : patch_ids) {
    const FeatureGroup& g = grid.patches[static_cast<size_t>(pid)];
    for (int f : g.features) mask.m[f] = 1.0;
    mask.groups.push_back(g);
  }
  mask.patch_ids = std::move(patch_ids);
  return mask;
}

inline std::vector<std::vector<int>> try_affine_coloring(const PatchGrid& grid, int n, int m) {
  if (n < 4) return {};
  std::vector<std::vector<int>> classes(static_cast<size_t>(n));
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c)
      classes[static_cast<size_t>((2 * r + c) % n)].push_back(r * grid.cols + c);
  for (const auto& cls : classes)
    if (static_cast<int>(cls.size()) > m) return {};
  return classes;
}

inline std::vector<std::vector<int>> try_modk_partition(const PatchGrid& grid, int n, int m) {
  int k = 0;
  for (int q = 2; q * q <= n; ++q)
    if (q * q == n) k = q;
  if (k < 2) return {};
  if (((grid.rows + k - 1) / k) * ((grid.cols + k - 1) / k) > m) return {};
  std::vector<std::vector<int>> classes(static_cast<size_t>(n));
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c)
      classes[static_cast<size_t>((r % k) * k + (c % k))].push_back(r * grid.cols + c);
  return classes;
}

inline std::vector<std::vector<int>> try_greedy_packing(const PatchGrid& grid, int n, int m,
                                                        uint64_t seed) {
  const int total = static_cast<int>(grid.patches.size());
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_stream(seed, {0x6EED, attempt}));
    std::vector<int> order(static_cast<size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int>> masks(static_cast<size_t>(n));
    bool ok = true;
    for (int pid : order) {
      // fewest-loaded mask that stays non-adjacent
      int best = -1;
      for (int mi = 0; mi < n; ++mi) {
        auto& cur = masks[static_cast<size_t>(mi)];
        if (static_cast<int>(cur.size()) >= m) continue;
        bool clash = false;
        for (int other : cur)
          if (cells_adjacent(pid, other, grid.cols)) {
            clash = true;
            break;
          }
        if (clash) continue;
        if (best < 0 || cur.size() < masks[static_cast<size_t>(best)].size()) best = mi;
      }
      if (best < 0) {
        ok = false;
        break;
      }
      masks[static_cast<size_t>(best)].push_back(pid);
    }
    if (ok) return masks;
  }
  return {};
}

}  // namespace detail

// Builds n masks of at most m pairwise non-adjacent patches covering every
// patch at least once, deterministically per seed.
inline std::vector<Mask> build_masks(const std::vector<int>& input_shape, int patch, int n, int m,
                                     uint64_t seed) {
  if (n < 1 || m < 1) throw ConfigError("mask count and patches-per-mask must be positive");
  PatchGrid grid = make_patch_grid(input_shape, patch);
  const int total = static_cast<int>(grid.patches.size());
  if (static_cast<long long>(n) * m < total)
    throw ConfigError("mask budget n*m = " + std::to_string(static_cast<long long>(n) * m) +
                      " cannot cover " + std::to_string(total) +
                      " patches; use n >= " + std::to_string((total + m - 1) / m));

  std::vector<std::vector<int>> assignment;
  if (n >= total) {
    // singleton masks; extra masks revisit patches round-robin
    std::vector<int> order(static_cast<size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_stream(seed, {0x51, 0}));
    rng.shuffle(order);
    assignment.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) assignment[static_cast<size_t>(i)] = {order[static_cast<size_t>(i % total)]};
  } else {
    assignment = detail::try_modk_partition(grid, n, m);
    if (assignment.empty()) assignment = detail::try_affine_coloring(grid, n, m);
    if (assignment.empty()) assignment = detail::try_greedy_packing(grid, n, m, seed);
    if (assignment.empty())
      throw ConfigError("could not pack " + std::to_string(total) + " patches into " +
                        std::to_string(n) + " masks of " + std::to_string(m) +
                        " non-adjacent patches; use a larger n");
    // seeded relabeling keeps the layout a function of the seed
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_stream(seed, {0x52, 0}));
    rng.shuffle(perm);
    std::vector<std::vector<int>> shuffled(static_cast<size_t>(n));
    for (size_t i = 0; i < static_cast<size_t>(n); ++i)
      shuffled[i] = std::move(assignment[static_cast<size_t>(perm[i])]);
    assignment = std::move(shuffled);
  }

  std::vector<Mask> masks;
  masks.reserve(static_cast<size_t>(n));
  for (auto& ids : assignment) masks.push_back(detail::assemble_mask(grid, std::move(ids)));
  return masks;
}

inline int min_masks_for_coverage(const std::vector<int>& input_shape, int patch, int m) {
  PatchGrid grid = make_patch_grid(input_shape, patch);
  const int total = static_cast<int>(grid.patches.size());
  return (total + m - 1) / m;
}

// Layout hash over (mask id, patch ids); integer-only, so stable across
// platforms.
inline std::string mask_layout_hash(const std::vector<Mask>& masks) {
  std::string repr;
  for (size_t i = 0; i < masks.size(); ++i) {
    repr += std::to_string(i) + ":";
    for (int pid : masks[i].patch_ids) repr += std::to_string(pid) + ",";
    repr += ";";
  }
  return hash_hex(repr);
}

// Coverage check used by tests and the decoy pipeline: every patch in at
// least one mask, non-adjacency inside each mask, size caps.
inline void verify_masks(const std::vector<Mask>& masks, const PatchGrid& grid, int m) {
  std::vector<bool> covered(grid.patches.size(), false);
  for (const Mask& mask : masks) {
    if (static_cast<int>(mask.patch_ids.size()) > m)
      throw ConfigError("mask exceeds patches-per-mask cap");
    for (size_t a = 0; a < mask.patch_ids.size(); ++a) {
      covered[static_cast<size_t>(mask.patch_ids[a])] = true;
      for (size_t b = a + 1; b < mask.patch_ids.size(); ++b)
        if (detail::cells_adjacent(mask.patch_ids[a], mask.patch_ids[b], grid.cols))
          throw ConfigError("adjacent patches aggregated into one mask");
    }
  }
  for (size_t p = 0; p < covered.size(); ++p)
    if (!covered[p]) throw ConfigError("patch " + std::to_string(p) + " not covered by any mask");
}

}  // namespace dance
