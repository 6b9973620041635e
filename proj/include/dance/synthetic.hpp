#pragma once

#include <algorithm>
#include <cmath>

#include "dance/dataset.hpp"
#include "dance/rng.hpp"

namespace dance {

// Two-class shapes data: a filled square vs. a cross at random position and
// size, drawn over clipped Gaussian background noise. The truth mask marks
// the shape pixels, so top-K alignment can be scored against known ground
// truth. Values are quantized to the u8 grid so IDX round trips are exact.
struct SyntheticConfig {
  int count = 100;
  int height = 16;
  int width = 16;
  double background_sigma = 0.1;
  double shape_min_intensity = 0.7;
  double shape_max_intensity = 1.0;
  uint64_t seed = 0;
};

namespace detail {

inline double quantize_u8(double v) { return std::round(v * 255.0) / 255.0; }

}  // namespace detail

inline Dataset make_synthetic(const SyntheticConfig& cfg) {
  if (cfg.height < 8 || cfg.width < 8) throw ConfigError("synthetic images must be at least 8x8");
  Dataset ds;
  ds.classes = 2;
  ds.value_min = 0.0;
  ds.value_max = 1.0;
  ds.images.reserve(static_cast<size_t>(cfg.count));
  for (int idx = 0; idx < cfg.count; ++idx) {
    Rng rng(derive_stream(cfg.seed, {0x5B47, static_cast<uint64_t>(idx)}));
    const int h = cfg.height, w = cfg.width;
    Tensor img({h, w, 1});
    Tensor truth({h, w, 1});
    for (int i = 0; i < img.size(); ++i)
      img[i] = detail::quantize_u8(std::clamp(rng.normal(0.0, cfg.background_sigma), 0.0, 1.0));

    int label = idx % 2;  // balanced classes
    int side = 5 + rng.uniform_int(4);  // 5..8
    int r0 = rng.uniform_int(h - side + 1);
    int c0 = rng.uniform_int(w - side + 1);
    double intensity =
        detail::quantize_u8(rng.uniform(cfg.shape_min_intensity, cfg.shape_max_intensity));

    if (label == 0) {
      for (int r = r0; r < r0 + side; ++r)
        for (int c = c0; c < c0 + side; ++c) {
          img.at(r, c, 0) = intensity;
          truth.at(r, c, 0) = 1.0;
        }
    } else {
      // cross: centered horizontal and vertical bars of the bounding box
      int thick = std::max(1, side / 4);
      int rm = r0 + (side - thick) / 2;
      int cm = c0 + (side - thick) / 2;
      for (int r = r0; r < r0 + side; ++r)
        for (int c = cm; c < cm + thick; ++c) {
          img.at(r, c, 0) = intensity;
          truth.at(r, c, 0) = 1.0;
        }
      for (int r = rm; r < rm + thick; ++r)
        for (int c = c0; c < c0 + side; ++c) {
          img.at(r, c, 0) = intensity;
          truth.at(r, c, 0) = 1.0;
        }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
    ds.truth_masks.push_back(std::move(truth));
  }
  return ds;
}

}  // namespace dance
