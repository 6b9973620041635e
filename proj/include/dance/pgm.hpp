#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "dance/tensor.hpp"

namespace dance {

enum class RenderStyle { grayscale, signed_diverging };

// Binary PGM (P5), 8-bit. grayscale: min-max scaled; signed: symmetric scale
// centered on zero. A constant map renders uniform mid-gray.
inline std::string render_map_bytes(const Tensor& map, RenderStyle style) {
  if (map.rank() != 2 && !(map.rank() == 3 && map.shape()[2] == 1))
    throw ConfigError("render_map expects a 2-d map");
  const int h = map.shape()[0], w = map.shape()[1];
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  double lo = map[0], hi = map[0];
  for (int i = 0; i < map.size(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  for (int i = 0; i < map.size(); ++i) {
    int px;
    if (style == RenderStyle::grayscale) {
      px = hi > lo ? static_cast<int>(std::lround((map[i] - lo) / (hi - lo) * 255.0)) : 128;
    } else {
      double scale = std::max(std::abs(lo), std::abs(hi));
      px = scale > 0.0 ? static_cast<int>(std::lround(128.0 + map[i] / scale * 127.0)) : 128;
    }
    out.push_back(static_cast<char>(std::clamp(px, 0, 255)));
  }
  return out;
}

inline void render_map(const Tensor& map, const std::string& path, RenderStyle style) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  const std::string bytes = render_map_bytes(map, style);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dance
