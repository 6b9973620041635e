#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dance/dataset.hpp"

namespace dance {

// IDX (MNIST-style) files: big-endian dims, u8 payload. Images are rescaled
// to [0, 1] on load.
namespace idx {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

inline uint32_t read_u32be(std::istream& f, const std::string& path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("truncated IDX file '" + path + "'");
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

inline void write_u32be(std::ostream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace idx

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int classes) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw ConfigError("cannot open '" + images_path + "'");
  if (idx::read_u32be(fi, images_path) != idx::kImageMagic)
    throw ConfigError("'" + images_path + "' has a bad IDX image magic number");
  const uint32_t n = idx::read_u32be(fi, images_path);
  const uint32_t h = idx::read_u32be(fi, images_path);
  const uint32_t w = idx::read_u32be(fi, images_path);

  Dataset ds;
  ds.classes = classes;
  ds.images.reserve(n);
  std::vector<unsigned char> row(static_cast<size_t>(h) * w);
  for (uint32_t i = 0; i < n; ++i) {
    if (!fi.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
      throw ConfigError("truncated IDX file '" + images_path + "'");
    Tensor img({static_cast<int>(h), static_cast<int>(w), 1});
    for (size_t k = 0; k < row.size(); ++k) img[static_cast<int>(k)] = row[k] / 255.0;
    ds.images.push_back(std::move(img));
  }

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw ConfigError("cannot open '" + labels_path + "'");
  if (idx::read_u32be(fl, labels_path) != idx::kLabelMagic)
    throw ConfigError("'" + labels_path + "' has a bad IDX label magic number");
  const uint32_t nl = idx::read_u32be(fl, labels_path);
  if (nl != n) throw ConfigError("IDX image/label counts differ");
  ds.labels.resize(nl);
  for (uint32_t i = 0; i < nl; ++i) {
    char b;
    if (!fl.get(b)) throw ConfigError("truncated IDX file '" + labels_path + "'");
    ds.labels[i] = static_cast<unsigned char>(b);
  }
  ds.validate();
  return ds;
}

inline void save_idx(const Dataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
  if (ds.size() == 0) throw ConfigError("refusing to write an empty IDX dataset");
  const auto& shape = ds.images[0].shape();
  if (shape.size() != 3 || shape[2] != 1)
    throw ConfigError("IDX writer expects single-channel {H, W, 1} images");
  std::ofstream fi(images_path, std::ios::binary | std::ios::trunc);
  if (!fi) throw ConfigError("cannot open '" + images_path + "' for writing");
  idx::write_u32be(fi, idx::kImageMagic);
  idx::write_u32be(fi, static_cast<uint32_t>(ds.size()));
  idx::write_u32be(fi, static_cast<uint32_t>(shape[0]));
  idx::write_u32be(fi, static_cast<uint32_t>(shape[1]));
  for (const Tensor& img : ds.images)
    for (int k = 0; k < img.size(); ++k)
      fi.put(static_cast<char>(static_cast<unsigned char>(std::lround(img[k] * 255.0))));

  std::ofstream fl(labels_path, std::ios::binary | std::ios::trunc);
  if (!fl) throw ConfigError("cannot open '" + labels_path + "' for writing");
  idx::write_u32be(fl, idx::kLabelMagic);
  idx::write_u32be(fl, static_cast<uint32_t>(ds.size()));
  for (int y : ds.labels) fl.put(static_cast<char>(static_cast<unsigned char>(y)));
}

}  // namespace dance
