#pragma once

#include <vector>

#include "dance/errors.hpp"
#include "dance/tensor.hpp"

namespace dance {

struct Dataset {
  std::vector<Tensor> images;       // each {H, W, C} or {d}
  std::vector<int> labels;          // in [0, classes)
  std::vector<Tensor> truth_masks;  // optional, binary, image-shaped
  int classes = 0;
  double value_min = 0.0;
  double value_max = 1.0;

  size_t size() const { return images.size(); }

  void validate() const {
    if (images.size() != labels.size()) throw ConfigError("dataset: image/label count mismatch");
    if (!truth_masks.empty() && truth_masks.size() != images.size())
      throw ConfigError("dataset: truth mask count mismatch");
    for (int y : labels)
      if (y < 0 || y >= classes) throw ConfigError("dataset: label out of range");
    for (const Tensor& im : images) {
      if (!im.all_finite()) throw ConfigError("dataset: non-finite image values");
      for (int i = 0; i < im.size(); ++i)
        if (im[i] < value_min || im[i] > value_max)
          throw ConfigError("dataset: values outside declared range");
    }
  }
};

}  // namespace dance
