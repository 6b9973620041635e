#pragma once

#include <string>
#include <vector>

#include "dance/decoy.hpp"
#include "dance/saliency.hpp"

namespace dance {

enum class AggregationKind { range, mean };

inline const char* aggregation_name(AggregationKind k) {
  return k == AggregationKind::range ? "range" : "mean";
}

struct AggregateResult {
  SaliencyMap map;  // Z for range aggregation, the mean map otherwise
  Tensor per_feature_min;
  Tensor per_feature_max;
  AggregationKind kind = AggregationKind::range;
  DecoySource source = DecoySource::optimized;
  int decoys_used = 0;
};

namespace detail {

// Saliency maps of the usable decoys. Optimized sets contribute certified
// decoys only; baseline sets bypass that filter by construction.
inline std::vector<Tensor> decoy_maps(const Model& model, const LossSpec& loss,
                                      const DecoySet& decoys, const SaliencyParams& params,
                                      const ForwardOptions& opts) {
  std::vector<Tensor> maps;
  for (const Decoy& d : decoys.decoys) {
    if (decoys.source == DecoySource::optimized && !d.cert.certified) continue;
    maps.push_back(compute_saliency_loss(model, d.x, loss, params, opts).scores);
  }
  if (maps.size() < 2)
    throw ConfigError("need at least 2 certified decoys for aggregation (have " +
                      std::to_string(maps.size()) + "); raise epsilon or the mask count n");
  return maps;
}

inline AggregateResult aggregate(const Model& model, const LossSpec& loss, const DecoySet& decoys,
                                 const SaliencyParams& params, AggregationKind kind,
                                 const ForwardOptions& opts) {
  std::vector<Tensor> maps = detail::decoy_maps(model, loss, decoys, params, opts);
  AggregateResult res;
  res.kind = kind;
  res.source = decoys.source;
  res.decoys_used = static_cast<int>(maps.size());
  res.per_feature_min = maps[0];
  res.per_feature_max = maps[0];
  Tensor sum = maps[0];
  for (size_t j = 1; j < maps.size(); ++j)
    for (int i = 0; i < sum.size(); ++i) {
      const double v = maps[j][i];
      res.per_feature_min[i] = std::min(res.per_feature_min[i], v);
      res.per_feature_max[i] = std::max(res.per_feature_max[i], v);
      sum[i] += v;
    }
  res.map.method = params.method;
  res.map.class_index = loss.class_index;
  res.map.params_hash = params.hash();
  if (kind == AggregationKind::range) {
    res.map.scores = sub(res.per_feature_max, res.per_feature_min);
  } else {
    res.map.scores = scaled(sum, 1.0 / static_cast<double>(maps.size()));
  }
  return res;
}

}  // namespace detail

/// Decoy-enhanced score: per-feature range Z_i = max - min of the decoy
/// saliency scores.
inline AggregateResult dance_score_loss(const Model& model, const LossSpec& loss,
                                        const DecoySet& decoys, const SaliencyParams& params,
                                        const ForwardOptions& opts = {}) {
  return detail::aggregate(model, loss, decoys, params, AggregationKind::range, opts);
}

inline AggregateResult dance_score(const Model& model, int c, const DecoySet& decoys,
                                   const SaliencyParams& params) {
  return dance_score_loss(model, LossSpec::logit(c), decoys, params);
}

// Ablation baseline: per-feature mean of the decoy maps.
inline AggregateResult mean_aggregate_loss(const Model& model, const LossSpec& loss,
                                           const DecoySet& decoys, const SaliencyParams& params,
                                           const ForwardOptions& opts = {}) {
  return detail::aggregate(model, loss, decoys, params, AggregationKind::mean, opts);
}

inline AggregateResult mean_aggregate(const Model& model, int c, const DecoySet& decoys,
                                      const SaliencyParams& params) {
  return mean_aggregate_loss(model, LossSpec::logit(c), decoys, params);
}

}  // namespace dance
