#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "dance/autodiff.hpp"
#include "dance/hash.hpp"
#include "dance/rng.hpp"

namespace dance {

enum class SaliencyMethod { vanilla, smoothgrad, intgrad };

inline const char* saliency_method_name(SaliencyMethod m) {
  switch (m) {
    case SaliencyMethod::vanilla: return "vanilla";
    case SaliencyMethod::smoothgrad: return "smoothgrad";
    case SaliencyMethod::intgrad: return "intgrad";
  }
  return "?";
}

struct SaliencyParams {
  SaliencyMethod method = SaliencyMethod::vanilla;
  int samples = 25;       // smoothgrad N
  double sigma = 0.1;     // smoothgrad noise std
  int steps = 32;         // intgrad quadrature steps
  Tensor baseline;        // intgrad x0; empty means all-zeros
  uint64_t seed = 0;

  std::string hash() const {
    std::string s = std::string(saliency_method_name(method)) + "|" + std::to_string(samples) +
                    "|" + std::to_string(sigma) + "|" + std::to_string(steps) + "|" +
                    std::to_string(seed) + "|" + (baseline.empty() ? "zeros" : hash_hex(baseline.vec()));
    return hash_hex(s);
  }
};

struct SaliencyMap {
  Tensor scores;  // input-shaped, signed (not absolute-valued)
  SaliencyMethod method = SaliencyMethod::vanilla;
  int class_index = -1;
  std::string params_hash;
};

// Generic drivers take a LossSpec so the closed-form quadratic oracles can run
// through the identical code path; the class-c entry points below fix the loss
// to the pre-softmax logit.

inline SaliencyMap vanilla_gradient_loss(const Model& model, const Tensor& x, const LossSpec& loss,
                                         const ForwardOptions& opts = {}) {
  SaliencyMap map;
  map.scores = grad_wrt_input(model, x, loss, opts);
  map.method = SaliencyMethod::vanilla;
  map.class_index = loss.class_index;
  map.params_hash = SaliencyParams{}.hash();
  return map;
}

inline SaliencyMap smoothgrad_loss(const Model& model, const Tensor& x, const LossSpec& loss,
                                   const SaliencyParams& params, const ForwardOptions& opts = {}) {
  if (params.samples < 1) throw ConfigError("smoothgrad needs at least one sample");
  if (params.sigma < 0.0) throw ConfigError("smoothgrad sigma must be non-negative");
  SaliencyMap map;
  map.method = SaliencyMethod::smoothgrad;
  map.class_index = loss.class_index;
  map.params_hash = params.hash();
  if (params.sigma == 0.0) {
    // noise vectors are exactly zero; the mean of identical maps is that map
    map.scores = grad_wrt_input(model, x, loss, opts);
    return map;
  }
  Tensor sum(x.shape());
  for (int s = 0; s < params.samples; ++s) {
    Rng rng(derive_stream(params.seed, {0x56, static_cast<uint64_t>(s)}));
    Tensor noisy = x;
    for (int i = 0; i < noisy.size(); ++i) noisy[i] += rng.normal(0.0, params.sigma);
    axpy(sum, 1.0, grad_wrt_input(model, noisy, loss, opts));
  }
  map.scores = scaled(sum, 1.0 / params.samples);
  return map;
}

// Midpoint-rule integrated gradients: (x - x0) .* mean_k grad F(x0 + a_k (x - x0))
// with a_k = (k - 1/2)/steps.
inline SaliencyMap integrated_gradients_loss(const Model& model, const Tensor& x,
                                             const LossSpec& loss, const SaliencyParams& params,
                                             const ForwardOptions& opts = {}) {
  if (params.steps < 1) throw ConfigError("integrated gradients needs at least one step");
  Tensor baseline = params.baseline.empty() ? Tensor(x.shape()) : params.baseline;
  require_same_shape(baseline, x, "intgrad baseline");
  Tensor path = sub(x, baseline);
  Tensor sum(x.shape());
  Tensor point(x.shape());
  for (int k = 0; k < params.steps; ++k) {
    const double alpha = (k + 0.5) / params.steps;
    for (int i = 0; i < point.size(); ++i) point[i] = baseline[i] + alpha * path[i];
    axpy(sum, 1.0, grad_wrt_input(model, point, loss, opts));
  }
  SaliencyMap map;
  map.scores = hadamard(path, scaled(sum, 1.0 / params.steps));
  map.method = SaliencyMethod::intgrad;
  map.class_index = loss.class_index;
  map.params_hash = params.hash();
  return map;
}

inline SaliencyMap compute_saliency_loss(const Model& model, const Tensor& x, const LossSpec& loss,
                                         const SaliencyParams& params,
                                         const ForwardOptions& opts = {}) {
  switch (params.method) {
    case SaliencyMethod::vanilla: return vanilla_gradient_loss(model, x, loss, opts);
    case SaliencyMethod::smoothgrad: return smoothgrad_loss(model, x, loss, params, opts);
    case SaliencyMethod::intgrad: return integrated_gradients_loss(model, x, loss, params, opts);
  }
  throw ConfigError("unknown saliency method");
}

// Class-score entry points. Gradients are taken of the pre-softmax logit;
// softmax saturation would otherwise flatten every map.
inline SaliencyMap vanilla_gradient(const Model& model, const Tensor& x, int c) {
  return vanilla_gradient_loss(model, x, LossSpec::logit(c));
}

inline SaliencyMap smoothgrad(const Model& model, const Tensor& x, int c,
                              const SaliencyParams& params) {
  return smoothgrad_loss(model, x, LossSpec::logit(c), params);
}

inline SaliencyMap integrated_gradients(const Model& model, const Tensor& x, int c,
                                        const SaliencyParams& params) {
  return integrated_gradients_loss(model, x, LossSpec::logit(c), params);
}

inline SaliencyMap compute_saliency(const Model& model, const Tensor& x, int c,
                                    const SaliencyParams& params) {
  return compute_saliency_loss(model, x, LossSpec::logit(c), params);
}

// Keeps exactly K = floor(fraction * d) features, ranked by raw score; ties at
// the threshold go to the lowest feature index.
inline SaliencyMap topk_binarize(const SaliencyMap& map, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("top-K fraction must be in (0, 1]");
  const int d = map.scores.size();
  const int k = static_cast<int>(fraction * d);
  std::vector<int> idx(static_cast<size_t>(d));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return map.scores[a] > map.scores[b]; });
  SaliencyMap out = map;
  out.scores = Tensor(map.scores.shape());
  for (int r = 0; r < k; ++r) out.scores[idx[static_cast<size_t>(r)]] = 1.0;
  return out;
}

}  // namespace dance
