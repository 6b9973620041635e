#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dance/saliency.hpp"

namespace dance {

enum class AttackKind { topk, target, mass_center };

inline const char* attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::topk: return "topk";
    case AttackKind::target: return "target";
    case AttackKind::mass_center: return "mass-center";
  }
  return "?";
}

struct Region {
  int row0 = 0, col0 = 0, rows = 0, cols = 0;
};

struct AttackSpec {
  AttackKind kind = AttackKind::topk;
  double epsilon = 0.05;  // linf budget
  double step = 0.005;
  int iterations = 50;
  double k_fraction = 0.2;          // topk
  std::optional<Region> region;     // target; default bottom-right quarter
  SaliencyParams method;            // saliency method under attack
  bool probability_score = false;   // attack maps of F^c = p_c instead of the logit
  double softplus_tau = 0.1;        // relu smoothing for attack gradients
  double fd_step = 1e-4;            // hessian-vector probes
  double value_min = 0.0, value_max = 1.0;
  uint64_t seed = 0;

  void validate(const std::vector<int>& input_shape) const {
    if (epsilon < 0.0) throw ConfigError("attack budget must be non-negative");
    if (step <= 0.0 || iterations < 0) throw ConfigError("bad attack step/iterations");
    if (k_fraction <= 0.0 || k_fraction > 1.0) throw ConfigError("top-k fraction out of range");
    if (region) {
      if (input_shape.size() != 3) throw ConfigError("target region needs an image input");
      if (region->row0 < 0 || region->col0 < 0 || region->rows < 1 || region->cols < 1 ||
          region->row0 + region->rows > input_shape[0] ||
          region->col0 + region->cols > input_shape[1])
        throw ConfigError("target region outside image bounds");
    }
  }
};

struct AttackResult {
  Tensor x_hat;
  std::vector<double> objective_trace;  // evaluated on the real (unsmoothed) maps
  double best_objective = 0.0;
  bool label_preserved = true;
  double linf_distance = 0.0;
  Tensor delta;  // |E(x_hat) - E(x)| elementwise, real maps
  int attacked_class = -1;
};

/// Intensity-weighted centroid of |map| in pixel units (row, col).
inline std::array<double, 2> mass_center(const Tensor& map) {
  if (map.rank() != 2 && !(map.rank() == 3 && map.shape()[2] == 1))
    throw ConfigError("mass_center expects a 2-d map");
  const int h = map.shape()[0], w = map.shape()[1];
  double total = 0.0, mr = 0.0, mc = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double v = std::abs(map[r * w + c]);
      total += v;
      mr += v * r;
      mc += v * c;
    }
  if (total == 0.0) throw ConfigError("mass_center of an all-zero map");
  return {mr / total, mc / total};
}

namespace detail {

struct AttackObjective {
  AttackKind kind;
  std::vector<int> feature_set;       // topk indices or target region indices
  std::array<double, 2> base_center;  // mass-center attack reference
  int h = 0, w = 0;

  // maximized by the attack loop (topk objective enters negated)
  double value(const Tensor& map) const {
    switch (kind) {
      case AttackKind::topk: {
        double s = 0.0;
        for (int i : feature_set) s += std::abs(map[i]);
        return -s;
      }
      case AttackKind::target: {
        double s = 0.0;
        for (int i : feature_set) s += std::abs(map[i]);
        return s;
      }
      case AttackKind::mass_center: {
        auto c = mass_center(map);
        const double dr = c[0] - base_center[0], dc = c[1] - base_center[1];
        return dr * dr + dc * dc;
      }
    }
    return 0.0;
  }

  // d value / d map
  Tensor grad(const Tensor& map) const {
    Tensor g(map.shape());
    auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    switch (kind) {
      case AttackKind::topk:
        for (int i : feature_set) g[i] = -sgn(map[i]);
        break;
      case AttackKind::target:
        for (int i : feature_set) g[i] = sgn(map[i]);
        break;
      case AttackKind::mass_center: {
        double total = 0.0, mr = 0.0, mc = 0.0;
        for (int r = 0; r < h; ++r)
          for (int c = 0; c < w; ++c) {
            const double v = std::abs(map[r * w + c]);
            total += v;
            mr += v * r;
            mc += v * c;
          }
        if (total == 0.0) return g;
        const double cr = mr / total, cc = mc / total;
        double dr = cr - base_center[0], dc = cc - base_center[1];
        if (dr * dr + dc * dc < 1e-12) {
          // centered start: kick toward the bottom-right corner
          dr = 1.0;
          dc = 1.0;
        }
        for (int r = 0; r < h; ++r)
          for (int c = 0; c < w; ++c) {
            const int i = r * w + c;
            const double dcenter = 2.0 * (dr * (r - cr) + dc * (c - cc)) / total;
            g[i] = dcenter * sgn(map[i]);
          }
        break;
      }
    }
    return g;
  }
};

}  // namespace detail

// Iterative sign-gradient attack, projected onto the linf ball and value box
// each step; steps that change the predicted class roll back with a halved
// step. Gradients of the saliency map flow through a softplus-smoothed clone
// of the network (relu has zero curvature almost everywhere), as
// hessian-vector products via central differences of the map.
inline AttackResult run_attack(const Model& model, const Tensor& x, const AttackSpec& spec,
                               std::optional<int> expected_label = {}) {
  spec.validate(model.spec.input_shape);
  const auto [probs0, c] = predict(model, x);
  if (expected_label && *expected_label != c)
    throw ConfigError("input is misclassified (predicted " + std::to_string(c) + ", label " +
                      std::to_string(*expected_label) + "); refusing to attack");

  AttackResult res;
  res.attacked_class = c;
  const LossSpec score = spec.probability_score ? LossSpec::probability(c) : LossSpec::logit(c);
  SaliencyMap base = compute_saliency_loss(model, x, score, spec.method);

  if (spec.epsilon == 0.0 || spec.iterations == 0) {
    res.x_hat = x;
    res.delta = Tensor(x.shape());
    return res;
  }

  detail::AttackObjective obj;
  obj.kind = spec.kind;
  if (spec.kind == AttackKind::topk) {
    const int k = std::max(1, static_cast<int>(spec.k_fraction * x.size()));
    std::vector<int> idx(static_cast<size_t>(x.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return std::abs(base.scores[a]) > std::abs(base.scores[b]);
    });
    obj.feature_set.assign(idx.begin(), idx.begin() + k);
  } else if (spec.kind == AttackKind::target) {
    if (model.spec.input_shape.size() != 3)
      throw ConfigError("target attack needs an image input");
    const int h = model.spec.input_shape[0], w = model.spec.input_shape[1];
    const int ch = model.spec.input_shape[2];
    Region region = spec.region.value_or(Region{h / 2, w / 2, h - h / 2, w - w / 2});
    for (int r = region.row0; r < region.row0 + region.rows; ++r)
      for (int cc = region.col0; cc < region.col0 + region.cols; ++cc)
        for (int k = 0; k < ch; ++k) obj.feature_set.push_back((r * w + cc) * ch + k);
  } else {
    obj.h = model.spec.input_shape[0];
    obj.w = model.spec.input_shape[1];
    obj.base_center = mass_center(base.scores);
  }

  const ForwardOptions smooth{spec.softplus_tau};
  auto smooth_map = [&](const Tensor& at) {
    return compute_saliency_loss(model, at, score, spec.method, smooth).scores;
  };
  auto real_objective = [&](const Tensor& at) {
    return obj.value(compute_saliency_loss(model, at, score, spec.method).scores);
  };

  Tensor xh = x;
  Tensor best = x;
  double best_obj = real_objective(x);
  res.objective_trace.push_back(best_obj);
  double step = spec.step;

  for (int it = 0; it < spec.iterations; ++it) {
    // v = d obj / d map at the smoothed map; grad wrt input is H x v
    Tensor v = obj.grad(smooth_map(xh));
    const double vn = l2_norm(v);
    if (vn == 0.0) break;
    for (int i = 0; i < v.size(); ++i) v[i] /= vn;
    Tensor plus = xh, minus = xh;
    axpy(plus, spec.fd_step, v);
    axpy(minus, -spec.fd_step, v);
    // d obj / d x = J_E^T v; the map Jacobian is the (symmetric) Hessian of
    // F^c for gradient-mean maps, so the directional probe J_E v suffices
    Tensor g = scaled(sub(smooth_map(plus), smooth_map(minus)), 1.0 / (2.0 * spec.fd_step));
    if (linf_norm(g) == 0.0) break;

    Tensor cand = xh;
    for (int i = 0; i < cand.size(); ++i) {
      const double dir = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      double val = cand[i] + step * dir;
      val = std::clamp(val, x[i] - spec.epsilon, x[i] + spec.epsilon);
      val = std::clamp(val, spec.value_min, spec.value_max);
      cand[i] = val;
    }

    if (predict(model, cand).second != c) {
      step *= 0.5;  // rolled back: the class must not change
      if (step < spec.step * 1e-3) break;
      continue;
    }
    xh = std::move(cand);
    const double cur = real_objective(xh);
    res.objective_trace.push_back(cur);
    if (cur > best_obj) {
      best_obj = cur;
      best = xh;
    }
  }

  res.x_hat = std::move(best);
  res.best_objective = best_obj;
  res.label_preserved = predict(model, res.x_hat).second == c;
  res.linf_distance = max_abs_diff(res.x_hat, x);
  SaliencyMap after = compute_saliency_loss(model, res.x_hat, score, spec.method);
  res.delta = Tensor(x.shape());
  for (int i = 0; i < x.size(); ++i)
    res.delta[i] = std::abs(after.scores[i] - base.scores[i]);
  return res;
}

}  // namespace dance
