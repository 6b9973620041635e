#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dance/aggregate.hpp"
#include "dance/attacks.hpp"
#include "dance/autodiff.hpp"

namespace dance {

struct Theorem1Row {
  int feature = -1;
  double z = 0.0;         // |E(x+)_i - E(x-)_i| over the decoy pair
  double t = 0.0;         // 0.5 |sum_k (x+_k - x-_k) H_{k,i}|
  double residual = 0.0;  // |z - t|; diagnostic only, C1 is unspecified
};

struct Theorem1Report {
  std::vector<Theorem1Row> rows;  // one per feature in the swappable set K
  double max_residual = 0.0;
};

// Diagnostic for the Hessian bound: compares the two-decoy range Z with the
// second-order term T on the swappable features. Uses the class probability
// by default; the class logit of a relu network is piecewise linear and its
// Hessian vanishes almost everywhere.
inline Theorem1Report theorem1_residual(const Model& model, const Tensor& x,
                                        const Tensor& decoy_plus, const Tensor& decoy_minus,
                                        const std::vector<int>& swappable, const LossSpec& loss,
                                        double h = 1e-3) {
  constexpr int kMaxDim = 64;
  if (x.size() > kMaxDim)
    throw ConfigError("theorem1_residual limited to d <= " + std::to_string(kMaxDim) +
                      " (got d = " + std::to_string(x.size()) + ")");
  require_same_shape(decoy_plus, x, "decoy pair");
  require_same_shape(decoy_minus, x, "decoy pair");

  Tensor ep = grad_wrt_input(model, decoy_plus, loss);
  Tensor em = grad_wrt_input(model, decoy_minus, loss);
  Tensor hess = finite_diff_hessian(model, x, loss, h);

  Theorem1Report report;
  for (int i : swappable) {
    Theorem1Row row;
    row.feature = i;
    row.z = std::abs(ep[i] - em[i]);
    double acc = 0.0;
    for (int k : swappable) acc += (decoy_plus[k] - decoy_minus[k]) * hess.at(k, i);
    row.t = 0.5 * std::abs(acc);
    row.residual = std::abs(row.z - row.t);
    report.max_residual = std::max(report.max_residual, row.residual);
    report.rows.push_back(row);
  }
  return report;
}

struct Prop1Report {
  double satisfaction_rate = 0.0;  // fraction of features obeying the bound
  int features_total = 0;
  int features_satisfied = 0;
  double c2 = 0.0;
  double attack_linf = 0.0;
  bool caps_exact = false;  // every regenerated decoy obeyed its kappa cap
  Tensor delta;             // per-feature attack deviation of the base maps
  Tensor z_gap;             // |Z(x_hat) - Z(x)| per feature
};

// Proposition 1 harness: run the attack, regenerate decoys for x and x_hat
// under the per-feature cap kappa = C2 * delta, and check
// |Z(x_hat)_i - Z(x)_i| <= delta_i + 1e-9 per feature.
inline Prop1Report prop1_check(const Model& model, const Tensor& x, const AttackSpec& attack,
                               double c2, DecoyConfig decoy_cfg, int workers = 1) {
  if (c2 < 0.0) throw ConfigError("C2 must be non-negative");
  AttackResult atk = run_attack(model, x, attack);
  if (linf_norm(atk.delta) == 0.0)
    throw ConfigError("attack produced no saliency deviation (delta is identically zero)");

  Prop1Report report;
  report.c2 = c2;
  report.attack_linf = atk.linf_distance;
  report.delta = atk.delta;

  decoy_cfg.cap = scaled(atk.delta, c2);
  const int c = predict(model, x).second;
  DecoySet dx = generate_decoy_set(model, x, decoy_cfg, workers);
  DecoySet dxh = generate_decoy_set(model, atk.x_hat, decoy_cfg, workers);

  report.caps_exact = true;
  for (const auto& [set, base] : {std::pair<const DecoySet&, const Tensor&>{dx, x},
                                  std::pair<const DecoySet&, const Tensor&>{dxh, atk.x_hat}})
    for (const Decoy& d : set.decoys)
      for (int i = 0; i < base.size(); ++i)
        if (std::abs(d.x[i] - base[i]) > decoy_cfg.cap[i]) report.caps_exact = false;

  const LossSpec score = attack.probability_score ? LossSpec::probability(c) : LossSpec::logit(c);
  AggregateResult zx = dance_score_loss(model, score, dx, attack.method);
  AggregateResult zxh = dance_score_loss(model, score, dxh, attack.method);

  report.z_gap = Tensor(x.shape());
  report.features_total = x.size();
  for (int i = 0; i < x.size(); ++i) {
    report.z_gap[i] = std::abs(zxh.map.scores[i] - zx.map.scores[i]);
    if (report.z_gap[i] <= atk.delta[i] + 1e-9) ++report.features_satisfied;
  }
  report.satisfaction_rate =
      static_cast<double>(report.features_satisfied) / static_cast<double>(report.features_total);
  return report;
}

}  // namespace dance
