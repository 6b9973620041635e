#pragma once

#include <string>
#include <vector>

#include "dance/aggregate.hpp"
#include "dance/attacks.hpp"
#include "dance/dataset.hpp"
#include "dance/eval.hpp"
#include "dance/parallel.hpp"
#include "dance/theory.hpp"

namespace dance {

// Orchestration used by both the CLI and the acceptance suite. Per-image RNG
// streams derive from (seed, image index), so results never depend on worker
// count or scheduling.

struct FidelityEvalConfig {
  int images = 50;
  double topk_fraction = 0.2;
  std::vector<SaliencyMethod> methods = {SaliencyMethod::vanilla, SaliencyMethod::smoothgrad,
                                         SaliencyMethod::intgrad};
  SaliencyParams saliency;  // template; method/seed overridden per case
  DecoyConfig decoy;
  double noise_sigma_frac = 0.1;  // sigma_b = frac * (value_max - value_min)
  bool ablations = true;
  uint64_t seed = 0;
  int workers = 1;
};

inline double dataset_mean_value(const Dataset& ds) {
  double sum = 0.0;
  long long count = 0;
  for (const Tensor& im : ds.images) {
    for (int i = 0; i < im.size(); ++i) sum += im[i];
    count += im.size();
  }
  if (count == 0) throw ConfigError("empty dataset");
  return sum / static_cast<double>(count);
}

namespace detail {

inline SaliencyParams params_for(const FidelityEvalConfig& cfg, SaliencyMethod method,
                                 uint64_t image) {
  SaliencyParams p = cfg.saliency;
  p.method = method;
  p.seed = derive_stream(cfg.seed, {0x5A11, image});
  return p;
}

}  // namespace detail

// Per image: the three base maps plus the decoy-enhanced variants, each
// binarized at the top-K fraction and scored by fidelity (and overlap when
// ground truth is present).
inline std::vector<EvalRecord> fidelity_records(const Model& model, const Dataset& ds,
                                                const FidelityEvalConfig& cfg) {
  const int count = std::min<int>(cfg.images, static_cast<int>(ds.size()));
  if (count < 1) throw ConfigError("no images to evaluate");
  const double mean_value = dataset_mean_value(ds);
  const double sigma_b = cfg.noise_sigma_frac * (cfg.decoy.value_max - cfg.decoy.value_min);

  std::vector<std::vector<EvalRecord>> slots(static_cast<size_t>(count));
  parallel_for(count, cfg.workers, [&](int img) {
    const Tensor& x = ds.images[static_cast<size_t>(img)];
    const int c = predict(model, x).second;
    DecoyConfig dcfg = cfg.decoy;
    dcfg.seed = derive_stream(cfg.seed, {0xDEC0, static_cast<uint64_t>(img)});
    DecoySet optimized = generate_decoy_set(model, x, dcfg);
    const double feasibility = static_cast<double>(optimized.certified_count()) /
                               static_cast<double>(optimized.decoys.size());
    DecoySet constant;
    DecoySet noise;
    if (cfg.ablations) {
      constant = baseline_decoys(model, x, DecoySource::constant, optimized.masks, dcfg,
                                 mean_value, dcfg.seed);
      noise = baseline_decoys(model, x, DecoySource::noise, optimized.masks, dcfg, sigma_b,
                              derive_stream(cfg.seed, {0x4015E, static_cast<uint64_t>(img)}));
    }

    auto score = [&](const SaliencyMap& raw, const std::string& method_name,
                     const std::string& variant) {
      SaliencyMap binary = topk_binarize(raw, cfg.topk_fraction);
      FidelityResult f = fidelity(model, x, binary.scores);
      EvalRecord r;
      r.image = img;
      r.method = method_name;
      r.variant = variant;
      r.fidelity = f.sf;
      r.clamped = f.clamped;
      r.feasibility_rate = feasibility;
      if (!ds.truth_masks.empty())
        r.overlap = ground_truth_overlap(binary.scores, ds.truth_masks[static_cast<size_t>(img)]);
      slots[static_cast<size_t>(img)].push_back(std::move(r));
    };

    for (SaliencyMethod method : cfg.methods) {
      SaliencyParams p = detail::params_for(cfg, method, static_cast<uint64_t>(img));
      const std::string name = saliency_method_name(method);
      score(compute_saliency(model, x, c, p), name, "original");
      score(dance_score(model, c, optimized, p).map, name, "decoy+range");
      if (cfg.ablations) {
        score(mean_aggregate(model, c, optimized, p).map, name, "decoy+mean");
        score(dance_score(model, c, constant, p).map, name, "constant+range");
        score(dance_score(model, c, noise, p).map, name, "noise+range");
      }
    }
  });

  std::vector<EvalRecord> records;
  for (auto& s : slots)
    for (auto& r : s) records.push_back(std::move(r));
  return records;
}

struct SensitivityEvalConfig {
  int images = 30;
  double topk_fraction = 0.2;
  std::vector<AttackKind> attacks = {AttackKind::topk, AttackKind::target,
                                     AttackKind::mass_center};
  AttackSpec attack;  // template; kind/seed overridden per case
  DecoyConfig decoy;
  uint64_t seed = 0;
  int workers = 1;
};

struct SensitivityOutcome {
  std::vector<EvalRecord> records;
  int label_violations = 0;     // must stay 0: rollback enforces the class
  double max_budget_excess = 0; // max over attacks of ||x^ - x||_inf - eps
};

// Per image and attack: sensitivity of the base method map vs. the
// decoy-enhanced map, with decoys regenerated at the attacked input.
inline SensitivityOutcome sensitivity_records(const Model& model, const Dataset& ds,
                                              const SensitivityEvalConfig& cfg) {
  const int count = std::min<int>(cfg.images, static_cast<int>(ds.size()));
  if (count < 1) throw ConfigError("no images to evaluate");
  struct Slot {
    std::vector<EvalRecord> records;
    int label_violations = 0;
    double budget_excess = 0.0;
  };
  std::vector<Slot> slots(static_cast<size_t>(count));

  parallel_for(count, cfg.workers, [&](int img) {
    const Tensor& x = ds.images[static_cast<size_t>(img)];
    const int c = predict(model, x).second;
    DecoyConfig dcfg = cfg.decoy;
    dcfg.seed = derive_stream(cfg.seed, {0xDEC0, static_cast<uint64_t>(img)});
    DecoySet dec_x = generate_decoy_set(model, x, dcfg);
    SaliencyParams p = cfg.attack.method;
    p.seed = derive_stream(cfg.seed, {0x5A11, static_cast<uint64_t>(img)});
    SaliencyMap map_x = compute_saliency(model, x, c, p);
    AggregateResult z_x = dance_score(model, c, dec_x, p);

    for (AttackKind kind : cfg.attacks) {
      AttackSpec spec = cfg.attack;
      spec.kind = kind;
      spec.method = p;
      spec.seed = derive_stream(cfg.seed, {0xA77C, static_cast<uint64_t>(img)});
      AttackResult atk = run_attack(model, x, spec);
      Slot& slot = slots[static_cast<size_t>(img)];
      if (!atk.label_preserved) ++slot.label_violations;
      slot.budget_excess = std::max(slot.budget_excess, atk.linf_distance - spec.epsilon);
      if (bit_equal(atk.x_hat, x)) continue;  // attack made no progress

      SaliencyMap map_xh = compute_saliency(model, atk.x_hat, c, p);
      DecoySet dec_xh = generate_decoy_set(model, atk.x_hat, dcfg);
      AggregateResult z_xh = dance_score(model, c, dec_xh, p);

      EvalRecord orig;
      orig.image = img;
      orig.method = saliency_method_name(p.method);
      orig.variant = "original";
      orig.attack = attack_kind_name(kind);
      orig.fidelity = 0.0;
      orig.sensitivity = sensitivity(map_x.scores, map_xh.scores, x, atk.x_hat);
      orig.sensitivity_topk = sensitivity_topk(map_x, map_xh, x, atk.x_hat, cfg.topk_fraction);
      slot.records.push_back(std::move(orig));

      EvalRecord enh;
      enh.image = img;
      enh.method = saliency_method_name(p.method);
      enh.variant = "decoy+range";
      enh.attack = attack_kind_name(kind);
      enh.fidelity = 0.0;
      enh.sensitivity = sensitivity(z_x.map.scores, z_xh.map.scores, x, atk.x_hat);
      enh.sensitivity_topk = sensitivity_topk(z_x.map, z_xh.map, x, atk.x_hat, cfg.topk_fraction);
      slot.records.push_back(std::move(enh));
    }
  });

  SensitivityOutcome out;
  for (auto& s : slots) {
    for (auto& r : s.records) out.records.push_back(std::move(r));
    out.label_violations += s.label_violations;
    out.max_budget_excess = std::max(out.max_budget_excess, s.budget_excess);
  }
  return out;
}

// Median SF of decoy-enhanced vanilla maps as the mask count sweeps at fixed
// coverage (m = ceil(patches / n)).
inline std::vector<std::pair<int, double>> stability_sweep(const Model& model, const Dataset& ds,
                                                           const FidelityEvalConfig& base,
                                                           const std::vector<int>& mask_counts) {
  std::vector<std::pair<int, double>> result;
  for (int n : mask_counts) {
    FidelityEvalConfig cfg = base;
    cfg.methods = {SaliencyMethod::vanilla};
    cfg.ablations = false;
    cfg.decoy.n = n;
    const int total = static_cast<int>(
        make_patch_grid(model.spec.input_shape, cfg.decoy.patch).patches.size());
    cfg.decoy.m = (total + n - 1) / n;
    std::vector<EvalRecord> records = fidelity_records(model, ds, cfg);
    std::vector<double> sf;
    for (const EvalRecord& r : records)
      if (r.variant == "decoy+range") sf.push_back(r.fidelity);
    result.emplace_back(n, median(sf));
  }
  return result;
}

}  // namespace dance
