#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dance/autodiff.hpp"
#include "dance/log.hpp"
#include "dance/masks.hpp"
#include "dance/parallel.hpp"
#include "dance/serialize.hpp"

namespace dance {

struct DecoyConfig {
  int layer = 1;  // tap index ell; decoys preserve F_ell within epsilon
  double epsilon = 0.1;
  bool epsilon_relative = true;  // relative to ||F_ell(x)||_inf
  double value_min = 0.0;
  double value_max = 1.0;
  int n = 8;  // requested mask count; raised to the coverage minimum if short
  int m = 4;  // patches aggregated per mask
  int patch = 3;
  int iterations = 200;
  double step_frac = 0.05;  // step size as a fraction of (value_max - value_min)
  double lambda0 = 10.0;
  double lambda_growth = 2.0;
  int check_every = 10;
  double beta = 50.0;  // smooth linf sharpness inside the penalty
  Tensor cap;          // optional per-feature |x~ - x| cap (kappa); empty = none
  uint64_t seed = 0;

  void validate() const {
    if (epsilon < 0.0) throw ConfigError("epsilon must be non-negative");
    if (n < 1 || m < 1) throw ConfigError("n and m must be positive");
    if (value_min >= value_max) throw ConfigError("value range is empty");
    if (iterations < 0 || step_frac <= 0.0) throw ConfigError("bad optimizer options");
    if (lambda0 < 0.0 || lambda_growth < 1.0) throw ConfigError("bad multiplier schedule");
    if (!cap.empty())
      for (int i = 0; i < cap.size(); ++i)
        if (cap[i] < 0.0) throw ConfigError("cap vector must be non-negative");
  }
};

struct DecoyCertificate {
  int mask_id = -1;
  int direction = 0;     // s = +1 or -1
  double objective = 0;  // ||((x~ - x) * s)^+||_1 at the returned point
  double deviation = 0;  // exact linf of F_ell(x~) - F_ell(x)
  bool certified = false;
};

struct Decoy {
  Tensor x;
  DecoyCertificate cert;
};

enum class DecoySource { optimized, constant, noise };

inline const char* decoy_source_name(DecoySource s) {
  switch (s) {
    case DecoySource::optimized: return "optimized";
    case DecoySource::constant: return "constant";
    case DecoySource::noise: return "noise";
  }
  return "?";
}

struct DecoySet {
  std::vector<Decoy> decoys;  // ordered by (mask id, s = +1 then -1)
  std::vector<Mask> masks;
  DecoySource source = DecoySource::optimized;
  double epsilon_abs = 0.0;
  int requested_n = 0;
  int effective_n = 0;

  int certified_count() const {
    int k = 0;
    for (const Decoy& d : decoys) k += d.cert.certified ? 1 : 0;
    return k;
  }
};

namespace detail {

inline void project_decoy(Tensor& xt, const Tensor& x, const Mask& mask, const DecoyConfig& cfg) {
  for (int i = 0; i < xt.size(); ++i) {
    if (mask.m[i] == 0.0) {
      xt[i] = x[i];  // frozen off-mask features, exact
      continue;
    }
    double v = std::clamp(xt[i], cfg.value_min, cfg.value_max);
    if (!cfg.cap.empty()) {
      v = std::clamp(v, x[i] - cfg.cap[i], x[i] + cfg.cap[i]);
      // fl(x + cap) - x can overshoot cap by an ulp; the measured delta must
      // respect the cap exactly
      while (v - x[i] > cfg.cap[i]) v = std::nextafter(v, x[i]);
      while (x[i] - v > cfg.cap[i]) v = std::nextafter(v, x[i]);
    }
    xt[i] = v;
  }
}

inline double decoy_objective(const Tensor& xt, const Tensor& x, int s) {
  double obj = 0.0;
  for (int i = 0; i < xt.size(); ++i) obj += std::max((xt[i] - x[i]) * s, 0.0);
  return obj;
}

}  // namespace detail

inline double resolve_epsilon(const Model& model, const Tensor& x, const DecoyConfig& cfg) {
  if (!cfg.epsilon_relative) return cfg.epsilon;
  return cfg.epsilon * linf_norm(intermediate(model, x, cfg.layer));
}

// Projected gradient ascent on the penalized objective
//   ||((x~ - x) s)^+||_1 - lambda * max(0, softLinf(F_ell(x~) - F_ell(x)) - eps)
// with projection onto {box} ∩ {off-mask frozen} ∩ {|x~ - x| <= kappa} every
// step. lambda grows whenever the exact constraint is violated at a check
// point. The returned decoy is the best exactly-feasible iterate seen; x~ = x
// is always a feasible anchor, so the objective never falls below zero.
inline Decoy generate_decoy(const Model& model, const Tensor& x, const Mask& mask, int mask_id,
                            int s, const DecoyConfig& cfg, double epsilon_abs,
                            const Tensor* warm_start = nullptr) {
  if (s != 1 && s != -1) throw ConfigError("direction must be +1 or -1");
  cfg.validate();
  require_same_shape(mask.m, x, "decoy mask");
  if (!cfg.cap.empty()) require_same_shape(cfg.cap, x, "decoy cap");

  const Tensor ref = intermediate(model, x, cfg.layer);
  const LossSpec penalty = LossSpec::layer_deviation(cfg.layer, ref, cfg.beta);
  const double step = cfg.step_frac * (cfg.value_max - cfg.value_min);

  Decoy best;
  best.x = x;
  best.cert = {mask_id, s, 0.0, 0.0, true};  // the anchor is always feasible

  auto consider = [&](const Tensor& cand) {
    double dev = linf_norm(sub(intermediate(model, cand, cfg.layer), ref));
    if (dev > epsilon_abs + 0.0) return false;
    double obj = detail::decoy_objective(cand, x, s);
    if (obj > best.cert.objective) {
      best.x = cand;
      best.cert.objective = obj;
      best.cert.deviation = dev;
    }
    return true;
  };

  Tensor xt = warm_start ? *warm_start : x;
  detail::project_decoy(xt, x, mask, cfg);
  if (warm_start) consider(xt);

  if (l1_norm(mask.m) == 0.0) return best;  // fully frozen mask: x~ = x

  double lambda = cfg.lambda0;
  for (int it = 0; it < cfg.iterations; ++it) {
    Tensor g(x.shape());
    for (int i = 0; i < g.size(); ++i)
      if (mask.m[i] != 0.0 && (xt[i] - x[i]) * s >= 0.0) g[i] = s;
    double soft_dev = loss_value(model, xt, penalty);
    if (soft_dev > epsilon_abs) {
      Tensor pg = grad_wrt_input(model, xt, penalty);
      axpy(g, -lambda, pg);
    }
    axpy(xt, step, g);
    detail::project_decoy(xt, x, mask, cfg);
    if (!xt.all_finite())
      throw NumericError("decoy optimization produced non-finite values (mask " +
                         std::to_string(mask_id) + ", s = " + std::to_string(s) + ")");

    if ((it + 1) % cfg.check_every == 0 || it + 1 == cfg.iterations) {
      if (!consider(xt)) lambda *= cfg.lambda_growth;
    }
  }

  // certificate.deviation is always the exact norm, recomputed on the output
  best.cert.deviation = linf_norm(sub(intermediate(model, best.x, cfg.layer), ref));
  best.cert.certified = best.cert.deviation <= epsilon_abs + 1e-12;
  return best;
}

// 2n decoys: for each mask the s = +1 and s = -1 problems, run independently
// (parallel-safe; outputs land in fixed slots ordered by (mask, s)).
inline DecoySet generate_decoy_set(const Model& model, const Tensor& x, const DecoyConfig& cfg,
                                   int workers = 1) {
  cfg.validate();
  const int min_n = min_masks_for_coverage(model.spec.input_shape, cfg.patch, cfg.m);
  const int n_eff = std::max(cfg.n, min_n);
  if (n_eff != cfg.n)
    log_debug("decoy mask count raised from " + std::to_string(cfg.n) + " to " +
              std::to_string(n_eff) + " to cover every patch");

  DecoySet set;
  set.masks = build_masks(model.spec.input_shape, cfg.patch, n_eff, cfg.m, cfg.seed);
  set.source = DecoySource::optimized;
  set.requested_n = cfg.n;
  set.effective_n = n_eff;
  set.epsilon_abs = resolve_epsilon(model, x, cfg);
  set.decoys.resize(static_cast<size_t>(2 * n_eff));

  std::vector<std::string> failures(static_cast<size_t>(2 * n_eff));
  parallel_for(2 * n_eff, workers, [&](int job) {
    const int mask_id = job / 2;
    const int s = (job % 2 == 0) ? 1 : -1;
    try {
      set.decoys[static_cast<size_t>(job)] = generate_decoy(
          model, x, set.masks[static_cast<size_t>(mask_id)], mask_id, s, cfg, set.epsilon_abs);
    } catch (const std::exception& e) {
      failures[static_cast<size_t>(job)] = e.what();
      Decoy fallback;
      fallback.x = x;
      fallback.cert = {mask_id, s, 0.0, 0.0, false};
      set.decoys[static_cast<size_t>(job)] = std::move(fallback);
    }
  });

  int failed = 0;
  for (const auto& f : failures)
    if (!f.empty()) {
      ++failed;
      log_warn("decoy failed: " + f);
    }
  if (failed * 2 > 2 * n_eff)
    throw NumericError("more than half of the decoy optimizations failed (" +
                       std::to_string(failed) + "/" + std::to_string(2 * n_eff) + ")");
  return set;
}

// Ablation decoys: constant fill or clipped Gaussian noise on the masked
// features. These deliberately ignore the swappable condition; certificates
// still record the (typically large) exact deviation but are not filtered.
inline DecoySet baseline_decoys(const Model& model, const Tensor& x, DecoySource kind,
                                const std::vector<Mask>& masks, const DecoyConfig& cfg,
                                double param, uint64_t seed) {
  if (kind == DecoySource::optimized)
    throw ConfigError("baseline_decoys builds constant or noise decoys only");
  const Tensor ref = intermediate(model, x, cfg.layer);
  DecoySet set;
  set.masks = masks;
  set.source = kind;
  set.epsilon_abs = resolve_epsilon(model, x, cfg);
  set.requested_n = static_cast<int>(masks.size());
  set.effective_n = set.requested_n;
  for (size_t mi = 0; mi < masks.size(); ++mi) {
    for (int si = 0; si < 2; ++si) {
      const int s = si == 0 ? 1 : -1;
      Tensor xt = x;
      if (kind == DecoySource::constant) {
        for (int i = 0; i < xt.size(); ++i)
          if (masks[mi].m[i] != 0.0) xt[i] = param;  // dataset mean value
      } else {
        Rng rng(derive_stream(seed, {0xB0, static_cast<uint64_t>(mi), static_cast<uint64_t>(si)}));
        for (int i = 0; i < xt.size(); ++i)
          if (masks[mi].m[i] != 0.0)
            xt[i] = std::clamp(xt[i] + rng.normal(0.0, param), cfg.value_min, cfg.value_max);
      }
      Decoy d;
      d.x = std::move(xt);
      d.cert.mask_id = static_cast<int>(mi);
      d.cert.direction = s;
      d.cert.objective = detail::decoy_objective(d.x, x, s);
      d.cert.deviation = linf_norm(sub(intermediate(model, d.x, cfg.layer), ref));
      d.cert.certified = true;  // baselines bypass the certified-only filter
      set.decoys.push_back(std::move(d));
    }
  }
  return set;
}

// Manifest (JSON) plus a raw little-endian f64 blob, one tensor per decoy in
// manifest order.
inline void save_decoy_set(const DecoySet& set, const DecoyConfig& cfg,
                           const std::string& manifest_path, const std::string& blob_path) {
  json j;
  j["tool_version"] = kToolVersion;
  j["source"] = decoy_source_name(set.source);
  j["epsilon_abs"] = set.epsilon_abs;
  j["requested_n"] = set.requested_n;
  j["effective_n"] = set.effective_n;
  j["blob"] = blob_path;
  json jcfg;
  jcfg["layer"] = cfg.layer;
  jcfg["epsilon"] = cfg.epsilon;
  jcfg["epsilon_relative"] = cfg.epsilon_relative;
  jcfg["value_min"] = cfg.value_min;
  jcfg["value_max"] = cfg.value_max;
  jcfg["n"] = cfg.n;
  jcfg["m"] = cfg.m;
  jcfg["patch"] = cfg.patch;
  jcfg["iterations"] = cfg.iterations;
  jcfg["step_frac"] = cfg.step_frac;
  jcfg["lambda0"] = cfg.lambda0;
  jcfg["lambda_growth"] = cfg.lambda_growth;
  jcfg["seed"] = cfg.seed;
  j["config"] = jcfg;
  j["config_hash"] = config_hash(jcfg);
  j["masks"] = json::array();
  for (const Mask& m : set.masks) j["masks"].push_back(m.patch_ids);
  j["decoys"] = json::array();
  std::string blob;
  for (const Decoy& d : set.decoys) {
    json dj;
    dj["mask_id"] = d.cert.mask_id;
    dj["s"] = d.cert.direction;
    dj["objective"] = d.cert.objective;
    dj["deviation"] = d.cert.deviation;
    dj["certified"] = d.cert.certified;
    dj["shape"] = d.x.shape();
    dj["offset"] = blob.size();
    dj["hash"] = hash_hex(d.x.vec());
    j["decoys"].push_back(dj);
    size_t off = blob.size();
    blob.resize(off + static_cast<size_t>(d.x.size()) * 8);
    std::memcpy(blob.data() + off, d.x.data(), static_cast<size_t>(d.x.size()) * 8);
  }
  std::ofstream mf(manifest_path, std::ios::trunc);
  if (!mf) throw ConfigError("cannot open '" + manifest_path + "' for writing");
  mf << j.dump(2) << "\n";
  std::ofstream bf(blob_path, std::ios::binary | std::ios::trunc);
  if (!bf) throw ConfigError("cannot open '" + blob_path + "' for writing");
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

inline DecoySet load_decoy_set(const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw ConfigError("cannot open '" + manifest_path + "'");
  json j = json::parse(mf);
  std::ifstream bf(j.at("blob").get<std::string>(), std::ios::binary);
  if (!bf) throw ConfigError("cannot open decoy blob '" + j.at("blob").get<std::string>() + "'");
  std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

  DecoySet set;
  const std::string src = j.at("source").get<std::string>();
  set.source = src == "constant" ? DecoySource::constant
                                 : (src == "noise" ? DecoySource::noise : DecoySource::optimized);
  set.epsilon_abs = j.at("epsilon_abs").get<double>();
  set.requested_n = j.at("requested_n").get<int>();
  set.effective_n = j.at("effective_n").get<int>();
  for (const json& dj : j.at("decoys")) {
    Decoy d;
    std::vector<int> shape = dj.at("shape").get<std::vector<int>>();
    Tensor t{shape};
    size_t off = dj.at("offset").get<size_t>();
    if (off + static_cast<size_t>(t.size()) * 8 > blob.size())
      throw ConfigError("decoy blob is shorter than the manifest describes");
    std::memcpy(t.data(), blob.data() + off, static_cast<size_t>(t.size()) * 8);
    if (hash_hex(t.vec()) != dj.at("hash").get<std::string>())
      throw ConfigError("decoy blob hash mismatch");
    d.x = std::move(t);
    d.cert.mask_id = dj.at("mask_id").get<int>();
    d.cert.direction = dj.at("s").get<int>();
    d.cert.objective = dj.at("objective").get<double>();
    d.cert.deviation = dj.at("deviation").get<double>();
    d.cert.certified = dj.at("certified").get<bool>();
    set.decoys.push_back(std::move(d));
  }
  return set;
}

}  // namespace dance
