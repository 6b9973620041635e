#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dance/log.hpp"
#include "dance/model.hpp"
#include "dance/rng.hpp"
#include "dance/saliency.hpp"
#include "dance/serialize.hpp"

namespace dance {

struct FidelityResult {
  double sf = 0.0;
  bool clamped = false;  // retained-input probability hit the 1e-12 floor
};

// SF = -log F^c(map .* x) with c the class predicted on the ORIGINAL x and
// F^c the softmax probability. Lower is better. The mask is applied as a
// literal entrywise product; zeros outside the kept set.
inline FidelityResult fidelity(const Model& model, const Tensor& x, const Tensor& binary_map) {
  require_same_shape(binary_map, x, "fidelity map");
  const int c = predict(model, x).second;
  const Tensor masked = hadamard(binary_map, x);
  const double p = predict(model, masked).first[c];
  FidelityResult r;
  r.clamped = p < 1e-12;
  r.sf = -std::log(std::max(p, 1e-12));
  return r;
}

inline double sensitivity_raw(const Tensor& map_x, const Tensor& map_xhat, const Tensor& x,
                              const Tensor& xhat) {
  require_same_shape(map_x, map_xhat, "sensitivity maps");
  require_same_shape(x, xhat, "sensitivity inputs");
  const double denom = l2_norm(sub(x, xhat));
  if (denom == 0.0) throw ConfigError("sensitivity undefined for identical inputs");
  return l2_norm(sub(map_x, map_xhat)) / denom;
}

// Default variant: each map divided by its own L1 mass first, which makes the
// ratio invariant to a common positive rescaling of the maps.
inline double sensitivity(const Tensor& map_x, const Tensor& map_xhat, const Tensor& x,
                          const Tensor& xhat) {
  const double n1 = l1_norm(map_x), n2 = l1_norm(map_xhat);
  if (n1 == 0.0 || n2 == 0.0) throw ConfigError("sensitivity of an all-zero map");
  return sensitivity_raw(scaled(map_x, 1.0 / n1), scaled(map_xhat, 1.0 / n2), x, xhat);
}

inline double sensitivity_topk(const SaliencyMap& map_x, const SaliencyMap& map_xhat,
                               const Tensor& x, const Tensor& xhat, double fraction) {
  return sensitivity_raw(topk_binarize(map_x, fraction).scores,
                         topk_binarize(map_xhat, fraction).scores, x, xhat);
}

// |map ∩ truth| / |truth| for binary maps.
inline double ground_truth_overlap(const Tensor& binary_map, const Tensor& truth_mask) {
  require_same_shape(binary_map, truth_mask, "overlap masks");
  double truth = 0.0, common = 0.0;
  for (int i = 0; i < truth_mask.size(); ++i) {
    if (truth_mask[i] != 0.0) {
      truth += 1.0;
      if (binary_map[i] != 0.0) common += 1.0;
    }
  }
  if (truth == 0.0) throw ConfigError("ground-truth mask is empty");
  return common / truth;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty list");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// type-7 linear interpolation, matching the common default
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("quantile of an empty list");
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

struct MedianCI {
  double lo = 0.0, hi = 0.0;
};

inline MedianCI bootstrap_median_ci(const std::vector<double>& v, int resamples, uint64_t seed) {
  if (v.empty()) throw ConfigError("bootstrap of an empty list");
  std::vector<double> meds(static_cast<size_t>(resamples));
  std::vector<double> sample(v.size());
  for (int b = 0; b < resamples; ++b) {
    Rng rng(derive_stream(seed, {0xB007, static_cast<uint64_t>(b)}));
    for (size_t i = 0; i < v.size(); ++i)
      sample[i] = v[rng.uniform_int(static_cast<int>(v.size()))];
    meds[static_cast<size_t>(b)] = median(sample);
  }
  return {quantile(meds, 0.025), quantile(meds, 0.975)};
}

struct EvalRecord {
  int image = -1;
  std::string method;       // vanilla | smoothgrad | intgrad
  std::string variant;      // original | decoy+range | decoy+mean | constant+range | noise+range
  double fidelity = 0.0;
  bool clamped = false;
  std::optional<double> overlap;
  std::optional<double> sensitivity;       // L1-normalized raw maps
  std::optional<double> sensitivity_topk;  // binarized variant
  std::optional<double> feasibility_rate;
  std::optional<std::string> attack;
};

struct GroupSummary {
  std::string key;
  int count = 0;
  double median_fidelity = 0.0;
  double fidelity_q25 = 0.0, fidelity_q75 = 0.0;
  MedianCI fidelity_ci;
  std::optional<double> median_overlap;
  std::optional<double> median_sensitivity;
  std::optional<double> median_sensitivity_topk;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<GroupSummary> summary;
  double model_accuracy = 0.0;
  uint64_t seed = 0;
  std::string config_hash;
  std::string invocation;
};

// Medians and inter-quartile ranges per (method, variant) group, with a
// seeded bootstrap CI on the median fidelity. Grouping and ordering are
// deterministic.
inline EvalReport assemble_report(std::vector<EvalRecord> records, uint64_t seed) {
  if (records.empty()) throw ConfigError("no evaluation records to assemble");
  EvalReport report;
  report.seed = seed;
  std::map<std::string, std::vector<const EvalRecord*>> groups;
  for (const EvalRecord& r : records) groups[r.method + "/" + r.variant].push_back(&r);
  for (const auto& [key, rows] : groups) {
    GroupSummary g;
    g.key = key;
    g.count = static_cast<int>(rows.size());
    std::vector<double> sf, ov, ss, sst;
    for (const EvalRecord* r : rows) {
      sf.push_back(r->fidelity);
      if (r->overlap) ov.push_back(*r->overlap);
      if (r->sensitivity) ss.push_back(*r->sensitivity);
      if (r->sensitivity_topk) sst.push_back(*r->sensitivity_topk);
    }
    g.median_fidelity = median(sf);
    g.fidelity_q25 = quantile(sf, 0.25);
    g.fidelity_q75 = quantile(sf, 0.75);
    g.fidelity_ci = bootstrap_median_ci(sf, 1000, derive_stream(seed, {fnv1a64(key)}));
    if (!ov.empty()) g.median_overlap = median(ov);
    if (!ss.empty()) g.median_sensitivity = median(ss);
    if (!sst.empty()) g.median_sensitivity_topk = median(sst);
    report.summary.push_back(std::move(g));
  }
  report.records = std::move(records);
  return report;
}

inline json report_to_json(const EvalReport& report) {
  json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = report.seed;
  j["config_hash"] = report.config_hash;
  j["invocation"] = report.invocation;
  j["model_accuracy"] = report.model_accuracy;
  j["flags"]["sensitivity_variant"] = "l1_normalized_raw";
  j["records"] = json::array();
  for (const EvalRecord& r : report.records) {
    json rj;
    rj["image"] = r.image;
    rj["method"] = r.method;
    rj["variant"] = r.variant;
    rj["fidelity"] = r.fidelity;
    rj["clamped"] = r.clamped;
    if (r.overlap) rj["overlap"] = *r.overlap;
    if (r.sensitivity) rj["sensitivity"] = *r.sensitivity;
    if (r.sensitivity_topk) rj["sensitivity_topk"] = *r.sensitivity_topk;
    if (r.feasibility_rate) rj["feasibility_rate"] = *r.feasibility_rate;
    if (r.attack) rj["attack"] = *r.attack;
    j["records"].push_back(rj);
  }
  j["summary"] = json::array();
  for (const GroupSummary& g : report.summary) {
    json gj;
    gj["group"] = g.key;
    gj["count"] = g.count;
    gj["median_fidelity"] = g.median_fidelity;
    gj["fidelity_q25"] = g.fidelity_q25;
    gj["fidelity_q75"] = g.fidelity_q75;
    gj["fidelity_ci95"] = {g.fidelity_ci.lo, g.fidelity_ci.hi};
    if (g.median_overlap) gj["median_overlap"] = *g.median_overlap;
    if (g.median_sensitivity) gj["median_sensitivity"] = *g.median_sensitivity;
    if (g.median_sensitivity_topk) gj["median_sensitivity_topk"] = *g.median_sensitivity_topk;
    j["summary"].push_back(gj);
  }
  return j;
}

}  // namespace dance
