#pragma once

#include <utility>
#include <vector>

#include "dance/autodiff.hpp"
#include "dance/model.hpp"
#include "dance/rng.hpp"
#include "dance/tensor.hpp"

namespace dance::testing {

inline Tensor random_tensor(std::vector<int> shape, uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t{std::move(shape)};
  Rng rng(seed);
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline Model random_mlp(uint64_t seed, int d, std::vector<int> hidden, int classes) {
  ModelSpec spec = mlp_spec(d, hidden, classes);
  return Model{spec, init_weights(spec, seed)};
}

// Smallest |pre-activation| over all relu layers; finite-difference probes
// must stay well inside one linear region.
inline double relu_margin(const Model& model, const Tensor& x) {
  Tape tape = forward(model, x);
  double margin = 1e300;
  for (size_t li = 0; li < model.spec.layers.size(); ++li)
    if (model.spec.layers[li].kind == LayerKind::relu) {
      const Tensor& pre = tape.acts[li];
      for (int i = 0; i < pre.size(); ++i) margin = std::min(margin, std::abs(pre[i]));
    }
  return margin;
}

struct SafeInstance {
  Model model;
  Tensor x;
  LossSpec loss;
  double fd_step = 1e-5;
};

// Random (model, x, loss) with all relu pre-activations bounded away from
// their kinks, so central differences see a smooth function.
inline SafeInstance sample_safe_instance(uint64_t seed, int max_dim = 32,
                                         double min_margin = 1e-3) {
  for (uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_stream(seed, {0xA11CE, attempt}));
    int d = 2 + rng.uniform_int(max_dim - 1);
    int h1 = 3 + rng.uniform_int(6);
    int classes = 2 + rng.uniform_int(3);
    std::vector<int> hidden = rng.uniform() < 0.5 ? std::vector<int>{h1}
                                                  : std::vector<int>{h1, 3 + rng.uniform_int(4)};
    Model model = random_mlp(derive_stream(seed, {0xB0D, attempt}), d, hidden, classes);
    Tensor x = random_tensor({d}, derive_stream(seed, {0x1212, attempt}));
    if (relu_margin(model, x) < min_margin) continue;

    // The fd step trades truncation against roundoff; the high-curvature
    // smooth losses (probability, beta=50 deviation) want a smaller h and a
    // higher conditioning floor.
    int pick = rng.uniform_int(4);
    LossSpec loss;
    double fd_step = 1e-5;
    double cond_floor = 1e-4;
    if (pick == 0) {
      loss = LossSpec::logit(rng.uniform_int(classes));
    } else if (pick == 1) {
      loss = LossSpec::probability(rng.uniform_int(classes));
      fd_step = 3e-6;
      cond_floor = 1e-3;
    } else if (pick == 2) {
      int ell = 1 + rng.uniform_int(static_cast<int>(model.spec.taps.size()));
      Tensor y = random_tensor({d}, derive_stream(seed, {0xFEED, attempt}));
      Tensor ref = intermediate(model, y, ell);
      Tensor at = intermediate(model, x, ell);
      // keep |v| components away from the abs kink
      double vm = 1e300;
      for (int i = 0; i < at.size(); ++i) vm = std::min(vm, std::abs(at[i] - ref[i]));
      if (vm < min_margin) continue;
      loss = LossSpec::layer_deviation(ell, ref);
      fd_step = 8e-7;
      cond_floor = 1e-3;
    } else {
      Tensor a = random_tensor({d, d}, derive_stream(seed, {0xAAAA, attempt}));
      Tensor b = random_tensor({d}, derive_stream(seed, {0xBBBB, attempt}));
      loss = LossSpec::quadratic(std::move(a), std::move(b));
      fd_step = 1e-4;  // zero truncation; larger h kills roundoff
    }

    // Coordinates between the near-zero floor and the oracle's noise ceiling
    // cannot be certified to 1e-6 relative by central differences in doubles;
    // draw instances whose gradients stay out of that band.
    Tensor g = grad_wrt_input(model, x, loss);
    bool conditioned = true;
    for (int i = 0; i < g.size(); ++i)
      if (std::abs(g[i]) > 1e-8 && std::abs(g[i]) < cond_floor) conditioned = false;
    if (!conditioned) continue;

    return {std::move(model), std::move(x), std::move(loss), fd_step};
  }
}

// max over coordinates with |reference| > floor of relative error
inline double max_rel_err(const Tensor& got, const Tensor& ref, double floor = 1e-8) {
  double worst = 0.0;
  for (int i = 0; i < got.size(); ++i) {
    if (std::abs(ref[i]) <= floor) continue;
    worst = std::max(worst, std::abs(got[i] - ref[i]) / std::abs(ref[i]));
  }
  return worst;
}

}  // namespace dance::testing
