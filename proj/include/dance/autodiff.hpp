#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dance/model.hpp"
#include "dance/tensor.hpp"

namespace dance {

enum class LossKind { class_logit, class_probability, layer_deviation_linf, custom_quadratic };

// Scalar loss of network activations. The linf deviation uses the smooth
// surrogate log-sum-exp(beta*|v|)/beta when differentiated; certification of
// decoy constraints always uses the exact norm (see decoy module).
struct LossSpec {
  LossKind kind = LossKind::class_logit;
  int class_index = -1;
  int layer = 0;     // tap ell for layer deviation
  Tensor reference;  // F_ell(x) reference for layer deviation
  double beta = 50.0;
  // custom quadratic: L(x) = 0.5 x^T A x + b^T x, evaluated on the input
  std::shared_ptr<const Tensor> quad_a;
  std::shared_ptr<const Tensor> quad_b;

  static LossSpec logit(int c) {
    LossSpec l;
    l.kind = LossKind::class_logit;
    l.class_index = c;
    return l;
  }
  static LossSpec probability(int c) {
    LossSpec l;
    l.kind = LossKind::class_probability;
    l.class_index = c;
    return l;
  }
  static LossSpec layer_deviation(int ell, Tensor ref, double beta = 50.0) {
    LossSpec l;
    l.kind = LossKind::layer_deviation_linf;
    l.layer = ell;
    l.reference = std::move(ref);
    l.beta = beta;
    return l;
  }
  static LossSpec quadratic(Tensor a, Tensor b) {
    LossSpec l;
    l.kind = LossKind::custom_quadratic;
    l.quad_a = std::make_shared<Tensor>(std::move(a));
    l.quad_b = std::make_shared<Tensor>(std::move(b));
    return l;
  }
};

inline double exact_linf(const Tensor& v) { return linf_norm(v); }

// log-sum-exp(beta*|v_i|)/beta, stabilized; upper-bounds the exact linf by at
// most log(n)/beta.
inline double smooth_linf(const Tensor& v, double beta) {
  double mx = 0.0;
  for (int i = 0; i < v.size(); ++i) mx = std::max(mx, beta * std::abs(v[i]));
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += std::exp(beta * std::abs(v[i]) - mx);
  return (mx + std::log(s)) / beta;
}

// d smooth_linf / d v; sign(0) taken as 0, so the gradient vanishes at v = 0.
inline Tensor smooth_linf_grad(const Tensor& v, double beta) {
  double mx = 0.0;
  for (int i = 0; i < v.size(); ++i) mx = std::max(mx, beta * std::abs(v[i]));
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += std::exp(beta * std::abs(v[i]) - mx);
  Tensor g(v.shape());
  for (int i = 0; i < v.size(); ++i) {
    double sign = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
    g[i] = sign * std::exp(beta * std::abs(v[i]) - mx) / s;
  }
  return g;
}

namespace detail {

inline void validate_loss(const Model& model, const Tensor& x, const LossSpec& loss) {
  switch (loss.kind) {
    case LossKind::class_logit:
    case LossKind::class_probability:
      if (loss.class_index < 0 || loss.class_index >= model.spec.classes)
        throw ConfigError("class index " + std::to_string(loss.class_index) +
                          " out of range [0, " + std::to_string(model.spec.classes) + ")");
      break;
    case LossKind::layer_deviation_linf: {
      int li = tap_layer_index(model.spec, loss.layer);
      auto shapes = infer_shapes(model.spec);
      if (loss.reference.shape() != shapes[static_cast<size_t>(li)])
        throw ConfigError("layer-deviation reference shape mismatch");
      break;
    }
    case LossKind::custom_quadratic: {
      const int d = x.size();
      if (!loss.quad_a || !loss.quad_b) throw ConfigError("quadratic loss missing A or b");
      if (loss.quad_a->shape() != std::vector<int>{d, d})
        throw ConfigError("quadratic A must be d x d");
      if (loss.quad_b->size() != d) throw ConfigError("quadratic b must have length d");
      break;
    }
  }
}

}  // namespace detail

inline double loss_value(const Model& model, const Tensor& x, const LossSpec& loss,
                         const ForwardOptions& opts = {}) {
  detail::validate_loss(model, x, loss);
  const int m = static_cast<int>(model.spec.layers.size());
  switch (loss.kind) {
    case LossKind::class_logit: {
      Tape tape = forward(model, x, opts, m - 1);  // stop before softmax
      return tape.acts.back()[loss.class_index];
    }
    case LossKind::class_probability: {
      Tape tape = forward(model, x, opts);
      return tape.acts.back()[loss.class_index];
    }
    case LossKind::layer_deviation_linf: {
      int li = tap_layer_index(model.spec, loss.layer);
      Tape tape = forward(model, x, opts, li);
      return smooth_linf(sub(tape.acts.back(), loss.reference), loss.beta);
    }
    case LossKind::custom_quadratic: {
      const Tensor& a = *loss.quad_a;
      const Tensor& b = *loss.quad_b;
      const int d = x.size();
      double s = 0.0;
      for (int i = 0; i < d; ++i) {
        double row = 0.0;
        for (int j = 0; j < d; ++j) row += a.at(i, j) * x[j];
        s += 0.5 * x[i] * row + b[i] * x[i];
      }
      return s;
    }
  }
  throw ConfigError("unknown loss kind");
}

/// dLoss/dx via one recorded forward pass and one reverse sweep.
inline Tensor grad_wrt_input(const Model& model, const Tensor& x, const LossSpec& loss,
                             const ForwardOptions& opts = {}) {
  detail::validate_loss(model, x, loss);
  const int m = static_cast<int>(model.spec.layers.size());
  switch (loss.kind) {
    case LossKind::class_logit: {
      Tape tape = forward(model, x, opts, m - 1);
      Tensor seed(tape.acts.back().shape());
      seed[loss.class_index] = 1.0;
      return backward(model, tape, {{m - 1, std::move(seed)}});
    }
    case LossKind::class_probability: {
      Tape tape = forward(model, x, opts);
      Tensor seed(tape.acts.back().shape());
      seed[loss.class_index] = 1.0;
      return backward(model, tape, {{m, std::move(seed)}});
    }
    case LossKind::layer_deviation_linf: {
      int li = tap_layer_index(model.spec, loss.layer);
      Tape tape = forward(model, x, opts, li);
      Tensor seed = smooth_linf_grad(sub(tape.acts.back(), loss.reference), loss.beta);
      return backward(model, tape, {{li, std::move(seed)}});
    }
    case LossKind::custom_quadratic: {
      const Tensor& a = *loss.quad_a;
      const Tensor& b = *loss.quad_b;
      const int d = x.size();
      Tensor g(x.shape());
      for (int i = 0; i < d; ++i) {
        double s = b[i];
        for (int j = 0; j < d; ++j) s += 0.5 * (a.at(i, j) + a.at(j, i)) * x[j];
        g[i] = s;
      }
      return g;
    }
  }
  throw ConfigError("unknown loss kind");
}

/// Central-difference gradient; the test oracle for grad_wrt_input.
inline Tensor finite_diff_grad(const Model& model, const Tensor& x, const LossSpec& loss, double h,
                               const ForwardOptions& opts = {}) {
  if (h <= 0.0) throw ConfigError("finite difference step must be positive");
  Tensor g(x.shape());
  Tensor xp = x;
  for (int i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    double fp = loss_value(model, xp, loss, opts);
    xp[i] = xi - h;
    double fm = loss_value(model, xp, loss, opts);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central second differences, symmetrized as (H + H^T)/2. Guarded to small d:
// the cost is O(d^2) forward passes and only the theory module needs it.
inline Tensor finite_diff_hessian(const Model& model, const Tensor& x, const LossSpec& loss,
                                  double h, const ForwardOptions& opts = {}) {
  constexpr int kMaxDim = 256;
  if (x.size() > kMaxDim)
    throw ConfigError("finite_diff_hessian limited to d <= " + std::to_string(kMaxDim) +
                      " (got d = " + std::to_string(x.size()) + ")");
  if (h <= 0.0) throw ConfigError("finite difference step must be positive");
  const int d = x.size();
  Tensor hess({d, d});
  Tensor xp = x;
  const double f0 = loss_value(model, xp, loss, opts);
  for (int i = 0; i < d; ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    double fp = loss_value(model, xp, loss, opts);
    xp[i] = xi - h;
    double fm = loss_value(model, xp, loss, opts);
    xp[i] = xi;
    hess.at(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    for (int j = i + 1; j < d; ++j) {
      const double xj = x[j];
      xp[i] = xi + h;
      xp[j] = xj + h;
      double fpp = loss_value(model, xp, loss, opts);
      xp[j] = xj - h;
      double fpm = loss_value(model, xp, loss, opts);
      xp[i] = xi - h;
      double fmm = loss_value(model, xp, loss, opts);
      xp[j] = xj + h;
      double fmp = loss_value(model, xp, loss, opts);
      xp[i] = xi;
      xp[j] = xj;
      double v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
      hess.at(i, j) = v;
      hess.at(j, i) = v;
    }
  }
  return hess;
}

}  // namespace dance
