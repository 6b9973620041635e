#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dance/errors.hpp"
#include "dance/rng.hpp"
#include "dance/tensor.hpp"

namespace dance {

enum class LayerKind { conv2d, relu, maxpool2d, flatten, dense, softmax };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind;
  int kernel = 0;   // conv2d: odd square kernel size
  int filters = 0;  // conv2d: output channels
  int pool = 0;     // maxpool2d: window and stride
  int units = 0;    // dense: output width

  static LayerSpec conv2d(int kernel, int filters) { return {LayerKind::conv2d, kernel, filters, 0, 0}; }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 0}; }
  static LayerSpec maxpool2d(int pool) { return {LayerKind::maxpool2d, 0, 0, pool, 0}; }
  static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0, 0}; }
  static LayerSpec dense(int units) { return {LayerKind::dense, 0, 0, 0, units}; }
  static LayerSpec softmax() { return {LayerKind::softmax, 0, 0, 0, 0}; }
};

struct ModelSpec {
  std::vector<int> input_shape;  // {H, W, C} or {d}
  std::vector<LayerSpec> layers;
  std::vector<int> taps;  // layer indices whose output is F_ell; taps[ell-1], ell = 1..L
  int classes = 0;
};

// Symbolic shape pass: activation shapes a_0 .. a_M. Throws ConfigError on an
// inconsistent chain.
inline std::vector<std::vector<int>> infer_shapes(const ModelSpec& spec) {
  std::vector<std::vector<int>> shapes;
  shapes.push_back(spec.input_shape);
  std::vector<int> cur = spec.input_shape;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    const std::string where = "layer " + std::to_string(li) + " (" + layer_kind_name(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (cur.size() != 3) throw ConfigError(where + ": needs rank-3 input, got " + shape_str(cur));
        if (l.kernel < 1 || l.kernel % 2 == 0)
          throw ConfigError(where + ": kernel must be odd and positive");
        if (l.filters < 1) throw ConfigError(where + ": filters must be positive");
        cur = {cur[0], cur[1], l.filters};  // same padding keeps H, W
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::maxpool2d: {
        if (cur.size() != 3) throw ConfigError(where + ": needs rank-3 input, got " + shape_str(cur));
        if (l.pool < 1) throw ConfigError(where + ": pool must be positive");
        cur = {(cur[0] + l.pool - 1) / l.pool, (cur[1] + l.pool - 1) / l.pool, cur[2]};
        break;
      }
      case LayerKind::flatten: {
        int n = 1;
        for (int d : cur) n *= d;
        cur = {n};
        break;
      }
      case LayerKind::dense: {
        if (cur.size() != 1) throw ConfigError(where + ": needs flat input, got " + shape_str(cur));
        if (l.units < 1) throw ConfigError(where + ": units must be positive");
        cur = {l.units};
        break;
      }
      case LayerKind::softmax: {
        if (cur.size() != 1) throw ConfigError(where + ": needs flat input, got " + shape_str(cur));
        break;
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

inline void validate_spec(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ConfigError("model has no layers");
  if (spec.classes < 1) throw ConfigError("model needs a positive class count");
  if (spec.layers.back().kind != LayerKind::softmax)
    throw ConfigError("final layer must be softmax");
  auto shapes = infer_shapes(spec);
  if (shapes.back() != std::vector<int>{spec.classes})
    throw ConfigError("output shape " + shape_str(shapes.back()) + " does not match class count " +
                      std::to_string(spec.classes));
  for (int t : spec.taps)
    if (t < 1 || t > static_cast<int>(spec.layers.size()))
      throw ConfigError("tap index out of range");
}

struct Weights {
  // Aligned with spec.layers; conv2d/dense hold {weight, bias}, others are empty.
  std::vector<std::vector<Tensor>> params;
  uint64_t seed = 0;
  std::string config_hash;

  bool all_finite() const {
    for (const auto& lp : params)
      for (const Tensor& t : lp)
        if (!t.all_finite()) return false;
    return true;
  }
};

// Xavier-uniform: a = sqrt(6 / (fan_in + fan_out)); biases start at zero.
inline Weights init_weights(const ModelSpec& spec, uint64_t seed) {
  validate_spec(spec);
  auto shapes = infer_shapes(spec);
  Weights w;
  w.seed = seed;
  w.params.resize(spec.layers.size());
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    if (l.kind == LayerKind::conv2d) {
      int cin = shapes[li][2];
      int fan_in = l.kernel * l.kernel * cin;
      int fan_out = l.kernel * l.kernel * l.filters;
      double a = std::sqrt(6.0 / (fan_in + fan_out));
      Rng rng(derive_stream(seed, {0x11, static_cast<uint64_t>(li)}));
      Tensor kernel({l.kernel, l.kernel, cin, l.filters});
      for (int i = 0; i < kernel.size(); ++i) kernel[i] = rng.uniform(-a, a);
      w.params[li] = {std::move(kernel), Tensor({l.filters})};
    } else if (l.kind == LayerKind::dense) {
      int fan_in = shapes[li][0];
      double a = std::sqrt(6.0 / (fan_in + l.units));
      Rng rng(derive_stream(seed, {0x11, static_cast<uint64_t>(li)}));
      Tensor kernel({fan_in, l.units});
      for (int i = 0; i < kernel.size(); ++i) kernel[i] = rng.uniform(-a, a);
      w.params[li] = {std::move(kernel), Tensor({l.units})};
    }
  }
  return w;
}

struct Model {
  ModelSpec spec;
  Weights weights;
};

struct ForwardOptions {
  // tau > 0 swaps relu for softplus tau*log1p(exp(z/tau)); used by the attack
  // module, which needs nonzero curvature.
  double softplus_tau = 0.0;
};

// Recorded forward pass: activations a_0..a_M plus the options that shaped them.
struct Tape {
  std::vector<Tensor> acts;
  ForwardOptions opts;
  int top = 0;  // last computed activation index
};

namespace detail {

inline Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias) {
  const int h = in.shape()[0], w = in.shape()[1], cin = in.shape()[2];
  const int k = kernel.shape()[0], cout = kernel.shape()[3];
  const int pad = k / 2;
  Tensor out({h, w, cout});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < cout; ++co) {
        double s = bias[co];
        for (int ky = 0; ky < k; ++ky) {
          int iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            int ix = x + kx - pad;
            if (ix < 0 || ix >= w) continue;
            for (int ci = 0; ci < cin; ++ci)
              s += in.at(iy, ix, ci) * kernel.at(ky, kx, ci, co);
          }
        }
        out.at(y, x, co) = s;
      }
  return out;
}

inline void conv2d_backward(const Tensor& in, const Tensor& kernel, const Tensor& gout,
                            Tensor& gin, Tensor* gkernel, Tensor* gbias) {
  const int h = in.shape()[0], w = in.shape()[1], cin = in.shape()[2];
  const int k = kernel.shape()[0], cout = kernel.shape()[3];
  const int pad = k / 2;
  gin = Tensor(in.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < cout; ++co) {
        const double g = gout.at(y, x, co);
        if (gbias) (*gbias)[co] += g;
        for (int ky = 0; ky < k; ++ky) {
          int iy = y + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            int ix = x + kx - pad;
            if (ix < 0 || ix >= w) continue;
            for (int ci = 0; ci < cin; ++ci) {
              gin.at(iy, ix, ci) += g * kernel.at(ky, kx, ci, co);
              if (gkernel) gkernel->at(ky, kx, ci, co) += g * in.at(iy, ix, ci);
            }
          }
        }
      }
}

// Ceil-mode windows (stride = pool); edge windows may be partial so every
// element belongs to exactly one window.
inline Tensor maxpool_forward(const Tensor& in, int pool) {
  const int h = in.shape()[0], w = in.shape()[1], c = in.shape()[2];
  const int oh = (h + pool - 1) / pool, ow = (w + pool - 1) / pool;
  Tensor out({oh, ow, c});
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int ch = 0; ch < c; ++ch) {
        double best = -1e300;
        for (int y = oy * pool; y < std::min((oy + 1) * pool, h); ++y)
          for (int x = ox * pool; x < std::min((ox + 1) * pool, w); ++x)
            best = std::max(best, in.at(y, x, ch));
        out.at(oy, ox, ch) = best;
      }
  return out;
}

// Ties route to the first maximal element in scan order.
inline Tensor maxpool_backward(const Tensor& in, const Tensor& gout, int pool) {
  const int h = in.shape()[0], w = in.shape()[1], c = in.shape()[2];
  const int oh = gout.shape()[0], ow = gout.shape()[1];
  Tensor gin(in.shape());
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int ch = 0; ch < c; ++ch) {
        int by = -1, bx = -1;
        double best = -1e300;
        for (int y = oy * pool; y < std::min((oy + 1) * pool, h); ++y)
          for (int x = ox * pool; x < std::min((ox + 1) * pool, w); ++x)
            if (in.at(y, x, ch) > best) {
              best = in.at(y, x, ch);
              by = y;
              bx = x;
            }
        gin.at(by, bx, ch) += gout.at(oy, ox, ch);
      }
  return gin;
}

inline double softplus(double z, double tau) {
  // tau*log(1+exp(z/tau)), stable for large |z|.
  double t = z / tau;
  if (t > 30.0) return z;
  if (t < -30.0) return tau * std::exp(t);
  return tau * std::log1p(std::exp(t));
}

inline double softplus_grad(double z, double tau) {
  double t = z / tau;
  if (t > 30.0) return 1.0;
  if (t < -30.0) return std::exp(t);
  return 1.0 / (1.0 + std::exp(-t));
}

inline Tensor softmax_forward(const Tensor& in) {
  Tensor out(in.shape());
  double mx = -1e300;
  for (int i = 0; i < in.size(); ++i) mx = std::max(mx, in[i]);
  double z = 0.0;
  for (int i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < in.size(); ++i) out[i] /= z;
  return out;
}

}  // namespace detail

inline Tensor layer_forward(const LayerSpec& l, const std::vector<Tensor>& params, const Tensor& in,
                            const ForwardOptions& opts) {
  switch (l.kind) {
    case LayerKind::conv2d:
      return detail::conv2d_forward(in, params[0], params[1]);
    case LayerKind::relu: {
      Tensor out(in.shape());
      if (opts.softplus_tau > 0.0) {
        for (int i = 0; i < in.size(); ++i) out[i] = detail::softplus(in[i], opts.softplus_tau);
      } else {
        for (int i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      }
      return out;
    }
    case LayerKind::maxpool2d:
      return detail::maxpool_forward(in, l.pool);
    case LayerKind::flatten:
      return in.reshaped({in.size()});
    case LayerKind::dense: {
      const Tensor& kernel = params[0];
      const Tensor& bias = params[1];
      const int nin = kernel.shape()[0], nout = kernel.shape()[1];
      Tensor out({nout});
      for (int j = 0; j < nout; ++j) out[j] = bias[j];
      for (int i = 0; i < nin; ++i) {
        const double v = in[i];
        for (int j = 0; j < nout; ++j) out[j] += v * kernel.at(i, j);
      }
      return out;
    }
    case LayerKind::softmax:
      return detail::softmax_forward(in);
  }
  throw ConfigError("unknown layer kind");
}

// Gradient of one layer w.r.t. its input; optionally accumulates parameter
// gradients (gparams must be pre-sized like the layer's params).
inline Tensor layer_backward(const LayerSpec& l, const std::vector<Tensor>& params,
                             const Tensor& in, const Tensor& out, const Tensor& gout,
                             const ForwardOptions& opts, std::vector<Tensor>* gparams) {
  switch (l.kind) {
    case LayerKind::conv2d: {
      Tensor gin;
      detail::conv2d_backward(in, params[0], gout, gin, gparams ? &(*gparams)[0] : nullptr,
                              gparams ? &(*gparams)[1] : nullptr);
      return gin;
    }
    case LayerKind::relu: {
      Tensor gin(in.shape());
      if (opts.softplus_tau > 0.0) {
        for (int i = 0; i < in.size(); ++i)
          gin[i] = gout[i] * detail::softplus_grad(in[i], opts.softplus_tau);
      } else {
        // gradient at exactly 0 is 0
        for (int i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? gout[i] : 0.0;
      }
      return gin;
    }
    case LayerKind::maxpool2d:
      return detail::maxpool_backward(in, gout, l.pool);
    case LayerKind::flatten:
      return gout.reshaped(in.shape());
    case LayerKind::dense: {
      const Tensor& kernel = params[0];
      const int nin = kernel.shape()[0], nout = kernel.shape()[1];
      Tensor gin({nin});
      for (int i = 0; i < nin; ++i) {
        double s = 0.0;
        for (int j = 0; j < nout; ++j) s += kernel.at(i, j) * gout[j];
        gin[i] = s;
      }
      if (gparams) {
        for (int i = 0; i < nin; ++i)
          for (int j = 0; j < nout; ++j) (*gparams)[0].at(i, j) += in[i] * gout[j];
        for (int j = 0; j < nout; ++j) (*gparams)[1][j] += gout[j];
      }
      return gin;
    }
    case LayerKind::softmax: {
      // gin_i = p_i * (g_i - sum_j p_j g_j)
      double s = 0.0;
      for (int j = 0; j < out.size(); ++j) s += out[j] * gout[j];
      Tensor gin(in.shape());
      for (int i = 0; i < in.size(); ++i) gin[i] = out[i] * (gout[i] - s);
      return gin;
    }
  }
  throw ConfigError("unknown layer kind");
}

// Forward pass through layers [0, upto); upto = -1 means all. Checks every
// activation for finiteness and names the offending layer.
inline Tape forward(const Model& model, const Tensor& x, const ForwardOptions& opts = {},
                    int upto = -1) {
  if (x.shape() != model.spec.input_shape)
    throw ConfigError("input shape " + shape_str(x.shape()) + " does not match model input " +
                      shape_str(model.spec.input_shape));
  if (!x.all_finite()) throw NumericError("non-finite values in model input");
  const int m = static_cast<int>(model.spec.layers.size());
  if (upto < 0) upto = m;
  Tape tape;
  tape.opts = opts;
  tape.acts.reserve(static_cast<size_t>(upto) + 1);
  tape.acts.push_back(x);
  for (int li = 0; li < upto; ++li) {
    Tensor out = layer_forward(model.spec.layers[static_cast<size_t>(li)],
                               model.weights.params[static_cast<size_t>(li)], tape.acts.back(), opts);
    if (!out.all_finite())
      throw NumericError("non-finite activation at layer " + std::to_string(li) + " (" +
                         layer_kind_name(model.spec.layers[static_cast<size_t>(li)].kind) + ")");
    tape.acts.push_back(std::move(out));
  }
  tape.top = upto;
  return tape;
}

// Reverse sweep with gradients seeded at one or more activations. Seeds are
// (activation index, gradient) pairs; the return value is dL/d a_0.
inline Tensor backward(const Model& model, const Tape& tape,
                       const std::vector<std::pair<int, Tensor>>& seeds,
                       std::vector<std::vector<Tensor>>* param_grads = nullptr) {
  int top = 0;
  for (const auto& [idx, g] : seeds) {
    if (idx < 0 || idx > tape.top) throw ConfigError("seed index beyond recorded tape");
    require_same_shape(g, tape.acts[static_cast<size_t>(idx)], "backward seed");
    top = std::max(top, idx);
  }
  Tensor g(tape.acts[static_cast<size_t>(top)].shape());
  for (int li = top; li > 0; --li) {
    for (const auto& [idx, seed] : seeds)
      if (idx == li)
        for (int i = 0; i < g.size(); ++i) g[i] += seed[i];
    g = layer_backward(model.spec.layers[static_cast<size_t>(li - 1)],
                       model.weights.params[static_cast<size_t>(li - 1)],
                       tape.acts[static_cast<size_t>(li - 1)], tape.acts[static_cast<size_t>(li)],
                       g, tape.opts,
                       param_grads ? &(*param_grads)[static_cast<size_t>(li - 1)] : nullptr);
  }
  for (const auto& [idx, seed] : seeds)
    if (idx == 0)
      for (int i = 0; i < g.size(); ++i) g[i] += seed[i];
  return g;
}

inline std::pair<Tensor, int> predict(const Model& model, const Tensor& x) {
  Tape tape = forward(model, x);
  const Tensor& probs = tape.acts.back();
  int best = 0;
  for (int c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;  // ties keep the lowest index
  return {probs, best};
}

inline int tap_layer_index(const ModelSpec& spec, int ell) {
  if (ell < 1 || ell > static_cast<int>(spec.taps.size()))
    throw ConfigError("layer index " + std::to_string(ell) + " out of range [1, " +
                      std::to_string(spec.taps.size()) + "]");
  return spec.taps[static_cast<size_t>(ell - 1)];
}

// Intermediate representation F_ell(x): output of tap ell (1-based).
inline Tensor intermediate(const Model& model, const Tensor& x, int ell,
                           const ForwardOptions& opts = {}) {
  int li = tap_layer_index(model.spec, ell);
  Tape tape = forward(model, x, opts, li);
  return tape.acts.back();
}

// Paper-style CNN: per block conv(k) -> relu -> maxpool(k) with pool size tied
// to the kernel size; taps mark each block's post-pool output.
inline ModelSpec cnn_spec(std::vector<int> input_shape,
                          const std::vector<std::pair<int, int>>& blocks /* {kernel, filters} */,
                          int classes) {
  ModelSpec spec;
  spec.input_shape = std::move(input_shape);
  spec.classes = classes;
  for (const auto& [kernel, filters] : blocks) {
    spec.layers.push_back(LayerSpec::conv2d(kernel, filters));
    spec.layers.push_back(LayerSpec::relu());
    spec.layers.push_back(LayerSpec::maxpool2d(kernel));
    spec.taps.push_back(static_cast<int>(spec.layers.size()));
  }
  spec.layers.push_back(LayerSpec::flatten());
  spec.layers.push_back(LayerSpec::dense(classes));
  spec.layers.push_back(LayerSpec::softmax());
  validate_spec(spec);
  return spec;
}

// MLP on flat input; taps mark each hidden relu output.
inline ModelSpec mlp_spec(int input_dim, const std::vector<int>& hidden, int classes) {
  ModelSpec spec;
  spec.input_shape = {input_dim};
  spec.classes = classes;
  for (int h : hidden) {
    spec.layers.push_back(LayerSpec::dense(h));
    spec.layers.push_back(LayerSpec::relu());
    spec.taps.push_back(static_cast<int>(spec.layers.size()));
  }
  spec.layers.push_back(LayerSpec::dense(classes));
  spec.layers.push_back(LayerSpec::softmax());
  validate_spec(spec);
  return spec;
}

}  // namespace dance
