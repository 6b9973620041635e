#include <catch2/catch_amalgamated.hpp>

#include "dance/autodiff.hpp"
#include "helpers.hpp"

using namespace dance;
using namespace dance::testing;

namespace {

Model linear_model(const Tensor& w /* d x C */) {
  ModelSpec spec;
  spec.input_shape = {w.shape()[0]};
  spec.classes = w.shape()[1];
  spec.layers = {LayerSpec::dense(spec.classes), LayerSpec::softmax()};
  Model model{spec, init_weights(spec, 0)};
  model.weights.params[0][0] = w;
  return model;
}

}  // namespace

TEST_CASE("linear logit gradient is the weight column", "[autodiff]") {
  Tensor w({3, 2}, {1.0, -2.0, 0.5, 4.0, -1.0, 0.25});
  Model model = linear_model(w);
  Tensor x = random_tensor({3}, 99);
  Tensor g = grad_wrt_input(model, x, LossSpec::logit(1));
  REQUIRE(g[0] == -2.0);
  REQUIRE(g[1] == 4.0);
  REQUIRE(g[2] == 0.25);
}

TEST_CASE("layer deviation at the reference point has zero gradient", "[autodiff]") {
  Model model = random_mlp(5, 6, {8}, 3);
  Tensor x = random_tensor({6}, 17);
  Tensor ref = intermediate(model, x, 1);
  Tensor g = grad_wrt_input(model, x, LossSpec::layer_deviation(1, ref));
  for (int i = 0; i < g.size(); ++i) REQUIRE(g[i] == 0.0);
}

TEST_CASE("finite differences on quadratics", "[autodiff]") {
  const int d = 5;
  Tensor a = random_tensor({d, d}, 3);
  Model model = random_mlp(1, d, {4}, 2);  // unused by the quadratic loss

  SECTION("x^T A x is stationary at the origin") {
    LossSpec loss = LossSpec::quadratic(scaled(a, 2.0), Tensor({d}));
    Tensor g = finite_diff_grad(model, Tensor({d}), loss, 1e-5);
    REQUIRE(linf_norm(g) < 1e-10);
  }

  SECTION("gradient of sum(x) is all ones") {
    LossSpec loss = LossSpec::quadratic(Tensor({d, d}), Tensor::full({d}, 1.0));
    Tensor g = finite_diff_grad(model, random_tensor({d}, 8), loss, 1e-5);
    for (int i = 0; i < d; ++i) REQUIRE(g[i] == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("hessian of x^T A x is A + A^T") {
    LossSpec loss = LossSpec::quadratic(scaled(a, 2.0), Tensor({d}));
    Tensor h = finite_diff_hessian(model, random_tensor({d}, 9), loss, 1e-4);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        REQUIRE(h.at(i, j) == Catch::Approx(a.at(i, j) + a.at(j, i)).margin(1e-6));
  }

  SECTION("hessian of a linear function vanishes") {
    LossSpec loss = LossSpec::quadratic(Tensor({d, d}), random_tensor({d}, 10));
    Tensor h = finite_diff_hessian(model, random_tensor({d}, 11), loss, 1e-2);
    REQUIRE(linf_norm(h) < 1e-8);
  }
}

TEST_CASE("hessian dimension guard refuses large inputs", "[autodiff]") {
  const int d = 300;
  Model model = random_mlp(1, d, {4}, 2);
  LossSpec loss = LossSpec::logit(0);
  REQUIRE_THROWS_WITH(finite_diff_hessian(model, Tensor({d}), loss, 1e-4),
                      Catch::Matchers::ContainsSubstring("256"));
}

TEST_CASE("autodiff agrees with central differences on a 2-layer relu mlp", "[autodiff]") {
  Model model = random_mlp(21, 12, {10, 6}, 3);
  Tensor x = random_tensor({12}, 22);
  REQUIRE(relu_margin(model, x) > 1e-3);
  Tensor g = grad_wrt_input(model, x, LossSpec::logit(2));
  Tensor fd = finite_diff_grad(model, x, LossSpec::logit(2), 1e-5);
  REQUIRE(max_rel_err(g, fd) < 1e-6);
}

TEST_CASE("gradient check over random instances", "[autodiff]") {
  for (uint64_t s = 0; s < 25; ++s) {
    SafeInstance inst = sample_safe_instance(s);
    Tensor g = grad_wrt_input(inst.model, inst.x, inst.loss);
    Tensor fd = finite_diff_grad(inst.model, inst.x, inst.loss, inst.fd_step);
    INFO("instance seed " << s);
    REQUIRE(max_rel_err(g, fd) < 1e-6);
  }
}

TEST_CASE("backward is linear in the seed", "[autodiff]") {
  // single parameterized layer: combining seeds rounds identically on both
  // routes, so the identity is bitwise
  Tensor w({5, 3}, {0.3, -1.1, 0.7, 0.2, 0.9, -0.4, 1.3, -0.6, 0.1, 0.8, -0.2, 0.5, -0.7, 0.6, 1.2});
  Model lin = linear_model(w);
  Tensor xl = random_tensor({5}, 30);
  Tensor l0 = grad_wrt_input(lin, xl, LossSpec::logit(0));
  Tensor l1 = grad_wrt_input(lin, xl, LossSpec::logit(1));
  Tape ltape = forward(lin, xl, {}, 1);
  Tensor lseed({3});
  lseed[0] = 2.0;
  lseed[1] = 0.5;
  Tensor lcombo = backward(lin, ltape, {{1, lseed}});
  for (int i = 0; i < lcombo.size(); ++i) REQUIRE(lcombo[i] == 2.0 * l0[i] + 0.5 * l1[i]);

  // deep net: mixture roundings do not distribute through later products,
  // so the identity holds to a few ulp rather than bitwise
  Model model = random_mlp(31, 8, {7}, 4);
  Tensor x = random_tensor({8}, 32);
  Tensor g0 = grad_wrt_input(model, x, LossSpec::logit(0));
  Tensor g1 = grad_wrt_input(model, x, LossSpec::logit(1));
  const int m = static_cast<int>(model.spec.layers.size());
  Tape tape = forward(model, x, {}, m - 1);
  Tensor seed(tape.acts.back().shape());
  seed[0] = 0.3;
  seed[1] = -1.7;
  Tensor combo = backward(model, tape, {{m - 1, seed}});
  for (int i = 0; i < combo.size(); ++i)
    REQUIRE(combo[i] == Catch::Approx(0.3 * g0[i] - 1.7 * g1[i]).margin(1e-12));
}

TEST_CASE("gradients are deterministic", "[autodiff]") {
  SafeInstance inst = sample_safe_instance(77);
  Tensor g1 = grad_wrt_input(inst.model, inst.x, inst.loss);
  Tensor g2 = grad_wrt_input(inst.model, inst.x, inst.loss);
  REQUIRE(bit_equal(g1, g2));
}

TEST_CASE("hessian self-consistency under step halving", "[autodiff]") {
  // the beta=50 deviation surrogate has strong fourth derivatives, so the
  // h^2 truncation law dominates roundoff and halving h shrinks the residual
  Model model = random_mlp(41, 6, {8}, 3);
  Tensor x = random_tensor({6}, 42);
  REQUIRE(relu_margin(model, x) > 2e-2);
  Tensor at = intermediate(model, x, 1);
  Tensor ref;
  for (uint64_t s = 43;; ++s) {
    ref = intermediate(model, random_tensor({6}, s), 1);
    double vmargin = 1e300;
    for (int i = 0; i < at.size(); ++i) vmargin = std::min(vmargin, std::abs(at[i] - ref[i]));
    if (vmargin > 5e-2) break;
  }
  LossSpec loss = LossSpec::layer_deviation(1, ref);
  Tensor href = finite_diff_hessian(model, x, loss, 2.5e-4);
  double r1 = max_abs_diff(finite_diff_hessian(model, x, loss, 2e-3), href);
  double r2 = max_abs_diff(finite_diff_hessian(model, x, loss, 1e-3), href);
  REQUIRE(r1 > 1e-10);
  REQUIRE(r1 >= 2.0 * r2);
}

TEST_CASE("shape mismatch raises a configuration error", "[autodiff]") {
  Model model = random_mlp(51, 6, {8}, 3);
  REQUIRE_THROWS_AS(grad_wrt_input(model, Tensor({5}), LossSpec::logit(0)), ConfigError);
  REQUIRE_THROWS_AS(grad_wrt_input(model, Tensor({6}), LossSpec::logit(9)), ConfigError);
  REQUIRE_THROWS_AS(grad_wrt_input(model, Tensor({6}), LossSpec::layer_deviation(5, Tensor({1}))),
                    ConfigError);
}

TEST_CASE("smooth linf surrogate brackets the exact norm", "[autodiff]") {
  Tensor v = random_tensor({40}, 61, -2.0, 2.0);
  double exact = exact_linf(v);
  double smooth = smooth_linf(v, 50.0);
  REQUIRE(smooth >= exact);
  REQUIRE(smooth <= exact + std::log(40.0) / 50.0 + 1e-12);

  Tensor zeros({4});
  Tensor g = smooth_linf_grad(zeros, 50.0);
  REQUIRE(linf_norm(g) == 0.0);
}
