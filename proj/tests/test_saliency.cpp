#include <catch2/catch_amalgamated.hpp>

#include "dance/saliency.hpp"
#include "dance/synthetic.hpp"
#include "dance/train.hpp"
#include "helpers.hpp"

using namespace dance;
using namespace dance::testing;

namespace {

Model linear_model(const Tensor& w) {
  ModelSpec spec;
  spec.input_shape = {w.shape()[0]};
  spec.classes = w.shape()[1];
  spec.layers = {LayerSpec::dense(spec.classes), LayerSpec::softmax()};
  Model model{spec, init_weights(spec, 0)};
  model.weights.params[0][0] = w;
  return model;
}

Model golden_cnn() {
  SyntheticConfig tr;
  tr.count = 120;
  tr.seed = 101;
  ModelSpec spec = cnn_spec({16, 16, 1}, {{3, 4}, {3, 8}}, 2);
  TrainResult r = train(spec, make_synthetic(tr), {0.1, 8, 16, 7});
  return Model{spec, r.weights};
}

}  // namespace

TEST_CASE("vanilla map of a linear model is the class weight column", "[saliency]") {
  Tensor w({4, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  Model model = linear_model(w);
  Tensor x = random_tensor({4}, 2);
  SaliencyMap map = vanilla_gradient(model, x, 2);
  for (int i = 0; i < 4; ++i) REQUIRE(map.scores[i] == w.at(i, 2));
  REQUIRE(bit_equal(map.scores, vanilla_gradient(model, x, 2).scores));
}

TEST_CASE("vanilla map matches the finite-difference oracle", "[saliency]") {
  Model model = random_mlp(3, 10, {8}, 3);
  Tensor x = random_tensor({10}, 4);
  REQUIRE(relu_margin(model, x) > 1e-3);
  SaliencyMap map = vanilla_gradient(model, x, 1);
  Tensor fd = finite_diff_grad(model, x, LossSpec::logit(1), 1e-5);
  REQUIRE(max_rel_err(map.scores, fd) < 1e-6);
}

TEST_CASE("smoothgrad with zero sigma is bitwise vanilla", "[saliency]") {
  Model model = random_mlp(5, 8, {9}, 2);
  Tensor x = random_tensor({8}, 6);
  SaliencyParams p;
  p.method = SaliencyMethod::smoothgrad;
  p.samples = 17;
  p.sigma = 0.0;
  p.seed = 99;
  SaliencyMap sg = smoothgrad(model, x, 1, p);
  SaliencyMap vg = vanilla_gradient(model, x, 1);
  REQUIRE(bit_equal(sg.scores, vg.scores));
}

TEST_CASE("single-sample smoothgrad is vanilla at the noisy point", "[saliency]") {
  Model model = random_mlp(7, 6, {7}, 2);
  Tensor x = random_tensor({6}, 8);
  SaliencyParams p;
  p.method = SaliencyMethod::smoothgrad;
  p.samples = 1;
  p.sigma = 0.2;
  p.seed = 5;
  SaliencyMap sg = smoothgrad(model, x, 0, p);
  Rng rng(derive_stream(5, {0x56, 0}));
  Tensor noisy = x;
  for (int i = 0; i < noisy.size(); ++i) noisy[i] += rng.normal(0.0, 0.2);
  SaliencyMap vg = vanilla_gradient(model, noisy, 0);
  REQUIRE(bit_equal(sg.scores, vg.scores));
}

TEST_CASE("smoothgrad on a linear model recovers the constant gradient", "[saliency]") {
  Tensor w({3, 2}, {0.5, -1.0, 2.0, 0.25, -0.75, 1.5});
  Model model = linear_model(w);
  SaliencyParams p;
  p.method = SaliencyMethod::smoothgrad;
  p.samples = 1000;
  p.sigma = 0.7;
  p.seed = 3;
  SaliencyMap sg = smoothgrad(model, random_tensor({3}, 1), 0, p);
  for (int i = 0; i < 3; ++i) REQUIRE(sg.scores[i] == Catch::Approx(w.at(i, 0)).epsilon(1e-14));
}

TEST_CASE("integrated gradients vanishes on a zero-length path", "[saliency]") {
  Model model = random_mlp(9, 6, {5}, 2);
  Tensor x = random_tensor({6}, 10);
  SaliencyParams p;
  p.method = SaliencyMethod::intgrad;
  p.steps = 16;
  p.baseline = x;
  SaliencyMap ig = integrated_gradients(model, x, 0, p);
  REQUIRE(linf_norm(ig.scores) == 0.0);
}

TEST_CASE("integrated gradients on a linear model is x .* w_c", "[saliency]") {
  Tensor w({4, 2}, {1.0, -0.5, 0.25, 2.0, -1.5, 0.75, 3.0, -2.0});
  Model model = linear_model(w);
  Tensor x = random_tensor({4}, 11);
  SaliencyParams p;
  p.method = SaliencyMethod::intgrad;
  p.steps = 8;
  SaliencyMap ig = integrated_gradients(model, x, 1, p);
  for (int i = 0; i < 4; ++i)
    REQUIRE(ig.scores[i] == Catch::Approx(x[i] * w.at(i, 1)).epsilon(1e-13));
}

TEST_CASE("integrated gradients is odd under path reversal on linear models", "[saliency]") {
  Tensor w({5, 2}, {1, -2, 3, -4, 5, -6, 7, -8, 9, -10});
  Model model = linear_model(w);
  Tensor x = random_tensor({5}, 12);
  Tensor x0 = random_tensor({5}, 13);
  SaliencyParams fwd;
  fwd.method = SaliencyMethod::intgrad;
  fwd.steps = 6;
  fwd.baseline = x0;
  SaliencyParams rev = fwd;
  rev.baseline = x;
  SaliencyMap a = integrated_gradients(model, x, 0, fwd);
  SaliencyMap b = integrated_gradients(model, x0, 0, rev);
  for (int i = 0; i < 5; ++i) REQUIRE(a.scores[i] == Catch::Approx(-b.scores[i]).margin(1e-14));
}

TEST_CASE("integrated gradients completeness on the desk cnn", "[saliency]") {
  Model model = golden_cnn();
  SyntheticConfig te;
  te.count = 3;
  te.seed = 404;
  Dataset ds = make_synthetic(te);
  for (size_t i = 0; i < ds.size(); ++i) {
    const Tensor& x = ds.images[i];
    int c = predict(model, x).second;
    SaliencyParams p;
    p.method = SaliencyMethod::intgrad;
    p.steps = 512;
    SaliencyMap ig = integrated_gradients(model, x, c, p);
    double sum = 0.0;
    for (int k = 0; k < ig.scores.size(); ++k) sum += ig.scores[k];
    double fx = loss_value(model, x, LossSpec::logit(c));
    double f0 = loss_value(model, Tensor(x.shape()), LossSpec::logit(c));
    REQUIRE(std::abs(sum - (fx - f0)) <= 1e-3);
  }
}

TEST_CASE("topk binarize keeps exactly k features with stable ties", "[saliency]") {
  SaliencyMap map;
  map.scores = Tensor({10}, {10, 9, 8, 7, 6, 5, 4, 3, 2, 1});
  SaliencyMap top = topk_binarize(map, 0.2);
  REQUIRE(top.scores[0] == 1.0);
  REQUIRE(top.scores[1] == 1.0);
  for (int i = 2; i < 10; ++i) REQUIRE(top.scores[i] == 0.0);

  map.scores = Tensor::full({10}, 3.14);
  top = topk_binarize(map, 0.2);
  REQUIRE(top.scores[0] == 1.0);
  REQUIRE(top.scores[1] == 1.0);
  for (int i = 2; i < 10; ++i) REQUIRE(top.scores[i] == 0.0);

  top = topk_binarize(map, 1.0);
  for (int i = 0; i < 10; ++i) REQUIRE(top.scores[i] == 1.0);

  REQUIRE_THROWS_AS(topk_binarize(map, 0.0), ConfigError);
  REQUIRE_THROWS_AS(topk_binarize(map, 1.5), ConfigError);
}

TEST_CASE("topk count is exact for random score maps", "[saliency]") {
  for (uint64_t s = 0; s < 10; ++s) {
    SaliencyMap map;
    map.scores = random_tensor({37}, s, -5.0, 5.0);
    if (s % 2) {
      map.scores[3] = map.scores[29];
      map.scores[11] = map.scores[29];
    }
    SaliencyMap top = topk_binarize(map, 0.3);
    double count = 0.0;
    for (int i = 0; i < top.scores.size(); ++i) count += top.scores[i];
    REQUIRE(count == 11.0);  // floor(0.3 * 37)
  }
}
