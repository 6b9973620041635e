#include <catch2/catch_amalgamated.hpp>

#include "dance/autodiff.hpp"
#include "dance/model.hpp"
#include "helpers.hpp"

using namespace dance;
using namespace dance::testing;

TEST_CASE("zero weights give uniform probabilities and class 0", "[model]") {
  ModelSpec spec = cnn_spec({6, 6, 1}, {{3, 2}}, 4);
  Model model{spec, init_weights(spec, 7)};
  for (auto& lp : model.weights.params)
    for (auto& t : lp) t = Tensor(t.shape());
  auto [probs, cls] = predict(model, random_tensor({6, 6, 1}, 3));
  for (int c = 0; c < 4; ++c) REQUIRE(probs[c] == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(cls == 0);
}

TEST_CASE("softmax of (0, ln 3) is (0.25, 0.75)", "[model]") {
  Tensor logits({2}, {0.0, std::log(3.0)});
  Tensor p = detail::softmax_forward(logits);
  REQUIRE(p[0] == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(p[1] == Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("probabilities always sum to one", "[model]") {
  for (uint64_t s = 0; s < 10; ++s) {
    Model model = random_mlp(s, 10, {12}, 5);
    auto [probs, cls] = predict(model, random_tensor({10}, s + 100, -3.0, 3.0));
    double sum = 0.0;
    for (int c = 0; c < probs.size(); ++c) sum += probs[c];
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(cls >= 0);
    REQUIRE(cls < 5);
  }
}

TEST_CASE("shape chain matches a real forward pass", "[model]") {
  ModelSpec spec = cnn_spec({16, 16, 1}, {{3, 4}, {3, 8}}, 2);
  auto shapes = infer_shapes(spec);
  Model model{spec, init_weights(spec, 1)};
  Tape tape = forward(model, random_tensor({16, 16, 1}, 2, 0.0, 1.0));
  REQUIRE(tape.acts.size() == shapes.size());
  for (size_t i = 0; i < shapes.size(); ++i) REQUIRE(tape.acts[i].shape() == shapes[i]);
  // 16 -> ceil/3 -> 6 -> ceil/3 -> 2
  REQUIRE(shapes[3] == std::vector<int>{6, 6, 4});
  REQUIRE(shapes[6] == std::vector<int>{2, 2, 8});
  REQUIRE(shapes[7] == std::vector<int>{32});
}

TEST_CASE("intermediate taps are consistent with the forward pass", "[model]") {
  ModelSpec spec = cnn_spec({8, 8, 1}, {{3, 3}}, 2);
  Model model{spec, init_weights(spec, 5)};
  Tensor x = random_tensor({8, 8, 1}, 6, 0.0, 1.0);
  Tensor m1 = intermediate(model, x, 1);
  Tape tape = forward(model, x);
  REQUIRE(bit_equal(m1, tape.acts[3]));
  REQUIRE(bit_equal(m1, intermediate(model, x, 1)));
  REQUIRE_THROWS_AS(intermediate(model, x, 2), ConfigError);
  REQUIRE_THROWS_AS(intermediate(model, x, 0), ConfigError);
}

TEST_CASE("forward pass is deterministic at every layer", "[model]") {
  Model model = random_mlp(8, 12, {9, 5}, 3);
  Tensor x = random_tensor({12}, 9);
  Tape t1 = forward(model, x);
  Tape t2 = forward(model, x);
  for (size_t i = 0; i < t1.acts.size(); ++i) REQUIRE(bit_equal(t1.acts[i], t2.acts[i]));
}

TEST_CASE("maxpool ties break to the first element in scan order", "[model]") {
  Tensor in({2, 2, 1}, {1.0, 1.0, 1.0, 1.0});
  Tensor gout({1, 1, 1}, {3.0});
  Tensor gin = detail::maxpool_backward(in, gout, 2);
  REQUIRE(gin[0] == 3.0);
  REQUIRE(gin[1] == 0.0);
  REQUIRE(gin[2] == 0.0);
  REQUIRE(gin[3] == 0.0);
}

TEST_CASE("ceil-mode pooling covers ragged edges", "[model]") {
  Tensor in({5, 5, 1});
  for (int i = 0; i < 25; ++i) in[i] = i;
  Tensor out = detail::maxpool_forward(in, 3);
  REQUIRE(out.shape() == std::vector<int>{2, 2, 1});
  REQUIRE(out.at(1, 1, 0) == 24.0);  // bottom-right partial window
}

TEST_CASE("conv2d keeps spatial shape and matches a hand computation", "[model]") {
  // 1x1 interior: out(y,x) = sum of 3x3 neighborhood with kernel of ones
  ModelSpec spec;
  spec.input_shape = {3, 3, 1};
  spec.classes = 2;
  spec.layers = {LayerSpec::conv2d(3, 1), LayerSpec::flatten(), LayerSpec::dense(2),
                 LayerSpec::softmax()};
  Model model{spec, init_weights(spec, 0)};
  model.weights.params[0][0] = Tensor::full({3, 3, 1, 1}, 1.0);
  model.weights.params[0][1] = Tensor({1});
  Tensor x({3, 3, 1});
  for (int i = 0; i < 9; ++i) x[i] = i + 1;  // 1..9, sum 45
  Tape tape = forward(model, x, {}, 1);
  REQUIRE(tape.acts[1].at(1, 1, 0) == 45.0);
  REQUIRE(tape.acts[1].at(0, 0, 0) == 1.0 + 2.0 + 4.0 + 5.0);  // zero padding
}

TEST_CASE("non-finite activations name the offending layer", "[model]") {
  Model model = random_mlp(3, 4, {5}, 2);
  model.weights.params[0][0][0] = std::numeric_limits<double>::infinity();
  try {
    forward(model, random_tensor({4}, 1));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    REQUIRE(std::string(e.what()).find("layer 0") != std::string::npos);
  }
}

TEST_CASE("spec validation rejects inconsistent chains", "[model]") {
  ModelSpec bad;
  bad.input_shape = {4};
  bad.classes = 2;
  bad.layers = {LayerSpec::conv2d(3, 2), LayerSpec::softmax()};
  REQUIRE_THROWS_AS(validate_spec(bad), ConfigError);

  ModelSpec nosoftmax;
  nosoftmax.input_shape = {4};
  nosoftmax.classes = 2;
  nosoftmax.layers = {LayerSpec::dense(2)};
  REQUIRE_THROWS_AS(validate_spec(nosoftmax), ConfigError);

  ModelSpec evenkernel;
  evenkernel.input_shape = {4, 4, 1};
  evenkernel.classes = 2;
  evenkernel.layers = {LayerSpec::conv2d(2, 2), LayerSpec::flatten(), LayerSpec::dense(2),
                       LayerSpec::softmax()};
  REQUIRE_THROWS_AS(validate_spec(evenkernel), ConfigError);
}
