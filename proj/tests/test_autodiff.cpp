#include <cmath>

#include "doctest.h"
#include "lossmix/checkpoint.hpp"
#include "lossmix/errors.hpp"
#include "lossmix/network.hpp"
#include "lossmix/tape.hpp"
#include "lossmix/tensor.hpp"
#include "test_helpers.hpp"

using namespace lossmix;
using lossmix::testing::central_fd;
using lossmix::testing::random_tensor;

TEST_CASE("tensor shape and finiteness contracts") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);

  const Tensor a({2}, {1.0, 2.0});
  const Tensor b({2}, {3.0, 5.0});
  const Tensor m = lerp(a, b, 0.25);
  CHECK(m[0] == doctest::Approx(2.5));
  CHECK(m[1] == doctest::Approx(4.25));
  CHECK_THROWS_AS(lerp(a, Tensor({3}), 0.5), std::invalid_argument);
}

TEST_CASE("backward: sum of leaves gives unit gradients") {
  Tape tape;
  std::vector<Value> leaves;
  for (int i = 0; i < 7; ++i) leaves.push_back(tape.leaf(0.1 * i));
  const Value loss = tape.sum(leaves);
  tape.backward(loss);
  for (Value v : leaves) CHECK(tape.grad(v) == 1.0);
}

TEST_CASE("backward: ||Wx||^2 has closed-form gradient 2(Wx)x^T") {
  Rng rng(3);
  const Tensor w = random_tensor({3, 2}, rng);
  const std::vector<double> x{0.7, -1.3};

  Tape tape;
  std::vector<Value> w_nodes;
  for (double v : w.data()) w_nodes.push_back(tape.leaf(v));
  std::vector<Value> sq;
  std::vector<double> y(3);
  for (std::size_t r = 0; r < 3; ++r) {
    const Value yr = tape.dot_const(
        std::span<const Value>(w_nodes.data() + 2 * r, 2), x);
    y[r] = tape.value(yr);
    sq.push_back(tape.square(yr));
  }
  const Value loss = tape.sum(sq);
  tape.backward(loss);

  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(tape.grad(w_nodes[2 * r + c]) ==
            doctest::Approx(2.0 * y[r] * x[c]).epsilon(1e-14));
    }
  }
}

TEST_CASE("backward leaves unreached parameters at zero") {
  Tape tape;
  const Value used = tape.leaf(2.0);
  const Value unused = tape.leaf(5.0);
  const Value loss = tape.square(used);
  tape.backward(loss);
  CHECK(tape.grad(used) == 4.0);
  CHECK(tape.grad(unused) == 0.0);
}

TEST_CASE("network forward matches a straight-line re-implementation") {
  Rng rng(11);
  Network net = Network::dense({4, 5, 3},
                               {Activation::LeakyRelu, Activation::Linear},
                               rng);
  const std::vector<double> x{0.3, -0.8, 1.5, 0.2};

  // Oracle: direct matrix arithmetic, no tape, no Network helpers.
  std::vector<double> h = x;
  for (const Layer& layer : net.layers()) {
    std::vector<double> next(layer.weight.rows());
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < layer.weight.cols(); ++c) {
        acc += layer.weight.at(r, c) * h[c];
      }
      acc += layer.bias[r];
      if (layer.act == Activation::LeakyRelu && acc < 0.0) acc *= 0.2;
      next[r] = acc;
    }
    h = next;
  }

  const std::vector<double> plain = net.forward(x);
  REQUIRE(plain.size() == h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(plain[i] == doctest::Approx(h[i]).epsilon(1e-12));
  }

  Tape tape;
  TapedNetwork staged = TapedNetwork::stage(tape, net);
  const std::vector<Value> taped = staged.forward_const(tape, x);
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(tape.value(taped[i]) == plain[i]);
  }
}

TEST_CASE("forward_mlp: zero net and unit-weight dot product") {
  Rng rng(13);
  Network zero = make_rho_mlp(3, 4, rng);
  for (Layer& layer : zero.layers()) {
    for (std::size_t i = 0; i < layer.weight.size(); ++i) layer.weight[i] = 0;
    for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0;
  }
  const std::vector<double> e{0.4, 0.5, -0.2};
  CHECK(forward_mlp(zero, e) == 0.0);

  Network dot;
  dot.add_layer(Layer{Tensor({1, 2}, {1.0, 1.0}), Tensor({1}),
                      Activation::Linear, 0.2});
  CHECK(forward_mlp(dot, std::vector<double>{0.25, 0.75}) == 1.0);
  CHECK_THROWS_AS(forward_mlp(dot, e), std::invalid_argument);
}

TEST_CASE("denoiser forward: shapes, bias path and embedding") {
  Rng rng(17);
  Denoiser d = make_denoiser(6, 8, 4, rng);
  const Tensor x = random_tensor({3, 6}, rng);
  const DenoiserOutput out = forward_denoiser(d, x);
  CHECK(out.prediction.same_shape(x));
  CHECK(out.embedding.size() == 4);

  // Zero weights: the prediction is the bias broadcast through the
  // activations, identical for every frame.
  Denoiser zeroed = d;
  for (Layer& layer : zeroed.net.layers()) {
    for (std::size_t i = 0; i < layer.weight.size(); ++i) layer.weight[i] = 0;
  }
  const DenoiserOutput z = forward_denoiser(zeroed, x);
  for (std::size_t f = 0; f < 6; ++f) {
    CHECK(z.prediction.at(0, f) == z.prediction.at(1, f));
    CHECK(z.prediction.at(1, f) == z.prediction.at(2, f));
  }

  // Identity single layer: prediction equals the input.
  Denoiser identity;
  Tensor eye({6, 6});
  for (std::size_t i = 0; i < 6; ++i) eye.at(i, i) = 1.0;
  identity.net.add_layer(
      Layer{std::move(eye), Tensor({6}), Activation::Linear, 0.2});
  identity.bottleneck_layer = 0;
  const DenoiserOutput id_out = forward_denoiser(identity, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(id_out.prediction[i] == x[i]);
  }

  CHECK_THROWS_WITH_AS(forward_denoiser(d, random_tensor({3, 5}, rng)),
                       doctest::Contains("does not match"),
                       std::invalid_argument);
}

TEST_CASE("taped denoiser agrees with the plain pass") {
  Rng rng(19);
  Denoiser d = make_denoiser(6, 8, 4, rng);
  const Tensor x = random_tensor({3, 6}, rng);
  const DenoiserOutput plain = forward_denoiser(d, x);

  Tape tape;
  TapedNetwork staged = TapedNetwork::stage(tape, d.net);
  const TapedDenoiserOutput taped =
      forward_denoiser(tape, staged, d.bottleneck_layer, x);
  REQUIRE(taped.prediction.size() == plain.prediction.size());
  for (std::size_t i = 0; i < plain.prediction.size(); ++i) {
    CHECK(tape.value(taped.prediction[i]) == plain.prediction[i]);
  }
  REQUIRE(taped.embedding.size() == plain.embedding.size());
  for (std::size_t i = 0; i < plain.embedding.size(); ++i) {
    CHECK(tape.value(taped.embedding[i]) == plain.embedding[i]);
  }
}

TEST_CASE("gradient_check validates and flags") {
  // Quadratic closure: finite differences are near-exact.
  const std::vector<double> theta{0.5, -1.2, 2.0};
  const auto quadratic = [](std::span<const double> p) {
    double acc = 0.0;
    for (double v : p) acc += v * v;
    return acc;
  };
  std::vector<double> analytic{1.0, -2.4, 4.0};
  const GradCheckReport good =
      gradient_check(quadratic, theta, analytic, 1e-6);
  CHECK(good.max_rel_error < 1e-9);

  // Negative control: a sign flip in one coordinate is flagged with its
  // index.
  analytic[1] = 2.4;
  const GradCheckReport bad = gradient_check(quadratic, theta, analytic, 1e-6);
  CHECK(bad.max_rel_error > 1e-2);
  CHECK(bad.worst_index == 1);

  CHECK_THROWS_AS(gradient_check(quadratic, theta, analytic, 1e-2),
                  std::invalid_argument);
  CHECK_THROWS_AS(gradient_check(quadratic, theta, analytic, 1e-9),
                  std::invalid_argument);
}

TEST_CASE("gradient completeness: every parameter moves some input") {
  Rng rng(23);
  Denoiser d = make_denoiser(5, 6, 3, rng);
  const Tensor x = random_tensor({2, 5}, rng);

  Tape tape;
  TapedNetwork staged = TapedNetwork::stage(tape, d.net);
  const TapedDenoiserOutput out =
      forward_denoiser(tape, staged, d.bottleneck_layer, x);
  std::vector<Value> sq;
  for (Value v : out.prediction) sq.push_back(tape.square(v));
  for (Value v : out.embedding) sq.push_back(tape.square(v));
  tape.backward(tape.sum(sq));
  int zero_count = 0;
  for (double g : staged.gradients(tape)) {
    if (g == 0.0) ++zero_count;
  }
  CHECK(zero_count == 0);
}

TEST_CASE("checkpoint round trip is exact and validated") {
  Rng rng(29);
  Model model;
  model.denoiser = make_denoiser(6, 8, 4, rng);
  model.rho_mlp = make_rho_mlp(4, 6, rng);
  model.has_mlp = true;

  const auto path = std::filesystem::temp_directory_path() /
                    "lossmix_ckpt_test.json";
  save_checkpoint(path, model);

  Model restored;
  Rng rng2(99);
  restored.denoiser = make_denoiser(6, 8, 4, rng2);
  restored.rho_mlp = make_rho_mlp(4, 6, rng2);
  restored.has_mlp = true;
  load_checkpoint(path, restored);
  CHECK(restored.flatten() == model.flatten());

  Model mismatched;
  Rng rng3(1);
  mismatched.denoiser = make_denoiser(5, 8, 4, rng3);
  CHECK_THROWS_AS(load_checkpoint(path, mismatched), IoError);
  std::filesystem::remove(path);
}
