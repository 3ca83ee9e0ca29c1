#include <doctest.h>

#include <cmath>
#include <vector>

#include "bernflow/network.hpp"

using namespace bernflow;

TEST_CASE("activation names round trip") {
  for (const char* name : {"tanh", "relu", "sigmoid", "softplus"}) {
    CHECK(activation_name(activation_from_name(name)) == name);
  }
  CHECK_THROWS_AS(activation_from_name("gelu"), ConfigError);
}

TEST_CASE("final layer starts at zero") {
  Rng rng(1);
  const Mlp net("f", 3, {8, 8}, 4, Activation::kTanh, rng);
  const auto out = net.forward_plain(std::vector<double>{0.3, -0.7, 1.2});
  REQUIRE(out.size() == 4);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("hidden layers are randomly initialized, biases zero") {
  Rng rng(2);
  const Mlp net("f", 2, {5}, 3, Activation::kTanh, rng);
  const auto& params = net.parameters();
  REQUIRE(params.size() == 4);  // w0, b0, w1, b1
  bool any_nonzero = false;
  for (double v : params[0]->value.data()) any_nonzero = any_nonzero || v != 0.0;
  CHECK(any_nonzero);
  for (double v : params[1]->value.data()) CHECK(v == 0.0);
  for (double v : params[2]->value.data()) CHECK(v == 0.0);
}

TEST_CASE("parameter ids are namespaced and stable") {
  Rng rng(3);
  const Mlp net("f2", 2, {4}, 3, Activation::kRelu, rng);
  const auto& params = net.parameters();
  CHECK(params[0]->id == "f2.w0");
  CHECK(params[1]->id == "f2.b0");
  CHECK(params[2]->id == "f2.w1");
  CHECK(params[3]->id == "f2.b1");
  CHECK(net.weight_matrices().size() == 2);
  CHECK(net.weight_matrices()[0]->id == "f2.w0");
}

TEST_CASE("graph forward matches plain forward after perturbation") {
  Rng rng(9);
  Mlp net("f", 3, {6, 5}, 2, Activation::kTanh, rng);
  // move off the zero final layer so outputs are informative
  Rng jitter(10);
  for (const auto& p : net.parameters()) {
    for (auto& v : p->value.data()) v += jitter.uniform(-0.5, 0.5);
  }

  const std::vector<double> x{0.25, -1.0, 0.6};
  const auto plain = net.forward_plain(x);

  ad::Graph g;
  const auto in = g.leaf(Tensor(1, 3, {x[0], x[1], x[2]}));
  const Tensor& out = g.value(net.forward(g, in));
  REQUIRE(out.cols() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(out(0, j) == doctest::Approx(plain[j]).epsilon(1e-13));
  }
}

TEST_CASE("graph forward handles batches row-wise") {
  Rng rng(4);
  Mlp net("f", 2, {4}, 3, Activation::kSigmoid, rng);
  Rng jitter(5);
  for (const auto& p : net.parameters()) {
    for (auto& v : p->value.data()) v += jitter.uniform(-0.5, 0.5);
  }

  ad::Graph g;
  const auto in = g.leaf(Tensor(3, 2, {0.1, 0.2, -0.4, 0.5, 0.9, -0.9}));
  const Tensor& out = g.value(net.forward(g, in));
  REQUIRE(out.rows() == 3);
  const std::vector<std::vector<double>> rows{{0.1, 0.2}, {-0.4, 0.5}, {0.9, -0.9}};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto plain = net.forward_plain(rows[i]);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out(i, j) == doctest::Approx(plain[j]).epsilon(1e-13));
    }
  }
}

TEST_CASE("no hidden layers gives a linear map") {
  Rng rng(6);
  Mlp net("lin", 3, {}, 2, Activation::kTanh, rng);
  REQUIRE(net.parameters().size() == 2);
  // set W and b by hand and verify x W + b
  auto& W = net.parameters()[0]->value;
  auto& b = net.parameters()[1]->value;
  for (std::size_t i = 0; i < W.size(); ++i) W[i] = 0.1 * double(i + 1);
  b[0] = 1.0;
  b[1] = -1.0;
  const auto out = net.forward_plain(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(out[0] == doctest::Approx(1.0 * 0.1 + 2.0 * 0.3 + 3.0 * 0.5 + 1.0));
  CHECK(out[1] == doctest::Approx(1.0 * 0.2 + 2.0 * 0.4 + 3.0 * 0.6 - 1.0));
}

TEST_CASE("training a tiny mlp reduces squared error") {
  Rng rng(8);
  Mlp net("f", 1, {16}, 1, Activation::kTanh, rng);
  const std::size_t n = 64;
  Tensor X(n, 1), Y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -1.0 + 2.0 * double(i) / double(n - 1);
    X(i, 0) = x;
    Y(i, 0) = std::sin(2.0 * x);
  }

  ad::Graph g;
  const auto pred = net.forward(g, g.leaf(X));
  const auto loss = g.mean(g.square(g.sub(pred, g.leaf(Y))));
  const double initial = g.value(loss).item();

  for (int it = 0; it < 400; ++it) {
    g.forward();
    g.backward(loss);
    const auto grads = g.parameter_gradients();
    for (const auto& p : net.parameters()) {
      const Tensor& grad = grads.at(p->id);
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->value[i] -= 0.05 * grad[i];
      }
    }
  }
  g.forward();
  const double final = g.value(loss).item();
  CHECK(final < 0.05 * initial);
}

TEST_CASE("zero width layers are rejected") {
  Rng rng(1);
  CHECK_THROWS_AS(Mlp("f", 0, {4}, 2, Activation::kTanh, rng), ConfigError);
  CHECK_THROWS_AS(Mlp("f", 2, {0}, 2, Activation::kTanh, rng), ConfigError);
  CHECK_THROWS_AS(Mlp("f", 2, {4}, 0, Activation::kTanh, rng), ConfigError);
}
