#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "bernflow/graph.hpp"
#include "bernflow/rng.hpp"

using namespace bernflow;
using ad::Graph;

namespace {

ad::ParameterPtr make_param(const std::string& id, Tensor t) {
  return std::make_shared<ad::Parameter>(ad::Parameter{id, std::move(t)});
}

ad::ParameterPtr random_param(const std::string& id, std::size_t r, std::size_t c,
                              Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return make_param(id, std::move(t));
}

// Central finite differences on a freshly rebuilt graph.
double fd_grad(const std::function<Graph::Ref(Graph&)>& build,
               const ad::ParameterPtr& p, std::size_t idx, double step = 1e-6) {
  const double saved = p->value[idx];
  p->value[idx] = saved + step;
  Graph gp;
  const double fp = gp.value(build(gp)).item();
  p->value[idx] = saved - step;
  Graph gm;
  const double fm = gm.value(build(gm)).item();
  p->value[idx] = saved;
  return (fp - fm) / (2.0 * step);
}

void check_op_gradient(const std::function<Graph::Ref(Graph&)>& build,
                       const std::vector<ad::ParameterPtr>& params,
                       double tol = 1e-6) {
  Graph g;
  g.backward(build(g));
  const auto grads = g.parameter_gradients();
  for (const auto& p : params) {
    REQUIRE(grads.count(p->id) == 1);
    const Tensor& an = grads.at(p->id);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double fd = fd_grad(build, p, i);
      const double err = std::abs(an[i] - fd) / std::max(1.0, std::abs(an[i]));
      INFO("param ", p->id, " index ", i, " analytic ", an[i], " fd ", fd);
      CHECK(err < tol);
    }
  }
}

}  // namespace

TEST_CASE("forward values of basic ops") {
  Graph g;
  const auto a = g.leaf(Tensor::row({1.0, 2.0, 3.0}));
  const auto b = g.leaf(Tensor::row({4.0, 5.0, 6.0}));
  CHECK(g.value(g.add(a, b))[1] == 7.0);
  CHECK(g.value(g.sub(b, a))[2] == 3.0);
  CHECK(g.value(g.mul(a, b))[0] == 4.0);
  CHECK(g.value(g.neg(a))[0] == -1.0);
  CHECK(g.value(g.scale(a, 2.0))[2] == 6.0);
  CHECK(g.value(g.add_const(a, 0.5))[0] == 1.5);
  CHECK(g.value(g.square(a))[2] == 9.0);
  CHECK(g.value(g.pow_int(a, 3))[1] == 8.0);
  CHECK(g.value(g.max_const(a, 2.5))[0] == 2.5);
  CHECK(g.value(g.max_const(a, 2.5))[2] == 3.0);
  CHECK(g.value(g.sum(a)).item() == 6.0);
  CHECK(g.value(g.mean(b)).item() == 5.0);
  CHECK(g.value(g.exp(a))[0] == doctest::Approx(std::exp(1.0)));
  CHECK(g.value(g.log(b))[0] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("matmul and add_row forward") {
  Graph g;
  const auto A = g.leaf(Tensor(2, 3, {1, 2, 3, 4, 5, 6}));
  const auto B = g.leaf(Tensor(3, 2, {7, 8, 9, 10, 11, 12}));
  const Tensor& C = g.value(g.matmul(A, B));
  CHECK(C.rows() == 2);
  CHECK(C.cols() == 2);
  CHECK(C(0, 0) == 58.0);
  CHECK(C(0, 1) == 64.0);
  CHECK(C(1, 0) == 139.0);
  CHECK(C(1, 1) == 154.0);

  const auto r = g.leaf(Tensor::row({10.0, 20.0, 30.0}));
  const Tensor& D = g.value(g.add_row(A, r));
  CHECK(D(0, 0) == 11.0);
  CHECK(D(1, 2) == 36.0);
}

TEST_CASE("slice, concat and cumsum forward") {
  Graph g;
  const auto a = g.leaf(Tensor(2, 4, {1, 2, 3, 4, 5, 6, 7, 8}));
  const Tensor& s = g.value(g.slice_cols(a, 1, 2));
  CHECK(s.rows() == 2);
  CHECK(s.cols() == 2);
  CHECK(s(0, 0) == 2.0);
  CHECK(s(1, 1) == 7.0);

  const auto b = g.leaf(Tensor(2, 1, {9, 10}));
  const Tensor& c = g.value(g.concat_cols(a, b));
  CHECK(c.cols() == 5);
  CHECK(c(0, 4) == 9.0);
  CHECK(c(1, 0) == 5.0);

  const Tensor& cs = g.value(g.cumsum_cols(a));
  CHECK(cs(0, 0) == 1.0);
  CHECK(cs(0, 3) == 10.0);
  CHECK(cs(1, 2) == 18.0);
}

TEST_CASE("activation forward values") {
  Graph g;
  const auto a = g.leaf(Tensor::row({-1.0, 0.0, 2.0}));
  CHECK(g.value(g.tanh(a))[2] == doctest::Approx(std::tanh(2.0)));
  CHECK(g.value(g.relu(a))[0] == 0.0);
  CHECK(g.value(g.relu(a))[2] == 2.0);
  CHECK(g.value(g.sigmoid(a))[1] == doctest::Approx(0.5));
  CHECK(g.value(g.softplus(a))[1] == doctest::Approx(std::log(2.0)));
  // softplus stays finite and exact-ish far out on both tails
  const auto far = g.leaf(Tensor::row({-800.0, 800.0}));
  const Tensor& sp = g.value(g.softplus(far));
  CHECK(sp[0] == 0.0);
  CHECK(sp[1] == 800.0);
  const Tensor& sg = g.value(g.sigmoid(far));
  CHECK(sg[0] == 0.0);
  CHECK(sg[1] == 1.0);
}

TEST_CASE("gradients of every differentiable op vs finite differences") {
  Rng rng(17);
  auto p = random_param("p", 2, 3, rng, 0.2, 1.5);  // positive: log-safe
  auto q = random_param("q", 2, 3, rng, 0.2, 1.5);
  const std::vector<ad::ParameterPtr> both{p, q};
  const std::vector<ad::ParameterPtr> single{p};

  check_op_gradient(
      [&](Graph& g) { return g.sum(g.add(g.param(p), g.param(q))); }, both);
  check_op_gradient(
      [&](Graph& g) { return g.sum(g.sub(g.param(p), g.param(q))); }, both);
  check_op_gradient(
      [&](Graph& g) { return g.sum(g.mul(g.param(p), g.param(q))); }, both);
  check_op_gradient([&](Graph& g) { return g.sum(g.exp(g.param(p))); }, single);
  check_op_gradient([&](Graph& g) { return g.sum(g.log(g.param(p))); }, single);
  check_op_gradient([&](Graph& g) { return g.sum(g.tanh(g.param(p))); }, single);
  check_op_gradient([&](Graph& g) { return g.sum(g.relu(g.param(p))); }, single);
  check_op_gradient([&](Graph& g) { return g.sum(g.sigmoid(g.param(p))); }, single);
  check_op_gradient([&](Graph& g) { return g.sum(g.softplus(g.param(p))); }, single);
  check_op_gradient([&](Graph& g) { return g.sum(g.square(g.param(p))); }, single);
  check_op_gradient([&](Graph& g) { return g.sum(g.neg(g.param(p))); }, single);
  check_op_gradient([&](Graph& g) { return g.sum(g.scale(g.param(p), -2.5)); },
                    single);
  check_op_gradient([&](Graph& g) { return g.sum(g.add_const(g.param(p), 3.0)); },
                    single);
  check_op_gradient([&](Graph& g) { return g.sum(g.pow_int(g.param(p), 4)); },
                    single);
  check_op_gradient([&](Graph& g) { return g.sum(g.pow_int(g.param(p), 0)); },
                    single);
  check_op_gradient([&](Graph& g) { return g.mean(g.square(g.param(p))); }, single);
  check_op_gradient(
      [&](Graph& g) { return g.sum(g.cumsum_cols(g.square(g.param(p)))); }, single);
  check_op_gradient(
      [&](Graph& g) { return g.sum(g.square(g.slice_cols(g.param(p), 1, 2))); },
      single);
  check_op_gradient(
      [&](Graph& g) {
        return g.sum(g.square(g.concat_cols(g.param(p), g.param(q))));
      },
      both);

  auto w = random_param("w", 3, 2, rng);
  check_op_gradient(
      [&](Graph& g) { return g.sum(g.square(g.matmul(g.param(p), g.param(w)))); },
      {p, w});

  auto row = random_param("row", 1, 3, rng);
  check_op_gradient(
      [&](Graph& g) { return g.sum(g.square(g.add_row(g.param(p), g.param(row)))); },
      {p, row});

  // max_const away from the kink: active and clamped coordinates
  check_op_gradient([&](Graph& g) { return g.sum(g.max_const(g.param(p), 0.9)); },
                    single, 1e-5);
}

TEST_CASE("cumsum backward is the suffix sum") {
  auto p = make_param("p", Tensor(1, 4, {1.0, 2.0, 3.0, 4.0}));
  Graph g;
  // weight each output column differently so the suffix structure shows
  const auto w = g.leaf(Tensor::row({1.0, 10.0, 100.0, 1000.0}));
  g.backward(g.sum(g.mul(g.cumsum_cols(g.param(p)), w)));
  const auto grads = g.parameter_gradients();
  const Tensor& grad = grads.at("p");
  CHECK(grad[0] == 1111.0);
  CHECK(grad[1] == 1110.0);
  CHECK(grad[2] == 1100.0);
  CHECK(grad[3] == 1000.0);
}

TEST_CASE("gradient accumulates through reused nodes") {
  auto p = make_param("p", Tensor::scalar(3.0));
  Graph g;
  const auto x = g.param(p);
  g.backward(g.sum(g.mul(x, x)));  // d/dx x^2 = 2x
  CHECK(g.parameter_gradients().at("p").item() == doctest::Approx(6.0));
}

TEST_CASE("forward replays the tape after leaf updates") {
  Graph g;
  const auto x = g.leaf(Tensor::scalar(2.0));
  const auto y = g.square(x);
  CHECK(g.value(y).item() == 4.0);
  g.leaf_data(x)[0] = 5.0;
  g.forward();
  CHECK(g.value(y).item() == 25.0);
}

TEST_CASE("forward replays after parameter updates") {
  auto p = make_param("p", Tensor::scalar(1.0));
  Graph g;
  const auto y = g.square(g.param(p));
  CHECK(g.value(y).item() == 1.0);
  p->value[0] = 3.0;
  g.forward();
  CHECK(g.value(y).item() == 9.0);
  g.backward(y);
  CHECK(g.parameter_gradients().at("p").item() == doctest::Approx(6.0));
}

TEST_CASE("shape mismatches are rejected") {
  Graph g;
  const auto a = g.leaf(Tensor(2, 3));
  const auto b = g.leaf(Tensor(3, 2));
  CHECK_THROWS_AS(g.add(a, b), StructuralError);
  CHECK_THROWS_AS(g.mul(a, b), StructuralError);
  CHECK_THROWS_AS(g.matmul(a, a), StructuralError);
  CHECK_THROWS_AS(g.add_row(a, g.leaf(Tensor(1, 2))), StructuralError);
  CHECK_THROWS_AS(g.slice_cols(a, 2, 2), StructuralError);
  CHECK_THROWS_AS(g.concat_cols(a, b), StructuralError);
}

TEST_CASE("grad_check helper on a composite function") {
  Rng rng(5);
  auto w = random_param("w", 3, 4, rng);
  auto b = random_param("b", 1, 4, rng);
  const auto res = ad::grad_check(
      [&](Graph& g) {
        const auto x = g.leaf(Tensor(2, 3, {0.1, -0.2, 0.3, 0.4, 0.5, -0.6}));
        return g.mean(g.square(g.tanh(g.add_row(g.matmul(x, g.param(w)), g.param(b)))));
      },
      std::vector<ad::ParameterPtr>{w, b}, 1e-5);
  CHECK(!res.non_finite);
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("grad_check flags an intentionally wrong gradient") {
  // max_const at the kink: finite differences straddle the clamp
  auto p = make_param("p", Tensor::scalar(1.0));
  const auto res = ad::grad_check(
      [&](Graph& g) { return g.sum(g.max_const(g.param(p), 1.0)); },
      std::vector<ad::ParameterPtr>{p}, 1e-5);
  CHECK(res.max_rel_error > 1e-2);
}
