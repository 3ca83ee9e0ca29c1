#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "bernflow/data.hpp"
#include "bernflow/flow.hpp"
#include "bernflow/training.hpp"

using namespace bernflow;

namespace {

ad::ParameterPtr make_param(const std::string& id, Tensor t) {
  return std::make_shared<ad::Parameter>(ad::Parameter{id, std::move(t)});
}

std::map<std::string, Tensor> grad_map(const std::string& id, Tensor g) {
  std::map<std::string, Tensor> m;
  m.emplace(id, std::move(g));
  return m;
}

}  // namespace

TEST_CASE("first adam step moves by lr times the gradient sign") {
  auto p = make_param("p", Tensor(1, 2, {1.0, -2.0}));
  Adam opt({p}, 0.01);
  opt.step(grad_map("p", Tensor(1, 2, {0.3, -700.0})));
  // m-hat / (sqrt(v-hat) + eps) = g / (|g| + eps) ~ sign(g)
  CHECK(p->value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p->value[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
}

TEST_CASE("constant gradient keeps unit-lr steps") {
  auto p = make_param("p", Tensor::scalar(0.0));
  Adam opt({p}, 0.1);
  double prev = 0.0;
  for (int i = 0; i < 50; ++i) {
    opt.step(grad_map("p", Tensor::scalar(2.5)));
    const double step = prev - p->value.item();
    CHECK(step == doctest::Approx(0.1).epsilon(1e-3));
    prev = p->value.item();
  }
  CHECK(opt.steps() == 50);
}

TEST_CASE("zero and missing gradients leave parameters unchanged") {
  auto p = make_param("p", Tensor::scalar(3.0));
  auto q = make_param("q", Tensor::scalar(-1.0));
  Adam opt({p, q}, 0.5);
  opt.step(grad_map("p", Tensor::scalar(0.0)));  // q absent from the map
  CHECK(p->value.item() == 3.0);
  CHECK(q->value.item() == -1.0);
}

TEST_CASE("adam rejects shape mismatches") {
  auto p = make_param("p", Tensor(1, 2));
  Adam opt({p}, 0.1);
  CHECK_THROWS_AS(opt.step(grad_map("p", Tensor(2, 2))), StructuralError);
}

TEST_CASE("learning rate can be halved mid-run") {
  auto p = make_param("p", Tensor::scalar(0.0));
  Adam opt({p}, 0.2);
  CHECK(opt.lr() == 0.2);
  opt.set_lr(0.1);
  CHECK(opt.lr() == 0.1);
  opt.step(grad_map("p", Tensor::scalar(1.0)));
  CHECK(p->value.item() == doctest::Approx(-0.1).epsilon(1e-3));
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero iterations returns the initial loss and leaves the model alone") {
  const Dataset toy = gen_toy_hetero_gaussian(50, 2);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  ModelConfig mc;
  mc.order = 4;
  mc.hidden_layers = {8};
  TransformationModel model(mc, 1);
  const double before = dataset_nll(model, scaled);

  TrainConfig tc;
  tc.iterations = 0;
  const FitResult fr = fit(model, scaled, tc);
  CHECK(fr.iterations == 0);
  CHECK(fr.final_train_nll == before);
  CHECK(fr.trace.empty());
  CHECK(dataset_nll(model, scaled) == before);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset toy = gen_toy_sinusoidal(120, 5);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  const auto run = [&] {
    ModelConfig mc;
    mc.order = 6;
    mc.hidden_layers = {10};
    mc.seed = 42;
    TransformationModel model(mc, 1);
    TrainConfig tc;
    tc.iterations = 150;
    tc.seed = 9;
    return fit(model, scaled, tc).final_train_nll;
  };
  const double a = run();
  const double b = run();
  CHECK(a == b);  // bitwise
}

TEST_CASE("different train seeds differ under minibatching") {
  const Dataset toy = gen_toy_sinusoidal(300, 5);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  const auto run = [&](std::uint64_t seed) {
    ModelConfig mc;
    mc.order = 4;
    mc.hidden_layers = {8};
    mc.seed = 2;
    TransformationModel model(mc, 1);
    TrainConfig tc;
    tc.iterations = 60;
    tc.batch_size = 32;
    tc.seed = seed;
    return fit(model, scaled, tc).final_train_nll;
  };
  CHECK(run(1) != run(2));
}

TEST_CASE("fit lowers the loss on a toy problem") {
  const Dataset toy = gen_toy_hetero_gaussian(300, 7);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  ModelConfig mc;
  mc.order = 4;
  mc.hidden_layers = {12};
  mc.seed = 3;
  TransformationModel model(mc, 1);
  const double before = dataset_nll(model, scaled);

  TrainConfig tc;
  tc.iterations = 400;
  const FitResult fr = fit(model, scaled, tc);
  CHECK(fr.final_train_nll < before - 0.1);
}

TEST_CASE("trace honors log_every and records validation loss") {
  const Dataset toy = gen_toy_hetero_gaussian(80, 11);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);
  const Dataset val = sc.apply(gen_toy_hetero_gaussian(40, 12));

  ModelConfig mc;
  mc.order = 3;
  mc.hidden_layers = {6};
  TransformationModel model(mc, 1);
  TrainConfig tc;
  tc.iterations = 10;
  tc.log_every = 4;
  const std::string path = "trace_test.ndjson";
  tc.log_path = path;
  const FitResult fr = fit(model, scaled, tc, &val);

  REQUIRE(fr.trace.size() == 4);  // iterations 0, 4, 8, 9
  CHECK(fr.trace[0].iteration == 0);
  CHECK(fr.trace[1].iteration == 4);
  CHECK(fr.trace[2].iteration == 8);
  CHECK(fr.trace[3].iteration == 9);
  for (const auto& tp : fr.trace) {
    CHECK(std::isfinite(tp.train_nll));
    CHECK(std::isfinite(tp.val_nll));
  }

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      ++lines;
      CHECK(line.find("\"iteration\"") != std::string::npos);
      CHECK(line.find("\"train_nll\"") != std::string::npos);
      CHECK(line.find("\"val_nll\"") != std::string::npos);
    }
  }
  in.close();
  CHECK(lines == 4);
  std::remove(path.c_str());
}

TEST_CASE("fit requires at least two rows") {
  Dataset one;
  one.n = 1;
  one.p = 1;
  one.x = {0.5};
  one.y = {0.5};
  one.feature_names = {"x1"};
  ModelConfig mc;
  TransformationModel model(mc, 1);
  TrainConfig tc;
  CHECK_THROWS_AS(fit(model, one, tc), DataError);
}

TEST_CASE("explicit minibatches cycle through the data") {
  const Dataset toy = gen_toy_sinusoidal(100, 3);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  ModelConfig mc;
  mc.order = 3;
  mc.hidden_layers = {6};
  TransformationModel model(mc, 1);
  TrainConfig tc;
  tc.iterations = 25;
  tc.batch_size = 16;
  const FitResult fr = fit(model, scaled, tc);
  CHECK(std::isfinite(fr.final_train_nll));
}

TEST_CASE("exploding learning rate raises a divergence error with context") {
  const Dataset toy = gen_toy_hetero_gaussian(60, 13);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  ModelConfig mc;
  mc.order = 5;
  mc.hidden_layers = {8};
  TransformationModel model(mc, 1);
  TrainConfig tc;
  tc.iterations = 100;
  tc.learning_rate = 1e8;
  try {
    fit(model, scaled, tc);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("iteration") != std::string::npos);
    CHECK(msg.find("consecutive") != std::string::npos);
  }
}

TEST_CASE("l2 regularization shrinks the weight norms") {
  const Dataset toy = gen_toy_sinusoidal(200, 17);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  const auto weight_norm = [](const TransformationModel& m) {
    double s = 0.0;
    for (const auto& w : m.weight_matrices()) {
      for (double v : w->value.data()) s += v * v;
    }
    return s;
  };

  ModelConfig free_cfg;
  free_cfg.order = 5;
  free_cfg.hidden_layers = {10};
  free_cfg.seed = 21;
  TransformationModel free_model(free_cfg, 1);

  ModelConfig reg_cfg = free_cfg;
  reg_cfg.l2 = 1e3;
  TransformationModel reg_model(reg_cfg, 1);

  TrainConfig tc;
  tc.iterations = 300;
  fit(free_model, scaled, tc);
  fit(reg_model, scaled, tc);
  CHECK(weight_norm(reg_model) < 0.1 * weight_norm(free_model));
}

TEST_CASE("the conditional model beats the linear-shift baseline on sinusoidal data") {
  const Dataset toy = gen_toy_sinusoidal(400, 19);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  ModelConfig mc;
  mc.order = 10;
  mc.hidden_layers = {20};
  mc.seed = 4;
  TransformationModel full(mc, 1);
  LtmModel ltm(1, 10);

  TrainConfig tc;
  tc.iterations = 1200;
  const double full_nll = fit(full, scaled, tc).final_train_nll;
  const double ltm_nll = fit(ltm, scaled, tc).final_train_nll;
  CHECK(full_nll < ltm_nll - 0.5);
}

TEST_CASE("dataset_nll matches the graph loss without the penalty") {
  const Dataset toy = gen_toy_hetero_gaussian(40, 23);
  const Scaler sc = Scaler::fit(toy);
  const Dataset scaled = sc.apply(toy);

  ModelConfig mc;
  mc.order = 3;
  mc.l2 = 0.7;
  TransformationModel model(mc, 1);
  ad::Graph g;
  const auto refs =
      model.build_loss(g, g.leaf(scaled.feature_tensor()), g.leaf(scaled.target_tensor()));
  CHECK(dataset_nll(model, scaled) == g.value(refs.data_nll).item());
  CHECK(g.value(refs.loss).item() >= g.value(refs.data_nll).item());
}
