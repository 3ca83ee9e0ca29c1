#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "bernflow/data.hpp"
#include "bernflow/eval.hpp"
#include "bernflow/flow.hpp"
#include "bernflow/training.hpp"
#include "test_support.hpp"

using namespace bernflow;

namespace {

// Small trained model + scaler reused across cases.
struct Fitted {
  Scaler scaler;
  TransformationModel model;
  Dataset raw;
  Dataset scaled;
  FitResult result;
};

Fitted fit_small(std::size_t n = 300, std::size_t iters = 400) {
  const Dataset raw = gen_toy_hetero_gaussian(n, 21);
  const Scaler sc = Scaler::fit(raw);
  ModelConfig mc;
  mc.order = 4;
  mc.hidden_layers = {10};
  mc.seed = 6;
  Fitted f{sc, TransformationModel(mc, 1), raw, sc.apply(raw), {}};
  TrainConfig tc;
  tc.iterations = iters;
  tc.seed = 6;
  f.result = fit(f.model, f.scaled, tc);
  return f;
}

}  // namespace

TEST_CASE("test_nll is permutation invariant and corrected to the raw scale") {
  const Fitted f = fit_small();
  const double nll = test_nll(f.model, f.scaler, f.raw);

  std::vector<std::size_t> idx(f.raw.n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(3);
  rng.shuffle(idx);
  const double permuted = test_nll(f.model, f.scaler, f.raw.subset(idx));
  CHECK(nll == doctest::Approx(permuted).epsilon(1e-12));

  // corrected value = scaled-space mean NLL + log(y_scale)
  double scaled_nll = 0.0;
  for (std::size_t i = 0; i < f.scaled.n; ++i) {
    scaled_nll -= log_density(f.model.basis(), f.model.params_for(f.scaled.row(i)),
                              f.scaled.y[i]);
  }
  scaled_nll /= double(f.scaled.n);
  CHECK(nll == doctest::Approx(scaled_nll + f.scaler.nll_correction()).epsilon(1e-12));
}

TEST_CASE("identity scaler needs no correction") {
  Scaler sc;  // defaults: y_min 0, y_scale 1
  CHECK(sc.nll_correction() == 0.0);
}

TEST_CASE("test_nll rejects an empty test set") {
  const Fitted f = fit_small(60, 50);
  Dataset empty;
  empty.p = 1;
  CHECK_THROWS_AS(test_nll(f.model, f.scaler, empty), DataError);
}

TEST_CASE("evaluating the training fold reproduces the fit result") {
  const Fitted f = fit_small();
  const double evaluated = test_nll(f.model, f.scaler, f.raw);
  const double fitted = f.result.final_train_nll + f.scaler.nll_correction();
  CHECK(std::abs(evaluated - fitted) <= 1e-9);
}

TEST_CASE("cpd grid satisfies its invariants") {
  const Fitted f = fit_small();
  const std::vector<double> levels{0.025, 0.5, 0.975};
  const CpdGrid grid = cpd_export(f.model, f.scaler, std::vector<double>{0.5}, 512, levels);

  REQUIRE(grid.y.size() == 512);
  REQUIRE(grid.density.size() == 512);
  REQUIRE(grid.cdf.size() == 512);
  for (std::size_t i = 0; i < grid.y.size(); ++i) {
    CHECK(grid.density[i] >= 0.0);
    if (i > 0) {
      CHECK(grid.y[i] > grid.y[i - 1]);
      CHECK(grid.cdf[i] >= grid.cdf[i - 1]);
    }
  }
  const double mass = grid.trapezoid_mass();
  CHECK(mass >= 0.99);
  CHECK(mass <= 1.001);

  // cdf column is consistent with the trapezoid integral of the density
  double acc = 0.0;
  for (std::size_t i = 1; i < grid.y.size(); ++i) {
    acc += 0.5 * (grid.density[i] + grid.density[i - 1]) * (grid.y[i] - grid.y[i - 1]);
    CHECK(std::abs((grid.cdf[i] - grid.cdf[0]) - acc) < 5e-3);
  }

  REQUIRE(grid.quantiles.size() == 3);
  for (const auto& q : grid.quantiles) CHECK(q.attainable);
  // the exported median lies where the cdf crosses one half
  const double med = grid.quantiles[1].value;
  for (std::size_t i = 1; i < grid.y.size(); ++i) {
    if (grid.cdf[i - 1] < 0.5 && 0.5 <= grid.cdf[i]) {
      CHECK(med >= grid.y[i - 1] - 1e-9);
      CHECK(med <= grid.y[i] + 1e-9);
    }
  }

  // densities are per unit of original y: compare against the direct value
  const auto xs = f.scaler.scale_row(std::vector<double>{0.5});
  const TransformParams p = f.model.params_for(xs);
  const double y_mid = grid.y[256];
  const double direct =
      std::exp(log_density(f.model.basis(), p, f.scaler.scale_y(y_mid))) /
      f.scaler.y_scale;
  CHECK(grid.density[256] == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("unattainable quantile levels are flagged but others returned") {
  // untrained model with a narrow z-range: theta spans (0, 1), so base mass
  // below z=0 is unreachable
  Dataset unit;
  unit.n = 2;
  unit.p = 1;
  unit.x = {0.0, 1.0};
  unit.y = {0.0, 1.0};
  unit.feature_names = {"x"};
  unit.target_name = "y";
  const Scaler sc = Scaler::fit(unit);  // identity: mins 0, scales 1
  ModelConfig mc;
  mc.order = 1;
  TransformationModel model(mc, 1);
  // z-range of the fresh model: alpha * (0, 1) = (0, ln 2); base quantile of
  // 0.025 is -1.96, far below
  const CpdGrid grid = cpd_export(model, sc, std::vector<double>{0.5}, 64,
                                  std::vector<double>{0.025, 0.6});
  REQUIRE(grid.quantiles.size() == 2);
  CHECK(!grid.quantiles[0].attainable);
  CHECK(grid.quantiles[1].attainable);
  CHECK(std::isnan(grid.quantiles[0].value));
  CHECK(std::isfinite(grid.quantiles[1].value));
}

TEST_CASE("mode counting distinguishes unimodal from bimodal") {
  CpdGrid uni;
  CpdGrid bi;
  for (int i = 0; i < 200; ++i) {
    const double y = -3.0 + 6.0 * i / 199.0;
    uni.y.push_back(y);
    uni.density.push_back(std::exp(-0.5 * y * y));
    bi.y.push_back(y);
    bi.density.push_back(std::exp(-8.0 * (y - 1.2) * (y - 1.2)) +
                         std::exp(-8.0 * (y + 1.2) * (y + 1.2)));
  }
  CHECK(uni.mode_count() == 1);
  CHECK(bi.mode_count() == 2);
}

TEST_CASE("mode counting ignores noise below the relative floor") {
  CpdGrid g;
  for (int i = 0; i < 300; ++i) {
    const double y = -3.0 + 6.0 * i / 299.0;
    g.y.push_back(y);
    double d = std::exp(-0.5 * y * y);
    if (i % 7 == 3) d += 1e-6;  // tiny wiggles
    g.density.push_back(d);
  }
  CHECK(g.mode_count() == 1);
}

TEST_CASE("cpd files are written with density cdf and quantile sidecar") {
  const Fitted f = fit_small(120, 120);
  const CpdGrid grid = cpd_export(f.model, f.scaler, std::vector<double>{0.4}, 64,
                                  std::vector<double>{0.5});
  write_cpd_csv("cpd_test.csv", grid);
  write_cpd_sidecar_json("cpd_test.json", grid);

  const Dataset back = load_csv("cpd_test.csv", "cdf");
  CHECK(back.n == 64);
  CHECK(back.feature_names == std::vector<std::string>{"y", "density"});

  std::ifstream in("cpd_test.json");
  std::string json((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(json.find("\"quantiles\"") != std::string::npos);
  CHECK(json.find("\"z_lo\"") != std::string::npos);
  std::remove("cpd_test.csv");
  std::remove("cpd_test.json");
}

TEST_CASE("cpd rejects too few grid points and bad conditioning input") {
  const Fitted f = fit_small(60, 50);
  CHECK_THROWS_AS(
      cpd_export(f.model, f.scaler, std::vector<double>{0.5}, 4, std::vector<double>{}),
      ConfigError);
  CHECK_THROWS_AS(cpd_export(f.model, f.scaler, std::vector<double>{0.5, 0.7}, 64,
                             std::vector<double>{}),
                  StructuralError);
}

TEST_CASE("benchmark aggregates per-fold results") {
  const Dataset toy = gen_toy_hetero_gaussian(200, 31);
  const FoldSplit folds = split_folds(toy.n, 4, 5);

  ModelConfig mc;
  mc.order = 2;
  mc.hidden_layers = {6};
  mc.seed = 9;
  TrainConfig tc;
  tc.iterations = 120;
  tc.seed = 9;

  const BenchmarkReport rep =
      benchmark_run("toy_hetero", toy, folds, mc, tc, "dl_mlt", 1);
  CHECK(rep.dataset == "toy_hetero");
  CHECK(rep.folds_requested == 4);
  CHECK(rep.folds_failed == 0);
  REQUIRE(rep.per_fold.size() == 4);

  double mean = 0.0;
  for (const auto& f : rep.per_fold) {
    CHECK(f.ok);
    CHECK(std::isfinite(f.test_nll));
    CHECK(std::isfinite(f.train_nll));
    mean += f.test_nll;
  }
  mean /= 4.0;
  CHECK(rep.mean_nll == doctest::Approx(mean).epsilon(1e-12));

  double ss = 0.0;
  for (const auto& f : rep.per_fold) ss += (f.test_nll - mean) * (f.test_nll - mean);
  const double se = std::sqrt(ss / 3.0) / std::sqrt(4.0);
  CHECK(rep.stderr_nll == doctest::Approx(se).epsilon(1e-12));
}

TEST_CASE("benchmark json is identical across runs and thread counts") {
  const Dataset toy = gen_toy_sinusoidal(150, 41);
  const FoldSplit folds = split_folds(toy.n, 3, 7);

  ModelConfig mc;
  mc.order = 2;
  mc.hidden_layers = {5};
  mc.seed = 1;
  TrainConfig tc;
  tc.iterations = 80;

  const auto run = [&](std::size_t jobs) {
    return benchmark_report_json(
        benchmark_run("toy_sin", toy, folds, mc, tc, "dl_mlt", jobs));
  };
  const std::string a = run(1);
  const std::string b = run(1);
  const std::string c = run(3);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(a.find("seconds") == std::string::npos);  // no wall clock in the report
  CHECK(a.find("\"mean_nll\"") != std::string::npos);
}

TEST_CASE("benchmark supports the ltm baseline and counts failed folds") {
  const Dataset toy = gen_toy_hetero_gaussian(120, 51);
  const FoldSplit folds = split_folds(toy.n, 3, 2);

  ModelConfig mc;
  mc.order = 2;
  TrainConfig tc;
  tc.iterations = 60;
  const BenchmarkReport ltm_rep =
      benchmark_run("toy", toy, folds, mc, tc, "ltm", 1);
  CHECK(ltm_rep.model_kind == "ltm");
  CHECK(ltm_rep.folds_failed == 0);
  CHECK(std::isfinite(ltm_rep.mean_nll));

  // absurd learning rate: every fold diverges, and the report says so
  TrainConfig bad = tc;
  bad.learning_rate = 1e9;
  bad.iterations = 40;
  const BenchmarkReport failed =
      benchmark_run("toy", toy, folds, mc, bad, "dl_mlt", 1);
  CHECK(failed.folds_failed == 3);
  CHECK(std::isnan(failed.mean_nll));
  for (const auto& f : failed.per_fold) {
    CHECK(!f.ok);
    CHECK(!f.error.empty());
  }
}

TEST_CASE("benchmark rejects unknown model kinds") {
  const Dataset toy = gen_toy_hetero_gaussian(40, 1);
  const FoldSplit folds = split_folds(toy.n, 2, 1);
  ModelConfig mc;
  TrainConfig tc;
  CHECK_THROWS_AS(benchmark_run("toy", toy, folds, mc, tc, "mdn", 1), ConfigError);
}
