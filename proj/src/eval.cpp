#include "bernflow/eval.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"

#include "bernflow/rng.hpp"

namespace bernflow {

namespace {

using nlohmann::json;

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << body;
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace

double CpdGrid::trapezoid_mass() const {
  double mass = 0.0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    mass += 0.5 * (density[i] + density[i - 1]) * (y[i] - y[i - 1]);
  }
  return mass;
}

std::size_t CpdGrid::mode_count(double rel_floor) const {
  double peak = 0.0;
  for (double d : density) peak = std::max(peak, d);
  const double floor = peak * rel_floor;
  // Count ascending-to-descending transitions so flat-topped maxima (ties on
  // a symmetric grid) register exactly once.
  std::size_t count = 0;
  int rising = 0;
  for (std::size_t i = 1; i < density.size(); ++i) {
    const double step = density[i] - density[i - 1];
    if (step == 0.0) continue;
    if (step < 0.0) {
      if (rising > 0 && density[i - 1] >= floor) ++count;
      rising = -1;
    } else {
      rising = 1;
    }
  }
  return count;
}

void write_cpd_csv(const std::string& path, const CpdGrid& grid) {
  std::string out = "y,density,cdf\n";
  for (std::size_t i = 0; i < grid.y.size(); ++i) {
    append_double(out, grid.y[i]);
    out += ',';
    append_double(out, grid.density[i]);
    out += ',';
    append_double(out, grid.cdf[i]);
    out += '\n';
  }
  write_text(path, out);
}

void write_cpd_sidecar_json(const std::string& path, const CpdGrid& grid) {
  json jq = json::array();
  for (const auto& q : grid.quantiles) {
    json e{{"level", q.level}, {"attainable", q.attainable}};
    if (q.attainable) {
      e["value"] = q.value;
    } else {
      e["value"] = nullptr;
    }
    jq.push_back(e);
  }
  const json j{{"x", grid.x},
               {"z_lo", grid.z_lo},
               {"z_hi", grid.z_hi},
               {"quantiles", jq}};
  write_text(path, j.dump(2) + "\n");
}

BenchmarkReport benchmark_run(const std::string& dataset_name, const Dataset& data,
                              const FoldSplit& folds, const ModelConfig& model_cfg,
                              const TrainConfig& train_cfg,
                              const std::string& model_kind, std::size_t jobs) {
  if (model_kind != "dl_mlt" && model_kind != "ltm") {
    throw ConfigError("benchmark: unknown model kind '" + model_kind + "'");
  }
  if (folds.folds.empty()) throw DataError("benchmark: no folds");
  model_cfg.validate();
  train_cfg.validate();

  BenchmarkReport report;
  report.dataset = dataset_name;
  report.model_kind = model_kind;
  report.model = model_cfg;
  report.train = train_cfg;
  report.folds_requested = folds.folds.size();
  report.per_fold.resize(folds.folds.size());

  const auto run_fold = [&](std::size_t k) {
    BenchmarkFold& slot = report.per_fold[k];
    slot.fold = k;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Dataset train = data.subset(folds.folds[k].train);
      const Dataset test = data.subset(folds.folds[k].test);
      const Scaler scaler = Scaler::fit(train);
      const Dataset train_scaled = scaler.apply(train);

      ModelConfig mc = model_cfg;
      mc.seed = Rng::derive(model_cfg.seed, 2 * k);
      TrainConfig tc = train_cfg;
      tc.seed = Rng::derive(train_cfg.seed, 2 * k + 1);
      tc.log_path.clear();  // per-fold logs are not part of the report

      FitResult fr;
      if (model_kind == "dl_mlt") {
        TransformationModel model(mc, train.p);
        fr = fit(model, train_scaled, tc);
        slot.test_nll = test_nll(model, scaler, test);
      } else {
        LtmModel model(train.p, mc.order, mc.l2);
        fr = fit(model, train_scaled, tc);
        slot.test_nll = test_nll(model, scaler, test);
      }
      slot.train_nll = fr.final_train_nll + scaler.nll_correction();
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.ok = false;
      slot.error = e.what();
    }
    slot.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const std::size_t workers = std::max<std::size_t>(
      1, std::min(jobs, folds.folds.size()));
  if (workers == 1) {
    for (std::size_t k = 0; k < folds.folds.size(); ++k) run_fold(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t k = next.fetch_add(1);
          if (k >= report.per_fold.size()) return;
          run_fold(k);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  double sum = 0.0;
  std::size_t ok = 0;
  for (const auto& f : report.per_fold) {
    if (f.ok) {
      sum += f.test_nll;
      ++ok;
    } else {
      ++report.folds_failed;
    }
  }
  if (ok > 0) {
    report.mean_nll = sum / static_cast<double>(ok);
    double ss = 0.0;
    for (const auto& f : report.per_fold) {
      if (f.ok) {
        const double d = f.test_nll - report.mean_nll;
        ss += d * d;
      }
    }
    report.stderr_nll =
        ok > 1 ? std::sqrt(ss / static_cast<double>(ok - 1)) /
                     std::sqrt(static_cast<double>(ok))
               : 0.0;
  }
  return report;
}

std::string benchmark_report_json(const BenchmarkReport& r) {
  json folds = json::array();
  for (const auto& f : r.per_fold) {
    json e{{"fold", f.fold}, {"ok", f.ok}};
    if (f.ok) {
      e["test_nll"] = f.test_nll;
      e["train_nll"] = f.train_nll;
    } else {
      e["error"] = f.error;
    }
    folds.push_back(e);
  }
  const json j{
      {"dataset", r.dataset},
      {"model_kind", r.model_kind},
      {"model",
       {{"order", r.model.order},
        {"hidden_layers", r.model.hidden_layers},
        {"activation", r.model.activation},
        {"l2", r.model.l2},
        {"constant_groups", std::vector<std::string>(r.model.constant_groups.begin(),
                                                     r.model.constant_groups.end())},
        {"use_f3", r.model.use_f3},
        {"seed", r.model.seed}}},
      {"train",
       {{"iterations", r.train.iterations},
        {"learning_rate", r.train.learning_rate},
        {"halve_lr", r.train.halve_lr},
        {"batch_size", r.train.batch_size},
        {"seed", r.train.seed}}},
      {"folds_requested", r.folds_requested},
      {"folds_failed", r.folds_failed},
      {"folds", folds},
      {"mean_nll", r.mean_nll},
      {"stderr_nll", r.stderr_nll}};
  return j.dump(2) + "\n";
}

void write_benchmark_report(const std::string& path, const BenchmarkReport& report) {
  write_text(path, benchmark_report_json(report));
}

}  // namespace bernflow
