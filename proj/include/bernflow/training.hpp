#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "bernflow/data.hpp"
#include "bernflow/errors.hpp"
#include "bernflow/flow.hpp"
#include "bernflow/graph.hpp"
#include "bernflow/rng.hpp"

namespace bernflow {

struct TrainConfig {
  std::size_t iterations = 20000;
  double learning_rate = 1e-2;
  bool halve_lr = true;  // one halving at 70% of the budget
  std::size_t batch_size = 0;  // 0: full batch when n <= 2000, else 256
  std::uint64_t seed = 1;
  std::size_t log_every = 0;  // 0: trace only the final state
  std::string log_path;  // ndjson {iteration, train_nll, val_nll}; empty: none

  void validate() const;
};

struct FitResult {
  struct TracePoint {
    std::size_t iteration = 0;
    double train_nll = 0.0;  // over the current batch
    double val_nll = std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<TracePoint> trace;
  double final_train_nll = 0.0;  // full training set, after the last step
  std::size_t iterations = 0;
};

class Adam {
 public:
  Adam(std::vector<ad::ParameterPtr> params, double learning_rate);

  double lr() const { return lr_; }
  void set_lr(double learning_rate);
  std::size_t steps() const { return t_; }

  // Applies one update from gradients keyed by parameter id; ids absent from
  // the map contribute zero gradient.
  void step(const std::map<std::string, Tensor>& grads);

 private:
  std::vector<ad::ParameterPtr> params_;
  std::vector<Tensor> m_, v_;
  double lr_;
  std::size_t t_ = 0;
};

namespace detail {

class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path);
  void write(std::size_t iteration, double train_nll, double val_nll);

 private:
  std::ofstream out_;
};

[[noreturn]] void throw_divergence(const Tensor& per_sample_log_density,
                                   std::size_t iteration, double loss,
                                   const std::string& detail);

void check_gradients(const std::map<std::string, Tensor>& grads,
                     std::string& bad_param);

}  // namespace detail

// Mean data NLL of the model over a scaled dataset, via a fresh loss graph.
template <class Model>
double dataset_nll(const Model& model, const Dataset& scaled) {
  ad::Graph g;
  const LossRefs refs =
      model.build_loss(g, g.leaf(scaled.feature_tensor()), g.leaf(scaled.target_tensor()));
  return g.value(refs.data_nll).item();
}

// Trains in place on an already-scaled dataset. Deterministic given config
// seed; throws DivergenceError after 10 consecutive non-finite loss or
// gradient evaluations.
template <class Model>
FitResult fit(Model& model, const Dataset& data, const TrainConfig& cfg,
              const Dataset* val = nullptr) {
  cfg.validate();
  if (data.n < 2) throw DataError("fit: need at least 2 rows");

  const std::size_t n = data.n;
  const std::size_t batch = cfg.batch_size != 0
                                ? std::min(cfg.batch_size, n)
                                : (n <= 2000 ? n : std::size_t{256});
  const bool full_batch = batch == n;

  ad::Graph g;
  const ad::Graph::Ref Xl =
      full_batch ? g.leaf(data.feature_tensor()) : g.leaf(Tensor(batch, data.p));
  const ad::Graph::Ref yl =
      full_batch ? g.leaf(data.target_tensor()) : g.leaf(Tensor(batch, 1));
  const LossRefs refs = model.build_loss(g, Xl, yl);

  Adam opt(model.parameters(), cfg.learning_rate);
  Rng rng(cfg.seed);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  if (!full_batch) rng.shuffle(perm);
  std::size_t pos = 0;

  const auto fill_batch = [&] {
    if (full_batch) return;
    if (pos + batch > n) {
      rng.shuffle(perm);
      pos = 0;
    }
    Tensor& xb = g.leaf_data(Xl);
    Tensor& yb = g.leaf_data(yl);
    for (std::size_t i = 0; i < batch; ++i) {
      const auto row = data.row(perm[pos + i]);
      std::copy(row.begin(), row.end(), xb.ptr() + i * data.p);
      yb(i, 0) = data.y[perm[pos + i]];
    }
    pos += batch;
  };

  detail::TraceWriter log(cfg.log_path);
  FitResult out;
  const std::size_t halve_at =
      cfg.halve_lr ? (cfg.iterations * 7) / 10 : cfg.iterations + 1;
  std::size_t bad_streak = 0;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    fill_batch();
    g.forward();
    const double loss = g.value(refs.loss).item();
    std::string bad_param;
    bool bad = !std::isfinite(loss);
    if (!bad) {
      g.backward(refs.loss);
    }
    std::map<std::string, Tensor> grads;
    if (!bad) {
      grads = g.parameter_gradients();
      detail::check_gradients(grads, bad_param);
      bad = !bad_param.empty();
    }
    if (bad) {
      if (++bad_streak >= 10) {
        detail::throw_divergence(g.value(refs.log_density), it, loss, bad_param);
      }
      continue;  // skip the poisoned update
    }
    bad_streak = 0;
    if (it == halve_at) opt.set_lr(opt.lr() * 0.5);
    opt.step(grads);

    if (cfg.log_every != 0 &&
        (it % cfg.log_every == 0 || it + 1 == cfg.iterations)) {
      FitResult::TracePoint tp;
      tp.iteration = it;
      tp.train_nll = g.value(refs.data_nll).item();
      if (val != nullptr) tp.val_nll = dataset_nll(model, *val);
      out.trace.push_back(tp);
      log.write(tp.iteration, tp.train_nll, tp.val_nll);
    }
  }

  out.final_train_nll = dataset_nll(model, data);
  out.iterations = cfg.iterations;
  return out;
}

}  // namespace bernflow
