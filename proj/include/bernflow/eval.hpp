#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bernflow/data.hpp"
#include "bernflow/errors.hpp"
#include "bernflow/flow.hpp"
#include "bernflow/normal.hpp"
#include "bernflow/training.hpp"

namespace bernflow {

// Mean test NLL on the original outcome scale (scaled-space NLL plus the
// scaler's log-Jacobian correction).
template <class Model>
double test_nll(const Model& model, const Scaler& scaler, const Dataset& test) {
  if (test.n == 0) throw DataError("test_nll: empty test set");
  double acc = 0.0;
  for (std::size_t i = 0; i < test.n; ++i) {
    const auto xs = scaler.scale_row(test.row(i));
    const TransformParams p = model.params_for(xs);
    acc -= log_density(model.basis(), p, scaler.scale_y(test.y[i]));
  }
  return acc / static_cast<double>(test.n) + scaler.nll_correction();
}

struct CpdQuantile {
  double level = 0.0;
  double value = std::numeric_limits<double>::quiet_NaN();
  bool attainable = false;
};

struct CpdGrid {
  std::vector<double> x;  // conditioning input, original scale
  std::vector<double> y, density, cdf;  // original scale, y ascending
  std::vector<CpdQuantile> quantiles;
  double z_lo = 0.0, z_hi = 0.0;  // attainable base-space range

  double trapezoid_mass() const;
  // Local maxima of the density grid with height >= rel_floor * max.
  std::size_t mode_count(double rel_floor = 1e-3) const;
};

// Grid bounds come from the quantiles at 1e-4 / 1-1e-4, clamped into the
// attainable probability range.
template <class Model>
CpdGrid cpd_export(const Model& model, const Scaler& scaler,
                   std::span<const double> x_original, std::size_t points = 512,
                   std::span<const double> quantile_levels = {}) {
  if (points < 8) throw ConfigError("cpd: need at least 8 grid points");
  const auto xs = scaler.scale_row(x_original);
  const TransformParams p = model.params_for(xs);
  const BernsteinBasis& basis = model.basis();

  CpdGrid out;
  out.x.assign(x_original.begin(), x_original.end());
  out.z_lo = p.z_lo();
  out.z_hi = p.z_hi();

  const double p_att_lo = stdnormal::cdf(out.z_lo);
  const double p_att_hi = stdnormal::cdf(out.z_hi);
  const double margin = (p_att_hi - p_att_lo) * 1e-6;
  const double p_lo = std::max(1e-4, p_att_lo + margin);
  const double p_hi = std::min(1.0 - 1e-4, p_att_hi - margin);
  if (!(p_lo < p_hi)) {
    throw DomainError("cpd: attainable probability range is degenerate");
  }
  const double ys_lo = quantile(basis, p, p_lo);
  const double ys_hi = quantile(basis, p, p_hi);

  out.y.resize(points);
  out.density.resize(points);
  out.cdf.resize(points);
  const double step = (ys_hi - ys_lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    const double ys = ys_lo + step * static_cast<double>(i);
    out.y[i] = scaler.unscale_y(ys);
    out.density[i] = std::exp(log_density(basis, p, ys)) / scaler.y_scale;
    out.cdf[i] = cdf(basis, p, ys);
  }

  for (const double level : quantile_levels) {
    CpdQuantile q;
    q.level = level;
    const double z = stdnormal::quantile(level);
    if (z > out.z_lo && z < out.z_hi) {
      q.value = scaler.unscale_y(quantile(basis, p, level));
      q.attainable = true;
    }
    out.quantiles.push_back(q);
  }
  return out;
}

void write_cpd_csv(const std::string& path, const CpdGrid& grid);
void write_cpd_sidecar_json(const std::string& path, const CpdGrid& grid);

struct BenchmarkFold {
  std::size_t fold = 0;
  bool ok = false;
  std::string error;
  double test_nll = std::numeric_limits<double>::quiet_NaN();
  double train_nll = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;  // wall clock; excluded from the canonical JSON
};

struct BenchmarkReport {
  std::string dataset;
  std::string model_kind;  // "dl_mlt" or "ltm"
  ModelConfig model;
  TrainConfig train;
  std::size_t folds_requested = 0;
  std::size_t folds_failed = 0;
  std::vector<BenchmarkFold> per_fold;
  double mean_nll = std::numeric_limits<double>::quiet_NaN();
  double stderr_nll = std::numeric_limits<double>::quiet_NaN();
};

// Trains one model per fold (seeds derived from the fold index), scores test
// NLL on the original scale, and aggregates. Failed folds are excluded from
// the aggregates and counted. `jobs` > 1 runs folds on worker threads; the
// report is identical regardless of jobs.
BenchmarkReport benchmark_run(const std::string& dataset_name, const Dataset& data,
                              const FoldSplit& folds, const ModelConfig& model_cfg,
                              const TrainConfig& train_cfg,
                              const std::string& model_kind, std::size_t jobs = 1);

std::string benchmark_report_json(const BenchmarkReport& report);
void write_benchmark_report(const std::string& path, const BenchmarkReport& report);

}  // namespace bernflow
