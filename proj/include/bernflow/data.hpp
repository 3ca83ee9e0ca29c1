#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bernflow/tensor.hpp"

namespace bernflow {

struct Dataset {
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  std::vector<double> x;  // n * p, row-major
  std::vector<double> y;  // n
  std::size_t n = 0;
  std::size_t p = 0;

  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * p, p};
  }
  Tensor feature_tensor() const;
  Tensor target_tensor() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

// Loads a headered CSV; `target` names the outcome column, "" means the last.
Dataset load_csv(const std::string& path, const std::string& target = "");
void write_csv(const std::string& path, const Dataset& d);

// Min-max scaler fitted on training rows only. Constant feature columns get
// scale 1 / shift min (recorded in constant_columns); a constant target is an
// error. Test rows pass through unclamped.
struct Scaler {
  std::vector<double> x_min, x_scale;
  double y_min = 0.0;
  double y_scale = 1.0;
  std::vector<std::size_t> constant_columns;

  static Scaler fit(const Dataset& train);
  Dataset apply(const Dataset& d) const;
  std::vector<double> scale_row(std::span<const double> x) const;
  double scale_y(double y) const { return (y - y_min) / y_scale; }
  double unscale_y(double ys) const { return ys * y_scale + y_min; }
  // Added to scaled-space NLL to report on the original y scale.
  double nll_correction() const;
};

struct FoldSplit {
  struct Fold {
    std::vector<std::size_t> train, test;
  };
  std::vector<Fold> folds;
  std::string source;
};

FoldSplit split_folds(std::size_t n, std::size_t n_folds, std::uint64_t seed);
// Reads index_test_<k>.txt files (one zero-based test index per line).
FoldSplit load_folds(const std::string& dir, std::size_t n);

// Toy generators with closed-form conditional densities.
// sinusoidal: x ~ U(0,10), y = 0.3x + sin(x) + (0.1 + 0.05x) * Exp(1)
// bimodal:    x ~ U(0,5),  y = +-(0.25 + 0.25x) + 0.1 * N(0,1), signs equiprobable
// hetero_gaussian: x ~ U(0,1), y = 2x + (0.5 + x) * N(0,1)
Dataset gen_toy_sinusoidal(std::size_t n, std::uint64_t seed);
Dataset gen_toy_bimodal(std::size_t n, std::uint64_t seed);
Dataset gen_toy_hetero_gaussian(std::size_t n, std::uint64_t seed);

double toy_sinusoidal_log_density(double x, double y);
double toy_bimodal_log_density(double x, double y);
double toy_hetero_gaussian_log_density(double x, double y);
// E[-log f] of the hetero-Gaussian generator: 0.5 log(2 pi e) + int_0^1 log(0.5+x) dx.
double toy_hetero_gaussian_analytic_nll();

}  // namespace bernflow
