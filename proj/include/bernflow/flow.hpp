#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bernflow/bernstein.hpp"
#include "bernflow/graph.hpp"
#include "bernflow/network.hpp"
#include "bernflow/normal.hpp"
#include "bernflow/rng.hpp"

namespace bernflow {

// Per-input parameters of the transformation z = alpha * h(sigmoid(a*y - b)) - beta
// where h is a monotone Bernstein polynomial with coefficients theta.
struct TransformParams {
  double a = 1.0;
  double b = 0.0;
  MonotoneCoefficients theta;
  double alpha = 1.0;
  double beta = 0.0;

  // z approaches these bounds as y -> -inf / +inf. All probability mass of the
  // base distribution outside (z_lo, z_hi) is unreachable.
  double z_lo() const { return alpha * theta.theta.front() - beta; }
  double z_hi() const { return alpha * theta.theta.back() - beta; }

  void validate() const;
};

double transform(const BernsteinBasis& basis, const TransformParams& p, double y);
double transform_deriv(const BernsteinBasis& basis, const TransformParams& p, double y);
double log_density(const BernsteinBasis& basis, const TransformParams& p, double y);
double cdf(const BernsteinBasis& basis, const TransformParams& p, double y);

// Inverts transform() for the base-distribution quantile of `prob`. Throws
// OutOfSupportError when that quantile lies outside the attainable z-range.
double quantile(const BernsteinBasis& basis, const TransformParams& p, double prob);

struct SampleResult {
  std::vector<double> values;
  std::size_t rejections = 0;  // base draws outside the attainable z-range
};

SampleResult sample(const BernsteinBasis& basis, const TransformParams& p,
                    std::size_t n, Rng& rng);

// Count of poly_deriv evaluations floored at kDerivFloor since the last reset;
// a nonzero count means some densities were clipped rather than -inf.
inline constexpr double kDerivFloor = 1e-30;
std::size_t deriv_floor_hits();
void reset_deriv_floor_hits();

struct ModelConfig {
  std::size_t order = 10;  // Bernstein degree M
  std::vector<std::size_t> hidden_layers{50};
  std::string activation = "tanh";
  double l2 = 0.0;
  // Parameter groups ("f1", "f2", "f3") whose networks see a constant input
  // instead of x, making those parameters covariate-free.
  std::set<std::string> constant_groups;
  bool use_f3 = true;  // without f3, z = h(sigmoid(a*y - b)) directly
  std::uint64_t seed = 1;

  void validate() const;
};

// References into a loss graph; `loss` is the 1x1 objective to differentiate.
struct LossRefs {
  ad::Graph::Ref loss;
  ad::Graph::Ref data_nll;   // mean negative log-density, 1x1
  ad::Graph::Ref penalty;    // sum of squared network weights, 1x1
  ad::Graph::Ref log_density;  // per-sample log-density column, n x 1
};

// Conditional transformation model: three small networks map x to the
// transformation parameters, and the base distribution is standard normal.
class TransformationModel {
 public:
  TransformationModel(ModelConfig config, std::size_t input_dim);

  const ModelConfig& config() const { return config_; }
  std::size_t input_dim() const { return input_dim_; }
  const BernsteinBasis& basis() const { return basis_; }

  TransformParams params_for(std::span<const double> x) const;

  // Builds mean NLL (+ l2 * penalty when l2 > 0) over leaves X (n x P) and
  // y (n x 1). The graph can be re-run after parameter or leaf updates.
  LossRefs build_loss(ad::Graph& g, ad::Graph::Ref X, ad::Graph::Ref y) const;

  std::vector<ad::ParameterPtr> parameters() const;
  std::vector<ad::ParameterPtr> weight_matrices() const;

 private:
  const Mlp& net(const std::string& group) const;
  ad::Graph::Ref group_input(ad::Graph& g, ad::Graph::Ref X,
                             const std::string& group) const;
  std::vector<double> group_input_plain(std::span<const double> x,
                                        const std::string& group) const;

  ModelConfig config_;
  std::size_t input_dim_;
  BernsteinBasis basis_;
  std::unique_ptr<Mlp> f1_;  // x -> (raw_a, b)
  std::unique_ptr<Mlp> f2_;  // x -> gamma_0..gamma_M
  std::unique_ptr<Mlp> f3_;  // x -> (raw_alpha, beta); null when !use_f3
};

// Linear transformation model baseline: z = h(sigmoid(a*y - b)) - x . shift,
// with a, b, theta shared across all x.
struct LtmParams {
  double a = 1.0;
  double b = 0.0;
  MonotoneCoefficients theta;
  std::vector<double> shift;

  // Equivalent TransformParams at a fixed x (alpha = 1, beta = x . shift).
  TransformParams at(std::span<const double> x) const;
};

class LtmModel {
 public:
  LtmModel(std::size_t input_dim, std::size_t order, double l2 = 0.0);

  std::size_t input_dim() const { return input_dim_; }
  const BernsteinBasis& basis() const { return basis_; }
  double l2() const { return l2_; }

  LtmParams params() const;
  TransformParams params_for(std::span<const double> x) const;

  LossRefs build_loss(ad::Graph& g, ad::Graph::Ref X, ad::Graph::Ref y) const;

  std::vector<ad::ParameterPtr> parameters() const;
  std::vector<ad::ParameterPtr> weight_matrices() const;

 private:
  std::size_t input_dim_;
  BernsteinBasis basis_;
  double l2_;
  ad::ParameterPtr raw_ab_;   // 1 x 2
  ad::ParameterPtr gamma_;    // 1 x (M + 1)
  ad::ParameterPtr shift_;    // P x 1
};

}  // namespace bernflow
