#include "bernflow/flow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "bernflow/errors.hpp"
#include "bernflow/scalar_ops.hpp"

namespace bernflow {

namespace {

std::atomic<std::size_t> g_floor_hits{0};

// Exact binomial coefficients C(m, 0..m); every prefix product is an integer,
// so the running division rounds exactly while below 2^53.
std::vector<double> binom_row(std::size_t m) {
  std::vector<double> c(m + 1, 1.0);
  for (std::size_t k = 1; k <= m; ++k) {
    c[k] = c[k - 1] * static_cast<double>(m - k + 1) / static_cast<double>(k);
  }
  return c;
}

double sigmoid_deriv(double u) {
  const double e = std::exp(-std::fabs(u));
  const double d = 1.0 + e;
  return e / (d * d);
}

double floored_poly_deriv(const BernsteinBasis& basis, const MonotoneCoefficients& th,
                          double y_tilde) {
  double d = basis.poly_deriv(th, y_tilde);
  if (d < kDerivFloor) {
    d = kDerivFloor;
    g_floor_hits.fetch_add(1, std::memory_order_relaxed);
  }
  return d;
}

// Inverts the strictly increasing transform for a target z known to lie in the
// open attainable range: geometric bracket growth around b/a, then bisection.
double invert_transform(const BernsteinBasis& basis, const TransformParams& p,
                        double z_star) {
  const double center = std::clamp(p.b / p.a, -1e300, 1e300);
  const double base = std::min(1.0 / p.a, 1e300);

  double w = base;
  double lo = center - w;
  for (int k = 0; transform(basis, p, lo) >= z_star; ++k) {
    if (k >= 200) throw Error("quantile: lower bracket expansion failed");
    w *= 2.0;
    lo = center - w;
  }
  w = base;
  double hi = center + w;
  for (int k = 0; transform(basis, p, hi) <= z_star; ++k) {
    if (k >= 200) throw Error("quantile: upper bracket expansion failed");
    w *= 2.0;
    hi = center + w;
  }

  for (int it = 0; it < 5000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // interval reached double resolution
    (transform(basis, p, mid) < z_star ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::size_t deriv_floor_hits() { return g_floor_hits.load(); }
void reset_deriv_floor_hits() { g_floor_hits.store(0); }

void TransformParams::validate() const {
  if (!(std::isfinite(a) && a > 0.0)) {
    throw DomainError("transform params: a must be finite and positive");
  }
  if (!(std::isfinite(alpha) && alpha > 0.0)) {
    throw DomainError("transform params: alpha must be finite and positive");
  }
  if (!std::isfinite(b) || !std::isfinite(beta)) {
    throw DomainError("transform params: b and beta must be finite");
  }
  if (theta.theta.size() < 2) {
    throw DomainError("transform params: need at least two coefficients");
  }
  for (double t : theta.theta) {
    if (!std::isfinite(t)) throw DomainError("transform params: non-finite theta");
  }
  if (!theta.strictly_increasing()) {
    throw DomainError("transform params: theta must be strictly increasing");
  }
}

double transform(const BernsteinBasis& basis, const TransformParams& p, double y) {
  const double u = p.a * y - p.b;
  return p.alpha * basis.poly_eval(p.theta, detail::sigmoid(u)) - p.beta;
}

double transform_deriv(const BernsteinBasis& basis, const TransformParams& p,
                       double y) {
  const double u = p.a * y - p.b;
  return p.alpha * basis.poly_deriv(p.theta, detail::sigmoid(u)) *
         sigmoid_deriv(u) * p.a;
}

double log_density(const BernsteinBasis& basis, const TransformParams& p, double y) {
  if (!std::isfinite(y)) throw DomainError("log_density: y is not finite");
  const double u = p.a * y - p.b;
  const double y_tilde = detail::sigmoid(u);
  const double z = p.alpha * basis.poly_eval(p.theta, y_tilde) - p.beta;

  const double log_phi = stdnormal::log_pdf(z);
  const double log_alpha = std::log(p.alpha);
  const double log_h2p = std::log(floored_poly_deriv(basis, p.theta, y_tilde));
  const double log_sig = detail::log_sigmoid_deriv(u);
  const double log_a = std::log(p.a);

  const double out = log_phi + log_alpha + log_h2p + log_sig + log_a;
  if (!std::isfinite(out)) {
    throw DomainError(
        "log_density: non-finite result (log_phi=" + std::to_string(log_phi) +
        " log_alpha=" + std::to_string(log_alpha) + " log_h2'=" +
        std::to_string(log_h2p) + " log_sig'=" + std::to_string(log_sig) +
        " log_a=" + std::to_string(log_a) + ")");
  }
  return out;
}

double cdf(const BernsteinBasis& basis, const TransformParams& p, double y) {
  if (!std::isfinite(y)) throw DomainError("cdf: y is not finite");
  return stdnormal::cdf(transform(basis, p, y));
}

double quantile(const BernsteinBasis& basis, const TransformParams& p, double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw DomainError("quantile: probability must lie in (0, 1)");
  }
  const double z_star = stdnormal::quantile(prob);
  const double lo = p.z_lo();
  const double hi = p.z_hi();
  if (!(z_star > lo && z_star < hi)) {
    throw OutOfSupportError("quantile: base quantile " + std::to_string(z_star) +
                                " outside attainable z-range (" + std::to_string(lo) +
                                ", " + std::to_string(hi) + ")",
                            lo, hi);
  }
  return invert_transform(basis, p, z_star);
}

SampleResult sample(const BernsteinBasis& basis, const TransformParams& p,
                    std::size_t n, Rng& rng) {
  SampleResult out;
  out.values.reserve(n);
  const double lo = p.z_lo();
  const double hi = p.z_hi();
  const std::size_t cap = 200 * n + 10000;
  std::size_t attempts = 0;
  while (out.values.size() < n) {
    if (++attempts > cap) {
      throw DomainError("sample: attainable z-range rejects nearly all base draws");
    }
    const double z = rng.normal();
    if (z <= lo || z >= hi) {
      ++out.rejections;
      continue;
    }
    out.values.push_back(invert_transform(basis, p, z));
  }
  return out;
}

void ModelConfig::validate() const {
  if (order < 1) throw ConfigError("model: order must be >= 1");
  activation_from_name(activation);  // throws on unknown names
  if (!(std::isfinite(l2) && l2 >= 0.0)) {
    throw ConfigError("model: l2 must be finite and >= 0");
  }
  for (std::size_t h : hidden_layers) {
    if (h < 1) throw ConfigError("model: hidden layer sizes must be >= 1");
  }
  for (const auto& grp : constant_groups) {
    if (grp != "f1" && grp != "f2" && grp != "f3") {
      throw ConfigError("model: unknown parameter group '" + grp + "'");
    }
    if (grp == "f3" && !use_f3) {
      throw ConfigError("model: constant group 'f3' requires use_f3");
    }
  }
}

TransformationModel::TransformationModel(ModelConfig config, std::size_t input_dim)
    : config_((config.validate(), std::move(config))),
      input_dim_(input_dim),
      basis_(config_.order) {
  if (input_dim_ < 1) throw ConfigError("model: input_dim must be >= 1");
  const Activation act = activation_from_name(config_.activation);
  Rng rng(config_.seed);
  const auto dim = [&](const char* grp) {
    return config_.constant_groups.count(grp) ? std::size_t{1} : input_dim_;
  };
  f1_ = std::make_unique<Mlp>("f1", dim("f1"), config_.hidden_layers, 2, act, rng);
  f2_ = std::make_unique<Mlp>("f2", dim("f2"), config_.hidden_layers,
                              config_.order + 1, act, rng);
  if (config_.use_f3) {
    f3_ = std::make_unique<Mlp>("f3", dim("f3"), config_.hidden_layers, 2, act, rng);
  }
}

ad::Graph::Ref TransformationModel::group_input(ad::Graph& g, ad::Graph::Ref X,
                                                const std::string& group) const {
  if (config_.constant_groups.count(group)) {
    return g.leaf(Tensor::full(g.value(X).rows(), 1, 1.0));
  }
  return X;
}

std::vector<double> TransformationModel::group_input_plain(
    std::span<const double> x, const std::string& group) const {
  if (config_.constant_groups.count(group)) return {1.0};
  return std::vector<double>(x.begin(), x.end());
}

TransformParams TransformationModel::params_for(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw StructuralError("model: expected " + std::to_string(input_dim_) +
                          " features, got " + std::to_string(x.size()));
  }
  TransformParams p;
  const auto raw1 = f1_->forward_plain(group_input_plain(x, "f1"));
  p.a = std::fmax(detail::softplus(raw1[0]), 1e-300);
  p.b = raw1[1];
  const auto gamma = f2_->forward_plain(group_input_plain(x, "f2"));
  p.theta = monotone_from_unconstrained(gamma);
  if (f3_) {
    const auto raw3 = f3_->forward_plain(group_input_plain(x, "f3"));
    p.alpha = std::fmax(detail::softplus(raw3[0]), 1e-300);
    p.beta = raw3[1];
  }
  p.validate();
  return p;
}

LossRefs TransformationModel::build_loss(ad::Graph& g, ad::Graph::Ref X,
                                         ad::Graph::Ref y) const {
  using Ref = ad::Graph::Ref;
  const Tensor& Xv = g.value(X);
  const Tensor& yv = g.value(y);
  if (Xv.cols() != input_dim_) {
    throw StructuralError("model: X has " + std::to_string(Xv.cols()) +
                          " columns, expected " + std::to_string(input_dim_));
  }
  if (yv.rows() != Xv.rows() || yv.cols() != 1) {
    throw StructuralError("model: y must be n x 1 matching X rows");
  }
  const std::size_t m = config_.order;

  const Ref raw1 = f1_->forward(g, group_input(g, X, "f1"));
  const Ref a = g.softplus(g.slice_cols(raw1, 0, 1));
  const Ref b = g.slice_cols(raw1, 1, 1);
  const Ref u = g.sub(g.mul(a, y), b);
  const Ref y_tilde = g.sigmoid(u);
  const Ref log_sig = g.neg(g.add(g.softplus(u), g.softplus(g.neg(u))));
  const Ref log_a = g.log(g.max_const(a, 1e-300));

  const Ref gamma = f2_->forward(g, group_input(g, X, "f2"));
  const Ref incr = g.exp(g.slice_cols(gamma, 1, m));
  const Ref theta = g.cumsum_cols(g.concat_cols(g.slice_cols(gamma, 0, 1), incr));

  const Ref one_m = g.add_const(g.neg(y_tilde), 1.0);
  std::vector<Ref> pow_y(m + 1), pow_m(m + 1);
  for (std::size_t k = 0; k <= m; ++k) {
    pow_y[k] = g.pow_int(y_tilde, static_cast<int>(k));
    pow_m[k] = g.pow_int(one_m, static_cast<int>(k));
  }
  const auto cm = binom_row(m);
  const auto cm1 = binom_row(m - 1);

  Ref h2{};
  for (std::size_t k = 0; k <= m; ++k) {
    const Ref term = g.scale(
        g.mul(g.mul(pow_y[k], pow_m[m - k]), g.slice_cols(theta, k, 1)), cm[k]);
    h2 = (k == 0) ? term : g.add(h2, term);
  }
  Ref h2p{};
  for (std::size_t k = 0; k < m; ++k) {
    const Ref term = g.scale(
        g.mul(g.mul(pow_y[k], pow_m[m - 1 - k]), g.slice_cols(incr, k, 1)), cm1[k]);
    h2p = (k == 0) ? term : g.add(h2p, term);
  }
  h2p = g.scale(h2p, static_cast<double>(m));
  const Ref log_h2p = g.log(g.max_const(h2p, kDerivFloor));

  Ref z;
  Ref log_alpha{};
  if (f3_) {
    const Ref raw3 = f3_->forward(g, group_input(g, X, "f3"));
    const Ref alpha = g.softplus(g.slice_cols(raw3, 0, 1));
    const Ref beta = g.slice_cols(raw3, 1, 1);
    z = g.sub(g.mul(alpha, h2), beta);
    log_alpha = g.log(g.max_const(alpha, 1e-300));
  } else {
    z = h2;
  }

  const Ref log_phi =
      g.add_const(g.scale(g.square(z), -0.5), -stdnormal::kLogSqrt2Pi);
  Ref ld = g.add(g.add(g.add(log_phi, log_h2p), log_sig), log_a);
  if (f3_) ld = g.add(ld, log_alpha);

  const Ref data_nll = g.neg(g.mean(ld));
  Ref penalty{};
  bool first = true;
  for (const auto& w : weight_matrices()) {
    const Ref s = g.sum(g.square(g.param(w)));
    penalty = first ? s : g.add(penalty, s);
    first = false;
  }
  const Ref loss =
      config_.l2 > 0.0 ? g.add(data_nll, g.scale(penalty, config_.l2)) : data_nll;
  return {loss, data_nll, penalty, ld};
}

std::vector<ad::ParameterPtr> TransformationModel::parameters() const {
  std::vector<ad::ParameterPtr> out;
  for (const Mlp* net : {f1_.get(), f2_.get(), f3_.get()}) {
    if (!net) continue;
    const auto ps = net->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<ad::ParameterPtr> TransformationModel::weight_matrices() const {
  std::vector<ad::ParameterPtr> out;
  for (const Mlp* net : {f1_.get(), f2_.get(), f3_.get()}) {
    if (!net) continue;
    const auto ws = net->weight_matrices();
    out.insert(out.end(), ws.begin(), ws.end());
  }
  return out;
}

TransformParams LtmParams::at(std::span<const double> x) const {
  if (x.size() != shift.size()) {
    throw StructuralError("ltm: expected " + std::to_string(shift.size()) +
                          " features, got " + std::to_string(x.size()));
  }
  TransformParams p;
  p.a = a;
  p.b = b;
  p.theta = theta;
  p.alpha = 1.0;
  p.beta = 0.0;
  for (std::size_t i = 0; i < shift.size(); ++i) p.beta += shift[i] * x[i];
  return p;
}

LtmModel::LtmModel(std::size_t input_dim, std::size_t order, double l2)
    : input_dim_(input_dim), basis_(order), l2_(l2) {
  if (input_dim_ < 1) throw ConfigError("ltm: input_dim must be >= 1");
  if (!(std::isfinite(l2_) && l2_ >= 0.0)) {
    throw ConfigError("ltm: l2 must be finite and >= 0");
  }
  raw_ab_ = std::make_shared<ad::Parameter>(ad::Parameter{"ltm.ab", Tensor(1, 2)});
  gamma_ =
      std::make_shared<ad::Parameter>(ad::Parameter{"ltm.gamma", Tensor(1, order + 1)});
  shift_ =
      std::make_shared<ad::Parameter>(ad::Parameter{"ltm.shift", Tensor(input_dim_, 1)});
}

LtmParams LtmModel::params() const {
  LtmParams p;
  p.a = std::fmax(detail::softplus(raw_ab_->value(0, 0)), 1e-300);
  p.b = raw_ab_->value(0, 1);
  p.theta = monotone_from_unconstrained(
      std::span<const double>(gamma_->value.ptr(), gamma_->value.size()));
  p.shift.resize(input_dim_);
  for (std::size_t i = 0; i < input_dim_; ++i) p.shift[i] = shift_->value(i, 0);
  return p;
}

TransformParams LtmModel::params_for(std::span<const double> x) const {
  TransformParams p = params().at(x);
  p.validate();
  return p;
}

LossRefs LtmModel::build_loss(ad::Graph& g, ad::Graph::Ref X, ad::Graph::Ref y) const {
  using Ref = ad::Graph::Ref;
  const Tensor& Xv = g.value(X);
  const Tensor& yv = g.value(y);
  if (Xv.cols() != input_dim_) {
    throw StructuralError("ltm: X has " + std::to_string(Xv.cols()) +
                          " columns, expected " + std::to_string(input_dim_));
  }
  if (yv.rows() != Xv.rows() || yv.cols() != 1) {
    throw StructuralError("ltm: y must be n x 1 matching X rows");
  }
  const std::size_t m = basis_.order();

  const Ref ab = g.param(raw_ab_);
  const Ref a = g.softplus(g.slice_cols(ab, 0, 1));          // 1 x 1
  const Ref b = g.slice_cols(ab, 1, 1);                      // 1 x 1
  const Ref u = g.add_row(g.matmul(y, a), g.neg(b));         // n x 1
  const Ref y_tilde = g.sigmoid(u);
  const Ref log_sig = g.neg(g.add(g.softplus(u), g.softplus(g.neg(u))));
  const Ref log_a = g.log(g.max_const(a, 1e-300));           // 1 x 1

  const Ref gm = g.param(gamma_);
  const Ref incr = g.exp(g.slice_cols(gm, 1, m));            // 1 x M
  const Ref theta = g.cumsum_cols(g.concat_cols(g.slice_cols(gm, 0, 1), incr));

  const Ref one_m = g.add_const(g.neg(y_tilde), 1.0);
  std::vector<Ref> pow_y(m + 1), pow_m(m + 1);
  for (std::size_t k = 0; k <= m; ++k) {
    pow_y[k] = g.pow_int(y_tilde, static_cast<int>(k));
    pow_m[k] = g.pow_int(one_m, static_cast<int>(k));
  }
  const auto cm = binom_row(m);
  const auto cm1 = binom_row(m - 1);

  Ref h2{};
  for (std::size_t k = 0; k <= m; ++k) {
    const Ref term = g.scale(
        g.matmul(g.mul(pow_y[k], pow_m[m - k]), g.slice_cols(theta, k, 1)), cm[k]);
    h2 = (k == 0) ? term : g.add(h2, term);
  }
  Ref h2p{};
  for (std::size_t k = 0; k < m; ++k) {
    const Ref term = g.scale(
        g.matmul(g.mul(pow_y[k], pow_m[m - 1 - k]), g.slice_cols(incr, k, 1)),
        cm1[k]);
    h2p = (k == 0) ? term : g.add(h2p, term);
  }
  h2p = g.scale(h2p, static_cast<double>(m));
  const Ref log_h2p = g.log(g.max_const(h2p, kDerivFloor));

  const Ref z = g.sub(h2, g.matmul(X, g.param(shift_)));
  const Ref log_phi =
      g.add_const(g.scale(g.square(z), -0.5), -stdnormal::kLogSqrt2Pi);
  const Ref ld = g.add_row(g.add(g.add(log_phi, log_h2p), log_sig), log_a);

  const Ref data_nll = g.neg(g.mean(ld));
  const Ref penalty = g.sum(g.square(g.param(shift_)));
  const Ref loss =
      l2_ > 0.0 ? g.add(data_nll, g.scale(penalty, l2_)) : data_nll;
  return {loss, data_nll, penalty, ld};
}

std::vector<ad::ParameterPtr> LtmModel::parameters() const {
  return {raw_ab_, gamma_, shift_};
}

std::vector<ad::ParameterPtr> LtmModel::weight_matrices() const { return {shift_}; }

}  // namespace bernflow
