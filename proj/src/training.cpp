#include "bernflow/training.hpp"

#include <algorithm>
#include <cmath>

namespace bernflow {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

void TrainConfig::validate() const {
  if (!(std::isfinite(learning_rate) && learning_rate > 0.0)) {
    throw ConfigError("train: learning_rate must be finite and positive");
  }
}

Adam::Adam(std::vector<ad::ParameterPtr> params, double learning_rate)
    : params_(std::move(params)), lr_(learning_rate) {
  if (!(std::isfinite(lr_) && lr_ > 0.0)) {
    throw ConfigError("adam: learning rate must be finite and positive");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::set_lr(double learning_rate) {
  if (!(std::isfinite(learning_rate) && learning_rate > 0.0)) {
    throw ConfigError("adam: learning rate must be finite and positive");
  }
  lr_ = learning_rate;
}

void Adam::step(const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& w = params_[i]->value;
    const auto it = grads.find(params_[i]->id);
    const Tensor* gp = it == grads.end() ? nullptr : &it->second;
    if (gp != nullptr && !gp->same_shape(w)) {
      throw StructuralError("adam: gradient shape mismatch for '" +
                            params_[i]->id + "'");
    }
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = gp != nullptr ? (*gp)[j] : 0.0;
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * gj;
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * gj * gj;
      w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kEps);
    }
  }
}

namespace detail {

TraceWriter::TraceWriter(const std::string& path) {
  if (path.empty()) return;
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw DataError("cannot write training log '" + path + "'");
}

void TraceWriter::write(std::size_t iteration, double train_nll, double val_nll) {
  if (!out_.is_open()) return;
  out_ << "{\"iteration\":" << iteration << ",\"train_nll\":" << train_nll
       << ",\"val_nll\":";
  if (std::isnan(val_nll)) {
    out_ << "null";
  } else {
    out_ << val_nll;
  }
  out_ << "}\n";
}

void throw_divergence(const Tensor& per_sample_log_density, std::size_t iteration,
                      double loss, const std::string& detail) {
  std::string msg = "training diverged at iteration " + std::to_string(iteration) +
                    " after 10 consecutive non-finite evaluations (loss=" +
                    std::to_string(loss);
  for (std::size_t i = 0; i < per_sample_log_density.rows(); ++i) {
    if (!std::isfinite(per_sample_log_density(i, 0))) {
      msg += ", first non-finite log-density at batch row " + std::to_string(i);
      break;
    }
  }
  if (!detail.empty()) msg += ", non-finite gradient for '" + detail + "'";
  msg += ")";
  throw DivergenceError(msg);
}

void check_gradients(const std::map<std::string, Tensor>& grads,
                     std::string& bad_param) {
  bad_param.clear();
  for (const auto& [id, g] : grads) {
    if (!g.all_finite()) {
      bad_param = id;
      return;
    }
  }
}

}  // namespace detail

}  // namespace bernflow
