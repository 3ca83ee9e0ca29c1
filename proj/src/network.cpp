#include "bernflow/network.hpp"

#include <cmath>

#include "bernflow/errors.hpp"
#include "bernflow/scalar_ops.hpp"

namespace bernflow {

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "softplus") return Activation::kSoftplus;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftplus: return "softplus";
  }
  return "tanh";
}

namespace {

double apply_activation(Activation act, double x) {
  switch (act) {
    case Activation::kTanh: return std::tanh(x);
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid: return detail::sigmoid(x);
    case Activation::kSoftplus: return detail::softplus(x);
  }
  return x;
}

ad::Graph::Ref graph_activation(ad::Graph& g, Activation act, ad::Graph::Ref x) {
  switch (act) {
    case Activation::kTanh: return g.tanh(x);
    case Activation::kRelu: return g.relu(x);
    case Activation::kSigmoid: return g.sigmoid(x);
    case Activation::kSoftplus: return g.softplus(x);
  }
  return x;
}

}  // namespace

Mlp::Mlp(std::string name, std::size_t in_dim, const std::vector<std::size_t>& hidden,
         std::size_t out_dim, Activation act, Rng& rng)
    : name_(std::move(name)), in_dim_(in_dim), out_dim_(out_dim), act_(act) {
  if (in_dim_ == 0 || out_dim_ == 0) {
    throw ConfigError("mlp '" + name_ + "': zero-width layer");
  }
  std::vector<std::size_t> widths;
  widths.push_back(in_dim_);
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("mlp '" + name_ + "': zero-width hidden layer");
    widths.push_back(h);
  }
  widths.push_back(out_dim_);

  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const bool last = (l + 2 == widths.size());
    Layer layer;
    layer.activated = !last;
    layer.weight = std::make_shared<ad::Parameter>();
    layer.weight->id = name_ + ".w" + std::to_string(l);
    layer.weight->value = Tensor(fan_in, fan_out);
    layer.bias = std::make_shared<ad::Parameter>();
    layer.bias->id = name_ + ".b" + std::to_string(l);
    layer.bias->value = Tensor(1, fan_out);
    if (!last) {
      // Glorot uniform
      const double bound =
          std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& w : layer.weight->value.data()) w = rng.uniform(-bound, bound);
    }
    params_.push_back(layer.weight);
    params_.push_back(layer.bias);
    layers_.push_back(std::move(layer));
  }
}

ad::Graph::Ref Mlp::forward(ad::Graph& g, ad::Graph::Ref input) const {
  if (g.value(input).cols() != in_dim_) {
    throw StructuralError("mlp '" + name_ + "': input width " +
                          std::to_string(g.value(input).cols()) + ", expected " +
                          std::to_string(in_dim_));
  }
  ad::Graph::Ref h = input;
  for (const Layer& layer : layers_) {
    h = g.add_row(g.matmul(h, g.param(layer.weight)), g.param(layer.bias));
    if (layer.activated) h = graph_activation(g, act_, h);
  }
  return h;
}

std::vector<double> Mlp::forward_plain(std::span<const double> input) const {
  if (input.size() != in_dim_) {
    throw StructuralError("mlp '" + name_ + "': input width " +
                          std::to_string(input.size()) + ", expected " +
                          std::to_string(in_dim_));
  }
  std::vector<double> h(input.begin(), input.end());
  for (const Layer& layer : layers_) {
    const Tensor& w = layer.weight->value;
    const Tensor& b = layer.bias->value;
    std::vector<double> next(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < w.rows(); ++i) acc += h[i] * w(i, j);
      next[j] = layer.activated ? apply_activation(act_, acc) : acc;
    }
    h = std::move(next);
  }
  return h;
}

std::vector<ad::ParameterPtr> Mlp::weight_matrices() const {
  std::vector<ad::ParameterPtr> out;
  for (const Layer& l : layers_) out.push_back(l.weight);
  return out;
}

}  // namespace bernflow
