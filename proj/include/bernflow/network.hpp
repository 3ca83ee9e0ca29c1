#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bernflow/graph.hpp"
#include "bernflow/rng.hpp"
#include "bernflow/tensor.hpp"

namespace bernflow {

enum class Activation { kTanh, kRelu, kSigmoid, kSoftplus };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

// Feed-forward stack of dense layers. Hidden layers use fan-scaled random
// weights; the final layer starts at zero so the flow begins as a fixed
// smooth transformation. An empty hidden list gives a single linear map.
class Mlp {
 public:
  Mlp(std::string name, std::size_t in_dim, const std::vector<std::size_t>& hidden,
      std::size_t out_dim, Activation act, Rng& rng);

  ad::Graph::Ref forward(ad::Graph& g, ad::Graph::Ref input) const;

  // Single-row evaluation outside any graph; mirrors forward exactly.
  std::vector<double> forward_plain(std::span<const double> input) const;

  const std::vector<ad::ParameterPtr>& parameters() const { return params_; }
  std::vector<ad::ParameterPtr> weight_matrices() const;

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  const std::string& name() const { return name_; }

 private:
  struct Layer {
    ad::ParameterPtr weight;  // in x out
    ad::ParameterPtr bias;    // 1 x out
    bool activated;
  };

  std::string name_;
  std::size_t in_dim_;
  std::size_t out_dim_;
  Activation act_;
  std::vector<Layer> layers_;
  std::vector<ad::ParameterPtr> params_;
};

}  // namespace bernflow
