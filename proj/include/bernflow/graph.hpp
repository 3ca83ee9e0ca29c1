#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bernflow/tensor.hpp"

namespace bernflow::ad {

// Trainable tensor with a stable id used for checkpointing and for the
// gradient map returned by backward.
struct Parameter {
  std::string id;
  Tensor value;
};

using ParameterPtr = std::shared_ptr<Parameter>;

enum class Op : std::uint8_t {
  kLeaf,
  kParam,
  kAdd,
  kSub,
  kMul,        // elementwise
  kMatMul,
  kAddRow,     // (n x m) + broadcast (1 x m)
  kExp,
  kLog,
  kTanh,
  kRelu,
  kSigmoid,
  kSoftplus,
  kSquare,
  kNeg,
  kScale,      // * constant
  kAddConst,
  kPowInt,     // x^k, integer k >= 0
  kMaxConst,   // max(x, constant)
  kSum,        // -> 1x1
  kMean,       // -> 1x1
  kSliceCols,
  kConcatCols,
  kCumsumCols,
};

// Reverse-mode tape over dense tensors. Nodes are appended in evaluation
// order (define-by-run), so inputs always precede their consumers. Values
// are computed eagerly on construction; forward() replays the tape after
// leaf or parameter updates. One graph is single threaded; independent
// graphs may run concurrently.
class Graph {
 public:
  struct Ref {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Ref leaf(Tensor t);
  Ref param(const ParameterPtr& p);

  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref mul(Ref a, Ref b);
  Ref matmul(Ref a, Ref b);
  Ref add_row(Ref a, Ref row);
  Ref exp(Ref a);
  Ref log(Ref a);
  Ref tanh(Ref a);
  Ref relu(Ref a);
  Ref sigmoid(Ref a);
  Ref softplus(Ref a);
  Ref square(Ref a);
  Ref neg(Ref a);
  Ref scale(Ref a, double c);
  Ref add_const(Ref a, double c);
  Ref pow_int(Ref a, int k);
  Ref max_const(Ref a, double c);
  Ref sum(Ref a);
  Ref mean(Ref a);
  Ref slice_cols(Ref a, std::size_t first, std::size_t count);
  Ref concat_cols(Ref a, Ref b);
  Ref cumsum_cols(Ref a);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Ref r) const;
  Tensor& leaf_data(Ref r);

  // Recomputes every node in tape order (parameter leaves re-read their
  // bound Parameter) and returns the last node's value.
  const Tensor& forward();

  // Gradient of the (scalar) root w.r.t. every node. Must follow a forward
  // pass or eager construction.
  void backward();
  void backward(Ref root);

  const Tensor& gradient(Ref r) const;

  // Accumulated gradients per parameter id.
  std::map<std::string, Tensor> parameter_gradients() const;

 private:
  struct Node {
    Op op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::int32_t iarg0 = 0;
    std::int32_t iarg1 = 0;
    double carg = 0.0;
    Tensor val;
    Tensor grad;
    ParameterPtr p;
  };

  Ref push(Node n);
  void compute(Node& n);
  void accumulate(Node& n);
  const Node& at(Ref r) const;

  std::vector<Node> nodes_;
};

// Maximum relative error between the analytic gradient and central finite
// differences, coordinate by coordinate over all parameters:
//   |analytic - fd| / max(1, |analytic|).
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  bool non_finite = false;
  std::string message;
};

// `build` assembles a scalar-rooted graph from the current parameter
// values; it is re-invoked for every finite-difference evaluation.
GradCheckResult grad_check(const std::function<Graph::Ref(Graph&)>& build,
                           std::span<const ParameterPtr> params, double step);

}  // namespace bernflow::ad
