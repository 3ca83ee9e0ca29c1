#include "bernflow/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "bernflow/errors.hpp"
#include "bernflow/scalar_ops.hpp"

namespace bernflow::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

MapC emap(const Tensor& t) {
  return MapC(t.ptr(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

MapM emap(Tensor& t) {
  return MapM(t.ptr(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_error(const char* what, const Tensor& a, const Tensor& b) {
  throw StructuralError(std::string("graph: shape mismatch in ") + what + ": " +
                        std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
}

}  // namespace

const Graph::Node& Graph::at(Ref r) const {
  if (!r.valid() || static_cast<std::size_t>(r.id) >= nodes_.size()) {
    throw StructuralError("graph: invalid node reference");
  }
  return nodes_[static_cast<std::size_t>(r.id)];
}

Graph::Ref Graph::push(Node n) {
  compute(n);
  nodes_.push_back(std::move(n));
  return Ref{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Graph::Ref Graph::leaf(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(t);
  nodes_.push_back(std::move(n));
  return Ref{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Graph::Ref Graph::param(const ParameterPtr& p) {
  Node n;
  n.op = Op::kParam;
  n.p = p;
  n.val = p->value;
  nodes_.push_back(std::move(n));
  return Ref{static_cast<std::int32_t>(nodes_.size() - 1)};
}

#define BERNFLOW_UNARY(NAME, OPK)                       \
  Graph::Ref Graph::NAME(Ref a) {                       \
    Node n;                                             \
    n.op = OPK;                                         \
    n.a = a.id;                                         \
    (void)at(a);                                        \
    return push(std::move(n));                          \
  }

BERNFLOW_UNARY(exp, Op::kExp)
BERNFLOW_UNARY(log, Op::kLog)
BERNFLOW_UNARY(tanh, Op::kTanh)
BERNFLOW_UNARY(relu, Op::kRelu)
BERNFLOW_UNARY(sigmoid, Op::kSigmoid)
BERNFLOW_UNARY(softplus, Op::kSoftplus)
BERNFLOW_UNARY(square, Op::kSquare)
BERNFLOW_UNARY(neg, Op::kNeg)
BERNFLOW_UNARY(sum, Op::kSum)
BERNFLOW_UNARY(mean, Op::kMean)
BERNFLOW_UNARY(cumsum_cols, Op::kCumsumCols)

#undef BERNFLOW_UNARY

#define BERNFLOW_BINARY(NAME, OPK)                      \
  Graph::Ref Graph::NAME(Ref a, Ref b) {                \
    Node n;                                             \
    n.op = OPK;                                         \
    n.a = a.id;                                         \
    n.b = b.id;                                         \
    (void)at(a);                                        \
    (void)at(b);                                        \
    return push(std::move(n));                          \
  }

BERNFLOW_BINARY(add, Op::kAdd)
BERNFLOW_BINARY(sub, Op::kSub)
BERNFLOW_BINARY(mul, Op::kMul)
BERNFLOW_BINARY(matmul, Op::kMatMul)
BERNFLOW_BINARY(add_row, Op::kAddRow)
BERNFLOW_BINARY(concat_cols, Op::kConcatCols)

#undef BERNFLOW_BINARY

Graph::Ref Graph::scale(Ref a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.carg = c;
  (void)at(a);
  return push(std::move(n));
}

Graph::Ref Graph::add_const(Ref a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.a = a.id;
  n.carg = c;
  (void)at(a);
  return push(std::move(n));
}

Graph::Ref Graph::pow_int(Ref a, int k) {
  if (k < 0) throw StructuralError("graph: pow_int exponent must be >= 0");
  Node n;
  n.op = Op::kPowInt;
  n.a = a.id;
  n.iarg0 = k;
  (void)at(a);
  return push(std::move(n));
}

Graph::Ref Graph::max_const(Ref a, double c) {
  Node n;
  n.op = Op::kMaxConst;
  n.a = a.id;
  n.carg = c;
  (void)at(a);
  return push(std::move(n));
}

Graph::Ref Graph::slice_cols(Ref a, std::size_t first, std::size_t count) {
  const Tensor& v = at(a).val;
  if (first + count > v.cols() || count == 0) {
    throw StructuralError("graph: slice_cols range [" + std::to_string(first) +
                          ", " + std::to_string(first + count) +
                          ") outside 0.." + std::to_string(v.cols()));
  }
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.id;
  n.iarg0 = static_cast<std::int32_t>(first);
  n.iarg1 = static_cast<std::int32_t>(count);
  return push(std::move(n));
}

const Tensor& Graph::value(Ref r) const { return at(r).val; }

Tensor& Graph::leaf_data(Ref r) {
  Node& n = nodes_[static_cast<std::size_t>(r.id)];
  if (n.op != Op::kLeaf) {
    throw StructuralError("graph: leaf_data on a non-leaf node");
  }
  return n.val;
}

void Graph::compute(Node& n) {
  const auto A = [&]() -> const Tensor& { return nodes_[static_cast<std::size_t>(n.a)].val; };
  const auto B = [&]() -> const Tensor& { return nodes_[static_cast<std::size_t>(n.b)].val; };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kParam:
      n.val = n.p->value;
      break;
    case Op::kAdd: {
      const Tensor &a = A(), &b = B();
      if (!a.same_shape(b)) shape_error("add", a, b);
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = a[i] + b[i];
      break;
    }
    case Op::kSub: {
      const Tensor &a = A(), &b = B();
      if (!a.same_shape(b)) shape_error("sub", a, b);
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = a[i] - b[i];
      break;
    }
    case Op::kMul: {
      const Tensor &a = A(), &b = B();
      if (!a.same_shape(b)) shape_error("mul", a, b);
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = a[i] * b[i];
      break;
    }
    case Op::kMatMul: {
      const Tensor &a = A(), &b = B();
      if (a.cols() != b.rows()) shape_error("matmul", a, b);
      if (n.val.rows() != a.rows() || n.val.cols() != b.cols()) {
        n.val = Tensor(a.rows(), b.cols());
      }
      emap(n.val).noalias() = emap(a) * emap(b);
      break;
    }
    case Op::kAddRow: {
      const Tensor &a = A(), &r = B();
      if (r.rows() != 1 || r.cols() != a.cols()) shape_error("add_row", a, r);
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
          n.val(i, j) = a(i, j) + r[j];
        }
      }
      break;
    }
    case Op::kExp: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = std::exp(a[i]);
      break;
    }
    case Op::kLog: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = std::log(a[i]);
      break;
    }
    case Op::kTanh: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = std::tanh(a[i]);
      break;
    }
    case Op::kRelu: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    }
    case Op::kSigmoid: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = detail::sigmoid(a[i]);
      break;
    }
    case Op::kSoftplus: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = detail::softplus(a[i]);
      break;
    }
    case Op::kSquare: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = a[i] * a[i];
      break;
    }
    case Op::kNeg: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = -a[i];
      break;
    }
    case Op::kScale: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = n.carg * a[i];
      break;
    }
    case Op::kAddConst: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = a[i] + n.carg;
      break;
    }
    case Op::kPowInt: {
      const Tensor& a = A();
      n.val.resize_like(a);
      const int k = n.iarg0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        double acc = 1.0;
        double base = a[i];
        int e = k;
        while (e > 0) {
          if (e & 1) acc *= base;
          base *= base;
          e >>= 1;
        }
        n.val[i] = acc;
      }
      break;
    }
    case Op::kMaxConst: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.size(); ++i) n.val[i] = std::fmax(a[i], n.carg);
      break;
    }
    case Op::kSum: {
      const Tensor& a = A();
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
      n.val = Tensor::scalar(acc);
      break;
    }
    case Op::kMean: {
      const Tensor& a = A();
      if (a.size() == 0) throw StructuralError("graph: mean of empty tensor");
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
      n.val = Tensor::scalar(acc / static_cast<double>(a.size()));
      break;
    }
    case Op::kSliceCols: {
      const Tensor& a = A();
      const std::size_t first = static_cast<std::size_t>(n.iarg0);
      const std::size_t count = static_cast<std::size_t>(n.iarg1);
      if (n.val.rows() != a.rows() || n.val.cols() != count) {
        n.val = Tensor(a.rows(), count);
      }
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < count; ++j) {
          n.val(i, j) = a(i, first + j);
        }
      }
      break;
    }
    case Op::kConcatCols: {
      const Tensor &a = A(), &b = B();
      if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
      if (n.val.rows() != a.rows() || n.val.cols() != a.cols() + b.cols()) {
        n.val = Tensor(a.rows(), a.cols() + b.cols());
      }
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) n.val(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) n.val(i, a.cols() + j) = b(i, j);
      }
      break;
    }
    case Op::kCumsumCols: {
      const Tensor& a = A();
      n.val.resize_like(a);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
          acc += a(i, j);
          n.val(i, j) = acc;
        }
      }
      break;
    }
  }
}

const Tensor& Graph::forward() {
  if (nodes_.empty()) throw StructuralError("graph: forward on empty graph");
  for (Node& n : nodes_) compute(n);
  return nodes_.back().val;
}

void Graph::backward() { backward(Ref{static_cast<std::int32_t>(nodes_.size()) - 1}); }

void Graph::backward(Ref root) {
  const Node& r = at(root);
  if (r.val.size() != 1) {
    throw StructuralError("graph: backward root must be scalar, got " +
                          std::to_string(r.val.rows()) + "x" +
                          std::to_string(r.val.cols()));
  }
  for (Node& n : nodes_) {
    n.grad.resize_like(n.val);
  }
  nodes_[static_cast<std::size_t>(root.id)].grad[0] = 1.0;
  for (std::size_t k = static_cast<std::size_t>(root.id) + 1; k-- > 0;) {
    accumulate(nodes_[k]);
  }
}

void Graph::accumulate(Node& n) {
  if (n.op == Op::kLeaf || n.op == Op::kParam) return;
  Tensor& ga = nodes_[static_cast<std::size_t>(n.a)].grad;
  const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].val;
  const Tensor& g = n.grad;

  switch (n.op) {
    case Op::kAdd: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].val;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb[i];
        gb[i] += g[i] * va[i];
      }
      break;
    }
    case Op::kMatMul: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].val;
      emap(ga).noalias() += emap(g) * emap(vb).transpose();
      emap(gb).noalias() += emap(va).transpose() * emap(g);
      break;
    }
    case Op::kAddRow: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
          ga(i, j) += g(i, j);
          gb[j] += g(i, j);
        }
      }
      break;
    }
    case Op::kExp:
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.val[i];
      break;
    case Op::kLog:
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
      break;
    case Op::kTanh:
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
      }
      break;
    case Op::kRelu:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (va[i] > 0.0) ga[i] += g[i];
      }
      break;
    case Op::kSigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
      }
      break;
    case Op::kSoftplus:
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * detail::sigmoid(va[i]);
      }
      break;
    case Op::kSquare:
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * va[i] * g[i];
      break;
    case Op::kNeg:
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
      break;
    case Op::kScale:
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.carg * g[i];
      break;
    case Op::kAddConst:
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    case Op::kPowInt: {
      const int k = n.iarg0;
      if (k == 0) break;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double acc = 1.0;
        double base = va[i];
        int e = k - 1;
        while (e > 0) {
          if (e & 1) acc *= base;
          base *= base;
          e >>= 1;
        }
        ga[i] += static_cast<double>(k) * acc * g[i];
      }
      break;
    }
    case Op::kMaxConst:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (va[i] > n.carg) ga[i] += g[i];
      }
      break;
    case Op::kSum:
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      break;
    case Op::kMean: {
      const double s = g[0] / static_cast<double>(ga.size());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s;
      break;
    }
    case Op::kSliceCols: {
      const std::size_t first = static_cast<std::size_t>(n.iarg0);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
          ga(i, first + j) += g(i, j);
        }
      }
      break;
    }
    case Op::kConcatCols: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      const std::size_t ca = ga.cols();
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
        for (std::size_t j = 0; j < gb.cols(); ++j) gb(i, j) += g(i, ca + j);
      }
      break;
    }
    case Op::kCumsumCols: {
      // d out[:, j] / d in[:, k] = 1 for k <= j: suffix sums of g.
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = g.cols(); j-- > 0;) {
          acc += g(i, j);
          ga(i, j) += acc;
        }
      }
      break;
    }
    case Op::kLeaf:
    case Op::kParam:
      break;
  }
}

const Tensor& Graph::gradient(Ref r) const { return at(r).grad; }

std::map<std::string, Tensor> Graph::parameter_gradients() const {
  std::map<std::string, Tensor> out;
  for (const Node& n : nodes_) {
    if (n.op != Op::kParam) continue;
    auto it = out.find(n.p->id);
    if (it == out.end()) {
      out.emplace(n.p->id, n.grad);
    } else {
      for (std::size_t i = 0; i < n.grad.size(); ++i) it->second[i] += n.grad[i];
    }
  }
  return out;
}

GradCheckResult grad_check(const std::function<Graph::Ref(Graph&)>& build,
                           std::span<const ParameterPtr> params, double step) {
  if (!(step > 0.0)) throw DomainError("grad_check: step must be > 0");
  GradCheckResult res;

  Graph g;
  Graph::Ref root = build(g);
  if (!std::isfinite(g.value(root).item())) {
    res.non_finite = true;
    res.message = "non-finite function value at the evaluation point";
    return res;
  }
  g.backward(root);
  std::map<std::string, Tensor> analytic = g.parameter_gradients();

  const auto eval = [&]() {
    Graph h;
    return h.value(build(h)).item();
  };

  for (const ParameterPtr& p : params) {
    const Tensor grad = analytic.count(p->id) ? analytic.at(p->id)
                                              : Tensor(p->value.rows(), p->value.cols());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      p->value[i] = keep + step;
      const double fp = eval();
      p->value[i] = keep - step;
      const double fm = eval();
      p->value[i] = keep;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        res.non_finite = true;
        res.worst_parameter = p->id;
        res.worst_index = i;
        res.message = "non-finite function value while perturbing " + p->id +
                      "[" + std::to_string(i) + "]";
        return res;
      }
      const double fd = (fp - fm) / (2.0 * step);
      const double a = grad[i];
      const double rel = std::fabs(a - fd) / std::fmax(1.0, std::fabs(a));
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_parameter = p->id;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace bernflow::ad
