#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bernflow/bernstein.hpp"
#include "bernflow/data.hpp"
#include "bernflow/errors.hpp"
#include "bernflow/eval.hpp"
#include "bernflow/flow.hpp"
#include "bernflow/graph.hpp"
#include "bernflow/rng.hpp"
#include "bernflow/training.hpp"

namespace py = pybind11;
using namespace bernflow;

namespace {

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

Dataset make_dataset(const Arr& X, const Arr& y) {
  if (X.ndim() != 2) throw StructuralError("X must be 2-dimensional");
  if (y.ndim() != 1) throw StructuralError("y must be 1-dimensional");
  if (X.shape(0) != y.shape(0)) throw StructuralError("X and y row counts differ");
  Dataset d;
  d.n = static_cast<std::size_t>(X.shape(0));
  d.p = static_cast<std::size_t>(X.shape(1));
  for (std::size_t j = 0; j < d.p; ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  d.x.assign(X.data(), X.data() + d.n * d.p);
  d.y.assign(y.data(), y.data() + d.n);
  return d;
}

py::dict dataset_to_dict(const Dataset& d) {
  Arr X({static_cast<py::ssize_t>(d.n), static_cast<py::ssize_t>(d.p)});
  Arr y(static_cast<py::ssize_t>(d.n));
  std::copy(d.x.begin(), d.x.end(), X.mutable_data());
  std::copy(d.y.begin(), d.y.end(), y.mutable_data());
  py::dict out;
  out["X"] = X;
  out["y"] = y;
  out["feature_names"] = d.feature_names;
  out["target_name"] = d.target_name;
  return out;
}

py::dict fit_result_to_dict(const FitResult& fr) {
  py::dict out;
  out["final_train_nll"] = fr.final_train_nll;
  out["iterations"] = fr.iterations;
  py::list trace;
  for (const auto& tp : fr.trace) {
    py::dict e;
    e["iteration"] = tp.iteration;
    e["train_nll"] = tp.train_nll;
    e["val_nll"] = tp.val_nll;
    trace.append(e);
  }
  out["trace"] = trace;
  return out;
}

py::dict cpd_to_dict(const CpdGrid& g) {
  py::dict out;
  out["x"] = g.x;
  out["y"] = g.y;
  out["density"] = g.density;
  out["cdf"] = g.cdf;
  out["z_lo"] = g.z_lo;
  out["z_hi"] = g.z_hi;
  py::list qs;
  for (const auto& q : g.quantiles) {
    py::dict e;
    e["level"] = q.level;
    e["value"] = q.value;
    e["attainable"] = q.attainable;
    qs.append(e);
  }
  out["quantiles"] = qs;
  out["trapezoid_mass"] = g.trapezoid_mass();
  out["mode_count"] = g.mode_count();
  return out;
}

TrainConfig train_config_from_kwargs(std::size_t iterations, double learning_rate,
                                     bool halve_lr, std::size_t batch_size,
                                     std::uint64_t seed) {
  TrainConfig tc;
  tc.iterations = iterations;
  tc.learning_rate = learning_rate;
  tc.halve_lr = halve_lr;
  tc.batch_size = batch_size;
  tc.seed = seed;
  return tc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bernstein-flow conditional density estimation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception<OutOfSupportError>(m, "OutOfSupportError", PyExc_ValueError);

  py::class_<BernsteinBasis>(m, "BernsteinBasis")
      .def(py::init<std::size_t>(), py::arg("order"))
      .def("order", &BernsteinBasis::order)
      .def("eval", &BernsteinBasis::eval, py::arg("y_tilde"))
      .def(
          "poly_eval",
          [](const BernsteinBasis& b, const std::vector<double>& theta, double y) {
            return b.poly_eval(MonotoneCoefficients{theta}, y);
          },
          py::arg("theta"), py::arg("y_tilde"))
      .def(
          "poly_deriv",
          [](const BernsteinBasis& b, const std::vector<double>& theta, double y) {
            return b.poly_deriv(MonotoneCoefficients{theta}, y);
          },
          py::arg("theta"), py::arg("y_tilde"));

  m.def(
      "monotone_from_unconstrained",
      [](const std::vector<double>& gamma) {
        return monotone_from_unconstrained(gamma).theta;
      },
      py::arg("gamma"));

  py::class_<TransformParams>(m, "TransformParams")
      .def(py::init([](double a, double b, const std::vector<double>& theta,
                       double alpha, double beta) {
             TransformParams p;
             p.a = a;
             p.b = b;
             p.theta.theta = theta;
             p.alpha = alpha;
             p.beta = beta;
             p.validate();
             return p;
           }),
           py::arg("a"), py::arg("b"), py::arg("theta"), py::arg("alpha") = 1.0,
           py::arg("beta") = 0.0)
      .def_readonly("a", &TransformParams::a)
      .def_readonly("b", &TransformParams::b)
      .def_readonly("alpha", &TransformParams::alpha)
      .def_readonly("beta", &TransformParams::beta)
      .def_property_readonly(
          "theta", [](const TransformParams& p) { return p.theta.theta; })
      .def("z_lo", &TransformParams::z_lo)
      .def("z_hi", &TransformParams::z_hi);

  m.def("transform", &transform, py::arg("basis"), py::arg("params"), py::arg("y"));
  m.def("transform_deriv", &transform_deriv, py::arg("basis"), py::arg("params"),
        py::arg("y"));
  m.def("log_density", &log_density, py::arg("basis"), py::arg("params"),
        py::arg("y"));
  m.def("cdf", &cdf, py::arg("basis"), py::arg("params"), py::arg("y"));
  m.def("quantile", &quantile, py::arg("basis"), py::arg("params"), py::arg("prob"));
  m.def(
      "sample",
      [](const BernsteinBasis& basis, const TransformParams& p, std::size_t n,
         std::uint64_t seed) {
        Rng rng(seed);
        const SampleResult r = sample(basis, p, n, rng);
        py::dict out;
        out["values"] = r.values;
        out["rejections"] = r.rejections;
        return out;
      },
      py::arg("basis"), py::arg("params"), py::arg("n"), py::arg("seed") = 1);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](std::size_t order, const std::vector<std::size_t>& hidden,
                       const std::string& activation, double l2,
                       const std::vector<std::string>& constant_groups, bool use_f3,
                       std::uint64_t seed) {
             ModelConfig c;
             c.order = order;
             c.hidden_layers = hidden;
             c.activation = activation;
             c.l2 = l2;
             c.constant_groups.insert(constant_groups.begin(), constant_groups.end());
             c.use_f3 = use_f3;
             c.seed = seed;
             c.validate();
             return c;
           }),
           py::arg("order") = 10, py::arg("hidden_layers") = std::vector<std::size_t>{50},
           py::arg("activation") = "tanh", py::arg("l2") = 0.0,
           py::arg("constant_groups") = std::vector<std::string>{},
           py::arg("use_f3") = true, py::arg("seed") = 1)
      .def_readonly("order", &ModelConfig::order)
      .def_readonly("l2", &ModelConfig::l2)
      .def_readonly("use_f3", &ModelConfig::use_f3)
      .def_readonly("seed", &ModelConfig::seed);

  py::class_<TransformationModel>(m, "TransformationModel")
      .def(py::init<ModelConfig, std::size_t>(), py::arg("config"),
           py::arg("input_dim"))
      .def("input_dim", &TransformationModel::input_dim)
      .def("basis", &TransformationModel::basis,
           py::return_value_policy::reference_internal)
      .def(
          "params_for",
          [](const TransformationModel& mdl, const std::vector<double>& x) {
            return mdl.params_for(x);
          },
          py::arg("x"));

  py::class_<LtmModel>(m, "LtmModel")
      .def(py::init<std::size_t, std::size_t, double>(), py::arg("input_dim"),
           py::arg("order"), py::arg("l2") = 0.0)
      .def("input_dim", &LtmModel::input_dim)
      .def("basis", &LtmModel::basis, py::return_value_policy::reference_internal)
      .def(
          "params_for",
          [](const LtmModel& mdl, const std::vector<double>& x) {
            return mdl.params_for(x);
          },
          py::arg("x"));

  py::class_<Scaler>(m, "Scaler")
      .def_static(
          "fit", [](const Arr& X, const Arr& y) { return Scaler::fit(make_dataset(X, y)); },
          py::arg("X"), py::arg("y"))
      .def("apply",
           [](const Scaler& s, const Arr& X, const Arr& y) {
             return dataset_to_dict(s.apply(make_dataset(X, y)));
           })
      .def("scale_y", &Scaler::scale_y)
      .def("unscale_y", &Scaler::unscale_y)
      .def("nll_correction", &Scaler::nll_correction);

  m.def(
      "fit",
      [](TransformationModel& mdl, const Arr& X, const Arr& y, std::size_t iterations,
         double learning_rate, bool halve_lr, std::size_t batch_size,
         std::uint64_t seed) {
        const Dataset d = make_dataset(X, y);
        return fit_result_to_dict(fit(
            mdl, d,
            train_config_from_kwargs(iterations, learning_rate, halve_lr, batch_size,
                                     seed)));
      },
      py::arg("model"), py::arg("X"), py::arg("y"), py::arg("iterations") = 2000,
      py::arg("learning_rate") = 1e-2, py::arg("halve_lr") = true,
      py::arg("batch_size") = 0, py::arg("seed") = 1);
  m.def(
      "fit_ltm",
      [](LtmModel& mdl, const Arr& X, const Arr& y, std::size_t iterations,
         double learning_rate, bool halve_lr, std::size_t batch_size,
         std::uint64_t seed) {
        const Dataset d = make_dataset(X, y);
        return fit_result_to_dict(fit(
            mdl, d,
            train_config_from_kwargs(iterations, learning_rate, halve_lr, batch_size,
                                     seed)));
      },
      py::arg("model"), py::arg("X"), py::arg("y"), py::arg("iterations") = 2000,
      py::arg("learning_rate") = 1e-2, py::arg("halve_lr") = true,
      py::arg("batch_size") = 0, py::arg("seed") = 1);

  m.def(
      "test_nll",
      [](const TransformationModel& mdl, const Scaler& s, const Arr& X, const Arr& y) {
        return test_nll(mdl, s, make_dataset(X, y));
      },
      py::arg("model"), py::arg("scaler"), py::arg("X"), py::arg("y"));
  m.def(
      "test_nll_ltm",
      [](const LtmModel& mdl, const Scaler& s, const Arr& X, const Arr& y) {
        return test_nll(mdl, s, make_dataset(X, y));
      },
      py::arg("model"), py::arg("scaler"), py::arg("X"), py::arg("y"));

  m.def(
      "cpd_export",
      [](const TransformationModel& mdl, const Scaler& s, const std::vector<double>& x,
         std::size_t points, const std::vector<double>& levels) {
        return cpd_to_dict(cpd_export(mdl, s, x, points, levels));
      },
      py::arg("model"), py::arg("scaler"), py::arg("x"), py::arg("points") = 512,
      py::arg("quantile_levels") = std::vector<double>{});

  m.def(
      "grad_check",
      [](TransformationModel& mdl, const Arr& X, const Arr& y, double step) {
        const Dataset d = make_dataset(X, y);
        const Tensor Xt = d.feature_tensor();
        const Tensor yt = d.target_tensor();
        const auto res = ad::grad_check(
            [&](ad::Graph& g) {
              return mdl.build_loss(g, g.leaf(Xt), g.leaf(yt)).loss;
            },
            mdl.parameters(), step);
        py::dict out;
        out["max_rel_error"] = res.max_rel_error;
        out["worst_parameter"] = res.worst_parameter;
        out["worst_index"] = res.worst_index;
        out["non_finite"] = res.non_finite;
        out["message"] = res.message;
        return out;
      },
      py::arg("model"), py::arg("X"), py::arg("y"), py::arg("step") = 1e-5);

  m.def("gen_toy_sinusoidal",
        [](std::size_t n, std::uint64_t seed) {
          return dataset_to_dict(gen_toy_sinusoidal(n, seed));
        },
        py::arg("n"), py::arg("seed") = 1);
  m.def("gen_toy_bimodal",
        [](std::size_t n, std::uint64_t seed) {
          return dataset_to_dict(gen_toy_bimodal(n, seed));
        },
        py::arg("n"), py::arg("seed") = 1);
  m.def("gen_toy_hetero_gaussian",
        [](std::size_t n, std::uint64_t seed) {
          return dataset_to_dict(gen_toy_hetero_gaussian(n, seed));
        },
        py::arg("n"), py::arg("seed") = 1);
  m.def("toy_hetero_gaussian_analytic_nll", &toy_hetero_gaussian_analytic_nll);
  m.def("load_csv",
        [](const std::string& path, const std::string& target) {
          return dataset_to_dict(load_csv(path, target));
        },
        py::arg("path"), py::arg("target") = "");
}
