#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "chargecast/baseline.hpp"
#include "chargecast/cli.hpp"
#include "chargecast/common.hpp"
#include "chargecast/graph.hpp"
#include "chargecast/mesh.hpp"
#include "chargecast/metrics.hpp"

namespace py = pybind11;
using namespace chargecast;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "chargecast");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  py::gil_scoped_release release;
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

py::dict graph_dict(const graph::AdjacencyGraph& g) {
  py::dict d;
  d["n_nodes"] = g.n_nodes;
  d["edges"] = g.edges;
  d["bridge_edges"] = g.bridge_edges;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "chargecast core";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("run_cli", &run, py::arg("args"), "Runs the command line with the given arguments; returns the exit code.");

  m.def("mae", [](std::vector<double> y, std::vector<double> yhat) { return eval::mae(y, yhat); });
  m.def("rmse", [](std::vector<double> y, std::vector<double> yhat) { return eval::rmse(y, yhat); });
  m.def("mape", [](std::vector<double> y, std::vector<double> yhat) { return eval::mape(y, yhat); });
  m.def(
      "bootstrap_ci",
      [](std::vector<double> v, int resamples, double level, std::uint64_t seed) {
        const auto ci = eval::bootstrap_ci(v, resamples, level, seed);
        return py::make_tuple(ci.mean, ci.lo, ci.hi);
      },
      py::arg("values"), py::arg("resamples") = 1000, py::arg("level") = 0.95, py::arg("seed") = 1);
  m.def("dominance", [](std::map<std::string, double> a, std::map<std::string, double> b) {
    const auto e = eval::dominance("error", a, b);
    py::dict d;
    d["wins_a"] = e.wins_a;
    d["wins_b"] = e.wins_b;
    d["ties"] = e.ties;
    d["pct_a"] = e.pct_a;
    d["pct_b"] = e.pct_b;
    return d;
  });

  m.def("rw2_structure", [](int n) { return Eigen::MatrixXd(graph::rw2_structure(n).matrix); });
  m.def(
      "knn_graph",
      [](const Eigen::MatrixX2d& xy, int k) { return graph_dict(graph::bridge_components(graph::knn_graph(xy, k))); },
      py::arg("coords"), py::arg("k") = 4, "Symmetrized kNN graph, components bridged.");
  m.def("icar_structure", [](const Eigen::MatrixX2d& xy, int k) {
    return Eigen::MatrixXd(graph::icar_structure(graph::bridge_components(graph::knn_graph(xy, k))).matrix);
  }, py::arg("coords"), py::arg("k") = 4);

  m.def("matern_correlation", &mesh::matern_correlation, py::arg("d"), py::arg("kappa"), py::arg("nu") = 1.0);
  m.def("range_variance", [](double theta1, double theta2) {
    const auto rv = mesh::range_variance({theta1, theta2});
    return py::make_tuple(rv.range, rv.variance);
  });

  m.def(
      "irls_poisson",
      [](const Eigen::MatrixXd& X, std::vector<double> y, double ridge) {
        const auto f = baseline::irls_poisson(X, y, ridge);
        py::dict d;
        d["beta"] = f.beta;
        d["covariance"] = f.covariance;
        d["deviance"] = f.deviance;
        d["converged"] = f.converged;
        d["iterations"] = f.iterations;
        return d;
      },
      py::arg("X"), py::arg("y"), py::arg("ridge") = 1e-8);
}
