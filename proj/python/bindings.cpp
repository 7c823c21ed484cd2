#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "commands.hpp"
#include "config.hpp"
#include "tikmv/errors.hpp"
#include "tikmv/io.hpp"
#include "tikmv/lq.hpp"
#include "tikmv/measures.hpp"
#include "tikmv/metrics.hpp"
#include "tikmv/studies.hpp"

namespace py = pybind11;
using namespace tikmv;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array track_array(const Track& t) {
  Array out({t.particles(), t.grid().nodes(), t.dim()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Track array_track(const Array& a, const TimeGrid& grid) {
  if (a.ndim() != 3) throw InvalidInput("expected an array of shape (particles, nodes, dim)");
  const auto M = static_cast<std::size_t>(a.shape(0)), nodes = static_cast<std::size_t>(a.shape(1)),
             dim = static_cast<std::size_t>(a.shape(2));
  if (nodes != grid.nodes()) throw InvalidInput("array has " + std::to_string(nodes) + " nodes, grid has " + std::to_string(grid.nodes()));
  Track t(grid, M, dim);
  const double* src = a.data();
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t n = 0; n < nodes; ++n, src += dim)
      t.at(i, n) = Eigen::Map<const Eigen::VectorXd>(src, static_cast<Eigen::Index>(dim));
  return t;
}

py::dict paths_dict(const PathEnsemble& p) {
  py::dict d;
  std::vector<double> t;
  for (std::size_t n = 0; n < p.grid.nodes(); ++n) t.push_back(p.grid.time(n));
  d["t"] = py::array(py::cast(t));
  d["X"] = track_array(p.slow);
  if (p.fast) d["A"] = track_array(*p.fast);
  if (p.aux) d["Y"] = track_array(*p.aux);
  return d;
}

py::dict riccati_dict(const RiccatiPath& r) {
  const std::size_t nodes = r.lambda.size();
  const auto rows = static_cast<std::size_t>(r.lambda.front().rows()), cols = static_cast<std::size_t>(r.lambda.front().cols());
  Array lambda({nodes, rows, cols});
  Array theta({nodes, static_cast<std::size_t>(r.theta.front().size())});
  auto L = lambda.mutable_unchecked<3>();
  auto T = theta.mutable_unchecked<2>();
  std::vector<double> t;
  for (std::size_t n = 0; n < nodes; ++n) {
    t.push_back(r.grid.time(n));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) L(n, i, j) = r.lambda[n](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    for (Eigen::Index i = 0; i < r.theta[n].size(); ++i) T(n, i) = r.theta[n](i);
  }
  py::dict d;
  d["t"] = py::array(py::cast(t));
  d["lambda"] = lambda;
  d["theta"] = theta;
  return d;
}

py::dict table_dict(const ErrorTable& table) {
  py::dict cols;
  std::vector<double> eps, s2, h2, st, gap;
  for (const auto& r : table.rows()) {
    eps.push_back(r.eps);
    s2.push_back(r.s2_error_X);
    h2.push_back(r.h2_error_A);
    st.push_back(r.stationarity_residual);
    gap.push_back(r.cost_gap);
  }
  cols["eps"] = py::array(py::cast(eps));
  cols["s2_error_X"] = py::array(py::cast(s2));
  cols["h2_error_A"] = py::array(py::cast(h2));
  cols["stationarity_residual"] = py::array(py::cast(st));
  cols["cost_gap"] = py::array(py::cast(gap));
  py::dict meta;
  for (const auto& [k, v] : table.metadata()) meta[py::str(k)] = v;
  py::dict out;
  out["columns"] = cols;
  out["metadata"] = meta;
  return out;
}

struct Sampled {
  NoiseBundle noise;
  ParticleCloud xi, eta;
};

// Noise and initial clouds exactly as the studies draw them for this seed.
Sampled sample(const LQModel& model, const TimeGrid& grid, std::size_t particles, std::uint64_t seed) {
  return {NoiseBundle(grid, particles, model.dims.m, seed), sample_cloud(model.xi, particles, seed, streams::initial_slow),
          sample_cloud(model.eta, particles, seed, streams::initial_fast)};
}

template <class F>
auto without_gil(F&& f) {
  py::gil_scoped_release release;
  return f();
}

cli::ExperimentConfig config_from(const std::string& path, std::optional<std::uint64_t> seed,
                                  std::optional<std::vector<double>> eps) {
  cli::ExperimentConfig c = cli::load_config(path);
  if (seed) c.study.seed = *seed;
  if (eps) c.study.eps_list = *eps;
  cli::validate_config(c);
  return c;
}

}  // namespace

PYBIND11_MODULE(_tikmv, m) {
  m.doc() = "Two-scale McKean-Vlasov control: Riccati solvers, particle simulation and eps-convergence studies";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<TimeGrid>(m, "TimeGrid")
      .def(py::init<double, std::size_t>(), py::arg("T"), py::arg("N"))
      .def_property_readonly("dt", &TimeGrid::dt)
      .def_property_readonly("steps", &TimeGrid::steps)
      .def_property_readonly("horizon", &TimeGrid::horizon)
      .def("times", [](const TimeGrid& g) {
        std::vector<double> t;
        for (std::size_t n = 0; n < g.nodes(); ++n) t.push_back(g.time(n));
        return py::array(py::cast(t));
      });

  py::class_<LQModel>(m, "LQModel")
      .def_static("scalar", &LQModel::scalar, py::arg("b1") = 1.0, py::arg("b2") = 1.0, py::arg("q") = 1.0,
                  py::arg("r") = 1.0, py::arg("sigma") = 1.0, py::arg("q_term") = 1.0,
                  "Scalar model with xi = 1, eta = 0")
      .def_static(
          "from_config", [](const std::string& path) { return cli::load_config(path).lq; }, py::arg("path"))
      .def_property_readonly("dims", [](const LQModel& mm) { return py::make_tuple(mm.dims.d, mm.dims.k, mm.dims.m); });

  m.def(
      "solve_riccati_smp",
      [](const LQModel& model, const TimeGrid& grid, std::size_t substeps) {
        return riccati_dict(solve_riccati_smp(model, grid, substeps));
      },
      py::arg("model"), py::arg("grid"), py::arg("substeps") = 1);
  m.def(
      "solve_riccati_twoscale",
      [](const LQModel& model, double eps, const TimeGrid& grid, const std::string& method, std::size_t substeps) {
        RiccatiOptions o;
        if (method == "rk4") o.method = RiccatiMethod::rk4;
        else if (method != "implicit_euler") throw ConfigError("method must be implicit_euler or rk4");
        o.substeps = substeps;
        return riccati_dict(solve_riccati_twoscale(model, eps, grid, o));
      },
      py::arg("model"), py::arg("eps"), py::arg("grid"), py::arg("method") = "implicit_euler", py::arg("substeps") = 10);

  m.def(
      "simulate_lq_optimal",
      [](const LQModel& model, const TimeGrid& grid, std::size_t particles, std::uint64_t seed) {
        const Sampled s = sample(model, grid, particles, seed);
        return paths_dict(without_gil(
            [&] { return simulate_lq_optimal(model, solve_riccati_smp(model, grid), grid, s.noise, s.xi); }));
      },
      py::arg("model"), py::arg("grid"), py::arg("particles"), py::arg("seed") = 0,
      "Optimal pair from the Riccati feedback; arrays have shape (particles, nodes, dim)");
  m.def(
      "simulate_lq_twoscale",
      [](const LQModel& model, double eps, const TimeGrid& grid, std::size_t particles, std::uint64_t seed, double beta,
         std::optional<Eigen::MatrixXd> G) {
        const Sampled s = sample(model, grid, particles, seed);
        const Eigen::MatrixXd g = G ? *G : Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(model.dims.k),
                                                                  static_cast<Eigen::Index>(model.dims.m));
        return paths_dict(without_gil([&] {
          return simulate_lq_twoscale(model, solve_riccati_twoscale(model, eps, grid), eps, beta, g, grid, s.noise, s.xi,
                                      s.eta);
        }));
      },
      py::arg("model"), py::arg("eps"), py::arg("grid"), py::arg("particles"), py::arg("seed") = 0, py::arg("beta") = 1.0,
      py::arg("G") = std::nullopt);

  m.def(
      "s2_distance", [](const Array& a, const Array& b, double T) {
        const TimeGrid grid(T, static_cast<std::size_t>(a.shape(1)) - 1);
        return s2_distance(array_track(a, grid), array_track(b, grid));
      },
      py::arg("a"), py::arg("b"), py::arg("T") = 1.0);
  m.def(
      "h2_distance", [](const Array& a, const Array& b, double T) {
        const TimeGrid grid(T, static_cast<std::size_t>(a.shape(1)) - 1);
        return h2_distance(array_track(a, grid), array_track(b, grid));
      },
      py::arg("a"), py::arg("b"), py::arg("T") = 1.0);
  m.def(
      "wasserstein2_1d",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return wasserstein2_exact_1d(ParticleCloud::from_values(a), ParticleCloud::from_values(b));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "run_study",
      [](const std::string& path, std::optional<std::uint64_t> seed, std::optional<std::vector<double>> eps,
         const std::string& kind) {
        const cli::ExperimentConfig c = config_from(path, seed, eps);
        const StudyResult r = without_gil([&] {
          if (c.type == cli::ModelType::fixture) return fixture_convergence_study(c.fixture, c.study);
          if (kind == "frozen") return frozen_study(c.lq, FrozenSpec{c.frozen.source, std::nullopt}, c.study);
          return lq_convergence_study(c.lq, c.study);
        });
        return table_dict(r.table);
      },
      py::arg("config"), py::arg("seed") = std::nullopt, py::arg("eps") = std::nullopt, py::arg("kind") = "converge",
      "Eps sweep from a JSON config; returns {'columns': {...}, 'metadata': {...}}");

  m.def(
      "main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "tikmv");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return without_gil([&] { return cli::main_entry(static_cast<int>(argv.size()), argv.data()); });
      },
      py::arg("args"), "Run the command line tool in-process; returns the exit code");
}
