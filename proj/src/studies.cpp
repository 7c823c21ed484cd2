#include "tikmv/studies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <sstream>

#include "tikmv/errors.hpp"
#include "tikmv/io.hpp"
#include "tikmv/noise.hpp"

namespace tikmv {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

std::string matrix_text(const MatrixXd& m) {
  std::ostringstream out;
  out << '[';
  for (Index r = 0; r < m.rows(); ++r) {
    out << (r ? ",[" : "[");
    for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << io::format_double(m(r, c));
    out << ']';
  }
  out << ']';
  return out.str();
}

// Re-throws the active exception with the offending eps in its message,
// preserving its category.
[[noreturn]] void rethrow_with_eps(double eps) {
  const std::string prefix = "eps=" + io::format_double(eps) + ": ";
  try {
    throw;
  } catch (const DivergenceError& e) {
    throw DivergenceError(prefix + e.what(), e.step());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const ModelError& e) {
    throw ModelError(prefix + e.what());
  } catch (const InvalidInput& e) {
    throw InvalidInput(prefix + e.what());
  }
}

struct Setup {
  TimeGrid grid;
  NoiseBundle noise;
  SolverOptions opts;
  MatrixXd G;
};

Setup make_setup(const StudyConfig& config, const Dims& dims) {
  const TimeGrid grid(config.horizon, config.steps);
  if (config.particles == 0) throw ConfigError("particle count must be positive");
  SolverOptions opts = config.solver;
  // Errors are computed node by node on the full ensemble.
  opts.record_stride = 1;
  opts.record_particles = 0;
  MatrixXd G = config.G.size() == 0 ? MatrixXd::Ones(idx(dims.k), idx(dims.m)) : config.G;
  if (G.rows() != idx(dims.k) || G.cols() != idx(dims.m)) throw ConfigError("G must be k x m");
  return {grid, NoiseBundle(grid, config.particles, dims.m, config.seed), opts, G};
}

void describe(ErrorTable& table, const StudyConfig& config, const Setup& s, const std::string& model) {
  table.set_meta("model", model);
  table.set_meta("seed", std::to_string(config.seed));
  table.set_meta("M", std::to_string(config.particles));
  table.set_meta("N", std::to_string(config.steps));
  table.set_meta("T", io::format_double(config.horizon));
  table.set_meta("beta", io::format_double(config.beta));
  table.set_meta("beta_power", io::format_double(config.beta_power));
  table.set_meta("G", matrix_text(s.G));
  table.set_meta("scheme", s.opts.fast_scheme == FastScheme::semi_implicit ? "semi_implicit" : "explicit");
  table.set_meta("fast_substeps", std::to_string(s.opts.fast_substeps));
  table.set_meta("noise_mode", s.opts.noise_mode == NoiseMode::shared ? "shared" : "independent");
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

void finish_row(StudyResult& result, const StudyConfig& config, ErrorRow row, PathEnsemble&& paths, double eps,
                double smallest) {
  result.table.add(row);
  if (config.on_row) config.on_row(row);
  if (eps == smallest) {
    result.finest = std::move(paths);
    result.finest_eps = eps;
  }
}

ParticleCloud initial_cloud(const InitialLaw& law, std::size_t particles, std::uint64_t seed, std::uint32_t stream,
                            std::size_t dim, const char* what) {
  if (law.dim() != dim) throw ConfigError(std::string(what) + " has the wrong dimension");
  return sample_cloud(law, particles, seed, stream);
}

}  // namespace

std::vector<double> validated_eps_list(const StudyConfig& config) {
  if (config.eps_list.empty()) throw ConfigError("eps_list is empty");
  for (double e : config.eps_list) {
    if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("eps_list entries must be strictly positive");
  }
  if (!(config.beta_power > 1.0)) {
    throw ConfigError("fast noise amplitude beta*eps^p must be o(eps): power p=" + io::format_double(config.beta_power) +
                      " is not > 1");
  }
  if (!(config.beta >= 0.0) || !std::isfinite(config.beta)) throw ConfigError("beta must be finite and nonnegative");
  if (!(config.slack >= 1.0)) throw ConfigError("slack must be >= 1");
  std::vector<double> eps = config.eps_list;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  if (std::adjacent_find(eps.begin(), eps.end()) != eps.end()) throw ConfigError("eps_list has duplicate entries");
  return eps;
}

StudyResult lq_convergence_study(const LQModel& model, const StudyConfig& config) {
  const std::vector<double> eps_list = validated_eps_list(config);
  const Setup s = make_setup(config, model.dims);
  model.validate(s.grid);
  const ParticleCloud xi = initial_cloud(model.xi, config.particles, config.seed, streams::initial_slow,
                                         model.dims.d, "xi");
  const ParticleCloud eta = initial_cloud(model.eta, config.particles, config.seed, streams::initial_fast,
                                          model.dims.k, "eta");

  const RiccatiPath smp = solve_riccati_smp(model, s.grid, config.riccati_smp_substeps);
  StudyResult result{{}, simulate_lq_optimal(model, smp, s.grid, s.noise, xi, s.opts), std::nullopt, 0.0};
  describe(result.table, config, s, config.model_id.empty() ? "lq" : config.model_id);
  const double reference_cost = lq_cost(model, result.reference);

  for (double eps : eps_list) {
    try {
      const auto start = std::chrono::steady_clock::now();
      const RiccatiPath ts = solve_riccati_twoscale(model, eps, s.grid, config.riccati);
      PathEnsemble paths =
          simulate_lq_twoscale(model, ts, eps, config.beta, s.G, s.grid, s.noise, xi, eta, s.opts, config.beta_power);
      require_common_noise(result.reference, paths);
      ErrorRow row;
      row.eps = eps;
      row.s2_error_X = s2_distance(paths.slow, result.reference.slow);
      row.h2_error_A = h2_distance(*paths.fast, *result.reference.fast);
      row.stationarity_residual = stationarity_residual(model, paths);
      row.cost_gap = lq_cost(model, paths) - reference_cost;
      row.runtime_ms = static_cast<std::int64_t>(elapsed_ms(start));
      finish_row(result, config, row, std::move(paths), eps, eps_list.back());
    } catch (const Error&) {
      rethrow_with_eps(eps);
    }
  }
  return result;
}

StudyResult fixture_convergence_study(const FixtureSpec& fixture, const StudyConfig& config) {
  const std::vector<double> eps_list = validated_eps_list(config);
  const SyntheticModel fx = synthetic_monotone_model(fixture.kind, fixture.lambda, fixture.options);
  CoefficientSet coeffs = fx.coefficients;
  coeffs.horizon = config.horizon;
  const Setup s = make_setup(config, coeffs.dims);
  const ParticleCloud xi = initial_cloud(fixture.xi, config.particles, config.seed, streams::initial_slow, 1, "xi");
  const ParticleCloud eta = initial_cloud(fixture.eta, config.particles, config.seed, streams::initial_fast, 1, "eta");

  std::optional<PathEnsemble> reference;
  if (fixture.kind == SyntheticKind::meanfield_tracking && fixture.reference_refinement > 1) {
    // The law enters the limit control, so the reference is itself a particle
    // approximation; run it finer and record the first M paths on the study grid.
    const std::size_t R = fixture.reference_refinement;
    const NoiseBundle fine_noise = s.noise.with_particles(R * config.particles).refined(R);
    const ParticleCloud fine_xi = sample_cloud(fixture.xi, R * config.particles, config.seed, streams::initial_slow);
    SolverOptions fine = s.opts;
    fine.record_stride = R;
    fine.record_particles = config.particles;
    reference = simulate_limit(coeffs, fx.limit_control, fine_noise.grid(), fine_noise, fine_xi, fine);
  } else {
    reference = simulate_limit(coeffs, fx.limit_control, s.grid, s.noise, xi, s.opts);
  }
  StudyResult result{{}, std::move(*reference), std::nullopt, 0.0};
  describe(result.table, config, s, config.model_id.empty() ? to_string(fixture.kind) : config.model_id);
  result.table.set_meta("lambda", io::format_double(fixture.lambda));
  result.table.set_meta("stationarity_column", "fast_drift_residual");

  for (double eps : eps_list) {
    try {
      const auto start = std::chrono::steady_clock::now();
      const double beta_eps = config.beta * std::pow(eps, config.beta_power);
      PathEnsemble paths = simulate_two_scale(coeffs, eps, beta_eps, s.grid, s.noise, xi, eta, s.opts);
      require_common_noise(result.reference, paths);
      ErrorRow row;
      row.eps = eps;
      row.s2_error_X = s2_distance(paths.slow, result.reference.slow);
      row.h2_error_A = h2_distance(*paths.fast, *result.reference.fast);
      row.stationarity_residual = fast_drift_residual(coeffs, paths);
      row.cost_gap = 0.0;
      row.runtime_ms = static_cast<std::int64_t>(elapsed_ms(start));
      finish_row(result, config, row, std::move(paths), eps, eps_list.back());
    } catch (const Error&) {
      rethrow_with_eps(eps);
    }
  }
  return result;
}

StudyResult frozen_study(const LQModel& model, const FrozenSpec& spec, const StudyConfig& config) {
  const std::vector<double> eps_list = validated_eps_list(config);
  const Setup s = make_setup(config, model.dims);
  model.validate(s.grid);
  const auto [d, k, m] = model.dims;
  const std::size_t M = config.particles;
  const ParticleCloud xi = initial_cloud(model.xi, M, config.seed, streams::initial_slow, d, "xi");
  const ParticleCloud eta = initial_cloud(model.eta, M, config.seed, streams::initial_fast, k, "eta");

  Track ybar(s.grid, M, d);
  Track zbar(s.grid, M, d * m);
  switch (spec.source) {
    case FrozenSource::reference: {
      const RiccatiPath smp = solve_riccati_smp(model, s.grid, config.riccati_smp_substeps);
      const PathEnsemble ref = simulate_lq_optimal(model, smp, s.grid, s.noise, xi, s.opts);
      ybar = *ref.aux;
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t n = 0; n < s.grid.nodes(); ++n) {
          const MatrixXd z = smp.lambda[n] * model.sigma;
          zbar.at(i, n) = Eigen::Map<const VectorXd>(z.data(), z.size());
        }
      }
      break;
    }
    case FrozenSource::zero:
      break;
    case FrozenSource::track:
      if (!spec.ybar) throw ConfigError("frozen study: no Ybar track supplied");
      if (!(spec.ybar->grid() == s.grid)) throw ConfigError("frozen study: Ybar track grid does not match the config grid");
      if (spec.ybar->particles() != M || spec.ybar->dim() != d) {
        throw ConfigError("frozen study: Ybar track shape does not match the config");
      }
      ybar = *spec.ybar;
      break;
  }

  // Limit pair: Abar = -r^-1 b2' Ybar, Xbar driven by Abar.
  auto abar = std::make_shared<Track>(s.grid, M, k);
  for (std::size_t n = 0; n < s.grid.nodes(); ++n) {
    const double t = s.grid.time(n);
    const Eigen::LLT<MatrixXd> llt(model.r.at(t));
    const MatrixXd gain = llt.solve(model.b2.at(t).transpose());
    for (std::size_t i = 0; i < M; ++i) abar->at(i, n) = -(gain * ybar.at(i, n));
  }
  ControlLaw control = [abar](const ControlQuery& q, VecRef out) { out = abar->at(q.particle, q.node); };
  StudyResult result{{}, simulate_lq_controlled(model, control, s.grid, s.noise, xi, s.opts), std::nullopt, 0.0};
  describe(result.table, config, s, config.model_id.empty() ? "lq_frozen" : config.model_id);
  result.table.set_meta("frozen_source", spec.source == FrozenSource::reference ? "reference"
                                         : spec.source == FrozenSource::zero    ? "zero"
                                                                                : "track");
  result.table.set_meta("stationarity_column", "grad_a_hamiltonian_at_ybar");
  const double reference_cost = lq_cost(model, result.reference);
  const FrozenCoefficientSet coeffs = lq_frozen_coefficients(model, s.G);

  for (double eps : eps_list) {
    try {
      const auto start = std::chrono::steady_clock::now();
      const double beta_eps = config.beta * std::pow(eps, config.beta_power);
      PathEnsemble paths = simulate_frozen(coeffs, ybar, zbar, eps, beta_eps, s.grid, s.noise, xi, eta, s.opts);
      require_common_noise(result.reference, paths);
      paths.aux = ybar;
      ErrorRow row;
      row.eps = eps;
      row.s2_error_X = s2_distance(paths.slow, result.reference.slow);
      row.h2_error_A = h2_distance(*paths.fast, *abar);
      row.stationarity_residual = stationarity_residual(model, paths);
      row.cost_gap = lq_cost(model, paths) - reference_cost;
      row.runtime_ms = static_cast<std::int64_t>(elapsed_ms(start));
      finish_row(result, config, row, std::move(paths), eps, eps_list.back());
    } catch (const Error&) {
      rethrow_with_eps(eps);
    }
  }
  return result;
}

}  // namespace tikmv
