#include "tikmv/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tikmv/errors.hpp"
#include "tikmv/io.hpp"

namespace tikmv {

Track::Track(TimeGrid grid, std::size_t particles, std::size_t dim)
    : grid_(grid), particles_(particles), dim_(dim), data_(particles * grid.nodes() * dim, 0.0) {}

Eigen::MatrixXd Track::snapshot(std::size_t node) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(particles_));
  for (std::size_t i = 0; i < particles_; ++i) out.col(static_cast<Eigen::Index>(i)) = at(i, node);
  return out;
}

void configure_threads_from_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("TIKMV_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) omp_set_num_threads(static_cast<int>(n));
  }
#endif
}

namespace {

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

// Collects per-particle failures inside parallel loops and rethrows the one
// with the lowest particle index, so the reported error does not depend on
// scheduling.
class FailureLog {
 public:
  explicit FailureLog(std::size_t particles) : slots_(particles) {}

  void record(std::size_t particle, std::exception_ptr error) {
    slots_[particle] = std::move(error);
    failed_.store(true, std::memory_order_relaxed);
  }

  void rethrow_first() const {
    if (!failed_.load(std::memory_order_relaxed)) return;
    for (const auto& e : slots_) {
      if (e) std::rethrow_exception(e);
    }
  }

 private:
  std::vector<std::exception_ptr> slots_;
  std::atomic<bool> failed_{false};
};

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& v, const char* what, std::size_t step) {
  if (!v.allFinite()) {
    throw ModelError(std::string(what) + " returned a non-finite value at step " + std::to_string(step));
  }
}

void require_bounded(const Eigen::Ref<const Eigen::VectorXd>& v, double threshold, const char* what,
                     std::size_t step, double t) {
  if (!v.allFinite() || v.lpNorm<Eigen::Infinity>() > threshold) {
    throw DivergenceError(std::string(what) + " diverged at step " + std::to_string(step) + " (t=" +
                              io::format_double(t) + ")",
                          step);
  }
}

void check_inputs(const CoefficientSet& c, const TimeGrid& grid, const NoiseBundle& noise, const ParticleCloud& xi,
                  const SolverOptions& opts) {
  if (!(noise.grid() == grid)) throw ConfigError("simulation grid does not match the noise grid");
  if (xi.size() != noise.particles()) throw ConfigError("xi cloud size does not match the noise particle count");
  if (xi.dim() != c.dims.d) throw ConfigError("xi cloud dimension does not match d");
  if (noise.dim() != c.dims.m) throw ConfigError("noise dimension does not match m");
  if (opts.fast_substeps == 0) throw ConfigError("fast_substeps must be at least 1");
  if (opts.record_stride == 0 || grid.steps() % opts.record_stride != 0) {
    throw ConfigError("record_stride must divide the number of steps");
  }
  if (!(opts.blowup_threshold > 0.0)) throw ConfigError("blowup_threshold must be positive");
  if (!c.slow_drift || !c.slow_diffusion) throw ConfigError("coefficient set lacks slow fields");
}

std::size_t recorded_count(const SolverOptions& opts, std::size_t particles) {
  return opts.record_particles == 0 ? particles : std::min(opts.record_particles, particles);
}

struct FastParams {
  FastScheme scheme;
  std::size_t substeps;
  double eps;
  double beta_eps;
  double dt;
};

struct Scratch {
  Scratch(std::size_t d, std::size_t k, std::size_t m, std::size_t substeps)
      : x(idx(d)), xnext(idx(d)), drift(idx(d)), diffusion(idx(d), idx(m)), dw(idx(m)), dw_fast(idx(m)),
        pieces(idx(m), idx(substeps)), a(idx(k)), b(idx(k)), b_probe(idx(k)), z(idx(k)), residual(idx(k)),
        noise(idx(k)), rhs(idx(k)), fast_sigma(idx(k), idx(m)), jac(idx(k), idx(k)), system(idx(k), idx(k)) {}

  Eigen::VectorXd x, xnext, drift;
  Eigen::MatrixXd diffusion;
  Eigen::VectorXd dw, dw_fast;
  Eigen::MatrixXd pieces;
  Eigen::VectorXd a, b, b_probe, z, residual, noise, rhs;
  Eigen::MatrixXd fast_sigma, jac, system;
};

void solve_in_place(const Eigen::MatrixXd& system, Eigen::VectorXd& rhs) {
  if (system.rows() == 1) {
    rhs(0) /= system(0, 0);
  } else {
    rhs = system.partialPivLu().solve(rhs);
  }
}

// Advances the fast state `s.a` across one slow step. `drift(a, out)`,
// `jacobian(a, out)` and `sigma(a, out)` close over the frozen slow context.
template <class Drift, class Jacobian, class Sigma>
void advance_fast(Scratch& s, const FastParams& p, bool affine, bool noisy, Drift&& drift, Jacobian&& jacobian,
                  Sigma&& sigma, std::size_t step) {
  const double h = p.dt / static_cast<double>(p.substeps);
  const double ratio = h / p.eps;
  const double amplitude = p.beta_eps / p.eps;
  const auto k = s.a.size();
  for (std::size_t j = 0; j < p.substeps; ++j) {
    if (noisy) {
      sigma(s.a, s.fast_sigma);
      require_finite(s.fast_sigma, "fast diffusion", step);
      s.noise.noalias() = amplitude * (s.fast_sigma * s.pieces.col(idx(j)));
    } else {
      s.noise.setZero();
    }
    drift(s.a, s.b);
    require_finite(s.b, "fast drift", step);

    if (p.scheme == FastScheme::explicit_euler) {
      s.a += ratio * s.b + s.noise;
      continue;
    }
    if (affine) {
      jacobian(s.a, s.jac);
      require_finite(s.jac, "fast drift jacobian", step);
      s.system.setIdentity();
      s.system -= ratio * s.jac;
      s.rhs = ratio * s.b + s.noise;
      solve_in_place(s.system, s.rhs);
      s.a += s.rhs;
      continue;
    }
    // Drift-implicit step z = a + ratio * B(z) + noise by Newton with a
    // finite-difference Jacobian.
    s.z = s.a + ratio * s.b + s.noise;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
      drift(s.z, s.b);
      require_finite(s.b, "fast drift", step);
      s.residual = s.z - s.a - ratio * s.b - s.noise;
      if (s.residual.norm() <= 1e-12 * (1.0 + s.z.norm())) {
        converged = true;
        break;
      }
      for (Index c = 0; c < k; ++c) {
        const double delta = 1e-7 * std::max(1.0, std::abs(s.z(c)));
        s.rhs = s.z;
        s.rhs(c) += delta;
        drift(s.rhs, s.b_probe);
        s.jac.col(c) = (s.b_probe - s.b) / delta;
      }
      s.system.setIdentity();
      s.system -= ratio * s.jac;
      solve_in_place(s.system, s.residual);
      s.z -= s.residual;
    }
    if (!converged) {
      throw NumericalError("implicit fast step did not converge at step " + std::to_string(step));
    }
    s.a = s.z;
  }
}

// Shared driver for the plain and the frozen two-scale systems.
// fast_drift(i, node_end, t, x, mu, a, nu, out) and
// fast_jacobian(i, node_end, t, x, mu, a, nu, out) close over the model.
template <class FastDrift, class FastJacobian>
PathEnsemble run_two_scale(const CoefficientSet& c, FastDrift&& fast_drift, FastJacobian&& fast_jacobian,
                           bool affine, double eps, double beta_eps, const TimeGrid& grid, const NoiseBundle& noise,
                           const ParticleCloud& xi, const ParticleCloud& eta, const SolverOptions& opts) {
  check_inputs(c, grid, noise, xi, opts);
  if (!(eps > 0.0)) throw InvalidInput("simulate_two_scale: eps must be positive");
  if (!(beta_eps >= 0.0)) throw InvalidInput("simulate_two_scale: beta_eps must be nonnegative");
  if (eta.size() != noise.particles()) throw ConfigError("eta cloud size does not match the noise particle count");
  if (eta.dim() != c.dims.k) throw ConfigError("eta cloud dimension does not match k");
  const bool noisy = beta_eps != 0.0;
  if (noisy && !c.fast_diffusion) throw ConfigError("coefficient set lacks a fast diffusion");

  const auto [d, k, m] = c.dims;
  const std::size_t M = noise.particles();
  const std::size_t N = grid.steps();
  const std::size_t stride = opts.record_stride;
  const std::size_t recorded = recorded_count(opts, M);
  const TimeGrid record_grid = grid.coarsened(stride);
  const double dt = grid.dt();
  const FastParams params{opts.fast_scheme, opts.fast_substeps, eps, beta_eps, dt};
  const NoiseBundle fast_noise = opts.noise_mode == NoiseMode::shared ? noise : noise.independent_stream();

  Eigen::MatrixXd X = xi.points().transpose();
  Eigen::MatrixXd A = eta.points().transpose();
  Eigen::MatrixXd Xnext(idx(d), idx(M));

  PathEnsemble out{record_grid, noise.seed(), Track(record_grid, recorded, d), Track(record_grid, recorded, k),
                   std::nullopt};
  auto record = [&](std::size_t node) {
    for (std::size_t i = 0; i < recorded; ++i) {
      out.slow.at(i, node) = X.col(idx(i));
      out.fast->at(i, node) = A.col(idx(i));
    }
  };
  record(0);

  for (std::size_t n = 0; n < N; ++n) {
    const double t = grid.time(n);
    const double t_next = grid.time(n + 1);
    const LawStats mu = law_stats(X);
    const LawStats nu = law_stats(A);
    FailureLog failures(M);

#pragma omp parallel
    {
      Scratch s(d, k, m, opts.fast_substeps);
#pragma omp for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(M); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
          const auto xi_col = X.col(idx(i));
          const auto a_col = A.col(idx(i));
          c.slow_drift(t, xi_col, mu, a_col, nu, s.drift);
          require_finite(s.drift, "slow drift", n);
          c.slow_diffusion(t, xi_col, mu, a_col, nu, s.diffusion);
          require_finite(s.diffusion, "slow diffusion", n);
          noise.increment(i, n, s.dw);
          s.xnext.noalias() = s.diffusion * s.dw;
          Xnext.col(idx(i)) = xi_col + dt * s.drift + s.xnext;
        } catch (...) {
          failures.record(i, std::current_exception());
        }
      }
    }
    failures.rethrow_first();
    X.swap(Xnext);

    const LawStats mu_next = law_stats(X);
#pragma omp parallel
    {
      Scratch s(d, k, m, opts.fast_substeps);
#pragma omp for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(M); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
          s.x = X.col(idx(i));
          s.a = A.col(idx(i));
          if (noisy) {
            if (opts.noise_mode == NoiseMode::shared) {
              noise.increment(i, n, s.dw_fast);
            } else {
              fast_noise.increment(i, n, s.dw_fast);
            }
            fast_noise.split(i, n, s.dw_fast, opts.fast_substeps, s.pieces);
          }
          advance_fast(
              s, params, affine, noisy,
              [&](const Eigen::VectorXd& a, Eigen::VectorXd& o) { fast_drift(i, n + 1, t_next, s.x, mu_next, a, nu, o); },
              [&](const Eigen::VectorXd& a, Eigen::MatrixXd& o) {
                fast_jacobian(i, n + 1, t_next, s.x, mu_next, a, nu, o);
              },
              [&](const Eigen::VectorXd& a, Eigen::MatrixXd& o) { c.fast_diffusion(t_next, s.x, mu_next, a, nu, o); },
              n);
          require_bounded(s.x, opts.blowup_threshold, "slow state", n + 1, t_next);
          require_bounded(s.a, opts.blowup_threshold, "fast state", n + 1, t_next);
          A.col(idx(i)) = s.a;
        } catch (...) {
          failures.record(i, std::current_exception());
        }
      }
    }
    failures.rethrow_first();

    if ((n + 1) % stride == 0) record((n + 1) / stride);
  }
  return out;
}

}  // namespace

PathEnsemble simulate_two_scale(const CoefficientSet& coeffs, double eps, double beta_eps, const TimeGrid& grid,
                                const NoiseBundle& noise, const ParticleCloud& xi, const ParticleCloud& eta,
                                const SolverOptions& opts) {
  if (!coeffs.fast_drift) throw ConfigError("coefficient set lacks a fast drift");
  return run_two_scale(
      coeffs,
      [&coeffs](std::size_t, std::size_t, double t, ConstVecRef x, const LawStats& mu, ConstVecRef a,
                const LawStats& nu, VecRef out) { coeffs.fast_drift(t, x, mu, a, nu, out); },
      [&coeffs](std::size_t, std::size_t, double t, ConstVecRef x, const LawStats& mu, ConstVecRef a,
                const LawStats& nu, MatRef out) { coeffs.fast_drift_jacobian(t, x, mu, a, nu, out); },
      coeffs.affine_fast_drift(), eps, beta_eps, grid, noise, xi, eta, opts);
}

PathEnsemble simulate_frozen(const FrozenCoefficientSet& coeffs, const Track& ybar, const Track& zbar, double eps,
                             double beta_eps, const TimeGrid& grid, const NoiseBundle& noise, const ParticleCloud& xi,
                             const ParticleCloud& eta, const SolverOptions& opts) {
  const auto [d, k, m] = coeffs.base.dims;
  if (!coeffs.grad_a_hamiltonian) throw ConfigError("frozen coefficient set lacks a Hamiltonian gradient");
  if (!(ybar.grid() == grid) || !(zbar.grid() == grid)) {
    throw ConfigError("frozen tracks are not on the simulation grid");
  }
  if (ybar.particles() != noise.particles() || zbar.particles() != noise.particles()) {
    throw ConfigError("frozen tracks do not match the particle count");
  }
  if (ybar.dim() != d || zbar.dim() != d * m) throw ConfigError("frozen tracks have the wrong dimension");
  const auto dd = idx(d), mm = idx(m);
  auto z_at = [&zbar, dd, mm](std::size_t i, std::size_t node) {
    return Eigen::Map<const Eigen::MatrixXd>(zbar.at(i, node).data(), dd, mm);
  };
  return run_two_scale(
      coeffs.base,
      [&](std::size_t i, std::size_t node, double t, ConstVecRef x, const LawStats& mu, ConstVecRef a,
          const LawStats& nu, VecRef out) {
        coeffs.grad_a_hamiltonian(t, x, mu, ybar.at(i, node), z_at(i, node), a, nu, out);
        out = -out;
      },
      [&](std::size_t, std::size_t, double t, ConstVecRef x, const LawStats& mu, ConstVecRef a, const LawStats& nu,
          MatRef out) {
        coeffs.grad_a_jacobian(t, x, mu, a, nu, out);
        out = -out;
      },
      static_cast<bool>(coeffs.grad_a_jacobian), eps, beta_eps, grid, noise, xi, eta, opts);
}

FrozenCoefficientSet lq_frozen_coefficients(const LQModel& model, const Eigen::MatrixXd& G) {
  const auto [d, k, m] = model.dims;
  if (G.rows() != idx(k) || G.cols() != idx(m)) throw ConfigError("lq_frozen_coefficients: G must be k x m");
  auto shared = std::make_shared<const LQModel>(model);
  FrozenCoefficientSet f;
  f.base = lq_slow_coefficients(model);
  f.base.name = "lq_frozen";
  f.base.fast_diffusion = [G](double, ConstVecRef, const LawStats&, ConstVecRef, const LawStats&, MatRef out) {
    out = G;
  };
  // sigma is uncontrolled, so the <sigma, z> pairing has no a-gradient.
  f.grad_a_hamiltonian = [shared](double t, ConstVecRef, const LawStats&, ConstVecRef y,
                                  const Eigen::Ref<const Eigen::MatrixXd>&, ConstVecRef a, const LawStats&,
                                  VecRef out) {
    out.noalias() = shared->b2.at(t).transpose() * y;
    out.noalias() += shared->r.at(t) * a;
  };
  f.grad_a_jacobian = [shared](double t, ConstVecRef, const LawStats&, ConstVecRef, const LawStats&, MatRef out) {
    out = shared->r.at(t);
  };
  return f;
}

PathEnsemble simulate_limit(const CoefficientSet& c, const ControlLaw& control, const TimeGrid& grid,
                            const NoiseBundle& noise, const ParticleCloud& xi, const SolverOptions& opts) {
  check_inputs(c, grid, noise, xi, opts);
  if (!control) throw ConfigError("simulate_limit: missing control law");
  const auto [d, k, m] = c.dims;
  const std::size_t M = noise.particles();
  const std::size_t N = grid.steps();
  const std::size_t stride = opts.record_stride;
  const std::size_t recorded = recorded_count(opts, M);
  const TimeGrid record_grid = grid.coarsened(stride);
  const double dt = grid.dt();

  Eigen::MatrixXd X = xi.points().transpose();
  Eigen::MatrixXd A(idx(k), idx(M));
  PathEnsemble out{record_grid, noise.seed(), Track(record_grid, recorded, d), Track(record_grid, recorded, k),
                   std::nullopt};

  auto evaluate_control = [&](std::size_t n) {
    const double t = grid.time(n);
    const Eigen::VectorXd mean_x = X.rowwise().mean();
    FailureLog failures(M);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(M); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      try {
        auto a = A.col(idx(i));
        control(ControlQuery{t, n, i, X.col(idx(i)), mean_x}, a);
        require_finite(a, "control law", n);
      } catch (...) {
        failures.record(i, std::current_exception());
      }
    }
    failures.rethrow_first();
    if (n % stride == 0) {
      for (std::size_t i = 0; i < recorded; ++i) {
        out.slow.at(i, n / stride) = X.col(idx(i));
        out.fast->at(i, n / stride) = A.col(idx(i));
      }
    }
  };

  for (std::size_t n = 0; n < N; ++n) {
    evaluate_control(n);
    const double t = grid.time(n);
    const LawStats mu = law_stats(X);
    const LawStats nu = law_stats(A);
    FailureLog failures(M);
#pragma omp parallel
    {
      Scratch s(d, k, m, 1);
#pragma omp for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(M); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
          auto x = X.col(idx(i));
          c.slow_drift(t, x, mu, A.col(idx(i)), nu, s.drift);
          require_finite(s.drift, "slow drift", n);
          c.slow_diffusion(t, x, mu, A.col(idx(i)), nu, s.diffusion);
          require_finite(s.diffusion, "slow diffusion", n);
          noise.increment(i, n, s.dw);
          s.xnext.noalias() = s.diffusion * s.dw;
          s.x = x + dt * s.drift + s.xnext;
          require_bounded(s.x, opts.blowup_threshold, "slow state", n + 1, grid.time(n + 1));
          x = s.x;
        } catch (...) {
          failures.record(i, std::current_exception());
        }
      }
    }
    failures.rethrow_first();
  }
  evaluate_control(N);
  return out;
}

double fast_drift_residual(const CoefficientSet& coeffs, const PathEnsemble& paths) {
  if (!paths.fast) throw InvalidInput("fast_drift_residual: paths carry no fast track");
  if (!coeffs.fast_drift) throw InvalidInput("fast_drift_residual: coefficient set has no fast drift");
  const Track& X = paths.slow;
  const Track& A = *paths.fast;
  const TimeGrid& grid = paths.grid;
  Eigen::VectorXd b(idx(coeffs.dims.k));
  double total = 0.0;
  for (std::size_t n = 0; n < grid.steps(); ++n) {
    const Eigen::MatrixXd xs = X.snapshot(n), as = A.snapshot(n);
    const LawStats mu = law_stats(xs), nu = law_stats(as);
    for (std::size_t i = 0; i < X.particles(); ++i) {
      coeffs.fast_drift(grid.time(n), xs.col(idx(i)), mu, as.col(idx(i)), nu, b);
      total += b.squaredNorm() * grid.dt();
    }
  }
  return std::sqrt(total / static_cast<double>(X.particles()));
}

void write_paths_csv(std::ostream& out, const PathEnsemble& paths, std::size_t stride) {
  if (stride == 0) throw InvalidInput("write_paths_csv: stride must be positive");
  out << "t,particle";
  for (std::size_t j = 0; j < paths.slow.dim(); ++j) out << ",X" << j;
  if (paths.fast)
    for (std::size_t j = 0; j < paths.fast->dim(); ++j) out << ",A" << j;
  if (paths.aux)
    for (std::size_t j = 0; j < paths.aux->dim(); ++j) out << ",Y" << j;
  out << '\n';
  for (std::size_t n = 0; n < paths.grid.nodes(); n += stride) {
    const std::string t = io::format_double(paths.grid.time(n));
    for (std::size_t i = 0; i < paths.slow.particles(); ++i) {
      out << t << ',' << i;
      for (double v : paths.slow.at(i, n)) out << ',' << io::format_double(v);
      if (paths.fast)
        for (double v : paths.fast->at(i, n)) out << ',' << io::format_double(v);
      if (paths.aux)
        for (double v : paths.aux->at(i, n)) out << ',' << io::format_double(v);
      out << '\n';
    }
  }
}

PathEnsemble read_paths_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("read_paths_csv: missing header");
  const auto header = io::split_csv_line(line);
  if (header.size() < 3 || header[0] != "t" || header[1] != "particle") {
    throw InvalidInput("read_paths_csv: header must start with t,particle");
  }
  std::size_t dx = 0, da = 0, dy = 0;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const char tag = header[c].empty() ? '?' : header[c][0];
    std::size_t& counter = tag == 'X' ? dx : tag == 'A' ? da : tag == 'Y' ? dy : dx;
    if (tag != 'X' && tag != 'A' && tag != 'Y') throw InvalidInput("read_paths_csv: unknown column " + header[c]);
    if (header[c] != std::string(1, tag) + std::to_string(counter)) {
      throw InvalidInput("read_paths_csv: out-of-order column " + header[c]);
    }
    ++counter;
  }
  if (dx == 0) throw InvalidInput("read_paths_csv: no X columns");

  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != header.size()) throw InvalidInput("read_paths_csv: ragged row");
    std::vector<double> values;
    for (const auto& f : fields) values.push_back(io::parse_double(f));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw InvalidInput("read_paths_csv: no rows");
  std::size_t particles = 0;
  while (particles < rows.size() && rows[particles][0] == rows[0][0]) ++particles;
  if (rows.size() % particles != 0 || rows.size() / particles < 2) {
    throw InvalidInput("read_paths_csv: rows do not form a particle x node table");
  }
  const std::size_t nodes = rows.size() / particles;
  if (rows[0][0] != 0.0) throw InvalidInput("read_paths_csv: first node must be t=0");
  const TimeGrid grid(rows.back()[0], nodes - 1);

  PathEnsemble paths{grid, 0, Track(grid, particles, dx), std::nullopt, std::nullopt};
  if (da) paths.fast.emplace(grid, particles, da);
  if (dy) paths.aux.emplace(grid, particles, dy);
  for (std::size_t n = 0; n < nodes; ++n) {
    for (std::size_t i = 0; i < particles; ++i) {
      const auto& row = rows[n * particles + i];
      if (std::abs(row[0] - grid.time(n)) > 1e-9 * std::max(1.0, grid.horizon())) {
        throw InvalidInput("read_paths_csv: times are not a uniform grid");
      }
      if (static_cast<std::size_t>(row[1]) != i) throw InvalidInput("read_paths_csv: particle index out of order");
      std::size_t c = 2;
      for (std::size_t j = 0; j < dx; ++j) paths.slow.at(i, n)(idx(j)) = row[c++];
      for (std::size_t j = 0; j < da; ++j) paths.fast->at(i, n)(idx(j)) = row[c++];
      for (std::size_t j = 0; j < dy; ++j) paths.aux->at(i, n)(idx(j)) = row[c++];
    }
  }
  return paths;
}

}  // namespace tikmv
