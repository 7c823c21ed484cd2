#include "tikmv/lq.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>
#include <string>

#include "tikmv/errors.hpp"
#include "tikmv/io.hpp"

namespace tikmv {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

MatrixXd inverse_spd(const MatrixXd& r, double t) {
  Eigen::LLT<MatrixXd> llt(r);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("r(t) is not invertible (not positive definite) at t=" + io::format_double(t));
  }
  return llt.solve(MatrixXd::Identity(r.rows(), r.cols()));
}

// r^-1 per grid node, computed once per distinct node value.
std::vector<MatrixXd> inverse_r_table(const LQModel& model, const TimeGrid& grid) {
  if (model.r.is_constant()) return {inverse_spd(model.r.values().front(), 0.0)};
  std::vector<MatrixXd> table;
  table.reserve(grid.nodes());
  for (std::size_t n = 0; n < grid.nodes(); ++n) table.push_back(inverse_spd(model.r.at(grid.time(n)), grid.time(n)));
  return table;
}

const MatrixXd& pick(const std::vector<MatrixXd>& table, std::size_t node) {
  return table.size() == 1 ? table.front() : table[node];
}

void check_blowup(const MatrixXd& lambda, const VectorXd& theta, double threshold, double t) {
  if (!lambda.allFinite() || !theta.allFinite() || lambda.cwiseAbs().maxCoeff() > threshold ||
      (theta.size() > 0 && theta.cwiseAbs().maxCoeff() > threshold)) {
    throw NumericalError("Riccati flow blew up near t=" + io::format_double(t));
  }
}

struct SmpCoefficients {
  MatrixXd b1, S, q;
  VectorXd b0;
};

// Time derivatives of (lambda, theta) for the single-scale system.
void smp_rhs(const SmpCoefficients& c, const MatrixXd& lam, const VectorXd& th, MatrixXd& dlam, VectorXd& dth) {
  dlam = -c.b1.transpose() * lam - lam * c.b1 + lam * c.S * lam - c.q;
  dth = -(c.b1.transpose() - lam * c.S) * th - lam * c.b0;
}

struct TwoScaleCoefficients {
  MatrixXd C, D, Qt, b1;
  VectorXd c0;
};

TwoScaleCoefficients two_scale_blocks(const LQModel& model, double eps, double t) {
  const auto [d, k, m] = model.dims;
  const Index dd = idx(d), kk = idx(k);
  TwoScaleCoefficients c;
  c.b1 = model.b1.at(t);
  c.C = MatrixXd::Zero(dd + kk, dd + kk);
  c.C.topLeftCorner(dd, dd) = c.b1;
  c.C.topRightCorner(dd, kk) = model.b2.at(t);
  c.C.bottomRightCorner(kk, kk) = -model.r.at(t) / eps;
  c.D = MatrixXd::Zero(dd + kk, dd);
  c.D.bottomRows(kk) = -model.b2.at(t).transpose() / eps;
  c.Qt = MatrixXd::Zero(dd, dd + kk);
  c.Qt.leftCols(dd) = -model.q_run.at(t);
  c.c0 = VectorXd::Zero(dd + kk);
  c.c0.head(dd) = model.b0;
  return c;
}

// lambda' = -lambda (C + D lambda) + Q(t) - b1' lambda.
MatrixXd two_scale_lambda_rhs(const TwoScaleCoefficients& c, const MatrixXd& lam) {
  return -lam * (c.C + c.D * lam) + c.Qt - c.b1.transpose() * lam;
}

// theta' = -lambda D theta - b1' theta - lambda c0.
VectorXd two_scale_theta_rhs(const TwoScaleCoefficients& c, const MatrixXd& lam, const VectorXd& th) {
  return -lam * (c.D * th) - c.b1.transpose() * th - lam * c.c0;
}

// One implicit Euler step backward in time: solve lam - next - h f(lam) = 0
// where lam' = -f... written directly as G(lam) = lam - next + h * rhs(lam) = 0.
MatrixXd implicit_lambda_step(const TwoScaleCoefficients& c, const MatrixXd& next, double h, double t) {
  const Index rows = next.rows(), cols = next.cols(), p = rows * cols;
  auto residual = [&](const MatrixXd& lam) -> MatrixXd { return lam - next + h * two_scale_lambda_rhs(c, lam); };

  MatrixXd lam = next;
  MatrixXd G = residual(lam);
  for (int it = 0; it < 100; ++it) {
    const double gnorm = G.norm();
    if (gnorm <= 1e-13 * (1.0 + lam.norm())) return lam;
    // Jacobian of G applied to each basis direction E.
    MatrixXd J(p, p);
    const MatrixXd CDl = c.C + c.D * lam;
    for (Index j = 0; j < p; ++j) {
      MatrixXd E = MatrixXd::Zero(rows, cols);
      E(j % rows, j / rows) = 1.0;
      const MatrixXd dG = E + h * (-E * CDl - lam * (c.D * E) - c.b1.transpose() * E);
      J.col(j) = Eigen::Map<const VectorXd>(dG.data(), p);
    }
    const VectorXd step = J.partialPivLu().solve(Eigen::Map<const VectorXd>(G.data(), p));
    const MatrixXd delta = Eigen::Map<const MatrixXd>(step.data(), rows, cols);
    double damping = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      const MatrixXd trial = lam - damping * delta;
      const MatrixXd trial_G = residual(trial);
      if (trial_G.allFinite() && trial_G.norm() < gnorm) {
        lam = trial;
        G = trial_G;
        accepted = true;
        break;
      }
      damping *= 0.5;
    }
    if (!accepted) break;
  }
  if (G.norm() <= 1e-10 * (1.0 + lam.norm())) return lam;
  throw NumericalError("two-scale Riccati Newton iteration did not converge near t=" + io::format_double(t));
}

}  // namespace

RiccatiPath solve_riccati_smp(const LQModel& model, const TimeGrid& grid, std::size_t substeps) {
  model.validate(grid);
  if (substeps == 0) throw InvalidInput("solve_riccati_smp: substeps must be positive");
  const auto d = idx(model.dims.d);
  const auto rinv = inverse_r_table(model, grid);
  const std::size_t N = grid.steps();

  RiccatiPath path;
  path.grid = grid;
  path.kind = RiccatiKind::smp;
  path.lambda.resize(grid.nodes());
  path.theta.resize(grid.nodes());
  path.lambda[N] = model.q_term;
  path.theta[N] = VectorXd::Zero(d);

  MatrixXd lam = model.q_term, k1, k2, k3, k4;
  VectorXd th = VectorXd::Zero(d), j1, j2, j3, j4;
  const double h = grid.dt() / static_cast<double>(substeps);
  for (std::size_t n = N; n-- > 0;) {
    const double t = grid.time(n);
    const MatrixXd& b2 = model.b2.at(t);
    const SmpCoefficients c{model.b1.at(t), b2 * pick(rinv, n) * b2.transpose(), model.q_run.at(t), model.b0};
    for (std::size_t s = 0; s < substeps; ++s) {
      // Backward in time: step -h.
      smp_rhs(c, lam, th, k1, j1);
      smp_rhs(c, lam - 0.5 * h * k1, th - 0.5 * h * j1, k2, j2);
      smp_rhs(c, lam - 0.5 * h * k2, th - 0.5 * h * j2, k3, j3);
      smp_rhs(c, lam - h * k3, th - h * j3, k4, j4);
      lam -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      th -= (h / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4);
    }
    check_blowup(lam, th, 1e12, t);
    path.lambda[n] = lam;
    path.theta[n] = th;
  }
  return path;
}

RiccatiPath solve_riccati_twoscale(const LQModel& model, double eps, const TimeGrid& grid,
                                   const RiccatiOptions& options) {
  if (!(eps > 0.0)) throw InvalidInput("solve_riccati_twoscale: eps must be positive");
  if (options.substeps == 0) throw InvalidInput("solve_riccati_twoscale: substeps must be positive");
  model.validate(grid);
  inverse_r_table(model, grid);  // rejects singular r with a diagnostic
  const auto [d, k, m] = model.dims;
  const std::size_t N = grid.steps();

  RiccatiPath path;
  path.grid = grid;
  path.kind = RiccatiKind::two_scale;
  path.eps = eps;
  path.lambda.resize(grid.nodes());
  path.theta.resize(grid.nodes());
  MatrixXd lam = MatrixXd::Zero(idx(d), idx(d + k));
  lam.leftCols(idx(d)) = model.q_term;
  VectorXd th = VectorXd::Zero(idx(d));
  path.lambda[N] = lam;
  path.theta[N] = th;

  std::size_t substeps = options.substeps;
  if (options.method == RiccatiMethod::rk4) {
    const double cap = eps / 10.0;
    substeps = std::max(substeps, static_cast<std::size_t>(std::ceil(grid.dt() / cap - 1e-9)));
  }
  const double h = grid.dt() / static_cast<double>(substeps);

  for (std::size_t n = N; n-- > 0;) {
    const double t = grid.time(n);
    const TwoScaleCoefficients c = two_scale_blocks(model, eps, t);
    for (std::size_t s = 0; s < substeps; ++s) {
      if (options.method == RiccatiMethod::implicit_euler) {
        lam = implicit_lambda_step(c, lam, h, t);
        // theta solves the linear implicit equation exactly.
        const Index dd = idx(d);
        const MatrixXd system = MatrixXd::Identity(dd, dd) - h * (lam * c.D + c.b1.transpose());
        th = system.partialPivLu().solve(th + h * (lam * c.c0));
      } else {
        const MatrixXd k1 = two_scale_lambda_rhs(c, lam);
        const VectorXd j1 = two_scale_theta_rhs(c, lam, th);
        const MatrixXd l2 = lam - 0.5 * h * k1;
        const VectorXd t2 = th - 0.5 * h * j1;
        const MatrixXd k2 = two_scale_lambda_rhs(c, l2);
        const VectorXd j2 = two_scale_theta_rhs(c, l2, t2);
        const MatrixXd l3 = lam - 0.5 * h * k2;
        const VectorXd t3 = th - 0.5 * h * j2;
        const MatrixXd k3 = two_scale_lambda_rhs(c, l3);
        const VectorXd j3 = two_scale_theta_rhs(c, l3, t3);
        const MatrixXd l4 = lam - h * k3;
        const VectorXd t4 = th - h * j3;
        const MatrixXd k4 = two_scale_lambda_rhs(c, l4);
        const VectorXd j4 = two_scale_theta_rhs(c, l4, t4);
        lam -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        th -= (h / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4);
      }
      check_blowup(lam, th, options.blowup_threshold, t);
    }
    path.lambda[n] = lam;
    path.theta[n] = th;
  }
  return path;
}

Eigen::VectorXd optimal_control_lq(const LQModel& model, double t, const Eigen::VectorXd& y) {
  const MatrixXd& r = model.r.at(t);
  Eigen::LLT<MatrixXd> llt(r);
  if (llt.info() != Eigen::Success) throw ConfigError("optimal_control_lq: r(t) is singular");
  return -llt.solve(model.b2.at(t).transpose() * y);
}

namespace {

void require_path(const RiccatiPath& path, RiccatiKind kind, const TimeGrid& grid, const char* op) {
  if (path.kind != kind) throw ConfigError(std::string(op) + ": Riccati path has the wrong kind");
  if (!(path.grid == grid)) throw ConfigError(std::string(op) + ": Riccati path is on a different grid");
}

}  // namespace

PathEnsemble simulate_lq_controlled(const LQModel& model, const ControlLaw& control, const TimeGrid& grid,
                                    const NoiseBundle& noise, const ParticleCloud& xi, const SolverOptions& opts) {
  model.validate(grid);
  return simulate_limit(lq_slow_coefficients(model), control, grid, noise, xi, opts);
}

PathEnsemble simulate_lq_optimal(const LQModel& model, const RiccatiPath& riccati, const TimeGrid& grid,
                                 const NoiseBundle& noise, const ParticleCloud& xi, const SolverOptions& opts) {
  require_path(riccati, RiccatiKind::smp, grid, "simulate_lq_optimal");
  auto rinv = std::make_shared<const std::vector<MatrixXd>>(inverse_r_table(model, grid));
  auto path = std::make_shared<const RiccatiPath>(riccati);
  auto shared = std::make_shared<const LQModel>(model);
  ControlLaw control = [rinv, path, shared](const ControlQuery& q, VecRef out) {
    const VectorXd y = path->lambda[q.node] * q.x + path->theta[q.node];
    out.noalias() = -(pick(*rinv, q.node) * (shared->b2.at(q.t).transpose() * y));
  };
  PathEnsemble paths = simulate_lq_controlled(model, control, grid, noise, xi, opts);

  const TimeGrid& rec = paths.grid;
  const std::size_t stride = grid.steps() / rec.steps();
  paths.aux.emplace(rec, paths.slow.particles(), model.dims.d);
  for (std::size_t i = 0; i < paths.slow.particles(); ++i) {
    for (std::size_t n = 0; n < rec.nodes(); ++n) {
      const std::size_t node = n * stride;
      paths.aux->at(i, n) = riccati.lambda[node] * paths.slow.at(i, n) + riccati.theta[node];
    }
  }
  return paths;
}

PathEnsemble simulate_lq_twoscale(const LQModel& model, const RiccatiPath& riccati_ts, double eps, double beta,
                                  const Eigen::MatrixXd& G, const TimeGrid& grid, const NoiseBundle& noise,
                                  const ParticleCloud& xi, const ParticleCloud& eta, const SolverOptions& opts,
                                  double beta_power) {
  require_path(riccati_ts, RiccatiKind::two_scale, grid, "simulate_lq_twoscale");
  if (std::abs(riccati_ts.eps - eps) > 1e-14 * eps) {
    throw ConfigError("simulate_lq_twoscale: Riccati path was solved for a different eps");
  }
  const CoefficientSet coeffs = lq_fast_coefficients(model, riccati_ts, eps, beta, G);
  const double beta_eps = beta * std::pow(eps, beta_power);
  PathEnsemble paths = simulate_two_scale(coeffs, eps, beta_eps, grid, noise, xi, eta, opts);

  const auto dd = idx(model.dims.d), kk = idx(model.dims.k);
  const TimeGrid& rec = paths.grid;
  const std::size_t stride = grid.steps() / rec.steps();
  paths.aux.emplace(rec, paths.slow.particles(), model.dims.d);
  for (std::size_t i = 0; i < paths.slow.particles(); ++i) {
    for (std::size_t n = 0; n < rec.nodes(); ++n) {
      const std::size_t node = n * stride;
      const MatrixXd& lam = riccati_ts.lambda[node];
      VectorXd y = lam.leftCols(dd) * paths.slow.at(i, n);
      y.noalias() += lam.rightCols(kk) * paths.fast->at(i, n);
      y += riccati_ts.theta[node];
      paths.aux->at(i, n) = y;
    }
  }
  return paths;
}

void write_riccati_csv(std::ostream& out, const RiccatiPath& path) {
  if (path.lambda.empty()) throw InvalidInput("write_riccati_csv: empty path");
  const auto rows = path.lambda.front().rows(), cols = path.lambda.front().cols();
  out << 't';
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) out << ",lambda_" << r << c;
  for (Index r = 0; r < path.theta.front().size(); ++r) out << ",theta_" << r;
  out << '\n';
  for (std::size_t n = 0; n < path.lambda.size(); ++n) {
    out << io::format_double(path.grid.time(n));
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) out << ',' << io::format_double(path.lambda[n](r, c));
    for (Index r = 0; r < path.theta[n].size(); ++r) out << ',' << io::format_double(path.theta[n](r));
    out << '\n';
  }
}

}  // namespace tikmv
