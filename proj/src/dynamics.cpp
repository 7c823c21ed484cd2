#include "tikmv/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "tikmv/errors.hpp"
#include "tikmv/noise.hpp"

namespace tikmv {

LawStats law_stats(const Eigen::Ref<const Eigen::MatrixXd>& states) {
  LawStats s;
  const auto count = static_cast<double>(states.cols());
  s.mean = states.rowwise().sum() / count;
  s.second_moment_norm = std::sqrt(states.squaredNorm() / count);
  return s;
}

LawStats law_stats(const ParticleCloud& cloud) {
  LawStats s;
  s.mean = empirical_mean(cloud);
  s.second_moment_norm = law_l2_norm(cloud);
  s.cloud = &cloud;
  return s;
}

TimeMatrix::TimeMatrix(Eigen::MatrixXd constant) : values_{std::move(constant)} {}

TimeMatrix::TimeMatrix(TimeGrid grid, std::vector<Eigen::MatrixXd> table) : values_(std::move(table)), grid_(grid) {
  if (values_.size() != grid.nodes()) throw ConfigError("TimeMatrix: table needs one entry per grid node");
  for (const auto& v : values_) {
    if (v.rows() != values_.front().rows() || v.cols() != values_.front().cols()) {
      throw ConfigError("TimeMatrix: table entries differ in shape");
    }
  }
}

const Eigen::MatrixXd& TimeMatrix::at(double t) const {
  if (!grid_) return values_.front();
  return values_[grid_->node_at(t)];
}

InitialLaw InitialLaw::constant(Eigen::VectorXd value) {
  return {Kind::constant, std::move(value), Eigen::VectorXd()};
}

InitialLaw InitialLaw::two_point(Eigen::VectorXd a, Eigen::VectorXd b) {
  if (a.size() != b.size()) throw ConfigError("InitialLaw: two-point atoms differ in dimension");
  return {Kind::two_point, std::move(a), std::move(b)};
}

InitialLaw InitialLaw::normal(Eigen::VectorXd mean, Eigen::VectorXd stddev) {
  if (mean.size() != stddev.size()) throw ConfigError("InitialLaw: mean and std differ in dimension");
  if ((stddev.array() < 0).any()) throw ConfigError("InitialLaw: negative standard deviation");
  return {Kind::normal, std::move(mean), std::move(stddev)};
}

ParticleCloud sample_cloud(const InitialLaw& law, std::size_t particles, std::uint64_t seed, std::uint32_t stream) {
  const auto dim = static_cast<Eigen::Index>(law.dim());
  RowMatrix pts(static_cast<Eigen::Index>(particles), dim);
  const auto key = philox_key(seed);
  for (std::size_t i = 0; i < particles; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto c0 = static_cast<std::uint32_t>(i);
    switch (law.kind) {
      case InitialLaw::Kind::constant:
        pts.row(row) = law.first.transpose();
        break;
      case InitialLaw::Kind::two_point: {
        const auto u = philox_uniform_pair({c0, 0, 0, stream}, key);
        pts.row(row) = (u[0] < 0.5 ? law.first : law.second).transpose();
        break;
      }
      case InitialLaw::Kind::normal:
        for (Eigen::Index j = 0; j < dim; j += 2) {
          const auto z = philox_normal_pair({c0, static_cast<std::uint32_t>(j / 2), 1, stream}, key);
          pts(row, j) = law.first(j) + law.second(j) * z[0];
          if (j + 1 < dim) pts(row, j + 1) = law.first(j + 1) + law.second(j + 1) * z[1];
        }
        break;
    }
  }
  return ParticleCloud(std::move(pts));
}

LQModel LQModel::scalar(double b1, double b2, double q, double r, double sigma, double q_term) {
  LQModel model;
  model.dims = {1, 1, 1};
  model.b0 = Eigen::VectorXd::Zero(1);
  model.b1 = TimeMatrix(Eigen::MatrixXd::Constant(1, 1, b1));
  model.b2 = TimeMatrix(Eigen::MatrixXd::Constant(1, 1, b2));
  model.q_run = TimeMatrix(Eigen::MatrixXd::Constant(1, 1, q));
  model.r = TimeMatrix(Eigen::MatrixXd::Constant(1, 1, r));
  model.sigma = Eigen::MatrixXd::Constant(1, 1, sigma);
  model.q_term = Eigen::MatrixXd::Constant(1, 1, q_term);
  model.xi = InitialLaw::constant(Eigen::VectorXd::Ones(1));
  model.eta = InitialLaw::constant(Eigen::VectorXd::Zero(1));
  return model;
}

namespace {

void check_shape(const Eigen::MatrixXd& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != static_cast<Eigen::Index>(rows) || m.cols() != static_cast<Eigen::Index>(cols)) {
    throw ConfigError(std::string("LQModel: ") + name + " must be " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
}

void check_time_matrix(const TimeMatrix& m, std::size_t rows, std::size_t cols, const TimeGrid& grid,
                       const char* name) {
  check_shape(m.values().front(), rows, cols, name);
  if (m.grid() && !(*m.grid() == grid)) {
    throw ConfigError(std::string("LQModel: table for ") + name + " is on a different grid");
  }
}

bool symmetric(const Eigen::MatrixXd& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12; }

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double min_r_eigenvalue(const LQModel& model) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& rv : model.r.values()) lo = std::min(lo, min_eigenvalue(rv));
  return lo;
}

}  // namespace

void LQModel::validate(const TimeGrid& grid) const {
  const auto [d, k, m] = dims;
  if (d == 0 || k == 0 || m == 0) throw ConfigError("LQModel: dimensions must be positive");
  if (b0.size() != static_cast<Eigen::Index>(d)) throw ConfigError("LQModel: b0 must have length d");
  check_time_matrix(b1, d, d, grid, "b1");
  check_time_matrix(b2, d, k, grid, "b2");
  check_time_matrix(q_run, d, d, grid, "q");
  check_time_matrix(r, k, k, grid, "r");
  check_shape(sigma, d, m, "sigma");
  check_shape(q_term, d, d, "q_terminal");
  if (xi.dim() != d) throw ConfigError("LQModel: xi must have dimension d");
  if (eta.dim() != k) throw ConfigError("LQModel: eta must have dimension k");
  for (const auto& qv : q_run.values()) {
    if (!symmetric(qv)) throw ConfigError("LQModel: q(t) is not symmetric");
  }
  if (!symmetric(q_term)) throw ConfigError("LQModel: q_terminal is not symmetric");
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const auto& rv = r.at(grid.time(n));
    if (!symmetric(rv)) throw ConfigError("LQModel: r(t) is not symmetric");
    if (!(min_eigenvalue(rv) > 0.0)) {
      throw ConfigError("LQModel: r(t) is not positive definite at t=" + std::to_string(grid.time(n)));
    }
    if (r.is_constant()) break;
  }
}

double lq_hamiltonian(const LQModel& model, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& a) {
  const Eigen::VectorXd drift = model.b0 + model.b1.at(t) * x + model.b2.at(t) * a;
  return drift.dot(y) + 0.5 * (x.dot(model.q_run.at(t) * x) + a.dot(model.r.at(t) * a));
}

double lq_full_hamiltonian(const LQModel& model, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& z, const Eigen::VectorXd& a) {
  if (z.rows() != model.sigma.rows() || z.cols() != model.sigma.cols()) {
    throw InvalidInput("lq_full_hamiltonian: z must have the shape of sigma");
  }
  return lq_hamiltonian(model, t, x, y, a) + model.sigma.cwiseProduct(z).sum();
}

Eigen::VectorXd grad_a_lq_hamiltonian(const LQModel& model, double t, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& a) {
  return model.b2.at(t).transpose() * y + model.r.at(t) * a;
}

CoefficientSet lq_slow_coefficients(const LQModel& model) {
  auto shared = std::make_shared<const LQModel>(model);
  CoefficientSet c;
  c.name = "lq";
  c.dims = model.dims;
  c.slow_drift = [shared](double t, ConstVecRef x, const LawStats&, ConstVecRef a, const LawStats&, VecRef out) {
    out.noalias() = shared->b1.at(t) * x;
    out.noalias() += shared->b2.at(t) * a;
    out += shared->b0;
  };
  c.slow_diffusion = [shared](double, ConstVecRef, const LawStats&, ConstVecRef, const LawStats&, MatRef out) {
    out = shared->sigma;
  };
  c.declared_monotonicity_lambda = min_r_eigenvalue(model);
  return c;
}

CoefficientSet lq_fast_coefficients(const LQModel& model, const RiccatiPath& riccati, double eps, double beta,
                                    const Eigen::MatrixXd& G) {
  if (!(eps > 0.0)) throw InvalidInput("lq_fast_coefficients: eps must be positive");
  if (riccati.kind != RiccatiKind::two_scale) throw ConfigError("lq_fast_coefficients: need a two-scale Riccati path");
  const auto [d, k, m] = model.dims;
  if (G.rows() != static_cast<Eigen::Index>(k) || G.cols() != static_cast<Eigen::Index>(m)) {
    throw ConfigError("lq_fast_coefficients: G must be k x m");
  }
  if (riccati.lambda.empty() || riccati.lambda.front().rows() != static_cast<Eigen::Index>(d) ||
      riccati.lambda.front().cols() != static_cast<Eigen::Index>(d + k)) {
    throw ConfigError("lq_fast_coefficients: Riccati path has the wrong shape");
  }
  auto shared = std::make_shared<const LQModel>(model);
  auto path = std::make_shared<const RiccatiPath>(riccati);
  CoefficientSet c = lq_slow_coefficients(model);
  c.name = "lq_two_scale";
  c.horizon = riccati.grid.horizon();
  const auto dd = static_cast<Eigen::Index>(d), kk = static_cast<Eigen::Index>(k);
  c.fast_drift = [shared, path, dd, kk](double t, ConstVecRef x, const LawStats&, ConstVecRef a, const LawStats&,
                                        VecRef out) {
    const std::size_t n = path->grid.node_at(t);
    const Eigen::MatrixXd& lam = path->lambda[n];
    // Y = lambda_X x + lambda_A a + theta, evaluated in this order so that the
    // frozen-track replay reproduces it bit for bit.
    Eigen::VectorXd y = lam.leftCols(dd) * x;
    y.noalias() += lam.rightCols(kk) * a;
    y += path->theta[n];
    out.noalias() = -(shared->b2.at(t).transpose() * y);
    out.noalias() -= shared->r.at(t) * a;
  };
  c.fast_drift_jacobian = [shared, path, dd, kk](double t, ConstVecRef, const LawStats&, ConstVecRef,
                                                 const LawStats&, MatRef out) {
    const Eigen::MatrixXd& lam = path->lambda_at(t);
    out.noalias() = -(shared->b2.at(t).transpose() * lam.rightCols(kk));
    out -= shared->r.at(t);
  };
  c.fast_diffusion = [G](double, ConstVecRef, const LawStats&, ConstVecRef, const LawStats&, MatRef out) {
    out = G;
  };
  c.fast_noise_amplitude = beta * eps * eps;
  return c;
}

std::optional<SyntheticKind> parse_synthetic_kind(const std::string& name) {
  if (name == "decay") return SyntheticKind::decay;
  if (name == "tracking") return SyntheticKind::tracking;
  if (name == "meanfield_tracking") return SyntheticKind::meanfield_tracking;
  if (name == "expanding") return SyntheticKind::expanding;
  return std::nullopt;
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::decay: return "decay";
    case SyntheticKind::tracking: return "tracking";
    case SyntheticKind::meanfield_tracking: return "meanfield_tracking";
    case SyntheticKind::expanding: return "expanding";
  }
  return "unknown";
}

SyntheticModel synthetic_monotone_model(SyntheticKind kind, double lambda, const SyntheticOptions& options) {
  if (!(lambda > 0.0)) throw InvalidInput("synthetic_monotone_model: lambda must be positive");
  SyntheticModel model{kind, {}, {}};
  CoefficientSet& c = model.coefficients;
  c.name = to_string(kind);
  c.dims = {1, 1, 1};
  c.declared_monotonicity_lambda = lambda;
  const double sigma = options.sigma, fast_sigma = options.fast_sigma;
  c.slow_diffusion = [sigma](double, ConstVecRef, const LawStats&, ConstVecRef, const LawStats&, MatRef out) {
    out.setConstant(sigma);
  };
  c.fast_diffusion = [fast_sigma](double, ConstVecRef, const LawStats&, ConstVecRef, const LawStats&, MatRef out) {
    out.setConstant(fast_sigma);
  };
  const double slope = kind == SyntheticKind::expanding ? lambda : -lambda;
  c.fast_drift_jacobian = [slope](double, ConstVecRef, const LawStats&, ConstVecRef, const LawStats&, MatRef out) {
    out.setConstant(slope);
  };

  switch (kind) {
    case SyntheticKind::decay:
    case SyntheticKind::expanding:
      c.slow_drift = [](double, ConstVecRef, const LawStats&, ConstVecRef, const LawStats&, VecRef out) {
        out.setZero();
      };
      c.fast_drift = [slope](double, ConstVecRef, const LawStats&, ConstVecRef a, const LawStats&, VecRef out) {
        out = slope * a;
      };
      model.limit_control = [](const ControlQuery&, VecRef out) { out.setZero(); };
      break;
    case SyntheticKind::tracking:
      c.slow_drift = [](double, ConstVecRef, const LawStats&, ConstVecRef a, const LawStats&, VecRef out) {
        out = a;
      };
      c.fast_drift = [lambda](double, ConstVecRef x, const LawStats&, ConstVecRef a, const LawStats&, VecRef out) {
        out = -lambda * (a - x);
      };
      model.limit_control = [](const ControlQuery& q, VecRef out) { out = q.x; };
      break;
    case SyntheticKind::meanfield_tracking:
      c.slow_drift = [](double, ConstVecRef, const LawStats&, ConstVecRef a, const LawStats&, VecRef out) {
        out = a;
      };
      c.fast_drift = [lambda](double, ConstVecRef x, const LawStats& mu, ConstVecRef a, const LawStats&,
                              VecRef out) { out = -lambda * (a - 0.5 * (x + mu.mean)); };
      model.limit_control = [](const ControlQuery& q, VecRef out) { out = 0.5 * (q.x + q.mean_x); };
      break;
  }
  return model;
}

double monotonicity_probe(const CoefficientSet& coeffs, std::size_t trials, double amplitude, std::uint64_t seed,
                          std::size_t cloud_size) {
  if (trials == 0) throw InvalidInput("monotonicity_probe: trials must be positive");
  if (!(amplitude > 0.0)) throw InvalidInput("monotonicity_probe: amplitude must be positive");
  if (!coeffs.fast_drift) throw InvalidInput("monotonicity_probe: coefficient set has no fast drift");
  const auto d = static_cast<Eigen::Index>(coeffs.dims.d), k = static_cast<Eigen::Index>(coeffs.dims.k);
  const auto count = static_cast<Eigen::Index>(std::max<std::size_t>(cloud_size, 1));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-amplitude, amplitude);
  std::uniform_real_distribution<double> time(0.0, coeffs.horizon);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = coord(rng);
  };

  Eigen::MatrixXd xs(d, count), as(k, count), bs(k, count);
  Eigen::VectorXd b1(k), b2(k);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const double t = time(rng);
    fill(xs);
    fill(as);
    do {
      fill(bs);
    } while ((as - bs).squaredNorm() == 0.0);
    const LawStats mu = law_stats(xs), nu = law_stats(as), nu_prime = law_stats(bs);
    double inner = 0.0;
    for (Eigen::Index i = 0; i < count; ++i) {
      coeffs.fast_drift(t, xs.col(i), mu, as.col(i), nu, b1);
      coeffs.fast_drift(t, xs.col(i), mu, bs.col(i), nu_prime, b2);
      inner += (b1 - b2).dot(as.col(i) - bs.col(i));
    }
    worst = std::max(worst, inner / (as - bs).squaredNorm());
  }
  return worst;
}

}  // namespace tikmv
