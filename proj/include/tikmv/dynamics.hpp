#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tikmv/measures.hpp"
#include "tikmv/riccati_path.hpp"
#include "tikmv/time_grid.hpp"

namespace tikmv {

using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using VecRef = Eigen::Ref<Eigen::VectorXd>;
using MatRef = Eigen::Ref<Eigen::MatrixXd>;

/// Statistics of an empirical law that the coefficient evaluators consume.
/// The shipped models are affine in the measure, so the mean suffices.
struct LawStats {
  Eigen::VectorXd mean;
  double second_moment_norm = 0.0;
  const ParticleCloud* cloud = nullptr;  // optional; unused by shipped models
};

// Stats of the columns of `states` (dim x particles).
LawStats law_stats(const Eigen::Ref<const Eigen::MatrixXd>& states);
LawStats law_stats(const ParticleCloud& cloud);

struct Dims {
  std::size_t d = 1;  // slow state
  std::size_t k = 1;  // fast state / control
  std::size_t m = 1;  // Brownian motion
};

using VectorField =
    std::function<void(double t, ConstVecRef x, const LawStats& mu, ConstVecRef a, const LawStats& nu, VecRef out)>;
using MatrixField =
    std::function<void(double t, ConstVecRef x, const LawStats& mu, ConstVecRef a, const LawStats& nu, MatRef out)>;

/// Coefficients (b, sigma, B, Sigma) of the slow/fast system
///
///   dX = b dt + sigma dW,   eps dA = B dt + beta_eps Sigma dW.
///
/// Evaluators write into preallocated outputs and must be reentrant.
struct CoefficientSet {
  std::string name;
  Dims dims;
  double horizon = 1.0;
  VectorField slow_drift;      // -> R^d
  MatrixField slow_diffusion;  // -> R^{d x m}
  VectorField fast_drift;      // -> R^k
  MatrixField fast_diffusion;  // -> R^{k x m}
  // dB/da; set only when B is affine in a, which lets the semi-implicit
  // scheme use one linear solve instead of Newton.
  MatrixField fast_drift_jacobian;
  double declared_monotonicity_lambda = 0.0;
  // Amplitude beta_eps suggested by the builder (e.g. beta * eps^2 for LQ).
  std::optional<double> fast_noise_amplitude;

  bool affine_fast_drift() const { return static_cast<bool>(fast_drift_jacobian); }
};

/// Matrix-valued coefficient of time: a constant, or one value per node of a
/// grid with piecewise-constant (left) interpolation in between.
class TimeMatrix {
 public:
  TimeMatrix() = default;
  TimeMatrix(Eigen::MatrixXd constant);  // NOLINT: implicit by intent
  TimeMatrix(TimeGrid grid, std::vector<Eigen::MatrixXd> table);

  bool is_constant() const { return !grid_.has_value(); }
  Eigen::Index rows() const { return values_.front().rows(); }
  Eigen::Index cols() const { return values_.front().cols(); }
  const Eigen::MatrixXd& at(double t) const;
  const std::vector<Eigen::MatrixXd>& values() const { return values_; }
  const std::optional<TimeGrid>& grid() const { return grid_; }

 private:
  std::vector<Eigen::MatrixXd> values_{Eigen::MatrixXd::Zero(1, 1)};
  std::optional<TimeGrid> grid_;
};

/// Law of an initial condition, sampled deterministically from a seed.
struct InitialLaw {
  enum class Kind { constant, two_point, normal };
  Kind kind = Kind::constant;
  Eigen::VectorXd first;   // constant value | first atom | mean
  Eigen::VectorXd second;  // unused | second atom | per-coordinate std

  static InitialLaw constant(Eigen::VectorXd value);
  static InitialLaw two_point(Eigen::VectorXd a, Eigen::VectorXd b);
  static InitialLaw normal(Eigen::VectorXd mean, Eigen::VectorXd stddev);
  std::size_t dim() const { return static_cast<std::size_t>(first.size()); }
};

ParticleCloud sample_cloud(const InitialLaw& law, std::size_t particles, std::uint64_t seed, std::uint32_t stream);

/// Linear-quadratic control data:
///   b(t,x,a) = b0 + b1(t) x + b2(t) a,   f = (x'q(t)x + a'r(t)a)/2,
///   g(x) = x' q_term x / 2,  sigma constant (uncontrolled).
struct LQModel {
  Dims dims;
  Eigen::VectorXd b0;  // constant drift offset, zero by default
  TimeMatrix b1, b2, q_run, r;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd q_term;
  InitialLaw xi;
  InitialLaw eta;

  // Scalar model (d = k = m = 1) with xi = 1, eta = 0.
  static LQModel scalar(double b1, double b2, double q, double r, double sigma, double q_term);

  // Throws ConfigError on shape mismatch, asymmetric q, or r not positive
  // definite at the grid nodes.
  void validate(const TimeGrid& grid) const;
};

double lq_hamiltonian(const LQModel& model, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& a);

// Hamiltonian including the diffusion pairing <sigma, z> (Frobenius product).
double lq_full_hamiltonian(const LQModel& model, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::MatrixXd& z, const Eigen::VectorXd& a);

Eigen::VectorXd grad_a_lq_hamiltonian(const LQModel& model, double t, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& a);

// Slow part only: b = b0 + b1 x + b2 a, sigma; the fast fields are absent.
CoefficientSet lq_slow_coefficients(const LQModel& model);

// Closed two-scale LQ system with Y = lambda(t) [x; a] + theta(t) substituted
// into the fast drift: B = -(b2' Y + r a), Sigma = G, amplitude beta * eps^2.
CoefficientSet lq_fast_coefficients(const LQModel& model, const RiccatiPath& riccati, double eps, double beta,
                                    const Eigen::MatrixXd& G);

/// Synthetic monotone fixtures with a known limit control (d = k = m = 1).
enum class SyntheticKind {
  decay,               // b = 0, B = -lambda a;               limit a = 0
  tracking,            // b = a, B = -lambda (a - x);         limit a = x
  meanfield_tracking,  // b = a, B = -lambda (a - (x+E x)/2); limit a = (x + E x)/2
  expanding,           // b = 0, B = +lambda a; violates monotonicity (negative fixture)
};

std::optional<SyntheticKind> parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

// Closed-loop control law evaluated by the limit simulation.
struct ControlQuery {
  double t;
  std::size_t node;
  std::size_t particle;
  ConstVecRef x;
  const Eigen::VectorXd& mean_x;
};
using ControlLaw = std::function<void(const ControlQuery& query, VecRef out)>;

struct SyntheticModel {
  SyntheticKind kind;
  CoefficientSet coefficients;
  ControlLaw limit_control;
};

struct SyntheticOptions {
  double sigma = 0.0;       // slow diffusion
  double fast_sigma = 0.0;  // fast diffusion Sigma
};

SyntheticModel synthetic_monotone_model(SyntheticKind kind, double lambda, const SyntheticOptions& options = {});

// Max over trials of E<B(x,mu,a,nu) - B(x,mu,a',nu'), a - a'> / E|a - a'|^2,
// sampled on clouds with coordinates in [-amplitude, amplitude].
double monotonicity_probe(const CoefficientSet& coeffs, std::size_t trials, double amplitude, std::uint64_t seed,
                          std::size_t cloud_size = 16);

}  // namespace tikmv
