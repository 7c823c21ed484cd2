#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tikmv/dynamics.hpp"
#include "tikmv/noise.hpp"
#include "tikmv/time_grid.hpp"

namespace tikmv {

/// Per-particle, per-node values of one process. Storage is particle-major so
/// a single path is contiguous.
class Track {
 public:
  Track(TimeGrid grid, std::size_t particles, std::size_t dim);

  const TimeGrid& grid() const { return grid_; }
  std::size_t particles() const { return particles_; }
  std::size_t dim() const { return dim_; }

  Eigen::Map<const Eigen::VectorXd> at(std::size_t particle, std::size_t node) const {
    return Eigen::Map<const Eigen::VectorXd>(data_.data() + offset(particle, node), static_cast<Eigen::Index>(dim_));
  }
  Eigen::Map<Eigen::VectorXd> at(std::size_t particle, std::size_t node) {
    return Eigen::Map<Eigen::VectorXd>(data_.data() + offset(particle, node), static_cast<Eigen::Index>(dim_));
  }
  const std::vector<double>& data() const { return data_; }

  // Column-major dim x particles matrix of the values at one node.
  Eigen::MatrixXd snapshot(std::size_t node) const;

  bool same_shape(const Track& other) const {
    return grid_ == other.grid_ && particles_ == other.particles_ && dim_ == other.dim_;
  }

 private:
  std::size_t offset(std::size_t particle, std::size_t node) const {
    return (particle * grid_.nodes() + node) * dim_;
  }

  TimeGrid grid_;
  std::size_t particles_;
  std::size_t dim_;
  std::vector<double> data_;
};

/// Simulated paths: slow X, optional fast A (or control), optional auxiliary Y.
/// `grid` is the recorded grid (the simulation grid coarsened by the record
/// stride) and `noise_seed` ties the ensemble to the noise that produced it.
struct PathEnsemble {
  TimeGrid grid;
  std::uint64_t noise_seed = 0;
  Track slow;
  std::optional<Track> fast;
  std::optional<Track> aux;
};

// Columns: t,particle,X0...,A0...,Y0... (node-major). `stride` thins nodes.
void write_paths_csv(std::ostream& out, const PathEnsemble& paths, std::size_t stride = 1);
// Reads what write_paths_csv writes (stride 1); the grid is inferred from t.
PathEnsemble read_paths_csv(std::istream& in);

enum class FastScheme { explicit_euler, semi_implicit };
enum class NoiseMode { shared, independent };

struct SolverOptions {
  FastScheme fast_scheme = FastScheme::semi_implicit;
  std::size_t fast_substeps = 1;
  double blowup_threshold = 1e8;
  // shared: the fast equation is driven by the same increments as the slow one.
  NoiseMode noise_mode = NoiseMode::shared;
  std::size_t record_stride = 1;
  // Record only the first `record_particles` paths (0 = all). Law statistics
  // always use the full ensemble.
  std::size_t record_particles = 0;
};

/// Particle approximation of the two-scale McKean-Vlasov system. Each step
/// advances the slow state by Euler-Maruyama with law statistics at t_n, then
/// advances the fast state over the same interval with the updated slow state
/// and its law frozen, using `fast_substeps` sub-steps of the chosen scheme.
PathEnsemble simulate_two_scale(const CoefficientSet& coeffs, double eps, double beta_eps, const TimeGrid& grid,
                                const NoiseBundle& noise, const ParticleCloud& xi, const ParticleCloud& eta,
                                const SolverOptions& opts = {});

/// Euler-Maruyama for dX = b(t, X, mu, alpha, nu) dt + sigma dW with alpha
/// evaluated closed-loop each step. The fast track stores the control values.
PathEnsemble simulate_limit(const CoefficientSet& coeffs, const ControlLaw& control, const TimeGrid& grid,
                            const NoiseBundle& noise, const ParticleCloud& xi, const SolverOptions& opts = {});

using HamiltonianGradient =
    std::function<void(double t, ConstVecRef x, const LawStats& mu, ConstVecRef y, const Eigen::Ref<const Eigen::MatrixXd>& z,
                       ConstVecRef a, const LawStats& nu, VecRef out)>;

/// Two-scale forward system whose fast drift is -d_a H(t, x, mu, Ybar, Zbar, a, nu)
/// with an exogenous backward pair. `base` supplies b, sigma and Sigma; its
/// fast_drift is ignored.
struct FrozenCoefficientSet {
  CoefficientSet base;
  HamiltonianGradient grad_a_hamiltonian;
  // d/da of grad_a_hamiltonian when it is affine in a.
  MatrixField grad_a_jacobian;
};

FrozenCoefficientSet lq_frozen_coefficients(const LQModel& model, const Eigen::MatrixXd& G);

// The exogenous tracks are read at the end node of each step, matching the
// drift-implicit fast update. Zbar has dim d*m (column-major flattening).
PathEnsemble simulate_frozen(const FrozenCoefficientSet& coeffs, const Track& ybar, const Track& zbar, double eps,
                             double beta_eps, const TimeGrid& grid, const NoiseBundle& noise, const ParticleCloud& xi,
                             const ParticleCloud& eta, const SolverOptions& opts = {});

// sqrt(E int_0^T |B(t, X, mu, A, nu)|^2 dt), left Riemann on the recorded grid.
double fast_drift_residual(const CoefficientSet& coeffs, const PathEnsemble& paths);

// Worker count from TIKMV_THREADS (0 or unset = runtime default).
void configure_threads_from_env();

}  // namespace tikmv
