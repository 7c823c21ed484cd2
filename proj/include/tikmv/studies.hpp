#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tikmv/dynamics.hpp"
#include "tikmv/lq.hpp"
#include "tikmv/metrics.hpp"
#include "tikmv/solver.hpp"

namespace tikmv {

/// Shared settings of an eps sweep. Every run in the sweep draws from one
/// NoiseBundle built from `seed`, so errors are path-wise on common noise.
struct StudyConfig {
  double horizon = 1.0;
  std::size_t steps = 1000;
  std::size_t particles = 10000;
  std::uint64_t seed = 0;
  std::vector<double> eps_list;
  double beta = 1.0;
  double beta_power = 2.0;  // fast noise amplitude beta * eps^beta_power
  Eigen::MatrixXd G;        // k x m; empty means all ones
  SolverOptions solver;
  RiccatiOptions riccati;
  std::size_t riccati_smp_substeps = 1;
  double slack = 1.05;
  std::string model_id;
  // Called after each row, e.g. for progress logging.
  std::function<void(const ErrorRow&)> on_row;
};

struct StudyResult {
  ErrorTable table;
  PathEnsemble reference;
  std::optional<PathEnsemble> finest;  // run at the smallest eps
  double finest_eps = 0.0;
};

// Checks eps > 0, beta_power > 1, beta >= 0; returns eps sorted descending.
std::vector<double> validated_eps_list(const StudyConfig& config);

/// LQ sweep: reference pair from the Riccati feedback, then the two-scale
/// system per eps on the same noise. Rows carry s2 error of X, h2 error of A,
/// the stationarity residual and the signed cost gap.
StudyResult lq_convergence_study(const LQModel& model, const StudyConfig& config);

struct FixtureSpec {
  SyntheticKind kind = SyntheticKind::tracking;
  double lambda = 1.0;
  SyntheticOptions options;
  InitialLaw xi = InitialLaw::constant(Eigen::VectorXd::Ones(1));
  InitialLaw eta = InitialLaw::constant(Eigen::VectorXd::Zero(1));
  // Reference refinement for the mean-field fixture (grid and particles).
  std::size_t reference_refinement = 4;
};

/// Sweep on a synthetic fixture against its closed-form limit control. The
/// mean-field fixture's reference runs on a refined grid with more particles
/// and is recorded back onto the study grid. The stationarity column holds
/// the fast-drift residual ||B(X, A)||_H2, the cost column 0.
StudyResult fixture_convergence_study(const FixtureSpec& fixture, const StudyConfig& config);

enum class FrozenSource { reference, zero, track };

struct FrozenSpec {
  FrozenSource source = FrozenSource::reference;
  std::optional<Track> ybar;  // for FrozenSource::track
};

/// Frozen backward pair: Ybar from the reference run (lambda X), from a
/// supplied track, or zero; Zbar = lambda sigma (zero otherwise). The limit is
/// Abar = -r^-1 b2' Ybar with Xbar driven by it.
StudyResult frozen_study(const LQModel& model, const FrozenSpec& spec, const StudyConfig& config);

}  // namespace tikmv
