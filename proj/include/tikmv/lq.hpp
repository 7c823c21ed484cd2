#pragma once

#include <Eigen/Dense>

#include "tikmv/dynamics.hpp"
#include "tikmv/riccati_path.hpp"
#include "tikmv/solver.hpp"

namespace tikmv {

enum class RiccatiMethod { rk4, implicit_euler };

struct RiccatiOptions {
  RiccatiMethod method = RiccatiMethod::implicit_euler;
  // Internal steps per grid interval. For rk4 on the two-scale system the
  // step is further capped at eps / 10.
  std::size_t substeps = 10;
  double blowup_threshold = 1e12;
};

/// Backward RK4 for lambda' = -b1'lambda - lambda b1 + lambda b2 r^-1 b2' lambda - q,
/// lambda(T) = q_term, together with the linear theta equation (theta == 0
/// when b0 == 0). Coefficients are piecewise constant on grid intervals.
RiccatiPath solve_riccati_smp(const LQModel& model, const TimeGrid& grid, std::size_t substeps = 1);

/// Riccati system for Y = lambda [X; A] + theta in the two-scale LQ system.
/// The A-block carries the stiff -r/eps rate, so the default integrator is
/// backward-in-time implicit Euler with damped Newton.
RiccatiPath solve_riccati_twoscale(const LQModel& model, double eps, const TimeGrid& grid,
                                   const RiccatiOptions& options = {});

// -r(t)^-1 b2(t)' y.
Eigen::VectorXd optimal_control_lq(const LQModel& model, double t, const Eigen::VectorXd& y);

// Optimal pair via the decoupled forward SDE; aux track holds Y = lambda X + theta,
// fast track holds the optimal control.
PathEnsemble simulate_lq_optimal(const LQModel& model, const RiccatiPath& riccati, const TimeGrid& grid,
                                 const NoiseBundle& noise, const ParticleCloud& xi, const SolverOptions& opts = {});

// Two-scale LQ system closed through the two-scale Riccati path, with fast
// noise amplitude beta * eps^beta_power. aux track holds Y = lambda [X; A] + theta.
PathEnsemble simulate_lq_twoscale(const LQModel& model, const RiccatiPath& riccati_ts, double eps, double beta,
                                  const Eigen::MatrixXd& G, const TimeGrid& grid, const NoiseBundle& noise,
                                  const ParticleCloud& xi, const ParticleCloud& eta, const SolverOptions& opts = {},
                                  double beta_power = 2.0);

// State equation under an arbitrary control law; fast track holds the control.
PathEnsemble simulate_lq_controlled(const LQModel& model, const ControlLaw& control, const TimeGrid& grid,
                                    const NoiseBundle& noise, const ParticleCloud& xi, const SolverOptions& opts = {});

}  // namespace tikmv
