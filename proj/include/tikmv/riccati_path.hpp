#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "tikmv/time_grid.hpp"

namespace tikmv {

enum class RiccatiKind { smp, two_scale };

/// Node-indexed solution (lambda(t_n), theta(t_n)) of the decoupling ansatz
/// Y = lambda U + theta. For `smp`, U = X and lambda is d x d; for `two_scale`,
/// U = [X; A] and lambda is d x (d + k).
struct RiccatiPath {
  TimeGrid grid{1.0, 1};
  RiccatiKind kind = RiccatiKind::smp;
  double eps = 0.0;  // two_scale only
  std::vector<Eigen::MatrixXd> lambda;
  std::vector<Eigen::VectorXd> theta;

  const Eigen::MatrixXd& lambda_at(double t) const { return lambda[grid.node_at(t)]; }
  const Eigen::VectorXd& theta_at(double t) const { return theta[grid.node_at(t)]; }
};

// Header: t,lambda_00,lambda_01,...,theta_0,...
void write_riccati_csv(std::ostream& out, const RiccatiPath& path);

}  // namespace tikmv
