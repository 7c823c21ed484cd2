#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

namespace tikmv {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Equal-weight empirical measure. Row i is particle i; the row index encodes
/// the coupling on the common probability space and is never permuted.
class ParticleCloud {
 public:
  ParticleCloud() = default;
  explicit ParticleCloud(RowMatrix points);
  // Convenience for one-dimensional clouds.
  static ParticleCloud from_values(const std::vector<double>& values);
  static ParticleCloud constant(std::size_t count, const Eigen::VectorXd& value);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points_.cols()); }
  bool empty() const { return points_.rows() == 0; }

  Eigen::Ref<const Eigen::RowVectorXd> particle(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)); }
  const RowMatrix& points() const { return points_; }

 private:
  RowMatrix points_;
};

Eigen::VectorXd empirical_mean(const ParticleCloud& cloud);

// ||mu||_2 = (mean |x_i|^2)^(1/2).
double law_l2_norm(const ParticleCloud& cloud);

// Exact W2 between two equal-size one-dimensional clouds via the sorted coupling.
double wasserstein2_exact_1d(const ParticleCloud& a, const ParticleCloud& b);

// Index-matched RMS distance; an upper bound for W2 of the two laws.
double coupled_l2_distance(const ParticleCloud& a, const ParticleCloud& b);

// CSV with header p0,...,p{dim-1}; one row per particle.
void write_cloud_csv(std::ostream& out, const ParticleCloud& cloud);
ParticleCloud read_cloud_csv(std::istream& in);

}  // namespace tikmv
