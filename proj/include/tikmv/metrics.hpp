#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "tikmv/dynamics.hpp"
#include "tikmv/solver.hpp"

namespace tikmv {

// sqrt(mean_i max_n |a - b|^2) over the nodes of the common grid.
double s2_distance(const Track& a, const Track& b);
// sqrt(mean_i sum_{n<N} |a - b|^2 dt), left Riemann.
double h2_distance(const Track& a, const Track& b);
// Same norms of a single track (distance to zero).
double s2_norm(const Track& a);
double h2_norm(const Track& a);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;  // Monte Carlo standard error of the mean
};

// Per-particle running + terminal cost
//   int_0^T (x'q x + a'r a)/2 dt + x_T' q_term x_T / 2
// with the control read from the fast track (left Riemann).
std::vector<double> lq_cost_samples(const LQModel& model, const PathEnsemble& paths);
Estimate lq_cost_estimate(const LQModel& model, const PathEnsemble& paths);
double lq_cost(const LQModel& model, const PathEnsemble& paths);

// H^2 norm of t -> b2'Y_t + r A_t (aux track = Y, fast track = A).
double stationarity_residual(const LQModel& model, const PathEnsemble& paths);

// Throws ConfigError unless both ensembles come from the same noise seed and
// share grid and particle count.
void require_common_noise(const PathEnsemble& reference, const PathEnsemble& candidate);

struct ErrorRow {
  double eps = 0.0;
  double s2_error_X = 0.0;
  double h2_error_A = 0.0;
  double stationarity_residual = 0.0;
  double cost_gap = 0.0;
  std::int64_t runtime_ms = 0;
};

/// Error table of an eps sweep, rows kept in descending eps.
class ErrorTable {
 public:
  void add(const ErrorRow& row);
  void set_meta(const std::string& key, const std::string& value);

  const std::vector<ErrorRow>& rows() const { return rows_; }
  const std::vector<std::pair<std::string, std::string>>& metadata() const { return meta_; }
  const ErrorRow& row_for(double eps) const;

  // `#key=value` lines, then the header and one line per row. runtime_ms is
  // written as 0 unless `with_runtime`, keeping outputs byte-reproducible.
  void write_csv(std::ostream& out, bool with_runtime = false) const;
  static ErrorTable read_csv(std::istream& in);

 private:
  std::vector<ErrorRow> rows_;
  std::vector<std::pair<std::string, std::string>> meta_;
};

// True when every row is <= slack * the previous (larger eps) row.
bool nonincreasing(const std::vector<double>& column, double slack);

}  // namespace tikmv
