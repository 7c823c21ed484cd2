#include "tikmv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "tikmv/errors.hpp"
#include "tikmv/io.hpp"

namespace tikmv {

namespace {

using Eigen::Index;

void require_same_shape(const Track& a, const Track& b, const char* op) {
  if (!a.same_shape(b)) throw InvalidInput(std::string(op) + ": tracks differ in grid, particle count or dimension");
  if (a.particles() == 0) throw InvalidInput(std::string(op) + ": empty tracks");
}

// Per-particle squared differences at each node, reduced by `fold`.
template <class Fold>
double reduce_paths(const Track& a, const Track* b, Fold&& fold) {
  const std::size_t nodes = a.grid().nodes();
  double total = 0.0;
  for (std::size_t i = 0; i < a.particles(); ++i) {
    double acc = 0.0;
    for (std::size_t n = 0; n < nodes; ++n) {
      const double sq = b ? (a.at(i, n) - b->at(i, n)).squaredNorm() : a.at(i, n).squaredNorm();
      acc = fold(acc, sq, n);
    }
    total += acc;
  }
  return std::sqrt(total / static_cast<double>(a.particles()));
}

double s2_impl(const Track& a, const Track* b) {
  return reduce_paths(a, b, [](double acc, double sq, std::size_t) { return std::max(acc, sq); });
}

double h2_impl(const Track& a, const Track* b) {
  const std::size_t N = a.grid().steps();
  const double dt = a.grid().dt();
  return reduce_paths(a, b, [N, dt](double acc, double sq, std::size_t n) { return n < N ? acc + sq * dt : acc; });
}

}  // namespace

double s2_distance(const Track& a, const Track& b) {
  require_same_shape(a, b, "s2_distance");
  return s2_impl(a, &b);
}

double h2_distance(const Track& a, const Track& b) {
  require_same_shape(a, b, "h2_distance");
  return h2_impl(a, &b);
}

double s2_norm(const Track& a) {
  if (a.particles() == 0) throw InvalidInput("s2_norm: empty track");
  return s2_impl(a, nullptr);
}

double h2_norm(const Track& a) {
  if (a.particles() == 0) throw InvalidInput("h2_norm: empty track");
  return h2_impl(a, nullptr);
}

std::vector<double> lq_cost_samples(const LQModel& model, const PathEnsemble& paths) {
  if (!paths.fast) throw InvalidInput("lq_cost: paths carry no control track");
  const Track& X = paths.slow;
  const Track& A = *paths.fast;
  const TimeGrid& grid = paths.grid;
  if (X.dim() != model.dims.d || A.dim() != model.dims.k) throw InvalidInput("lq_cost: track dimensions do not match the model");
  const std::size_t N = grid.steps();
  const double dt = grid.dt();
  std::vector<double> out(X.particles());
  for (std::size_t i = 0; i < X.particles(); ++i) {
    double running = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double t = grid.time(n);
      const auto x = X.at(i, n);
      const auto a = A.at(i, n);
      running += 0.5 * (x.dot(model.q_run.at(t) * x) + a.dot(model.r.at(t) * a)) * dt;
    }
    const auto xT = X.at(i, N);
    out[i] = running + 0.5 * xT.dot(model.q_term * xT);
  }
  return out;
}

Estimate lq_cost_estimate(const LQModel& model, const PathEnsemble& paths) {
  const std::vector<double> samples = lq_cost_samples(model, paths);
  const auto n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  Estimate e;
  e.mean = mean;
  e.std_error = samples.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
  return e;
}

double lq_cost(const LQModel& model, const PathEnsemble& paths) { return lq_cost_estimate(model, paths).mean; }

double stationarity_residual(const LQModel& model, const PathEnsemble& paths) {
  if (!paths.fast || !paths.aux) throw InvalidInput("stationarity_residual: paths need both Y and A tracks");
  const Track& Y = *paths.aux;
  const Track& A = *paths.fast;
  if (Y.dim() != model.dims.d || A.dim() != model.dims.k) {
    throw InvalidInput("stationarity_residual: track dimensions do not match the model");
  }
  Track grad(paths.grid, A.particles(), A.dim());
  for (std::size_t i = 0; i < A.particles(); ++i) {
    for (std::size_t n = 0; n < paths.grid.nodes(); ++n) {
      const double t = paths.grid.time(n);
      grad.at(i, n) = model.b2.at(t).transpose() * Y.at(i, n) + model.r.at(t) * A.at(i, n);
    }
  }
  return h2_norm(grad);
}

void require_common_noise(const PathEnsemble& reference, const PathEnsemble& candidate) {
  if (reference.noise_seed != candidate.noise_seed) {
    throw ConfigError("ensembles were generated from different noise seeds (" +
                      std::to_string(reference.noise_seed) + " vs " + std::to_string(candidate.noise_seed) +
                      "); coupled errors need common noise");
  }
  if (!(reference.grid == candidate.grid) || reference.slow.particles() != candidate.slow.particles()) {
    throw ConfigError("ensembles differ in grid or particle count");
  }
}

void ErrorTable::add(const ErrorRow& row) {
  if (!(row.eps > 0.0)) throw InvalidInput("ErrorTable: eps must be positive");
  for (double v : {row.s2_error_X, row.h2_error_A, row.stationarity_residual}) {
    if (!std::isfinite(v) || v < 0.0) throw NumericalError("ErrorTable: error fields must be finite and nonnegative");
  }
  if (!std::isfinite(row.cost_gap)) throw NumericalError("ErrorTable: cost gap is not finite");
  const auto pos = std::find_if(rows_.begin(), rows_.end(), [&](const ErrorRow& r) { return r.eps < row.eps; });
  rows_.insert(pos, row);
}

void ErrorTable::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta_.emplace_back(key, value);
}

const ErrorRow& ErrorTable::row_for(double eps) const {
  for (const auto& r : rows_)
    if (std::abs(r.eps - eps) <= 1e-12 * eps) return r;
  throw InvalidInput("ErrorTable: no row for eps=" + io::format_double(eps));
}

void ErrorTable::write_csv(std::ostream& out, bool with_runtime) const {
  for (const auto& [k, v] : meta_) out << '#' << k << '=' << v << '\n';
  out << "eps,s2_error_X,h2_error_A,stationarity_residual,cost_gap,runtime_ms\n";
  for (const auto& r : rows_) {
    out << io::format_double(r.eps) << ',' << io::format_double(r.s2_error_X) << ','
        << io::format_double(r.h2_error_A) << ',' << io::format_double(r.stationarity_residual) << ','
        << io::format_double(r.cost_gap) << ',' << (with_runtime ? r.runtime_ms : 0) << '\n';
  }
}

ErrorTable ErrorTable::read_csv(std::istream& in) {
  ErrorTable table;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw InvalidInput("ErrorTable: malformed metadata line");
      table.meta_.emplace_back(line.substr(1, eq - 1), line.substr(eq + 1));
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    const auto f = io::split_csv_line(line);
    if (f.size() != 6) throw InvalidInput("ErrorTable: expected 6 columns");
    ErrorRow r;
    r.eps = io::parse_double(f[0]);
    r.s2_error_X = io::parse_double(f[1]);
    r.h2_error_A = io::parse_double(f[2]);
    r.stationarity_residual = io::parse_double(f[3]);
    r.cost_gap = io::parse_double(f[4]);
    r.runtime_ms = static_cast<std::int64_t>(io::parse_double(f[5]));
    table.add(r);
  }
  return table;
}

bool nonincreasing(const std::vector<double>& column, double slack) {
  for (std::size_t i = 1; i < column.size(); ++i)
    if (column[i] > slack * column[i - 1]) return false;
  return true;
}

}  // namespace tikmv
