#include "tikmv/measures.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "tikmv/errors.hpp"
#include "tikmv/io.hpp"

namespace tikmv {

ParticleCloud::ParticleCloud(RowMatrix points) : points_(std::move(points)) {
  if (points_.rows() > 0 && points_.cols() == 0) throw InvalidInput("ParticleCloud: dim must be positive");
  if (!points_.allFinite()) throw InvalidInput("ParticleCloud: non-finite coordinate");
}

ParticleCloud ParticleCloud::from_values(const std::vector<double>& values) {
  RowMatrix pts(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) pts(static_cast<Eigen::Index>(i), 0) = values[i];
  return ParticleCloud(std::move(pts));
}

ParticleCloud ParticleCloud::constant(std::size_t count, const Eigen::VectorXd& value) {
  RowMatrix pts(static_cast<Eigen::Index>(count), value.size());
  pts.rowwise() = value.transpose();
  return ParticleCloud(std::move(pts));
}

namespace {

void require_nonempty(const ParticleCloud& c, const char* op) {
  if (c.empty()) throw InvalidInput(std::string(op) + ": empty cloud");
}

void require_same_shape(const ParticleCloud& a, const ParticleCloud& b, const char* op) {
  if (a.size() != b.size() || a.dim() != b.dim()) throw InvalidInput(std::string(op) + ": shape mismatch");
}

}  // namespace

Eigen::VectorXd empirical_mean(const ParticleCloud& cloud) {
  require_nonempty(cloud, "empirical_mean");
  return cloud.points().colwise().mean().transpose();
}

double law_l2_norm(const ParticleCloud& cloud) {
  require_nonempty(cloud, "law_l2_norm");
  return std::sqrt(cloud.points().squaredNorm() / static_cast<double>(cloud.size()));
}

double wasserstein2_exact_1d(const ParticleCloud& a, const ParticleCloud& b) {
  if (a.dim() != 1 || b.dim() != 1) throw Unsupported("wasserstein2_exact_1d: clouds must be one-dimensional");
  if (a.size() != b.size()) throw Unsupported("wasserstein2_exact_1d: particle counts differ");
  require_nonempty(a, "wasserstein2_exact_1d");
  std::vector<double> xs(a.points().data(), a.points().data() + a.size());
  std::vector<double> ys(b.points().data(), b.points().data() + b.size());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) acc += (xs[i] - ys[i]) * (xs[i] - ys[i]);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

double coupled_l2_distance(const ParticleCloud& a, const ParticleCloud& b) {
  require_same_shape(a, b, "coupled_l2_distance");
  require_nonempty(a, "coupled_l2_distance");
  return std::sqrt((a.points() - b.points()).squaredNorm() / static_cast<double>(a.size()));
}

void write_cloud_csv(std::ostream& out, const ParticleCloud& cloud) {
  for (std::size_t j = 0; j < cloud.dim(); ++j) out << (j ? "," : "") << 'p' << j;
  out << '\n';
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t j = 0; j < cloud.dim(); ++j) {
      out << (j ? "," : "")
          << io::format_double(cloud.points()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

ParticleCloud read_cloud_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("read_cloud_csv: missing header");
  const auto header = io::split_csv_line(line);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] != "p" + std::to_string(j)) throw InvalidInput("read_cloud_csv: bad header column " + header[j]);
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != header.size()) throw InvalidInput("read_cloud_csv: ragged row");
    for (const auto& f : fields) values.push_back(io::parse_double(f));
    ++rows;
  }
  RowMatrix pts(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(header.size()));
  std::copy(values.begin(), values.end(), pts.data());
  return ParticleCloud(std::move(pts));
}

}  // namespace tikmv
