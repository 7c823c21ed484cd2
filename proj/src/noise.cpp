#include "tikmv/noise.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "tikmv/errors.hpp"

namespace tikmv {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi >> 5) << 26) | (lo >> 6);
  return static_cast<double>(bits) * 0x1.0p-53;
}

// Bridge tags are offset from the owning stream so refinement and solver
// sub-cycling never reuse each other's draws.
constexpr std::uint32_t kRefineTag = 0x10000;
constexpr std::uint32_t kSplitTag = 0x20000;

std::uint32_t lo32(std::size_t v) { return static_cast<std::uint32_t>(v); }

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter c, PhiloxKey k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

std::array<double, 2> philox_uniform_pair(const PhiloxCounter& counter, const PhiloxKey& key) {
  const auto r = philox4x32_10(counter, key);
  return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
}

std::array<double, 2> philox_normal_pair(const PhiloxCounter& counter, const PhiloxKey& key) {
  const auto u = philox_uniform_pair(counter, key);
  const double radius = std::sqrt(-2.0 * std::log(1.0 - u[0]));
  const double angle = 2.0 * std::numbers::pi * u[1];
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

PhiloxKey philox_key(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

NoiseBundle::NoiseBundle(TimeGrid grid, std::size_t particles, std::size_t dim, std::uint64_t seed,
                         std::uint32_t stream)
    : grid_(grid), base_grid_(grid), particles_(particles), dim_(dim), seed_(seed), stream_(stream),
      key_(philox_key(seed)) {
  if (particles == 0 || dim == 0) throw InvalidInput("NoiseBundle: particle count and dimension must be positive");
  if (particles > 0xFFFFFFFFull || grid.steps() > 0xFFFFFFFFull) throw InvalidInput("NoiseBundle: size exceeds counter range");
}

void NoiseBundle::base_increment(std::size_t particle, std::size_t step, Eigen::Ref<Eigen::VectorXd> out) const {
  const double scale = std::sqrt(base_grid_.dt());
  for (std::size_t block = 0; 2 * block < dim_; ++block) {
    const auto z = philox_normal_pair({lo32(particle), lo32(step), lo32(block), stream_}, key_);
    out(static_cast<Eigen::Index>(2 * block)) = scale * z[0];
    if (2 * block + 1 < dim_) out(static_cast<Eigen::Index>(2 * block + 1)) = scale * z[1];
  }
}

void NoiseBundle::bridge(std::uint32_t tag, std::size_t particle, std::size_t step, double duration,
                         const Eigen::Ref<const Eigen::VectorXd>& parent, std::size_t pieces,
                         Eigen::Ref<Eigen::MatrixXd> out) const {
  // Piece j, coordinate c is normal number j * dim + c; both halves of each
  // Box-Muller pair are used.
  const double scale = std::sqrt(duration / static_cast<double>(pieces));
  const std::size_t total = pieces * dim_;
  for (std::size_t pair = 0; 2 * pair < total; ++pair) {
    const auto z = philox_normal_pair({lo32(particle), lo32(step), lo32(pair), stream_ + tag}, key_);
    for (std::size_t h = 0; h < 2 && 2 * pair + h < total; ++h) {
      const std::size_t f = 2 * pair + h;
      out(static_cast<Eigen::Index>(f % dim_), static_cast<Eigen::Index>(f / dim_)) = z[h];
    }
  }
  // Conditioning i.i.d. equal-variance Gaussians on their sum: subtract the
  // sample mean and add an equal share of the parent.
  const double share = 1.0 / static_cast<double>(pieces);
  for (Eigen::Index c = 0; c < out.rows(); ++c) {
    const double mean = out.row(c).sum() * share;
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(c, j) = scale * (out(c, j) - mean) + parent(c) * share;
  }
}

void NoiseBundle::increment(std::size_t particle, std::size_t step, Eigen::Ref<Eigen::VectorXd> out) const {
  if (particle >= particles_ || step >= grid_.steps()) throw InvalidInput("NoiseBundle: index out of range");
  if (refinement_ == 1) {
    base_increment(particle, step, out);
    return;
  }
  // Same numbers as bridge(kRefineTag, ...) but only the requested piece is kept.
  const std::size_t coarse = step / refinement_, target = step % refinement_;
  base_increment(particle, coarse, out);
  thread_local std::vector<double> sums, picked;
  sums.assign(dim_, 0.0);
  picked.assign(dim_, 0.0);
  const std::size_t total = refinement_ * dim_;
  for (std::size_t pair = 0; 2 * pair < total; ++pair) {
    const auto z = philox_normal_pair({lo32(particle), lo32(coarse), lo32(pair), stream_ + kRefineTag}, key_);
    for (std::size_t h = 0; h < 2 && 2 * pair + h < total; ++h) {
      const std::size_t f = 2 * pair + h;
      sums[f % dim_] += z[h];
      if (f / dim_ == target) picked[f % dim_] = z[h];
    }
  }
  const double share = 1.0 / static_cast<double>(refinement_);
  const double scale = std::sqrt(base_grid_.dt() * share);
  for (std::size_t c = 0; c < dim_; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    out(ci) = scale * (picked[c] - sums[c] * share) + out(ci) * share;
  }
}

Eigen::VectorXd NoiseBundle::increment(std::size_t particle, std::size_t step) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(dim_));
  increment(particle, step, out);
  return out;
}

void NoiseBundle::split(std::size_t particle, std::size_t step, const Eigen::Ref<const Eigen::VectorXd>& parent,
                        std::size_t pieces, Eigen::Ref<Eigen::MatrixXd> out) const {
  if (pieces == 1) {
    out.col(0) = parent;
    return;
  }
  // Tag includes the refinement level so splits of a refined bundle never
  // collide with splits of its base.
  bridge(kSplitTag + static_cast<std::uint32_t>(refinement_ << 8), particle, step, grid_.dt(), parent, pieces, out);
}

NoiseBundle NoiseBundle::independent_stream() const {
  NoiseBundle copy = *this;
  copy.stream_ = stream_ + streams::independent_fast;
  return copy;
}

NoiseBundle NoiseBundle::refined(std::size_t factor) const {
  if (factor == 0) throw InvalidInput("NoiseBundle: refinement factor must be positive");
  if (refinement_ != 1) throw Unsupported("NoiseBundle: refining an already refined bundle");
  NoiseBundle copy = *this;
  copy.refinement_ = factor;
  copy.grid_ = base_grid_.refined(factor);
  return copy;
}

NoiseBundle NoiseBundle::with_particles(std::size_t particles) const {
  if (particles == 0) throw InvalidInput("NoiseBundle: particle count must be positive");
  NoiseBundle copy = *this;
  copy.particles_ = particles;
  return copy;
}

std::vector<double> NoiseBundle::materialize() const {
  std::vector<double> all;
  all.reserve(particles_ * grid_.steps() * dim_);
  Eigen::VectorXd dw(static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < particles_; ++i) {
    for (std::size_t n = 0; n < grid_.steps(); ++n) {
      increment(i, n, dw);
      all.insert(all.end(), dw.data(), dw.data() + dw.size());
    }
  }
  return all;
}

NoiseBundle generate_noise(const TimeGrid& grid, std::size_t particles, std::size_t dim, std::uint64_t seed) {
  return NoiseBundle(grid, particles, dim, seed);
}

}  // namespace tikmv
