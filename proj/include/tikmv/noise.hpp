#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "tikmv/time_grid.hpp"

namespace tikmv {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// A pure function of (counter, key): no state, so any draw can be
/// regenerated from its coordinates alone.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key);

// Two standard normals (Box-Muller) keyed by a full counter.
std::array<double, 2> philox_normal_pair(const PhiloxCounter& counter, const PhiloxKey& key);

// Two uniforms in [0, 1) with 53-bit resolution.
std::array<double, 2> philox_uniform_pair(const PhiloxCounter& counter, const PhiloxKey& key);

PhiloxKey philox_key(std::uint64_t seed);

/// Stream tags for disjoint uses of one seed.
namespace streams {
inline constexpr std::uint32_t shared = 0;
inline constexpr std::uint32_t independent_fast = 1;
inline constexpr std::uint32_t initial_slow = 0x100;
inline constexpr std::uint32_t initial_fast = 0x101;
}  // namespace streams

/// Brownian increments dW[i][n] in R^m, N(0, dt) per coordinate, generated on
/// demand. Increment (i, n) is a deterministic function of (seed, stream, i, n)
/// only, so results do not depend on evaluation order or thread count, and a
/// bundle with more particles extends a smaller one with the same seed.
///
/// A refined bundle lives on a grid with `factor` times more steps; its
/// increments are Brownian-bridge splits of the base increments, so summing the
/// fine increments over one coarse step reproduces the coarse increment.
class NoiseBundle {
 public:
  NoiseBundle(TimeGrid grid, std::size_t particles, std::size_t dim, std::uint64_t seed,
              std::uint32_t stream = streams::shared);

  const TimeGrid& grid() const { return grid_; }
  const TimeGrid& base_grid() const { return base_grid_; }
  std::size_t particles() const { return particles_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  std::uint32_t stream() const { return stream_; }
  std::size_t refinement() const { return refinement_; }

  void increment(std::size_t particle, std::size_t step, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::VectorXd increment(std::size_t particle, std::size_t step) const;

  // Splits `parent` (the increment over step `step`) into `pieces` columns of
  // `out` (dim x pieces) by Brownian-bridge conditioning. Deterministic in
  // (seed, stream, particle, step, pieces).
  void split(std::size_t particle, std::size_t step, const Eigen::Ref<const Eigen::VectorXd>& parent,
             std::size_t pieces, Eigen::Ref<Eigen::MatrixXd> out) const;

  NoiseBundle independent_stream() const;
  NoiseBundle refined(std::size_t factor) const;
  NoiseBundle with_particles(std::size_t particles) const;

  // All increments, particle-major then step then coordinate.
  std::vector<double> materialize() const;

 private:
  void base_increment(std::size_t particle, std::size_t step, Eigen::Ref<Eigen::VectorXd> out) const;
  void bridge(std::uint32_t tag, std::size_t particle, std::size_t step, double duration,
              const Eigen::Ref<const Eigen::VectorXd>& parent, std::size_t pieces,
              Eigen::Ref<Eigen::MatrixXd> out) const;

  TimeGrid grid_;
  TimeGrid base_grid_;
  std::size_t particles_;
  std::size_t dim_;
  std::uint64_t seed_;
  std::uint32_t stream_;
  std::size_t refinement_ = 1;
  PhiloxKey key_;
};

NoiseBundle generate_noise(const TimeGrid& grid, std::size_t particles, std::size_t dim, std::uint64_t seed);

}  // namespace tikmv
