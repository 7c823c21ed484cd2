#include <cmath>
#include <numeric>

#include "doctest.h"
#include "tikmv/errors.hpp"
#include "tikmv/noise.hpp"

using namespace tikmv;

TEST_CASE("philox4x32-10 known-answer vectors") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("uniforms lie in [0,1)") {
  for (std::uint32_t c = 0; c < 1000; ++c) {
    const auto u = philox_uniform_pair({c, 1, 2, 3}, philox_key(99));
    CHECK(u[0] >= 0.0);
    CHECK(u[0] < 1.0);
    CHECK(u[1] >= 0.0);
    CHECK(u[1] < 1.0);
  }
}

TEST_CASE("same seed regenerates bitwise-identical increments") {
  const TimeGrid grid(1.0, 50);
  const auto a = generate_noise(grid, 40, 3, 12345).materialize();
  const auto b = generate_noise(grid, 40, 3, 12345).materialize();
  CHECK(a == b);
  const auto c = generate_noise(grid, 40, 3, 12346).materialize();
  CHECK(a != c);
}

TEST_CASE("increments do not depend on evaluation order or bundle size") {
  const TimeGrid grid(2.0, 30);
  const NoiseBundle small(grid, 5, 2, 77);
  const NoiseBundle large = small.with_particles(500);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t n = 30; n-- > 0;) CHECK(small.increment(i, n) == large.increment(i, n));
}

TEST_CASE("sample mean and variance of increments") {
  const TimeGrid grid(1.0, 100);
  const std::size_t M = 2000;
  const auto all = generate_noise(grid, M, 1, 2024).materialize();
  REQUIRE(all.size() == M * 100);
  const double n = static_cast<double>(all.size());
  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / n;
  double var = 0.0;
  for (double v : all) var += (v - mean) * (v - mean);
  var /= n - 1.0;
  CHECK(std::abs(mean) <= 4.0 * std::sqrt(grid.dt() / n));
  CHECK(std::abs(var - grid.dt()) <= 0.05 * grid.dt());
}

TEST_CASE("coordinates of a multi-dimensional increment are uncorrelated") {
  const TimeGrid grid(1.0, 200);
  const NoiseBundle noise(grid, 500, 3, 5);
  double c01 = 0.0, c02 = 0.0, v0 = 0.0;
  for (std::size_t i = 0; i < 500; ++i) {
    for (std::size_t n = 0; n < 200; ++n) {
      const auto w = noise.increment(i, n);
      c01 += w(0) * w(1);
      c02 += w(0) * w(2);
      v0 += w(0) * w(0);
    }
  }
  CHECK(std::abs(c01 / v0) < 0.02);
  CHECK(std::abs(c02 / v0) < 0.02);
}

TEST_CASE("refined increments sum to the coarse increment") {
  const TimeGrid grid(1.0, 20);
  const NoiseBundle coarse(grid, 8, 2, 31);
  const NoiseBundle fine = coarse.refined(4);
  CHECK(fine.grid().steps() == 80);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t n = 0; n < 20; ++n) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
      for (std::size_t j = 0; j < 4; ++j) sum += fine.increment(i, 4 * n + j);
      CHECK((sum - coarse.increment(i, n)).norm() < 1e-14);
    }
  }
}

TEST_CASE("refined increments have variance dt_fine") {
  const TimeGrid grid(1.0, 50);
  const NoiseBundle fine = NoiseBundle(grid, 2000, 1, 8).refined(4);
  double var = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < 2000; ++i)
    for (std::size_t n = 0; n < fine.grid().steps(); ++n, ++count) var += std::pow(fine.increment(i, n)(0), 2);
  var /= static_cast<double>(count);
  CHECK(std::abs(var - fine.grid().dt()) < 0.03 * fine.grid().dt());
}

TEST_CASE("split pieces sum to the parent and are deterministic") {
  const TimeGrid grid(1.0, 10);
  const NoiseBundle noise(grid, 3, 2, 4);
  const Eigen::VectorXd parent = noise.increment(1, 7);
  Eigen::MatrixXd a(2, 5), b(2, 5);
  noise.split(1, 7, parent, 5, a);
  noise.split(1, 7, parent, 5, b);
  CHECK(a == b);
  CHECK((a.rowwise().sum() - parent).norm() < 1e-14);
  Eigen::MatrixXd one(2, 1);
  noise.split(1, 7, parent, 1, one);
  CHECK(one.col(0) == parent);
}

TEST_CASE("independent stream differs from the shared one") {
  const TimeGrid grid(1.0, 10);
  const NoiseBundle noise(grid, 3, 1, 4);
  const NoiseBundle other = noise.independent_stream();
  CHECK(noise.increment(0, 0) != other.increment(0, 0));
  CHECK(other.seed() == noise.seed());
}

TEST_CASE("noise bundle rejects bad arguments") {
  const TimeGrid grid(1.0, 10);
  CHECK_THROWS_AS(NoiseBundle(grid, 0, 1, 0), InvalidInput);
  CHECK_THROWS_AS(NoiseBundle(grid, 1, 0, 0), InvalidInput);
  const NoiseBundle noise(grid, 2, 1, 0);
  CHECK_THROWS_AS(noise.increment(2, 0), InvalidInput);
  CHECK_THROWS_AS(noise.increment(0, 10), InvalidInput);
  CHECK_THROWS_AS(noise.refined(2).refined(2), Unsupported);
}

TEST_CASE("time grid nodes") {
  const TimeGrid grid(1.0, 3);
  CHECK(grid.time(3) == 1.0);
  CHECK(grid.time(1) == doctest::Approx(1.0 / 3.0));
  CHECK(grid.node_at(0.5) == 1);
  CHECK(grid.node_at(2.0) == 3);
  CHECK(grid.node_at(grid.time(2)) == 2);
  CHECK_THROWS_AS(TimeGrid(0.0, 3), InvalidInput);
  CHECK_THROWS_AS(TimeGrid(1.0, 0), InvalidInput);
  CHECK_THROWS_AS(grid.coarsened(2), InvalidInput);
}
