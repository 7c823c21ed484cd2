#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "tikmv/errors.hpp"
#include "tikmv/lq.hpp"
#include "tikmv/metrics.hpp"
#include "tikmv/studies.hpp"

using namespace tikmv;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Track filled(const TimeGrid& grid, std::size_t M, std::size_t dim, const std::function<double(std::size_t, std::size_t, std::size_t)>& f) {
  Track t(grid, M, dim);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t n = 0; n < grid.nodes(); ++n)
      for (std::size_t c = 0; c < dim; ++c) t.at(i, n)(static_cast<Eigen::Index>(c)) = f(i, n, c);
  return t;
}

Track random_track(std::mt19937_64& rng, const TimeGrid& grid, std::size_t M, std::size_t dim) {
  std::normal_distribution<double> z;
  return filled(grid, M, dim, [&](std::size_t, std::size_t, std::size_t) { return z(rng); });
}

Track difference(const Track& a, const Track& b) {
  return filled(a.grid(), a.particles(), a.dim(), [&](std::size_t i, std::size_t n, std::size_t c) {
    return a.at(i, n)(static_cast<Eigen::Index>(c)) - b.at(i, n)(static_cast<Eigen::Index>(c));
  });
}

ParticleCloud constant_cloud(std::size_t M, double value) { return ParticleCloud::constant(M, VectorXd::Constant(1, value)); }

PathEnsemble ensemble(const Track& x, std::optional<Track> a = std::nullopt, std::uint64_t seed = 0) {
  return PathEnsemble{x.grid(), seed, x, std::move(a), std::nullopt};
}

// RK4 for the deterministic two-scale tracking system x' = a, eps a' = -lambda (a - x).
std::vector<Eigen::Vector2d> tracking_oracle(double eps, double x0, double a0, const TimeGrid& grid, std::size_t sub) {
  std::vector<Eigen::Vector2d> out{Eigen::Vector2d(x0, a0)};
  auto f = [eps](const Eigen::Vector2d& u) { return Eigen::Vector2d(u(1), -(u(1) - u(0)) / eps); };
  Eigen::Vector2d u = out[0];
  const double h = grid.dt() / static_cast<double>(sub);
  for (std::size_t n = 0; n < grid.steps(); ++n) {
    for (std::size_t s = 0; s < sub; ++s) {
      const Eigen::Vector2d k1 = f(u), k2 = f(u + h / 2 * k1), k3 = f(u + h / 2 * k2), k4 = f(u + h * k3);
      u += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    out.push_back(u);
  }
  return out;
}

}  // namespace

TEST_CASE("norm examples") {
  const TimeGrid grid(1.0, 100);
  std::mt19937_64 rng(1);
  const Track a = random_track(rng, grid, 4, 2);
  CHECK(s2_distance(a, a) == 0.0);
  CHECK(h2_distance(a, a) == 0.0);

  const Track shifted = filled(grid, 4, 1, [](std::size_t, std::size_t, std::size_t) { return -1.5; });
  CHECK(s2_norm(shifted) == doctest::Approx(1.5));
  CHECK(h2_norm(shifted) == doctest::Approx(1.5));

  for (std::size_t N : {100, 1000}) {
    const TimeGrid g(1.0, N);
    const Track ramp = filled(g, 1, 1, [&](std::size_t, std::size_t n, std::size_t) { return g.time(n); });
    const Track zero(g, 1, 1);
    CHECK(s2_distance(ramp, zero) == doctest::Approx(1.0));
    CHECK(std::abs(h2_distance(ramp, zero) - 1.0 / std::sqrt(3.0)) <= 2 * g.dt());
  }
  CHECK_THROWS_AS(s2_distance(a, Track(grid, 3, 2)), InvalidInput);
  CHECK_THROWS_AS(h2_distance(a, Track(TimeGrid(1.0, 50), 4, 2)), InvalidInput);
}

TEST_CASE("norm axioms on random small ensembles") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> Ms(1, 8), Ns(1, 16), dims(1, 3);
  std::uniform_real_distribution<double> Ts(0.1, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const TimeGrid grid(Ts(rng), Ns(rng));
    const std::size_t M = Ms(rng), d = dims(rng);
    const Track a = random_track(rng, grid, M, d), b = random_track(rng, grid, M, d), c = random_track(rng, grid, M, d);
    for (auto dist : {&s2_distance, &h2_distance}) {
      const double ab = dist(a, b);
      CHECK(ab > 0.0);
      CHECK(ab == dist(b, a));
      CHECK(ab <= dist(a, c) + dist(c, b) + 1e-12);
      CHECK(dist(a, a) == 0.0);
    }
    // Equality holds when N = 1; allow for rounding only.
    CHECK(h2_distance(a, b) <= std::sqrt(grid.horizon()) * s2_distance(a, b) * (1 + 1e-12));
    CHECK(s2_distance(a, b) == doctest::Approx(s2_norm(difference(a, b))).epsilon(1e-12));
    CHECK(h2_distance(a, b) == doctest::Approx(h2_norm(difference(a, b))).epsilon(1e-12));
  }
}

TEST_CASE("h2 ignores the terminal node, s2 does not") {
  const TimeGrid grid(1.0, 4);
  const Track spike = filled(grid, 1, 1, [](std::size_t, std::size_t n, std::size_t) { return n == 4 ? 3.0 : 0.0; });
  CHECK(h2_norm(spike) == 0.0);
  CHECK(s2_norm(spike) == 3.0);
}

TEST_CASE("lq cost examples") {
  SUBCASE("zero data costs nothing") {
    const TimeGrid grid(1.0, 50);
    std::mt19937_64 rng(3);
    const LQModel m = LQModel::scalar(1, 1, 0, 0, 1, 0);
    CHECK(lq_cost(m, ensemble(random_track(rng, grid, 5, 1), random_track(rng, grid, 5, 1))) == 0.0);
  }
  SUBCASE("x = e^t, a = 0") {
    const LQModel m = LQModel::scalar(1, 1, 1, 1, 0, 1);
    const double e2 = std::exp(2.0);
    const double exact = (e2 - 1) / 4 + e2 / 2;
    double errs[2];
    for (int r = 0; r < 2; ++r) {
      const TimeGrid grid(1.0, r ? 2000 : 1000);
      const Track x = filled(grid, 1, 1, [&](std::size_t, std::size_t n, std::size_t) { return std::exp(grid.time(n)); });
      const double J = lq_cost(m, ensemble(x, Track(grid, 1, 1)));
      // Left Riemann sum of e^{2t}/2 in closed form.
      const double riemann = grid.dt() / 2 * (e2 - 1) / (std::exp(2 * grid.dt()) - 1);
      CHECK(J == doctest::Approx(riemann + e2 / 2).epsilon(1e-12));
      errs[r] = exact - J;
    }
    CHECK(errs[0] > 0.0);
    CHECK(errs[0] < 2e-3);
    CHECK(errs[0] / errs[1] == doctest::Approx(2.0).epsilon(0.01));
  }
  SUBCASE("missing control track") {
    const TimeGrid grid(1.0, 10);
    CHECK_THROWS_AS(lq_cost(LQModel::scalar(1, 1, 1, 1, 0, 1), ensemble(Track(grid, 1, 1))), InvalidInput);
  }
}

TEST_CASE("Riccati feedback beats perturbed controls on common noise") {
  const TimeGrid grid(1.0, 200);
  const LQModel m = LQModel::scalar(1, 1, 1, 1, 1, 1);
  const std::size_t M = 2000;
  const NoiseBundle noise(grid, M, 1, 99);
  const ParticleCloud xi = constant_cloud(M, 1.0);
  const RiccatiPath ric = solve_riccati_smp(m, grid);
  const PathEnsemble best = simulate_lq_optimal(m, ric, grid, noise, xi);
  const auto best_samples = lq_cost_samples(m, best);

  auto feedback = [&](double gain, double offset) {
    return [&, gain, offset](const ControlQuery& q, VecRef out) {
      out(0) = -gain * ric.lambda[q.node](0, 0) * q.x(0) + offset * q.t;
    };
  };
  const PathEnsemble same = simulate_lq_controlled(m, feedback(1.0, 0.0), grid, noise, xi);
  CHECK(lq_cost(m, same) == doctest::Approx(lq_cost(m, best)).epsilon(1e-12));

  for (auto [gain, offset] : {std::pair{0.8, 0.0}, {1.2, 0.0}, {1.0, 0.3}, {1.0, -0.3}, {0.5, 0.5}}) {
    const auto samples = lq_cost_samples(m, simulate_lq_controlled(m, feedback(gain, offset), grid, noise, xi));
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      const double d = samples[i] - best_samples[i];
      mean += d;
      sq += d * d;
    }
    mean /= M;
    const double se = std::sqrt(std::max(0.0, sq / M - mean * mean) / (M - 1));
    CHECK(mean > -3 * se);
    CHECK(mean > 0.0);
  }
  const Estimate est = lq_cost_estimate(m, best);
  CHECK(est.std_error > 0.0);
  CHECK(est.mean == doctest::Approx(lq_cost(m, best)));
}

TEST_CASE("stationarity residual") {
  const TimeGrid grid(1.0, 200);
  const LQModel m = LQModel::scalar(1, 1, 1, 1, 1, 1);
  const NoiseBundle noise(grid, 30, 1, 5);
  PathEnsemble p = simulate_lq_optimal(m, solve_riccati_smp(m, grid), grid, noise, constant_cloud(30, 1.0));
  CHECK(stationarity_residual(m, p) <= 1e-10);
  const double c = 0.7;
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t n = 0; n < grid.nodes(); ++n) p.fast->at(i, n)(0) += c;
  CHECK(stationarity_residual(m, p) == doctest::Approx(c).epsilon(1e-9));
  LQModel r2 = m;
  r2.r = TimeMatrix(MatrixXd::Constant(1, 1, 2.0));
  // Y is lambda X for r = 1; the shift still contributes r c.
  const double base = stationarity_residual(r2, p);
  CHECK(base > 0.0);
  p.aux.reset();
  CHECK_THROWS_AS(stationarity_residual(m, p), InvalidInput);
}

TEST_CASE("common noise discipline") {
  const TimeGrid grid(1.0, 10);
  const Track x(grid, 3, 1);
  CHECK_NOTHROW(require_common_noise(ensemble(x, std::nullopt, 4), ensemble(x, std::nullopt, 4)));
  CHECK_THROWS_AS(require_common_noise(ensemble(x, std::nullopt, 4), ensemble(x, std::nullopt, 5)), ConfigError);
  CHECK_THROWS_AS(require_common_noise(ensemble(x, std::nullopt, 4), ensemble(Track(grid, 2, 1), std::nullopt, 4)),
                  ConfigError);
}

TEST_CASE("error table ordering, validation and csv") {
  ErrorTable t;
  t.add({0.01, 0.1, 0.2, 0.3, -0.001, 5});
  t.add({0.5, 1.0, 2.0, 3.0, 0.4, 7});
  t.add({0.1, 0.5, 0.7, 0.9, 0.05, 6});
  REQUIRE(t.rows().size() == 3);
  CHECK(t.rows()[0].eps == 0.5);
  CHECK(t.rows()[2].eps == 0.01);
  CHECK(t.row_for(0.1).h2_error_A == 0.7);
  CHECK_THROWS_AS(t.row_for(0.2), InvalidInput);
  CHECK_THROWS_AS(t.add({0.2, -1.0, 0, 0, 0, 0}), NumericalError);
  CHECK_THROWS_AS(t.add({0.2, NAN, 0, 0, 0, 0}), NumericalError);
  CHECK_THROWS_AS(t.add({0.2, 0, 0, 0, INFINITY, 0}), NumericalError);
  CHECK_THROWS_AS(t.add({0.0, 0, 0, 0, 0, 0}), InvalidInput);
  t.set_meta("seed", "42");
  t.set_meta("model", "lq");

  std::stringstream plain, timed;
  t.write_csv(plain);
  t.write_csv(timed, true);
  CHECK(plain.str().rfind("#seed=42\n#model=lq\neps,s2_error_X,h2_error_A,stationarity_residual,cost_gap,runtime_ms\n", 0) == 0);
  CHECK(plain.str().find(",7\n") == std::string::npos);
  CHECK(timed.str().find(",7\n") != std::string::npos);

  const ErrorTable back = ErrorTable::read_csv(timed);
  REQUIRE(back.rows().size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.rows()[i].eps == t.rows()[i].eps);
    CHECK(back.rows()[i].s2_error_X == t.rows()[i].s2_error_X);
    CHECK(back.rows()[i].cost_gap == t.rows()[i].cost_gap);
    CHECK(back.rows()[i].runtime_ms == t.rows()[i].runtime_ms);
  }
  CHECK(back.metadata() == t.metadata());

  CHECK(nonincreasing({3, 2, 2.05, 1}, 1.05));
  CHECK_FALSE(nonincreasing({3, 2, 2.2, 1}, 1.05));
  CHECK(nonincreasing({}, 1.0));
}

TEST_CASE("eps list validation") {
  StudyConfig c;
  c.eps_list = {0.01, 0.5, 0.1};
  CHECK(validated_eps_list(c) == std::vector<double>{0.5, 0.1, 0.01});
  c.eps_list = {0.1, 0.1};
  CHECK_THROWS_AS(validated_eps_list(c), ConfigError);
  c.eps_list = {0.1, -1};
  CHECK_THROWS_AS(validated_eps_list(c), ConfigError);
  c.eps_list = {};
  CHECK_THROWS_AS(validated_eps_list(c), ConfigError);
  c.eps_list = {0.1};
  c.beta_power = 1.0;
  CHECK_THROWS_AS(validated_eps_list(c), ConfigError);
  c.beta_power = 1.5;
  CHECK_NOTHROW(validated_eps_list(c));
}

TEST_CASE("single-entry LQ study") {
  StudyConfig c;
  c.steps = 100;
  c.particles = 50;
  c.seed = 11;
  c.eps_list = {0.1};
  c.model_id = "lq";
  const StudyResult r = lq_convergence_study(LQModel::scalar(1, 1, 1, 1, 1, 1), c);
  REQUIRE(r.table.rows().size() == 1);
  const ErrorRow& row = r.table.rows()[0];
  CHECK(row.eps == 0.1);
  for (double v : {row.s2_error_X, row.h2_error_A, row.stationarity_residual, row.cost_gap}) CHECK(std::isfinite(v));
  CHECK(row.s2_error_X > 0.0);
  CHECK(r.finest.has_value());
  CHECK(r.finest_eps == 0.1);
  CHECK(r.reference.noise_seed == 11);
}

TEST_CASE("decay fixture h2 error scales like eps c^2 / (2 lambda)") {
  for (double lambda : {1.0, 2.0}) {
    FixtureSpec fx;
    fx.kind = SyntheticKind::decay;
    fx.lambda = lambda;
    fx.xi = InitialLaw::constant(VectorXd::Zero(1));
    const double c = 1.5;
    fx.eta = InitialLaw::constant(VectorXd::Constant(1, c));
    StudyConfig cfg;
    cfg.steps = 20000;
    cfg.particles = 1;
    cfg.eps_list = {1e-2, 1e-3};
    const StudyResult r = fixture_convergence_study(fx, cfg);
    for (const ErrorRow& row : r.table.rows()) {
      const double ratio = row.h2_error_A * row.h2_error_A / row.eps / (c * c / (2 * lambda));
      CHECK(ratio >= 0.8);
      CHECK(ratio <= 1.2);
      CHECK(row.s2_error_X == 0.0);
    }
  }
}

TEST_CASE("deterministic tracking study matches ODE oracle errors") {
  FixtureSpec fx;
  fx.kind = SyntheticKind::tracking;
  fx.eta = InitialLaw::constant(VectorXd::Ones(1));
  StudyConfig cfg;
  cfg.steps = 20000;
  cfg.particles = 1;
  cfg.eps_list = {1e-2};
  const StudyResult r = fixture_convergence_study(fx, cfg);
  const TimeGrid grid(1.0, 20000);
  const auto u = tracking_oracle(1e-2, 1.0, 1.0, grid, 4);
  double sup = 0.0, h2 = 0.0;
  for (std::size_t n = 0; n < grid.nodes(); ++n) {
    const double limit = std::exp(grid.time(n));
    sup = std::max(sup, std::abs(u[n](0) - limit));
    if (n < grid.steps()) h2 += std::pow(u[n](1) - limit, 2) * grid.dt();
  }
  h2 = std::sqrt(h2);
  const ErrorRow& row = r.table.rows()[0];
  CHECK(std::abs(row.s2_error_X / sup - 1) < 0.1);
  CHECK(std::abs(row.h2_error_A / h2 - 1) < 0.1);
}
