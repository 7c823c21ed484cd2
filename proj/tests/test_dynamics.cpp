#include <cmath>
#include <random>

#include "doctest.h"
#include "tikmv/dynamics.hpp"
#include "tikmv/errors.hpp"
#include "tikmv/noise.hpp"

using namespace tikmv;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd v1(double x) { return VectorXd::Constant(1, x); }

LQModel all_ones() { return LQModel::scalar(1, 1, 1, 1, 1, 1); }

// Two-scale path with the same lambda at every node.
RiccatiPath constant_two_scale_path(const TimeGrid& grid, const MatrixXd& lambda, double eps) {
  RiccatiPath p;
  p.grid = grid;
  p.kind = RiccatiKind::two_scale;
  p.eps = eps;
  p.lambda.assign(grid.nodes(), lambda);
  p.theta.assign(grid.nodes(), VectorXd::Zero(lambda.rows()));
  return p;
}

LQModel random_model(std::mt19937_64& rng, std::size_t d, std::size_t k, std::size_t m) {
  std::normal_distribution<double> z;
  auto rnd = [&](std::size_t r, std::size_t c) {
    MatrixXd a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = z(rng);
    return a;
  };
  LQModel model;
  model.dims = {d, k, m};
  model.b0 = VectorXd::Zero(static_cast<Eigen::Index>(d));
  model.b1 = TimeMatrix(rnd(d, d));
  model.b2 = TimeMatrix(rnd(d, k));
  const MatrixXd q = rnd(d, d);
  model.q_run = TimeMatrix(MatrixXd(q * q.transpose()));
  const MatrixXd r = rnd(k, k);
  model.r = TimeMatrix(MatrixXd(r * r.transpose() + MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))));
  model.sigma = rnd(d, m);
  const MatrixXd qt = rnd(d, d);
  model.q_term = qt * qt.transpose();
  model.xi = InitialLaw::constant(VectorXd::Ones(static_cast<Eigen::Index>(d)));
  model.eta = InitialLaw::constant(VectorXd::Zero(static_cast<Eigen::Index>(k)));
  return model;
}

}  // namespace

TEST_CASE("law stats satisfy Jensen") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(1.0, 2.0);
  MatrixXd states(2, 50);
  for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = z(rng);
  const LawStats s = law_stats(states);
  CHECK(s.second_moment_norm * s.second_moment_norm >= s.mean.squaredNorm());
  CHECK(s.mean.isApprox(states.rowwise().mean()));
}

TEST_CASE("lq hamiltonian examples") {
  const LQModel m = all_ones();
  CHECK(lq_hamiltonian(m, 0.0, v1(0), v1(0), v1(0)) == 0.0);
  CHECK(lq_hamiltonian(m, 0.3, v1(1), v1(1), v1(1)) == doctest::Approx(3.0));
  CHECK(grad_a_lq_hamiltonian(m, 0.0, v1(2), v1(-2))(0) == doctest::Approx(0.0));
  CHECK(grad_a_lq_hamiltonian(m, 0.0, v1(0), v1(0))(0) == 0.0);
  CHECK(grad_a_lq_hamiltonian(m, 0.0, v1(1), v1(1))(0) == doctest::Approx(2.0));
  CHECK(grad_a_lq_hamiltonian(m, 0.0, v1(1.5), v1(-1.5))(0) == doctest::Approx(0.0));
}

TEST_CASE("hamiltonian gradient matches central differences") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  const TimeGrid grid(1.0, 10);
  for (int trial = 0; trial < 100; ++trial) {
    const LQModel model = random_model(rng, 2, 2, 3);
    VectorXd x(2), y(2), a(2);
    x << z(rng), z(rng);
    y << z(rng), z(rng);
    a << z(rng), z(rng);
    MatrixXd zz(2, 3);
    for (Eigen::Index i = 0; i < zz.size(); ++i) zz.data()[i] = z(rng);
    const VectorXd g = grad_a_lq_hamiltonian(model, 0.5, y, a);
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < 2; ++j) {
      VectorXd ap = a, am = a;
      ap(j) += h;
      am(j) -= h;
      const double fd = (lq_hamiltonian(model, 0.5, x, y, ap) - lq_hamiltonian(model, 0.5, x, y, am)) / (2 * h);
      CHECK(std::abs(fd - g(j)) <= 1e-6 * std::max(1.0, std::abs(g(j))));
      // sigma is uncontrolled: the full Hamiltonian has the same a-gradient.
      const double fd_full = (lq_full_hamiltonian(model, 0.5, x, y, zz, ap) -
                              lq_full_hamiltonian(model, 0.5, x, y, zz, am)) / (2 * h);
      CHECK(std::abs(fd_full - g(j)) <= 1e-6 * std::max(1.0, std::abs(g(j))));
    }
    CHECK(lq_full_hamiltonian(model, 0.5, x, y, zz, a) ==
          doctest::Approx(lq_hamiltonian(model, 0.5, x, y, a) + (model.sigma.array() * zz.array()).sum()));
  }
}

TEST_CASE("lq fast coefficients") {
  const TimeGrid grid(1.0, 10);
  const LQModel m = all_ones();
  const LawStats none = law_stats(MatrixXd::Zero(1, 1));
  MatrixXd lam(1, 2);
  lam << 1, 0;
  const RiccatiPath path = constant_two_scale_path(grid, lam, 0.1);
  VectorXd out(1);

  SUBCASE("substitution") {
    const CoefficientSet c = lq_fast_coefficients(m, path, 0.1, 1.0, MatrixXd::Ones(1, 1));
    c.fast_drift(0.2, v1(1), none, v1(0), none, out);
    CHECK(out(0) == doctest::Approx(-1.0));
    CHECK(c.affine_fast_drift());
    CHECK(*c.fast_noise_amplitude == doctest::Approx(0.01));
    CHECK(c.declared_monotonicity_lambda == doctest::Approx(1.0));
  }
  SUBCASE("beta zero gives zero amplitude") {
    const CoefficientSet c = lq_fast_coefficients(m, path, 0.1, 0.0, MatrixXd::Constant(1, 1, 7.0));
    CHECK(*c.fast_noise_amplitude == 0.0);
  }
  SUBCASE("terminal condition") {
    LQModel mm = LQModel::scalar(1, 2, 1, 3, 1, 5);
    MatrixXd lt(1, 2);
    lt << 5, 0;
    const CoefficientSet c = lq_fast_coefficients(mm, constant_two_scale_path(grid, lt, 0.1), 0.1, 1.0, MatrixXd::Ones(1, 1));
    c.fast_drift(1.0, v1(0.7), none, v1(-0.4), none, out);
    CHECK(out(0) == doctest::Approx(-(2.0 * 5.0 * 0.7 + 3.0 * -0.4)));
  }
  SUBCASE("affine in (x, a)") {
    std::mt19937_64 rng(5);
    const LQModel model = random_model(rng, 2, 2, 2);
    MatrixXd l(2, 4);
    l.setRandom();
    const CoefficientSet c = lq_fast_coefficients(model, constant_two_scale_path(grid, l, 0.1), 0.1, 1.0, MatrixXd::Ones(2, 2));
    const LawStats n2 = law_stats(MatrixXd::Zero(2, 1));
    VectorXd x1 = VectorXd::Random(2), x2 = VectorXd::Random(2), a1 = VectorXd::Random(2), a2 = VectorXd::Random(2);
    VectorXd o1(2), o2(2), o(2);
    const double al = 0.3;
    c.fast_drift(0.5, x1, n2, a1, n2, o1);
    c.fast_drift(0.5, x2, n2, a2, n2, o2);
    c.fast_drift(0.5, al * x1 + (1 - al) * x2, n2, al * a1 + (1 - al) * a2, n2, o);
    CHECK((o - (al * o1 + (1 - al) * o2)).norm() < 1e-12);
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(lq_fast_coefficients(m, path, 0.1, 1.0, MatrixXd::Ones(2, 1)), ConfigError);
    RiccatiPath smp = path;
    smp.kind = RiccatiKind::smp;
    CHECK_THROWS_AS(lq_fast_coefficients(m, smp, 0.1, 1.0, MatrixXd::Ones(1, 1)), ConfigError);
  }
}

TEST_CASE("synthetic fixtures") {
  const LawStats none = law_stats(MatrixXd::Zero(1, 1));
  const LawStats mean_one = law_stats(MatrixXd::Ones(1, 1));
  VectorXd out(1);
  synthetic_monotone_model(SyntheticKind::decay, 1.0).coefficients.fast_drift(0, v1(0), none, v1(3), none, out);
  CHECK(out(0) == doctest::Approx(-3.0));
  const auto tracking = synthetic_monotone_model(SyntheticKind::tracking, 1.0).coefficients;
  for (double x : {-2.0, 0.0, 1.7}) {
    tracking.fast_drift(0, v1(x), none, v1(x), none, out);
    CHECK(out(0) == 0.0);
  }
  synthetic_monotone_model(SyntheticKind::meanfield_tracking, 1.0).coefficients.fast_drift(0, v1(1), mean_one, v1(1), none, out);
  CHECK(out(0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(synthetic_monotone_model(SyntheticKind::decay, 0.0), InvalidInput);
  CHECK(parse_synthetic_kind("tracking") == SyntheticKind::tracking);
  CHECK_FALSE(parse_synthetic_kind("nope").has_value());
}

TEST_CASE("monotonicity probe") {
  CHECK(monotonicity_probe(synthetic_monotone_model(SyntheticKind::decay, 1.0).coefficients, 50, 1.0, 1) ==
        doctest::Approx(-1.0));
  CHECK(monotonicity_probe(synthetic_monotone_model(SyntheticKind::expanding, 1.0).coefficients, 50, 1.0, 1) ==
        doctest::Approx(1.0));

  const TimeGrid grid(1.0, 10);
  MatrixXd lam(1, 2);
  lam << 0.8, 0;
  const CoefficientSet lq =
      lq_fast_coefficients(all_ones(), constant_two_scale_path(grid, lam, 0.1), 0.1, 1.0, MatrixXd::Ones(1, 1));
  CHECK(monotonicity_probe(lq, 50, 1.0, 1) == doctest::Approx(-1.0));

  SUBCASE("every shipped model certifies its declared constant") {
    for (auto kind : {SyntheticKind::decay, SyntheticKind::tracking, SyntheticKind::meanfield_tracking}) {
      for (double l : {0.5, 1.0, 3.0}) {
        const auto c = synthetic_monotone_model(kind, l, {0.3, 0.2}).coefficients;
        CHECK(monotonicity_probe(c, 1000, 10.0, 9) <= -c.declared_monotonicity_lambda + 1e-9);
      }
    }
    MatrixXd lam2(1, 2);
    lam2 << 2.25, 2e-4;
    const CoefficientSet c = lq_fast_coefficients(all_ones(), constant_two_scale_path(grid, lam2, 1e-4), 1e-4, 1.0,
                                                  MatrixXd::Ones(1, 1));
    CHECK(monotonicity_probe(c, 1000, 10.0, 9) <= -c.declared_monotonicity_lambda + 1e-9);
  }
  CHECK_THROWS_AS(monotonicity_probe(lq, 0, 1.0, 1), InvalidInput);
}

TEST_CASE("lq model validation") {
  const TimeGrid grid(1.0, 4);
  CHECK_NOTHROW(all_ones().validate(grid));
  LQModel m = all_ones();
  m.r = TimeMatrix(MatrixXd::Zero(1, 1));
  CHECK_THROWS_AS(m.validate(grid), ConfigError);
  m = all_ones();
  m.q_term = MatrixXd::Ones(2, 2);
  CHECK_THROWS_AS(m.validate(grid), ConfigError);
  m = all_ones();
  MatrixXd q(2, 2);
  q << 1, 2, 0, 1;
  m.dims = {2, 1, 1};
  m.b0 = VectorXd::Zero(2);
  m.b1 = TimeMatrix(MatrixXd::Identity(2, 2));
  m.b2 = TimeMatrix(MatrixXd::Ones(2, 1));
  m.q_run = TimeMatrix(q);
  m.sigma = MatrixXd::Ones(2, 1);
  m.q_term = MatrixXd::Identity(2, 2);
  m.xi = InitialLaw::constant(VectorXd::Ones(2));
  CHECK_THROWS_AS(m.validate(grid), ConfigError);
  // r positive definite at all but one node
  m = all_ones();
  std::vector<MatrixXd> table(grid.nodes(), MatrixXd::Ones(1, 1));
  table[2](0, 0) = -1.0;
  m.r = TimeMatrix(grid, table);
  CHECK_THROWS_AS(m.validate(grid), ConfigError);
}

TEST_CASE("time matrix left interpolation") {
  const TimeGrid grid(1.0, 4);
  std::vector<MatrixXd> table;
  for (int n = 0; n <= 4; ++n) table.push_back(MatrixXd::Constant(1, 1, n));
  const TimeMatrix tm(grid, table);
  CHECK(tm.at(0.0)(0, 0) == 0.0);
  CHECK(tm.at(0.3)(0, 0) == 1.0);
  CHECK(tm.at(0.5)(0, 0) == 2.0);
  CHECK(tm.at(1.0)(0, 0) == 4.0);
  CHECK_FALSE(tm.is_constant());
}

TEST_CASE("initial cloud sampling") {
  const auto c = sample_cloud(InitialLaw::constant(v1(1.5)), 5, 1, streams::initial_slow);
  CHECK(c.points().isConstant(1.5));
  const auto tp = sample_cloud(InitialLaw::two_point(v1(0), v1(2)), 20000, 3, streams::initial_slow);
  const double mean = empirical_mean(tp)(0);
  CHECK(std::abs(mean - 1.0) < 0.03);
  for (std::size_t i = 0; i < tp.size(); ++i) CHECK((tp.particle(i)(0) == 0.0 || tp.particle(i)(0) == 2.0));
  const auto small = sample_cloud(InitialLaw::two_point(v1(0), v1(2)), 100, 3, streams::initial_slow);
  CHECK(small.points() == tp.points().topRows(100));
  const auto nrm = sample_cloud(InitialLaw::normal(v1(1), v1(2)), 20000, 4, streams::initial_slow);
  CHECK(std::abs(empirical_mean(nrm)(0) - 1.0) < 0.05);
}
