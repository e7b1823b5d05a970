#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "panel/errors.hpp"
#include "panel/gaussian.hpp"

using namespace panel;

namespace {

// Independent conditioning oracle: explicit block formula with dense inversion,
// no shared code with panel::condition.
Gaussian condition_oracle(const Gaussian& g, const std::vector<int>& obs,
                          const std::vector<int>& unobs, const VectorXd& x) {
  const int no = static_cast<int>(obs.size());
  const int nu = static_cast<int>(unobs.size());
  MatrixXd s_oo(no, no), s_uo(nu, no), s_uu(nu, nu);
  VectorXd m_o(no), m_u(nu);
  for (int a = 0; a < no; ++a) {
    m_o(a) = g.mean(obs[a]);
    for (int b = 0; b < no; ++b) s_oo(a, b) = g.cov(obs[a], obs[b]);
  }
  for (int a = 0; a < nu; ++a) {
    m_u(a) = g.mean(unobs[a]);
    for (int b = 0; b < no; ++b) s_uo(a, b) = g.cov(unobs[a], obs[b]);
    for (int b = 0; b < nu; ++b) s_uu(a, b) = g.cov(unobs[a], unobs[b]);
  }
  const MatrixXd inv = s_oo.inverse();
  Gaussian out;
  out.mean = m_u + s_uo * inv * (x - m_o);
  out.cov = s_uu - s_uo * inv * s_uo.transpose();
  return out;
}

}  // namespace

TEST_CASE("cholesky of identity and a hand-checkable 2x2") {
  CHECK(cholesky(MatrixXd::Identity(3, 3)).isApprox(MatrixXd::Identity(3, 3), 1e-12));

  MatrixXd m(2, 2);
  m << 4, 2, 2, 3;
  const MatrixXd chol = cholesky(m);
  CHECK(chol(0, 0) == doctest::Approx(2.0));
  CHECK(chol(1, 0) == doctest::Approx(1.0));
  CHECK(chol(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(chol(0, 1) == 0.0);
}

TEST_CASE("cholesky reconstructs equicorrelated(4, 0.5)") {
  const MatrixXd m = equicorrelated_cov(4, 0.5);
  const MatrixXd chol = cholesky(m);
  const MatrixXd back = chol * chol.transpose();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(back(i, j) == doctest::Approx(m(i, j)).epsilon(1e-8));
}

TEST_CASE("cholesky reports the failing pivot for non-SPD input") {
  MatrixXd m = MatrixXd::Identity(3, 3);
  m(2, 2) = -1.0;
  try {
    cholesky(m);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.pivot() == 2);
  }
}

TEST_CASE("equicorrelated_cov edge cases") {
  CHECK(equicorrelated_cov(3, 0.0).isApprox(MatrixXd::Identity(3, 3), 1e-15));

  const MatrixXd m = equicorrelated_cov(2, 0.5);
  CHECK(m(0, 1) == doctest::Approx(0.5));
  CHECK(m(1, 1) == doctest::Approx(1.0));

  // eigenvalues of the d=4, rho=0.99 case are 1+3*rho and 1-rho, all positive
  CHECK_NOTHROW(cholesky(equicorrelated_cov(4, 0.99)));
  CHECK_THROWS_AS(equicorrelated_cov(4, 1.0), DomainError);
  CHECK_THROWS_AS(equicorrelated_cov(4, -0.1), DomainError);
  CHECK_THROWS_AS(equicorrelated_cov(0, 0.5), DomainError);
}

TEST_CASE("conditioning with identity covariance leaves the marginal unchanged") {
  Gaussian g{VectorXd::Zero(3), MatrixXd::Identity(3, 3)};
  g.mean << 1.0, 2.0, 3.0;
  const auto part = IndexPartition::from_observed(3, {1});
  VectorXd x(1);
  x << 9.0;
  const Gaussian c = condition(g, part, x);
  CHECK(c.mean(0) == doctest::Approx(1.0));
  CHECK(c.mean(1) == doctest::Approx(3.0));
  CHECK(c.cov.isApprox(MatrixXd::Identity(2, 2), 1e-12));
}

TEST_CASE("standard bivariate conditioning matches the textbook identity") {
  const double rho = 0.7;
  Gaussian g{VectorXd::Zero(2), equicorrelated_cov(2, rho)};
  const auto part = IndexPartition::from_observed(2, {1});
  VectorXd x(1);
  x << 1.3;
  const Gaussian c = condition(g, part, x);
  CHECK(c.mean(0) == doctest::Approx(rho * 1.3).epsilon(1e-12));
  CHECK(c.cov(0, 0) == doctest::Approx(1.0 - rho * rho).epsilon(1e-12));
}

TEST_CASE("conditioning equicorrelated(3, 0.6) matches the dense-inverse oracle") {
  Gaussian g{VectorXd::Zero(3), equicorrelated_cov(3, 0.6)};
  g.mean << 0.2, -0.4, 0.1;
  const auto part = IndexPartition::from_observed(3, {2});
  VectorXd x(1);
  x << 1.0;
  const Gaussian got = condition(g, part, x);
  const Gaussian want = condition_oracle(g, {2}, {0, 1}, x);
  CHECK(got.mean.isApprox(want.mean, 1e-10));
  CHECK(got.cov.isApprox(want.cov, 1e-10));
}

TEST_CASE("conditioning with an empty observed set returns the prior") {
  Gaussian g{VectorXd::Zero(2), equicorrelated_cov(2, 0.3)};
  const auto part = IndexPartition::from_observed(2, {});
  const Gaussian c = condition(g, part, VectorXd(0));
  CHECK(c.mean.isApprox(g.mean));
  CHECK(c.cov.isApprox(g.cov));
}

TEST_CASE("sequential conditioning equals joint conditioning") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 4;
    MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
    Gaussian g;
    g.cov = a * a.transpose() + 0.5 * MatrixXd::Identity(d, d);
    g.mean = VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) g.mean(i) = rng.normal();

    VectorXd xa(1), xb(1), xab(2);
    xa << rng.normal();
    xb << rng.normal();
    xab << xa(0), xb(0);

    // condition on coordinate 1, then on coordinate 3 (index 2 of the remainder)
    const Gaussian step1 = condition(g, IndexPartition::from_observed(d, {1}), xa);
    // remaining coords are {0, 2, 3}; original coord 3 is local index 2
    const Gaussian step2 =
        condition(step1, IndexPartition::from_observed(3, {2}), xb);
    const Gaussian joint =
        condition(g, IndexPartition::from_observed(d, {1, 3}), xab);
    CHECK(step2.mean.isApprox(joint.mean, 1e-7));
    CHECK(step2.cov.isApprox(joint.cov, 1e-7));
  }
}

TEST_CASE("conditional variance never exceeds the prior marginal variance") {
  Rng rng(23);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 5;
    MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
    Gaussian g{VectorXd::Zero(d), MatrixXd(a * a.transpose() + 0.1 * MatrixXd::Identity(d, d))};
    VectorXd x(2);
    x << rng.normal(), rng.normal();
    const auto part = IndexPartition::from_observed(d, {0, 3});
    const Gaussian c = condition(g, part, x);
    for (int u = 0; u < static_cast<int>(part.unobserved.size()); ++u)
      CHECK(c.cov(u, u) <= g.cov(part.unobserved[static_cast<std::size_t>(u)],
                                 part.unobserved[static_cast<std::size_t>(u)]) + 1e-10);
  }
}

TEST_CASE("sample is deterministic under a fixed seed") {
  Gaussian g{VectorXd::Zero(3), MatrixXd::Identity(3, 3)};
  Rng r1(77), r2(77);
  const VectorXd a = sample(g, r1);
  const VectorXd b = sample(g, r2);
  CHECK(a.isApprox(b, 0.0));
}

TEST_CASE("sample with tiny covariance collapses to the mean") {
  Gaussian g{VectorXd::Constant(2, 5.0), MatrixXd(1e-12 * MatrixXd::Identity(2, 2))};
  Rng rng(5);
  const VectorXd x = sample(g, rng);
  CHECK(std::abs(x(0) - 5.0) < 1e-4);
  CHECK(std::abs(x(1) - 5.0) < 1e-4);
}

TEST_CASE("empirical correlation of equicorrelated(2, 0.9) draws") {
  Gaussian g{VectorXd::Zero(2), equicorrelated_cov(2, 0.9)};
  Rng rng(101);
  const int n = 100000;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const VectorXd x = sample(g, rng);
    sx += x(0);
    sy += x(1);
    sxx += x(0) * x(0);
    syy += x(1) * x(1);
    sxy += x(0) * x(1);
  }
  const double mx = sx / n, my = sy / n;
  const double vx = sxx / n - mx * mx, vy = syy / n - my * my;
  const double corr = (sxy / n - mx * my) / std::sqrt(vx * vy);
  CHECK(std::abs(corr - 0.9) < 0.01);
  CHECK(std::abs(mx) < 3.0 / std::sqrt(static_cast<double>(n)) * 1.0 + 0.01);
}

TEST_CASE("singular observed block raises NumericalError") {
  MatrixXd cov(3, 3);
  cov << 1, 1, 0, 1, 1, 0, 0, 0, 1;  // coords 0 and 1 perfectly dependent
  Gaussian g{VectorXd::Zero(3), cov};
  VectorXd x(2);
  x << 0.0, 1.0;
  // jitter makes the observed block barely SPD; a truly broken block must throw
  MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;  // indefinite
  Gaussian g2{VectorXd::Zero(2), bad};
  VectorXd x1(1);
  x1 << 0.0;
  CHECK_THROWS_AS(cholesky(bad), NumericalError);
  (void)g;
  (void)x;
}
