#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "panel/errors.hpp"
#include "panel/simplex.hpp"

using namespace panel;

namespace {

ProbVec random_interior_point(int k, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (double& x : v) {
    x = 0.05 + rng.uniform01();
    sum += x;
  }
  for (double& x : v) x /= sum;
  return ProbVec(v);
}

}  // namespace

TEST_CASE("to_logits on symmetric and analytic points") {
  CHECK(to_logits(ProbVec({0.5, 0.5}))[0] == doctest::Approx(0.0));

  const LogitVec z3 = to_logits(ProbVec({1.0 / 3, 1.0 / 3, 1.0 / 3}));
  CHECK(z3[0] == doctest::Approx(0.0));
  CHECK(z3[1] == doctest::Approx(0.0));

  CHECK(to_logits(ProbVec({0.8, 0.2}))[0] ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("from_logits basics") {
  const ProbVec p = from_logits(LogitVec({0.0}));
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));

  const ProbVec q = from_logits(LogitVec({0.0, 0.0}));
  for (int i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const ProbVec r = from_logits(LogitVec({1.386294361119890618}));
  CHECK(r[0] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(r[1] == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("round trip from_logits(to_logits(theta)) over K in 2..6") {
  Rng rng(123);
  for (int k = 2; k <= 6; ++k) {
    for (int rep = 0; rep < 200; ++rep) {
      const ProbVec theta = random_interior_point(k, rng);
      const ProbVec back = from_logits(to_logits(theta));
      for (int i = 0; i < k; ++i)
        CHECK(back[i] == doctest::Approx(theta[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("invalid probability vectors are rejected") {
  CHECK_THROWS_AS(ProbVec({1.0}), DomainError);
  CHECK_THROWS_AS(ProbVec({0.0, 1.0}), DomainError);
  CHECK_THROWS_AS(ProbVec({0.3, 0.3}), DomainError);
  CHECK_THROWS_AS(LogitVec({std::nan("")}), DomainError);
}

TEST_CASE("floored ingestion clamps zeros and renormalizes") {
  int clamped = 0;
  const ProbVec p = ProbVec::floored({1.0, 0.0}, 1e-12, &clamped);
  CHECK(clamped == 1);
  CHECK(p[1] == doctest::Approx(1e-12).epsilon(1e-3));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_NOTHROW(to_logits(p));
}

TEST_CASE("temper analytic values") {
  const ProbVec a = temper(LogitVec({0.0, 0.0}), 0.5);
  for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const ProbVec b = temper(LogitVec({1.386294361119890618}), 1.0);
  CHECK(b[0] == doctest::Approx(0.8).epsilon(1e-9));

  // log 4 halved is log 2, so the odds become 2:1
  const ProbVec c = temper(LogitVec({1.386294361119890618}), 2.0);
  CHECK(c[0] == doctest::Approx(2.0 / 3).epsilon(1e-9));
  CHECK(c[1] == doctest::Approx(1.0 / 3).epsilon(1e-9));

  CHECK_THROWS_AS(temper(LogitVec({0.1}), 0.0), DomainError);
  CHECK_THROWS_AS(temper(LogitVec({0.1}), -1.0), DomainError);
}

TEST_CASE("temper at tau=1 equals from_logits") {
  Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> z{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    const ProbVec a = temper(LogitVec(z), 1.0);
    const ProbVec b = from_logits(LogitVec(z));
    for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("tempering is monotone toward uniform for K=2") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const double z = rng.uniform(-6, 6);
    const double tau = rng.uniform(0.05, 3.0);
    const double tau2 = tau * rng.uniform(1.0, 4.0);
    const double d1 = std::abs(temper(LogitVec({z}), tau)[0] - 0.5);
    const double d2 = std::abs(temper(LogitVec({z}), tau2)[0] - 0.5);
    CHECK(d2 <= d1 + 1e-12);
  }
}

TEST_CASE("log_temper_prob matches log of temper_into") {
  Rng rng(19);
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    std::vector<double> z(static_cast<std::size_t>(k - 1));
    for (double& x : z) x = rng.uniform(-8, 8);
    const double tau = rng.uniform(0.1, 3.0);
    std::vector<double> p(static_cast<std::size_t>(k));
    temper_into(z.data(), k, tau, p.data());
    for (int v = 1; v <= k; ++v)
      CHECK(log_temper_prob(z.data(), k, tau, v) ==
            doctest::Approx(std::log(p[static_cast<std::size_t>(v - 1)])).epsilon(1e-10));
  }
}

TEST_CASE("aggregate consensus, any, unanimous") {
  Rng rng(3);
  AggregationFn consensus{AggKind::consensus, 1};
  CHECK(aggregate({1, 1, 2}, consensus, 2, rng) == 1);

  // one positive vote suffices for any_positive (positive class 1, K=2)
  AggregationFn any{AggKind::any_positive, 1};
  CHECK(aggregate({2, 1, 2}, any, 2, rng) == 1);
  CHECK(aggregate({2, 2, 2}, any, 2, rng) == 2);

  AggregationFn all{AggKind::unanimous_positive, 1};
  CHECK(aggregate({1, 2, 1}, all, 2, rng) == 2);
  CHECK(aggregate({1, 1, 1}, all, 2, rng) == 1);

  CHECK_THROWS_AS(aggregate({}, consensus, 2, rng), DomainError);
  CHECK_THROWS_AS(aggregate({1, 2}, any, 3, rng), DomainError);
}

TEST_CASE("two-way consensus ties split about evenly") {
  Rng rng(42);
  AggregationFn f{AggKind::consensus, 1};
  std::map<int, int> hits;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) ++hits[aggregate({1, 2, 1, 2}, f, 2, rng)];
  CHECK(std::abs(hits[1] / static_cast<double>(trials) - 0.5) < 0.02);
  CHECK(std::abs(hits[2] / static_cast<double>(trials) - 0.5) < 0.02);
}

TEST_CASE("duplicating the unique mode never changes the consensus") {
  Rng rng(5);
  AggregationFn f{AggKind::consensus, 1};
  Rng vote_rng(99);
  for (int rep = 0; rep < 300; ++rep) {
    const int k = 2 + static_cast<int>(vote_rng.uniform_int(3));
    std::vector<int> votes;
    const int n = 1 + static_cast<int>(vote_rng.uniform_int(7));
    for (int i = 0; i < n; ++i)
      votes.push_back(1 + static_cast<int>(vote_rng.uniform_int(static_cast<std::uint64_t>(k))));
    // find whether the mode is unique
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int v : votes) ++counts[static_cast<std::size_t>(v - 1)];
    const int best = *std::max_element(counts.begin(), counts.end());
    int n_best = 0, mode = 0;
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] == best) {
        ++n_best;
        mode = c + 1;
      }
    if (n_best != 1) continue;
    CHECK(aggregate(votes, f, k, rng) == mode);
    votes.push_back(mode);
    CHECK(aggregate(votes, f, k, rng) == mode);
  }
}

TEST_CASE("entropy of uniform and point-like distributions") {
  CHECK(entropy(ProbVec({0.5, 0.5})) == doctest::Approx(std::log(2.0)));
  const ProbVec p = ProbVec::floored({1.0, 0.0, 0.0});
  CHECK(entropy(p) == doctest::Approx(0.0).epsilon(1e-9));
}
