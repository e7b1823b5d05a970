#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "panel/errors.hpp"
#include "panel/posterior.hpp"
#include "panel/posterior_model.hpp"
#include "panel/simplex.hpp"

using namespace panel;

namespace {

// Small history exercising every density term: partial votes, a vote-free
// record, and multiple patterns.
History make_history(int k, int m, int h, int records, Rng& rng) {
  History hist;
  hist.num_classes = k;
  hist.num_models = m;
  hist.num_experts = h;
  for (int t = 0; t < records; ++t) {
    HistoryRecord rec;
    rec.model_logits = VectorXd((k - 1) * m);
    for (int i = 0; i < rec.model_logits.size(); ++i)
      rec.model_logits(i) = rng.uniform(-1.5, 1.5);
    for (int expert = 0; expert < h; ++expert) {
      if (t > 0 && rng.uniform01() < 0.45) continue;
      rec.observed.push_back(expert);
      rec.votes.push_back(1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k))));
    }
    hist.records.push_back(std::move(rec));
  }
  return hist;
}

VectorXd random_point(const ModelSpec& spec, Rng& rng) {
  VectorXd w(spec.unconstrained_dim());
  for (int i = 0; i < w.size(); ++i) w(i) = rng.uniform(-0.8, 0.8);
  return w;
}

}  // namespace

TEST_CASE("analytic gradient matches central finite differences") {
  Rng data_rng(2024);
  const History hist = make_history(3, 1, 3, 5, data_rng);
  HyperParams hp;
  const ModelSpec spec = build_full_spec(hist, hp);
  PosteriorDensity density(spec);

  Rng rng(7);
  const double step = 1e-5;
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    VectorXd w = random_point(spec, rng);
    VectorXd grad(density.dim());
    const double lp = density.logp_grad(w, grad);
    REQUIRE(std::isfinite(lp));
    for (int i = 0; i < density.dim(); ++i) {
      VectorXd wp = w, wm = w;
      wp(i) += step;
      wm(i) -= step;
      const double fd = (density.logp(wp) - density.logp(wm)) / (2.0 * step);
      const double err = std::abs(fd - grad(i));
      const double tol = 1e-4 * std::max({1.0, std::abs(fd), std::abs(grad(i))});
      if (err >= tol) {
        CAPTURE(rep);
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(grad(i));
      }
      REQUIRE(err < tol);
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("gradient also matches for the exchangeable reduction") {
  Rng data_rng(11);
  const History hist = make_history(2, 1, 4, 6, data_rng);
  HyperParams hp;
  const ModelSpec spec = build_exchangeable_spec(hist, hp);
  PosteriorDensity density(spec);

  Rng rng(13);
  const double step = 1e-5;
  for (int rep = 0; rep < 25; ++rep) {
    VectorXd w = random_point(spec, rng);
    VectorXd grad(density.dim());
    REQUIRE(std::isfinite(density.logp_grad(w, grad)));
    for (int i = 0; i < density.dim(); ++i) {
      VectorXd wp = w, wm = w;
      wp(i) += step;
      wm(i) -= step;
      const double fd = (density.logp(wp) - density.logp(wm)) / (2.0 * step);
      REQUIRE(std::abs(fd - grad(i)) <
              1e-4 * std::max({1.0, std::abs(fd), std::abs(grad(i))}));
    }
  }
}

TEST_CASE("log_joint: empty history reduces to the prior") {
  History hist;
  hist.num_classes = 2;
  hist.num_models = 1;
  hist.num_experts = 1;
  HyperParams hp;

  PanelParams params;
  params.mu = VectorXd::Zero(2);
  params.sigma = VectorXd::Ones(2);
  params.omega = MatrixXd::Identity(2, 2);
  params.tau = 0.5;

  const double base = log_joint(params, {}, hist, hp);
  // increasing |mu| strictly decreases the prior density
  PanelParams shifted = params;
  shifted.mu(0) = 0.2;
  CHECK(log_joint(shifted, {}, hist, hp) < base);
  shifted.mu(0) = -0.4;
  CHECK(log_joint(shifted, {}, hist, hp) < base);
}

TEST_CASE("log_joint: a single observed vote contributes exactly its log probability") {
  History hist;
  hist.num_classes = 2;
  hist.num_models = 1;
  hist.num_experts = 2;
  HistoryRecord rec;
  rec.model_logits = VectorXd::Constant(1, 0.3);
  rec.observed = {1};
  rec.votes = {1};
  hist.records.push_back(rec);

  HyperParams hp;
  PanelParams params;
  params.mu = VectorXd::Zero(3);
  params.sigma = VectorXd::Ones(3);
  params.omega = MatrixXd::Identity(3, 3);
  params.tau = 0.7;

  VectorXd latent(1);
  latent << 0.9;
  const double with_vote1 = log_joint(params, {latent}, hist, hp);
  hist.records.front().votes = {2};
  const double with_vote2 = log_joint(params, {latent}, hist, hp);

  const double z[] = {0.9};
  const double expected = log_temper_prob(z, 2, params.tau, 1) -
                          log_temper_prob(z, 2, params.tau, 2);
  CHECK(with_vote1 - with_vote2 == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_joint matches a from-scratch scalar oracle (K=2, H=1, M=1)") {
  // Oracle written directly from the model statement with explicit 2x2
  // algebra; shares no code with the implementation.
  History hist;
  hist.num_classes = 2;
  hist.num_models = 1;
  hist.num_experts = 1;
  Rng rng(5);
  std::vector<double> latent_values;
  for (int t = 0; t < 5; ++t) {
    HistoryRecord rec;
    rec.model_logits = VectorXd::Constant(1, rng.uniform(-1, 1));
    rec.observed = {0};
    rec.votes = {1 + static_cast<int>(rng.uniform_int(2))};
    hist.records.push_back(rec);
    latent_values.push_back(rng.uniform(-1, 1));
  }
  HyperParams hp;

  auto oracle = [&](double mu0, double mu1, double s0, double s1, double rho,
                    double tau) {
    double lp = 0.0;
    const double log2pi = std::log(2.0 * M_PI);
    // priors
    for (double mu : {mu0, mu1})
      lp += -0.5 * mu * mu / (hp.sigma_mu * hp.sigma_mu) -
            std::log(hp.sigma_mu) - 0.5 * log2pi;
    for (double s : {s0, s1})
      lp += 0.5 * std::log(2.0 / M_PI) - std::log(hp.sigma_sigma) -
            0.5 * s * s / (hp.sigma_sigma * hp.sigma_sigma);
    lp += 0.5 * std::log(2.0 / M_PI) - std::log(hp.sigma_tau) -
          0.5 * tau * tau / (hp.sigma_tau * hp.sigma_tau);
    lp += (hp.eta - 1.0) * std::log(1.0 - rho * rho);  // det of 2x2 correlation
    // records: bivariate normal over (z_expert, z_model) plus Bernoulli vote
    const double v00 = s0 * s0, v11 = s1 * s1, v01 = rho * s0 * s1;
    const double det = v00 * v11 - v01 * v01;
    for (std::size_t t = 0; t < latent_values.size(); ++t) {
      const double a = latent_values[t] - mu0;
      const double b = hist.records[t].model_logits(0) - mu1;
      const double quad = (v11 * a * a - 2.0 * v01 * a * b + v00 * b * b) / det;
      lp += -0.5 * quad - 0.5 * std::log(det) - log2pi;
      const double p1 = 1.0 / (1.0 + std::exp(-latent_values[t] / tau));
      lp += hist.records[t].votes[0] == 1 ? std::log(p1) : std::log(1.0 - p1);
    }
    return lp;
  };

  Rng grid(9);
  for (int rep = 0; rep < 50; ++rep) {
    PanelParams params;
    params.mu = VectorXd(2);
    params.mu << grid.uniform(-0.3, 0.3), grid.uniform(-0.3, 0.3);
    params.sigma = VectorXd(2);
    params.sigma << grid.uniform(0.4, 2.0), grid.uniform(0.4, 2.0);
    const double rho = grid.uniform(-0.8, 0.8);
    params.omega = MatrixXd(2, 2);
    params.omega << 1.0, rho, rho, 1.0;
    params.tau = grid.uniform(0.3, 2.0);

    std::vector<VectorXd> latents;
    for (double z : latent_values) latents.push_back(VectorXd::Constant(1, z));

    const double got = log_joint(params, latents, hist, hp);
    const double want = oracle(params.mu(0), params.mu(1), params.sigma(0),
                               params.sigma(1), rho, params.tau);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("log_joint is invariant under record permutation") {
  Rng rng(33);
  History hist = make_history(3, 1, 2, 6, rng);
  HyperParams hp;
  PanelParams params;
  const int d = hist.panel_dim();
  params.mu = VectorXd::Zero(d);
  params.sigma = VectorXd::Ones(d);
  params.omega = MatrixXd::Identity(d, d);
  params.tau = 0.8;

  std::vector<VectorXd> latents;
  Rng lrng(41);
  for (const auto& rec : hist.records) {
    VectorXd z(2 * static_cast<int>(rec.observed.size()));
    for (int i = 0; i < z.size(); ++i) z(i) = lrng.uniform(-1, 1);
    latents.push_back(z);
  }
  const double base = log_joint(params, latents, hist, hp);

  // rotate records and latents together
  std::rotate(hist.records.begin(), hist.records.begin() + 2, hist.records.end());
  std::rotate(latents.begin(), latents.begin() + 2, latents.end());
  CHECK(log_joint(params, latents, hist, hp) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("log_joint rejects invalid parameters") {
  History hist;
  hist.num_classes = 2;
  hist.num_models = 1;
  hist.num_experts = 1;
  HyperParams hp;
  PanelParams params;
  params.mu = VectorXd::Zero(2);
  params.sigma = VectorXd::Ones(2);
  params.omega = MatrixXd::Identity(2, 2);
  params.tau = -1.0;
  CHECK_THROWS_AS(log_joint(params, {}, hist, hp), DomainError);
  params.tau = 1.0;
  params.sigma(0) = 0.0;
  CHECK_THROWS_AS(log_joint(params, {}, hist, hp), DomainError);
  params.sigma(0) = 1.0;
  params.omega(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(log_joint(params, {}, hist, hp), DomainError);
}

TEST_CASE("should_refit follows the published schedule") {
  CHECK(should_refit(1));
  CHECK(should_refit(7));
  CHECK(should_refit(20));
  CHECK_FALSE(should_refit(21));
  CHECK(should_refit(30));
  CHECK_FALSE(should_refit(95));
  CHECK(should_refit(100));
  CHECK_FALSE(should_refit(101));
  CHECK_FALSE(should_refit(110));
  CHECK(should_refit(150));
  CHECK_FALSE(should_refit(149));
  CHECK(should_refit(137, 50));   // window mode refits every example
  CHECK(should_refit(2, 10));
  CHECK_THROWS_AS(should_refit(0), DomainError);
}

TEST_CASE("rhat conventions and golden behaviors") {
  // identical constant chains
  std::vector<std::vector<double>> constant(2, std::vector<double>(100, 3.5));
  CHECK(rhat(constant) == doctest::Approx(1.0));

  // iid chains from the same normal
  Rng rng(55);
  std::vector<std::vector<double>> iid(3);
  for (auto& chain : iid)
    for (int i = 0; i < 10000; ++i) chain.push_back(rng.normal());
  CHECK(rhat(iid) == doctest::Approx(1.0).epsilon(0.01));

  // chains centered at 0 and 10
  std::vector<std::vector<double>> split(2);
  Rng rng2(56);
  for (int i = 0; i < 1000; ++i) {
    split[0].push_back(rng2.normal());
    split[1].push_back(10.0 + rng2.normal());
  }
  CHECK(rhat(split) > 1.5);

  CHECK_THROWS_AS(rhat({{1.0, 2.0, 3.0, 4.0}}), DomainError);
  CHECK_THROWS_AS(rhat({{1.0, 2.0}, {1.0, 2.0}}), DomainError);
}

TEST_CASE("effective sample size is sane for iid draws") {
  Rng rng(77);
  std::vector<std::vector<double>> iid(2);
  for (auto& chain : iid)
    for (int i = 0; i < 4000; ++i) chain.push_back(rng.normal());
  const double ess = effective_sample_size(iid);
  CHECK(ess > 4000.0);
  CHECK(ess <= 8000.0 * 1.3);
}
