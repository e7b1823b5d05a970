#include "panel/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "panel/errors.hpp"
#include "panel/gaussian.hpp"
#include "panel/nuts.hpp"
#include "panel/posterior_model.hpp"
#include "panel/simplex.hpp"

namespace panel {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

class DensityAdapter final : public TargetDensity {
 public:
  explicit DensityAdapter(const ModelSpec& spec) : density_(spec) {}
  int dim() const override { return density_.dim(); }
  double logp_grad(const VectorXd& w, VectorXd& grad) override {
    return density_.logp_grad(w, grad);
  }
  PosteriorDensity& density() { return density_; }

 private:
  PosteriorDensity density_;
};

VectorXd random_init(const ModelSpec& spec, Rng& rng) {
  const int d = spec.panel_dim;
  VectorXd w(spec.unconstrained_dim());
  int pos = 0;
  for (int i = 0; i < d; ++i) w(pos++) = spec.hp.sigma_mu * rng.uniform(-1, 1);
  for (int i = 0; i < d; ++i)
    w(pos++) = std::log(spec.hp.sigma_sigma) + rng.uniform(-1, 1);
  for (int i = 0; i < spec.corr_pairs(); ++i) w(pos++) = rng.uniform(-0.5, 0.5);
  w(pos++) = std::log(spec.hp.sigma_tau) + rng.uniform(-1, 1);
  for (int i = 0; i < spec.n_latent; ++i) w(pos++) = rng.uniform(-1, 1);
  return w;
}

}  // namespace

void HyperParams::validate() const {
  if (!(sigma_mu > 0.0 && sigma_sigma > 0.0 && eta > 0.0 && sigma_tau > 0.0))
    throw DomainError("HyperParams: all scales must be positive");
}

MatrixXd PanelParams::covariance() const {
  return sigma.asDiagonal() * omega * sigma.asDiagonal();
}

void PanelParams::validate() const {
  const int d = dim();
  if (sigma.size() != d || omega.rows() != d || omega.cols() != d)
    throw DomainError("PanelParams: dimension mismatch");
  if (!(tau > 0.0)) throw DomainError("PanelParams: tau must be positive");
  for (int i = 0; i < d; ++i) {
    if (!(sigma(i) > 0.0)) throw DomainError("PanelParams: sigma must be positive");
    if (std::abs(omega(i, i) - 1.0) > 1e-9)
      throw DomainError("PanelParams: omega must have unit diagonal");
    for (int j = 0; j < i; ++j)
      if (std::abs(omega(i, j) - omega(j, i)) > 1e-9)
        throw DomainError("PanelParams: omega must be symmetric");
  }
  try {
    cholesky(omega);
  } catch (const NumericalError&) {
    throw DomainError("PanelParams: omega is not positive definite");
  }
}

std::vector<int> History::observed_counts() const {
  std::vector<int> counts(static_cast<std::size_t>(num_experts), 0);
  for (const auto& rec : records)
    for (int i : rec.observed) ++counts[static_cast<std::size_t>(i)];
  return counts;
}

void History::validate() const {
  if (num_classes < 2 || num_models < 1 || num_experts < 1)
    throw DomainError("History: need K >= 2, M >= 1, H >= 1");
  const int logit_len = (num_classes - 1) * num_models;
  for (const auto& rec : records) {
    if (rec.model_logits.size() != logit_len)
      throw DomainError("History: model_logits length mismatch");
    if (!rec.model_logits.allFinite())
      throw DomainError("History: model_logits must be finite");
    if (rec.observed.size() != rec.votes.size())
      throw DomainError("History: observed/votes length mismatch");
    int prev = -1;
    for (std::size_t q = 0; q < rec.observed.size(); ++q) {
      const int expert = rec.observed[q];
      if (expert <= prev || expert >= num_experts)
        throw DomainError("History: observed experts must be sorted and in range");
      prev = expert;
      const int vote = rec.votes[q];
      if (vote < 1 || vote > num_classes)
        throw DomainError("History: vote out of range");
    }
  }
}

void ChainConfig::validate() const {
  if (chains < 1 || warmup < 0 || draws < 1)
    throw DomainError("ChainConfig: bad chains/warmup/draws");
  if (window && *window < 1) throw DomainError("ChainConfig: window must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw DomainError("ChainConfig: target_accept must lie in (0, 1)");
  if (max_treedepth < 1) throw DomainError("ChainConfig: max_treedepth must be >= 1");
}

double PosteriorSampleSet::max_rhat() const {
  double worst = 1.0;
  for (const auto& [name, value] : rhat)
    if (std::isfinite(value)) worst = std::max(worst, value);
  return worst;
}

std::vector<int> PanelLayout::model_coords() const {
  std::vector<int> coords;
  for (int m = 0; m < num_models; ++m)
    for (int c = 0; c < block(); ++c) coords.push_back(model_coord(m, c));
  return coords;
}

double log_joint(const PanelParams& params, const std::vector<VectorXd>& latents,
                 const History& history, const HyperParams& hp) {
  params.validate();
  hp.validate();
  history.validate();
  const PanelLayout layout{history.num_classes, history.num_models,
                           history.num_experts};
  const int d = layout.dim();
  const int block = layout.block();
  if (params.dim() != d) throw DomainError("log_joint: params dimension mismatch");
  if (latents.size() != history.records.size())
    throw DomainError("log_joint: need one latent vector per record");

  double lp = 0.0;
  for (int i = 0; i < d; ++i) {
    lp += -0.5 * params.mu(i) * params.mu(i) / (hp.sigma_mu * hp.sigma_mu) -
          std::log(hp.sigma_mu) - 0.5 * kLog2Pi;
    lp += 0.5 * std::log(2.0 / M_PI) - std::log(hp.sigma_sigma) -
          0.5 * params.sigma(i) * params.sigma(i) / (hp.sigma_sigma * hp.sigma_sigma);
  }
  lp += 0.5 * std::log(2.0 / M_PI) - std::log(hp.sigma_tau) -
        0.5 * params.tau * params.tau / (hp.sigma_tau * hp.sigma_tau);
  const MatrixXd omega_chol = cholesky(params.omega);
  double logdet_omega = 0.0;
  for (int i = 0; i < d; ++i) logdet_omega += 2.0 * std::log(omega_chol(i, i));
  lp += (hp.eta - 1.0) * logdet_omega;

  // per record: restricted Gaussian over [latent expert logits; z_M] plus a
  // tempered-categorical factor per observed vote
  const MatrixXd cov = params.covariance();
  const std::vector<int> model_coords = layout.model_coords();
  for (std::size_t r = 0; r < history.records.size(); ++r) {
    const HistoryRecord& rec = history.records[r];
    const int n_obs = static_cast<int>(rec.observed.size());
    if (static_cast<int>(latents[r].size()) != block * n_obs)
      throw DomainError("log_joint: latent length mismatch for a record");
    if (n_obs > 0 && !latents[r].allFinite())
      throw DomainError("log_joint: latents must be finite");

    std::vector<int> coords;
    for (int q = 0; q < n_obs; ++q)
      for (int c = 0; c < block; ++c)
        coords.push_back(layout.expert_coord(rec.observed[static_cast<std::size_t>(q)], c));
    coords.insert(coords.end(), model_coords.begin(), model_coords.end());

    const int dr = static_cast<int>(coords.size());
    MatrixXd cov_rr(dr, dr);
    VectorXd diff(dr);
    for (int a = 0; a < dr; ++a) {
      const double x = a < block * n_obs
                           ? latents[r](a)
                           : rec.model_logits(a - block * n_obs);
      diff(a) = x - params.mu(coords[static_cast<std::size_t>(a)]);
      for (int b = 0; b < dr; ++b)
        cov_rr(a, b) = cov(coords[static_cast<std::size_t>(a)],
                           coords[static_cast<std::size_t>(b)]);
    }
    const MatrixXd chol = cholesky_jittered(cov_rr);
    const VectorXd v = chol.triangularView<Eigen::Lower>().solve(diff);
    double sum_logdiag = 0.0;
    for (int a = 0; a < dr; ++a) sum_logdiag += std::log(chol(a, a));
    lp += -0.5 * v.squaredNorm() - sum_logdiag - 0.5 * dr * kLog2Pi;

    for (int q = 0; q < n_obs; ++q)
      lp += log_temper_prob(latents[r].data() + q * block, history.num_classes,
                            params.tau, rec.votes[static_cast<std::size_t>(q)]);
  }
  return lp;
}

PosteriorSampleSet sample_posterior_spec(const ModelSpec& spec,
                                         const ChainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.chains < 2)
    throw DomainError("sample_posterior: need >= 2 chains for diagnostics");

  SamplerOptions opts;
  opts.warmup = cfg.warmup;
  opts.draws = cfg.draws;
  opts.target_accept = cfg.target_accept;
  opts.max_treedepth = cfg.max_treedepth;
  // dense metric over the global block (mu, log sigma, cpc, log tau); the
  // per-record latents keep a diagonal metric
  const int n_global = 2 * spec.panel_dim + spec.corr_pairs() + 1;
  if (n_global <= 200) opts.dense_block = n_global;

  std::vector<ChainResult> results(static_cast<std::size_t>(cfg.chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));

  auto run_chain = [&](int chain) {
    try {
      Rng chain_rng = rng.derive("chain", static_cast<std::uint64_t>(chain));
      DensityAdapter target(spec);
      VectorXd init;
      VectorXd grad(target.dim());
      bool ok = false;
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        init = random_init(spec, chain_rng);
        ok = std::isfinite(target.logp_grad(init, grad));
      }
      if (!ok)
        throw SamplerError(
            "sample_posterior: could not find a finite initial state",
            std::vector<double>(init.data(), init.data() + init.size()));
      results[static_cast<std::size_t>(chain)] =
          cfg.algorithm == ChainConfig::Algorithm::nuts
              ? run_nuts(target, init, opts, chain_rng)
              : run_rwm(target, init, opts, chain_rng);
    } catch (...) {
      errors[static_cast<std::size_t>(chain)] = std::current_exception();
    }
  };

  if (cfg.parallel_chains && cfg.chains > 1) {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(cfg.chains));
    for (int c = 0; c < cfg.chains; ++c) threads.emplace_back(run_chain, c);
    for (auto& t : threads) t.join();
  } else {
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  }
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);

  PosteriorDensity density(spec);
  PosteriorSampleSet out;
  out.chains = cfg.chains;
  out.warmup = cfg.warmup;
  out.samples.reserve(static_cast<std::size_t>(cfg.chains * cfg.draws));
  for (const auto& chain : results) {
    out.divergences += chain.divergences;
    for (const auto& w : chain.draws) out.samples.push_back(density.constrain(w));
  }

  const std::vector<std::string> names = density.coordinate_names();
  const int dim = density.dim();
  std::vector<std::vector<double>> traces(static_cast<std::size_t>(cfg.chains));
  for (int coord = 0; coord < dim; ++coord) {
    for (int c = 0; c < cfg.chains; ++c) {
      auto& trace = traces[static_cast<std::size_t>(c)];
      trace.clear();
      for (const auto& w : results[static_cast<std::size_t>(c)].draws)
        trace.push_back(w(coord));
    }
    out.rhat.emplace_back(names[static_cast<std::size_t>(coord)], rhat(traces));
  }
  return out;
}

PosteriorSampleSet sample_posterior(const History& history, const HyperParams& hp,
                                    const ChainConfig& cfg, Rng& rng) {
  const ModelSpec spec = build_full_spec(history, hp);
  return sample_posterior_spec(spec, cfg, rng);
}

bool should_refit(int t, std::optional<int> window) {
  if (t < 1) throw DomainError("should_refit: t must be >= 1");
  if (window) return true;  // sliding window refits after every example
  if (t <= 20) return true;
  if (t <= 100 && t % 10 == 0) return true;
  return t % 50 == 0;
}

double rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw DomainError("rhat: need >= 2 chains");
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw DomainError("rhat: need >= 4 draws per chain");

  // split each chain in half
  const std::size_t half = n / 2;
  std::vector<std::pair<double, double>> stats;  // (mean, var) per sequence
  for (const auto& chain : chains) {
    for (int part = 0; part < 2; ++part) {
      const std::size_t begin = part == 0 ? 0 : n - half;
      double mean = 0.0;
      for (std::size_t i = 0; i < half; ++i) mean += chain[begin + i];
      mean /= static_cast<double>(half);
      double var = 0.0;
      for (std::size_t i = 0; i < half; ++i) {
        const double dd = chain[begin + i] - mean;
        var += dd * dd;
      }
      var /= static_cast<double>(half - 1);
      stats.emplace_back(mean, var);
    }
  }
  const double m = static_cast<double>(stats.size());
  double grand = 0.0, w = 0.0;
  for (const auto& [mean, var] : stats) {
    grand += mean;
    w += var;
  }
  grand /= m;
  w /= m;
  double b = 0.0;
  for (const auto& [mean, var] : stats) b += (mean - grand) * (mean - grand);
  b *= static_cast<double>(half) / (m - 1.0);

  if (w <= 0.0) {
    if (b <= 1e-300) return 1.0;  // identical constant chains
    return std::numeric_limits<double>::infinity();
  }
  const double nn = static_cast<double>(half);
  const double var_plus = (nn - 1.0) / nn * w + b / nn;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw DomainError("ess: need >= 1 chain");
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw DomainError("ess: need >= 4 draws per chain");
  const std::size_t m = chains.size();

  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += chains[c][i];
    mean /= static_cast<double>(n);
    means[c] = mean;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dd = chains[c][i] - mean;
      var += dd * dd;
    }
    vars[c] = var / static_cast<double>(n - 1);
  }
  double w = 0.0;
  for (double v : vars) w += v;
  w /= static_cast<double>(m);
  double grand = 0.0;
  for (double x : means) grand += x;
  grand /= static_cast<double>(m);
  double b = 0.0;
  if (m > 1) {
    for (double x : means) b += (x - grand) * (x - grand);
    b *= static_cast<double>(n) / (static_cast<double>(m) - 1.0);
  }
  const double var_plus =
      (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w +
      (m > 1 ? b / static_cast<double>(n) : 0.0);
  if (var_plus <= 0.0) return static_cast<double>(n * m);

  auto autocov = [&](std::size_t chain, std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i)
      acc += (chains[chain][i] - means[chain]) * (chains[chain][i + lag] - means[chain]);
    return acc / static_cast<double>(n);
  };

  // Geyer initial monotone sequence over paired lags
  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t lag = 1; lag + 1 < n; lag += 2) {
    double rho_a = 0.0, rho_b = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      rho_a += autocov(c, lag);
      rho_b += autocov(c, lag + 1);
    }
    rho_a = 1.0 - (w - rho_a / static_cast<double>(m)) / var_plus;
    rho_b = 1.0 - (w - rho_b / static_cast<double>(m)) / var_plus;
    double pair = rho_a + rho_b;
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  return static_cast<double>(n * m) / tau;
}

}  // namespace panel
