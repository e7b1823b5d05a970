#pragma once

#include <optional>
#include <vector>

#include "panel/model.hpp"
#include "panel/rng.hpp"

namespace panel {

// Joint log density of the full model at constrained values: log priors on
// (mu, sigma, Omega, tau) plus, per record, the restricted-Gaussian likelihood
// of [latent logits of voted experts; observed classifier logits] and the
// tempered-categorical probability of each observed vote. `latents` carries
// one vector of length (K-1)*|O_t| per record (empty for vote-free records,
// whose latent logits integrate out exactly). The LKJ factor is the kernel
// (eta - 1) * log det Omega; Gaussian and half-normal factors include their
// normalizing constants.
double log_joint(const PanelParams& params,
                 const std::vector<VectorXd>& latents, const History& history,
                 const HyperParams& hp);

// MCMC over (mu, sigma, Omega, tau, per-record latents). NUTS with dual
// averaging and diagonal mass adaptation by default; an adaptive random-walk
// fallback is available for debugging via ChainConfig::algorithm.
PosteriorSampleSet sample_posterior(const History& history,
                                    const HyperParams& hp,
                                    const ChainConfig& cfg, Rng& rng);

// Online update schedule: every example through t=20, every 10th through
// t=100, every 50th after; sliding-window mode refits after every example.
bool should_refit(int t, std::optional<int> window = std::nullopt);

// Split-R-hat over >= 2 chains of scalar draws; 1.0 by convention when every
// chain is the same constant.
double rhat(const std::vector<std::vector<double>>& chains);

// Effective sample size across chains (Geyer initial-monotone estimator).
double effective_sample_size(const std::vector<std::vector<double>>& chains);

}  // namespace panel
