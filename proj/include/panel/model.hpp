#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace panel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Prior scales: mu ~ N(0, sigma_mu^2 I), sigma ~ |N|(0, sigma_sigma) per
// coordinate, Omega ~ LKJ(eta), tau ~ |N|(0, sigma_tau).
struct HyperParams {
  double sigma_mu = 0.1;
  double sigma_sigma = 1.0;
  double eta = 0.75;
  double sigma_tau = 0.4;

  void validate() const;
};

// Global panel parameters. The joint covariance of the stacked agent logits
// is Sigma = diag(sigma) * Omega * diag(sigma).
struct PanelParams {
  VectorXd mu;
  VectorXd sigma;
  MatrixXd omega;
  double tau = 1.0;

  int dim() const { return static_cast<int>(mu.size()); }
  MatrixXd covariance() const;
  void validate() const;
};

// One processed example as seen by the model: observed classifier logits and
// the votes of the experts that were actually queried.
struct HistoryRecord {
  VectorXd model_logits;      // (K-1)*M, classifier blocks stacked
  std::vector<int> observed;  // 0-based expert indices, strictly increasing
  std::vector<int> votes;     // parallel to observed, 1-based classes
};

// The growing dataset D, in arrival order.
struct History {
  int num_classes = 0;
  int num_models = 0;
  int num_experts = 0;
  std::vector<HistoryRecord> records;

  int panel_dim() const {
    return (num_classes - 1) * (num_models + num_experts);
  }
  std::vector<int> observed_counts() const;  // queries per expert
  void validate() const;
};

struct ChainConfig {
  int chains = 3;
  int warmup = 500;
  int draws = 500;
  std::uint64_t seed = 1;
  std::optional<int> window;  // sliding-window size used by the harness
  double target_accept = 0.8;
  int max_treedepth = 10;
  bool parallel_chains = true;
  enum class Algorithm { nuts, rwm } algorithm = Algorithm::nuts;

  void validate() const;
};

// MCMC draws of the global parameters with convergence diagnostics.
struct PosteriorSampleSet {
  std::vector<PanelParams> samples;  // chain-major, post-warmup only
  int chains = 0;
  int warmup = 0;
  std::vector<std::pair<std::string, double>> rhat;  // per scalar parameter
  int divergences = 0;

  double max_rhat() const;
};

// Coordinate layout of the stacked logit vector: expert blocks first, then
// classifier blocks, each of width K-1 (matching the (z_H; z_M) stacking).
struct PanelLayout {
  int num_classes = 0;
  int num_models = 0;
  int num_experts = 0;

  int block() const { return num_classes - 1; }
  int dim() const { return block() * (num_models + num_experts); }
  int expert_coord(int expert, int c) const { return expert * block() + c; }
  int model_coord(int model, int c) const {
    return (num_experts + model) * block() + c;
  }
  std::vector<int> model_coords() const;
};

}  // namespace panel
