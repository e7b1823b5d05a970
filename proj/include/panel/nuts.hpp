#pragma once

#include <Eigen/Dense>
#include <vector>

#include "panel/rng.hpp"

namespace panel {

using Eigen::VectorXd;

// Differentiable unnormalized log density. Implementations may return -inf
// for numerically invalid states; the samplers treat such states as rejected.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;
  virtual int dim() const = 0;
  virtual double logp_grad(const VectorXd& w, VectorXd& grad) = 0;
};

struct SamplerOptions {
  int warmup = 500;
  int draws = 500;
  double target_accept = 0.8;
  int max_treedepth = 10;
  // leading coordinates that share a dense inverse-mass block (the global
  // parameters); the remainder stays diagonal. 0 disables.
  int dense_block = 0;
};

struct ChainResult {
  std::vector<VectorXd> draws;  // post-warmup states
  int divergences = 0;          // post-warmup divergent transitions
  double step_size = 0.0;
  VectorXd inv_mass;
  long gradient_evals = 0;
};

// No-U-turn sampler with slice sampling over trajectories, dual-averaging
// step-size adaptation, and windowed diagonal mass-matrix estimation.
ChainResult run_nuts(TargetDensity& target, const VectorXd& init,
                     const SamplerOptions& opts, Rng& rng);

// Adaptive random-walk Metropolis (debug fallback): per-coordinate scales
// adapted toward a 0.234 acceptance rate during warmup.
ChainResult run_rwm(TargetDensity& target, const VectorXd& init,
                    const SamplerOptions& opts, Rng& rng);

}  // namespace panel
