#pragma once

#include <map>
#include <vector>

#include "panel/rng.hpp"

namespace panel {

// Distribution over consensus-set sizes n_c for a panel of H experts.
struct ConsensusSizeDist {
  int num_experts = 0;
  std::map<int, double> pmf;  // n_c -> probability

  double expected_size() const;
  void validate() const;                 // support in [1, H], sums to 1
  void require_strict_majority() const;  // pmf zero at or below floor(H/2)
};

// Full panel votes for T examples (1-based class labels).
struct VotePopulation {
  int num_classes = 0;
  std::vector<std::vector<int>> votes;  // T rows of H entries

  int num_experts() const {
    return votes.empty() ? 0 : static_cast<int>(votes.front().size());
  }
  void validate() const;
};

struct ConsensusSizeResult {
  ConsensusSizeDist dist;
  int ties_excluded = 0;
  int total_examples = 0;
};

struct SimulatedError {
  double error = 0.0;
  double std_error = 0.0;
  long trials = 0;
};

// Error rate of predicting the panel consensus from 1 or 2 random experts:
// 1 - E[n_c] / H.
double err_random_1or2(const ConsensusSizeDist& d);

// Left-tail hypergeometric CDF P(X <= r) for X = number of consensus experts
// in a sample of n_q drawn without replacement from H experts of which n_c
// are in the consensus set. Stable via log-gamma binomials; r = -1 gives 0.
double hypergeom_cdf(int r, int total, int consensus_size, int draws);

// Error rate of querying n_q (odd) random experts under the strict-majority
// and single-dissent-class assumptions: sum_nc p(n_c) F_HG(floor(n_q/2)).
double err_random_nq(const ConsensusSizeDist& d, int num_queried);

// Closed forms for the 3-expert equicorrelated-Gaussian voter model.
double equicorr3_orthant(double rho);         // 1/8 + 3 arcsin(rho) / (4 pi)
double equicorr3_expected_nc(double rho);     // 2 + 2 * orthant
double err_equicorrelated_3(double rho);      // 0.25 - arcsin(rho) / (2 pi)

struct ArcsinBounds {
  double lower;
  double exact;
  double upper;
};
// rho (1 + rho^2/6) < arcsin(rho) < rho (1 + (pi-2)/2 rho^2) on (0, 1).
ArcsinBounds arcsin_bound_check(double rho);

// Empirical distribution of consensus-set sizes. Examples whose vote mode is
// tied are excluded and counted; a population that is all ties is an error.
ConsensusSizeResult consensus_size_dist(const VotePopulation& pop);

// Monte-Carlo estimate of P(consensus of n_q random experts != panel
// consensus), subset ties broken uniformly. Tied-panel examples are excluded,
// matching consensus_size_dist.
SimulatedError simulate_random_error(const VotePopulation& pop, int num_queried,
                                     long trials, Rng& rng);

}  // namespace panel
