#pragma once

#include <Eigen/Dense>
#include <vector>

#include "panel/rng.hpp"

namespace panel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Dense multivariate normal.
struct Gaussian {
  VectorXd mean;
  MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;  // symmetry within 1e-9, SPD via Cholesky
};

// Disjoint observed/unobserved coordinate sets covering 0..d-1.
struct IndexPartition {
  std::vector<int> observed;
  std::vector<int> unobserved;

  static IndexPartition from_observed(int dim, std::vector<int> observed);
  void validate(int dim) const;
};

// Lower-triangular factor L with L * L^T = m. Throws NumericalError with the
// index of the first non-positive pivot if m is not positive definite.
MatrixXd cholesky(const MatrixXd& m);

// cholesky with the module's jitter policy: on failure add 1e-9 I and retry
// once; a second failure is a hard error.
MatrixXd cholesky_jittered(const MatrixXd& m);

// Exact conditional distribution over the unobserved coordinates given
// values for the observed ones. The conditional covariance is re-symmetrized.
Gaussian condition(const Gaussian& g, const IndexPartition& part,
                   const VectorXd& observed_values);

// One draw mean + L * eps with eps iid standard normal.
VectorXd sample(const Gaussian& g, Rng& rng);

// Unit-variance matrix with constant off-diagonal correlation rho in [0, 1).
MatrixXd equicorrelated_cov(int dim, double rho);

}  // namespace panel
