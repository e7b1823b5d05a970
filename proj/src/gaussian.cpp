#include "panel/gaussian.hpp"

#include <algorithm>
#include <cmath>

#include "panel/errors.hpp"

namespace panel {

void Gaussian::validate() const {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw DomainError("Gaussian: dimension mismatch");
  for (int i = 0; i < cov.rows(); ++i)
    for (int j = 0; j < i; ++j)
      if (std::abs(cov(i, j) - cov(j, i)) > 1e-9)
        throw DomainError("Gaussian: covariance not symmetric");
  cholesky(cov);
}

IndexPartition IndexPartition::from_observed(int dim, std::vector<int> observed) {
  std::sort(observed.begin(), observed.end());
  IndexPartition part;
  part.observed = std::move(observed);
  std::size_t next = 0;
  for (int i = 0; i < dim; ++i) {
    if (next < part.observed.size() && part.observed[next] == i) {
      ++next;
    } else {
      part.unobserved.push_back(i);
    }
  }
  part.validate(dim);
  return part;
}

void IndexPartition::validate(int dim) const {
  std::vector<char> seen(static_cast<std::size_t>(dim), 0);
  auto mark = [&](const std::vector<int>& idx) {
    for (int i : idx) {
      if (i < 0 || i >= dim) throw DomainError("IndexPartition: index out of range");
      if (seen[static_cast<std::size_t>(i)]++)
        throw DomainError("IndexPartition: sets not disjoint");
    }
  };
  mark(observed);
  mark(unobserved);
  if (static_cast<int>(observed.size() + unobserved.size()) != dim)
    throw DomainError("IndexPartition: union must cover all coordinates");
}

MatrixXd cholesky(const MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  if (m.cols() != n) throw DomainError("cholesky: matrix must be square");
  MatrixXd L = MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = m(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericalError("cholesky: non-positive pivot", j);
    d = std::sqrt(d);
    L(j, j) = d;
    for (int i = j + 1; i < n; ++i)
      L(i, j) = (m(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / d;
  }
  return L;
}

MatrixXd cholesky_jittered(const MatrixXd& m) {
  try {
    return cholesky(m);
  } catch (const NumericalError&) {
    MatrixXd jittered = m;
    jittered.diagonal().array() += 1e-9;
    return cholesky(jittered);
  }
}

Gaussian condition(const Gaussian& g, const IndexPartition& part,
                   const VectorXd& observed_values) {
  part.validate(g.dim());
  if (static_cast<int>(part.observed.size()) != observed_values.size())
    throw DomainError("condition: observed_values length mismatch");
  if (part.observed.empty()) return g;

  const int no = static_cast<int>(part.observed.size());
  const int nu = static_cast<int>(part.unobserved.size());

  MatrixXd cov_oo(no, no), cov_uo(nu, no), cov_uu(nu, nu);
  VectorXd mean_o(no), mean_u(nu);
  for (int a = 0; a < no; ++a) {
    mean_o(a) = g.mean(part.observed[a]);
    for (int b = 0; b < no; ++b) cov_oo(a, b) = g.cov(part.observed[a], part.observed[b]);
  }
  for (int a = 0; a < nu; ++a) {
    mean_u(a) = g.mean(part.unobserved[a]);
    for (int b = 0; b < no; ++b) cov_uo(a, b) = g.cov(part.unobserved[a], part.observed[b]);
    for (int b = 0; b < nu; ++b) cov_uu(a, b) = g.cov(part.unobserved[a], part.unobserved[b]);
  }

  MatrixXd chol_oo;
  try {
    chol_oo = cholesky_jittered(cov_oo);
  } catch (const NumericalError& e) {
    throw NumericalError("condition: observed block is singular", e.pivot());
  }

  // B = L^-1 Sigma_OU, so Sigma_UO Sigma_OO^-1 Sigma_OU = B^T B
  MatrixXd b = chol_oo.triangularView<Eigen::Lower>().solve(cov_uo.transpose());
  VectorXd w = chol_oo.triangularView<Eigen::Lower>().solve(observed_values - mean_o);

  Gaussian out;
  out.mean = mean_u + b.transpose() * w;
  MatrixXd cc = cov_uu - b.transpose() * b;
  out.cov = 0.5 * (cc + cc.transpose());
  return out;
}

VectorXd sample(const Gaussian& g, Rng& rng) {
  const MatrixXd chol = cholesky_jittered(g.cov);
  VectorXd eps(g.dim());
  for (int i = 0; i < g.dim(); ++i) eps(i) = rng.normal();
  return g.mean + chol * eps;
}

MatrixXd equicorrelated_cov(int dim, double rho) {
  if (dim < 1) throw DomainError("equicorrelated_cov: dim must be >= 1");
  if (!(rho >= 0.0 && rho < 1.0))
    throw DomainError("equicorrelated_cov: rho must lie in [0, 1)");
  MatrixXd m = MatrixXd::Constant(dim, dim, rho);
  m.diagonal().setOnes();
  return m;
}

}  // namespace panel
