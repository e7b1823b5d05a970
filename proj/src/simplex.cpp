#include "panel/simplex.hpp"

#include <algorithm>
#include <cmath>

#include "panel/errors.hpp"

namespace panel {

namespace {

void check_prob_entries(const std::vector<double>& v) {
  if (v.size() < 2) throw DomainError("ProbVec: need at least 2 classes");
  double sum = 0.0;
  for (double x : v) {
    if (!(x > 0.0) || !std::isfinite(x))
      throw DomainError("ProbVec: entries must be strictly positive");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DomainError("ProbVec: entries must sum to 1");
}

}  // namespace

ProbVec::ProbVec(std::vector<double> values) : v_(std::move(values)) {
  check_prob_entries(v_);
}

ProbVec ProbVec::floored(std::vector<double> values, double floor,
                         int* clamped) {
  if (values.size() < 2) throw DomainError("ProbVec: need at least 2 classes");
  int n_clamped = 0;
  double sum = 0.0;
  for (double& x : values) {
    if (!std::isfinite(x) || x < 0.0)
      throw DomainError("ProbVec: entries must be finite and nonnegative");
    if (x < floor) {
      x = floor;
      ++n_clamped;
    }
    sum += x;
  }
  for (double& x : values) x /= sum;
  if (clamped) *clamped = n_clamped;
  return ProbVec(std::move(values));
}

LogitVec::LogitVec(std::vector<double> values) : v_(std::move(values)) {
  if (v_.empty()) throw DomainError("LogitVec: need at least 1 entry (K >= 2)");
  for (double x : v_)
    if (!std::isfinite(x)) throw DomainError("LogitVec: entries must be finite");
}

void AggregationFn::validate(int num_classes) const {
  if (num_classes < 2) throw DomainError("AggregationFn: K must be >= 2");
  if (kind != AggKind::consensus) {
    if (num_classes != 2)
      throw DomainError("AggregationFn: any/unanimous require K = 2");
    if (positive_class < 1 || positive_class > 2)
      throw DomainError("AggregationFn: positive_class out of range");
  }
}

LogitVec to_logits(const ProbVec& theta) {
  const int k = theta.k();
  std::vector<double> z(static_cast<std::size_t>(k - 1));
  const double ref = theta[k - 1];
  for (int i = 0; i < k - 1; ++i) z[static_cast<std::size_t>(i)] = std::log(theta[i] / ref);
  return LogitVec(std::move(z));
}

ProbVec from_logits_impl(const double* z, int k) {
  std::vector<double> p(static_cast<std::size_t>(k));
  temper_into(z, k, 1.0, p.data());
  return ProbVec(std::move(p), ProbVec::Unchecked{});
}

ProbVec from_logits(const LogitVec& z) {
  return from_logits_impl(z.values().data(), z.k());
}

ProbVec temper(const LogitVec& z, double tau) {
  if (!(tau > 0.0)) throw DomainError("temper: tau must be positive");
  std::vector<double> p(static_cast<std::size_t>(z.k()));
  temper_into(z.values().data(), z.k(), tau, p.data());
  return ProbVec(p);
}

void temper_into(const double* z, int num_classes, double tau, double* out) {
  // softmax((z_1/tau, ..., z_{K-1}/tau, 0)) with max-shift
  double vmax = 0.0;
  for (int i = 0; i < num_classes - 1; ++i) vmax = std::max(vmax, z[i] / tau);
  double sum = 0.0;
  for (int i = 0; i < num_classes - 1; ++i) {
    out[i] = std::exp(z[i] / tau - vmax);
    sum += out[i];
  }
  out[num_classes - 1] = std::exp(-vmax);
  sum += out[num_classes - 1];
  for (int i = 0; i < num_classes; ++i) out[i] /= sum;
}

double log_temper_prob(const double* z, int num_classes, double tau, int vote) {
  double vmax = 0.0;
  for (int i = 0; i < num_classes - 1; ++i) vmax = std::max(vmax, z[i] / tau);
  double lse = std::exp(-vmax);
  for (int i = 0; i < num_classes - 1; ++i) lse += std::exp(z[i] / tau - vmax);
  const double v = vote == num_classes ? 0.0 : z[vote - 1] / tau;
  return v - vmax - std::log(lse);
}

int aggregate(const std::vector<int>& votes, const AggregationFn& f,
              int num_classes, Rng& rng) {
  if (votes.empty()) throw DomainError("aggregate: empty vote set");
  f.validate(num_classes);
  for (int v : votes)
    if (v < 1 || v > num_classes) throw DomainError("aggregate: vote out of range");

  switch (f.kind) {
    case AggKind::any_positive: {
      for (int v : votes)
        if (v == f.positive_class) return f.positive_class;
      return 3 - f.positive_class;
    }
    case AggKind::unanimous_positive: {
      for (int v : votes)
        if (v != f.positive_class) return 3 - f.positive_class;
      return f.positive_class;
    }
    case AggKind::consensus:
      break;
  }

  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int v : votes) ++counts[static_cast<std::size_t>(v - 1)];
  const int best = *std::max_element(counts.begin(), counts.end());
  std::vector<int> modes;
  for (int c = 0; c < num_classes; ++c)
    if (counts[static_cast<std::size_t>(c)] == best) modes.push_back(c + 1);
  if (modes.size() == 1) return modes.front();
  return modes[static_cast<std::size_t>(rng.uniform_int(modes.size()))];
}

double entropy(const ProbVec& p) {
  double h = 0.0;
  for (int i = 0; i < p.k(); ++i) {
    const double x = p[i];
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

}  // namespace panel
