#pragma once

#include <vector>

#include "panel/rng.hpp"

namespace panel {

// Point in the interior of the K-simplex. Entries are strictly positive and
// sum to one within 1e-9; K >= 2.
class ProbVec {
 public:
  explicit ProbVec(std::vector<double> values);

  // Clamps entries below `floor` up to it and renormalizes; the ingestion
  // path for raw classifier outputs that may contain exact zeros.
  static ProbVec floored(std::vector<double> values, double floor = 1e-12,
                         int* clamped = nullptr);

  int k() const { return static_cast<int>(v_.size()); }
  double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& values() const { return v_; }

 private:
  struct Unchecked {};
  ProbVec(std::vector<double> values, Unchecked) : v_(std::move(values)) {}
  std::vector<double> v_;
  friend ProbVec from_logits_impl(const double* z, int k);
};

// Additive log-odds image of a K-simplex point: K-1 finite reals, entry k
// being log(theta[k]/theta[K]).
class LogitVec {
 public:
  explicit LogitVec(std::vector<double> values);

  int k() const { return static_cast<int>(v_.size()) + 1; }
  double operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& values() const { return v_; }

 private:
  std::vector<double> v_;
};

enum class AggKind { consensus, any_positive, unanimous_positive };

// Aggregation function over a panel's votes. any_positive and
// unanimous_positive are binary-only and need a designated positive class.
struct AggregationFn {
  AggKind kind = AggKind::consensus;
  int positive_class = 1;  // 1-based, used by any/unanimous
  void validate(int num_classes) const;
};

LogitVec to_logits(const ProbVec& theta);
ProbVec from_logits(const LogitVec& z);

// Softmax of the extended logit vector (z; 0) divided by tau.
ProbVec temper(const LogitVec& z, double tau);

// Aggregate votes (1-based class indices) under f. Consensus ties are broken
// uniformly at random with rng.
int aggregate(const std::vector<int>& votes, const AggregationFn& f,
              int num_classes, Rng& rng);

double entropy(const ProbVec& p);  // nats

// Hot-path kernels over raw logit blocks (z has K-1 entries). These are the
// single implementation point for tempering; the typed wrappers above call
// them.
void temper_into(const double* z, int num_classes, double tau, double* out);
double log_temper_prob(const double* z, int num_classes, double tau,
                       int vote /*1-based*/);

}  // namespace panel
