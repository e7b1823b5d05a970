#include "panel/theory.hpp"

#include <algorithm>
#include <cmath>

#include "panel/errors.hpp"

namespace panel {

namespace {

double log_choose(int n, int k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Mode of a vote row; returns 0 on a tie.
int unique_mode(const std::vector<int>& row, int num_classes,
                std::vector<int>& scratch) {
  scratch.assign(static_cast<std::size_t>(num_classes), 0);
  for (int v : row) ++scratch[static_cast<std::size_t>(v - 1)];
  int best = 0, best_class = 0, n_best = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (scratch[static_cast<std::size_t>(c)] > best) {
      best = scratch[static_cast<std::size_t>(c)];
      best_class = c + 1;
      n_best = 1;
    } else if (scratch[static_cast<std::size_t>(c)] == best && best > 0) {
      ++n_best;
    }
  }
  return n_best == 1 ? best_class : 0;
}

}  // namespace

double ConsensusSizeDist::expected_size() const {
  double e = 0.0;
  for (const auto& [nc, p] : pmf) e += nc * p;
  return e;
}

void ConsensusSizeDist::validate() const {
  if (num_experts < 1) throw DomainError("ConsensusSizeDist: H must be >= 1");
  double sum = 0.0;
  for (const auto& [nc, p] : pmf) {
    if (nc < 1 || nc > num_experts)
      throw DomainError("ConsensusSizeDist: support outside [1, H]");
    if (p < 0.0) throw DomainError("ConsensusSizeDist: negative mass");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DomainError("ConsensusSizeDist: pmf must sum to 1");
}

void ConsensusSizeDist::require_strict_majority() const {
  for (const auto& [nc, p] : pmf)
    if (nc <= num_experts / 2 && p > 0.0)
      throw DomainError("ConsensusSizeDist: strict majority assumption violated");
}

void VotePopulation::validate() const {
  if (num_classes < 2) throw DomainError("VotePopulation: K must be >= 2");
  if (votes.empty()) throw DomainError("VotePopulation: empty population");
  const std::size_t h = votes.front().size();
  if (h == 0) throw DomainError("VotePopulation: need at least one expert");
  for (const auto& row : votes) {
    if (row.size() != h) throw DomainError("VotePopulation: ragged rows");
    for (int v : row)
      if (v < 1 || v > num_classes)
        throw DomainError("VotePopulation: vote out of range");
  }
}

double err_random_1or2(const ConsensusSizeDist& d) {
  d.validate();
  return 1.0 - d.expected_size() / d.num_experts;
}

double hypergeom_cdf(int r, int total, int consensus_size, int draws) {
  if (consensus_size < 0 || consensus_size > total)
    throw DomainError("hypergeom_cdf: n_c outside [0, H]");
  if (draws < 1 || draws > total)
    throw DomainError("hypergeom_cdf: n_q outside [1, H]");
  if (r < -1) throw DomainError("hypergeom_cdf: r must be >= -1");

  const int lo = std::max(0, draws - (total - consensus_size));
  const int hi = std::min({r, consensus_size, draws});
  if (hi < lo) return 0.0;
  const double log_total = log_choose(total, draws);
  double cdf = 0.0;
  for (int i = lo; i <= hi; ++i)
    cdf += std::exp(log_choose(consensus_size, i) +
                    log_choose(total - consensus_size, draws - i) - log_total);
  return std::min(cdf, 1.0);
}

double err_random_nq(const ConsensusSizeDist& d, int num_queried) {
  d.validate();
  d.require_strict_majority();
  if (num_queried % 2 == 0)
    throw DomainError("err_random_nq: n_q must be odd");
  if (num_queried < 1 || num_queried > d.num_experts)
    throw DomainError("err_random_nq: n_q outside [1, H]");
  double err = 0.0;
  for (const auto& [nc, p] : d.pmf)
    err += p * hypergeom_cdf(num_queried / 2, d.num_experts, nc, num_queried);
  return err;
}

double equicorr3_orthant(double rho) {
  if (!(rho >= 0.0 && rho < 1.0))
    throw DomainError("equicorr3: rho must lie in [0, 1)");
  return 0.125 + 3.0 * std::asin(rho) / (4.0 * M_PI);
}

double equicorr3_expected_nc(double rho) {
  return 2.0 + 2.0 * equicorr3_orthant(rho);
}

double err_equicorrelated_3(double rho) {
  if (!(rho >= 0.0 && rho < 1.0))
    throw DomainError("err_equicorrelated_3: rho must lie in [0, 1)");
  return 0.25 - std::asin(rho) / (2.0 * M_PI);
}

ArcsinBounds arcsin_bound_check(double rho) {
  if (!(rho > 0.0 && rho < 1.0))
    throw DomainError("arcsin_bound_check: rho must lie in (0, 1)");
  ArcsinBounds b;
  b.lower = rho * (1.0 + rho * rho / 6.0);
  b.exact = std::asin(rho);
  b.upper = rho * (1.0 + 0.5 * (M_PI - 2.0) * rho * rho);
  return b;
}

ConsensusSizeResult consensus_size_dist(const VotePopulation& pop) {
  pop.validate();
  ConsensusSizeResult res;
  res.total_examples = static_cast<int>(pop.votes.size());
  res.dist.num_experts = pop.num_experts();
  std::vector<int> counts;
  std::map<int, long> tally;
  long kept = 0;
  for (const auto& row : pop.votes) {
    const int mode = unique_mode(row, pop.num_classes, counts);
    if (mode == 0) {
      ++res.ties_excluded;
      continue;
    }
    const int nc = static_cast<int>(std::count(row.begin(), row.end(), mode));
    ++tally[nc];
    ++kept;
  }
  if (kept == 0)
    throw DomainError("consensus_size_dist: every example has a tied mode");
  for (const auto& [nc, n] : tally)
    res.dist.pmf[nc] = static_cast<double>(n) / static_cast<double>(kept);
  return res;
}

SimulatedError simulate_random_error(const VotePopulation& pop, int num_queried,
                                     long trials, Rng& rng) {
  pop.validate();
  const int h = pop.num_experts();
  if (num_queried < 1 || num_queried > h)
    throw DomainError("simulate_random_error: n_q outside [1, H]");
  if (trials < 1) throw DomainError("simulate_random_error: trials must be >= 1");

  // Precompute panel consensus per example; drop tied panels.
  std::vector<int> counts;
  std::vector<int> panel_mode;
  std::vector<const std::vector<int>*> rows;
  for (const auto& row : pop.votes) {
    const int mode = unique_mode(row, pop.num_classes, counts);
    if (mode == 0) continue;
    panel_mode.push_back(mode);
    rows.push_back(&row);
  }
  if (rows.empty())
    throw DomainError("simulate_random_error: every example has a tied mode");

  std::vector<int> pool(static_cast<std::size_t>(h));
  std::vector<int> subset_counts(static_cast<std::size_t>(pop.num_classes));
  std::vector<int> modes;
  long errors = 0;
  for (long t = 0; t < trials; ++t) {
    const std::size_t ex = static_cast<std::size_t>(rng.uniform_int(rows.size()));
    const std::vector<int>& row = *rows[ex];
    // partial Fisher-Yates for a uniform subset without replacement
    for (int i = 0; i < h; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::fill(subset_counts.begin(), subset_counts.end(), 0);
    for (int q = 0; q < num_queried; ++q) {
      const int j = q + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - q)));
      std::swap(pool[static_cast<std::size_t>(q)], pool[static_cast<std::size_t>(j)]);
      ++subset_counts[static_cast<std::size_t>(row[static_cast<std::size_t>(pool[static_cast<std::size_t>(q)])] - 1)];
    }
    const int best = *std::max_element(subset_counts.begin(), subset_counts.end());
    modes.clear();
    for (int c = 0; c < pop.num_classes; ++c)
      if (subset_counts[static_cast<std::size_t>(c)] == best) modes.push_back(c + 1);
    const int pred = modes.size() == 1
                         ? modes.front()
                         : modes[static_cast<std::size_t>(rng.uniform_int(modes.size()))];
    if (pred != panel_mode[ex]) ++errors;
  }

  SimulatedError out;
  out.trials = trials;
  out.error = static_cast<double>(errors) / static_cast<double>(trials);
  out.std_error = std::sqrt(std::max(out.error * (1.0 - out.error), 1e-12) /
                            static_cast<double>(trials));
  return out;
}

}  // namespace panel
