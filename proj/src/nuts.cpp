#include "panel/nuts.hpp"

#include <cmath>
#include <limits>

#include "panel/errors.hpp"

namespace panel {

using Eigen::MatrixXd;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMaxEnergyError = 1000.0;  // divergence threshold

struct Phase {
  VectorXd w, p, grad;
  double logp = kNegInf;
};

struct Tree {
  Phase minus, plus;
  VectorXd w_prop;
  double log_weight = kNegInf;  // logsumexp of joint - joint0 over leaves
  bool cont = false;
};

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

class NutsKernel {
 public:
  NutsKernel(TargetDensity& target, Rng& rng, int dense_block)
      : target_(target),
        rng_(rng),
        inv_mass(VectorXd::Ones(target.dim())),
        nblock(std::min(dense_block, target.dim())) {
    if (nblock > 0) {
      inv_mass_block = MatrixXd::Identity(nblock, nblock);
      mom_factor = MatrixXd::Identity(nblock, nblock);
    }
  }

  TargetDensity& target_;
  Rng& rng_;
  VectorXd inv_mass;        // diagonal part (entries < nblock are unused)
  int nblock = 0;           // dense leading block
  MatrixXd inv_mass_block;  // estimated covariance of the leading block
  MatrixXd mom_factor;      // chol(inv_mass_block)^-T, for momentum draws
  double eps = 1.0;
  long evals = 0;

  // per-trajectory state
  double joint0 = 0.0;
  bool divergent = false;
  double sum_accept = 0.0;
  long n_accept = 0;

  void set_block_mass(const MatrixXd& cov) {
    inv_mass_block = cov;
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      inv_mass_block = MatrixXd::Identity(nblock, nblock);
      mom_factor = MatrixXd::Identity(nblock, nblock);
      return;
    }
    mom_factor = MatrixXd(llt.matrixL())
                     .transpose()
                     .triangularView<Eigen::Upper>()
                     .solve(MatrixXd::Identity(nblock, nblock));
  }

  void velocity(const VectorXd& p, VectorXd& v) const {
    if (nblock > 0) v.head(nblock).noalias() = inv_mass_block * p.head(nblock);
    const int tail = static_cast<int>(p.size()) - nblock;
    if (tail > 0)
      v.tail(tail).array() = inv_mass.tail(tail).array() * p.tail(tail).array();
  }

  double kinetic(const VectorXd& p) const {
    double k = 0.0;
    if (nblock > 0)
      k += 0.5 * p.head(nblock).dot(inv_mass_block * p.head(nblock));
    const int tail = static_cast<int>(p.size()) - nblock;
    if (tail > 0)
      k += 0.5 *
           (p.tail(tail).array().square() * inv_mass.tail(tail).array()).sum();
    return k;
  }

  void draw_momentum(VectorXd& p) {
    const int dim = static_cast<int>(p.size());
    for (int i = 0; i < dim; ++i) p(i) = rng_.normal();
    if (nblock > 0) p.head(nblock) = (mom_factor * p.head(nblock)).eval();
    for (int i = nblock; i < dim; ++i) p(i) /= std::sqrt(inv_mass(i));
  }

  double joint(const Phase& s) const { return s.logp - kinetic(s.p); }

  void leapfrog(Phase& s, double step) {
    s.p.noalias() += 0.5 * step * s.grad;
    velocity(s.p, vel_);
    s.w.noalias() += step * vel_;
    s.logp = target_.logp_grad(s.w, s.grad);
    ++evals;
    s.p.noalias() += 0.5 * step * s.grad;
  }

  bool no_uturn(const Phase& minus, const Phase& plus) const {
    const VectorXd dw = plus.w - minus.w;
    VectorXd v(dw.size());
    velocity(minus.p, v);
    if (dw.dot(v) < 0.0) return false;
    velocity(plus.p, v);
    return dw.dot(v) >= 0.0;
  }

  Tree build_tree(const Phase& from, int dir, int depth) {
    if (depth == 0) {
      Phase leaf = from;
      leapfrog(leaf, dir * eps);
      const double j = std::isfinite(leaf.logp) ? joint(leaf) : kNegInf;
      Tree t;
      t.minus = leaf;
      t.plus = leaf;
      t.w_prop = leaf.w;
      t.log_weight = j - joint0;
      t.cont = (t.log_weight > -kMaxEnergyError);
      if (!t.cont) divergent = true;
      sum_accept += std::isfinite(j) ? std::min(1.0, std::exp(j - joint0)) : 0.0;
      ++n_accept;
      return t;
    }
    Tree first = build_tree(from, dir, depth - 1);
    if (!first.cont) return first;
    Tree second =
        build_tree(dir == -1 ? first.minus : first.plus, dir, depth - 1);
    Tree t;
    t.minus = dir == -1 ? second.minus : first.minus;
    t.plus = dir == -1 ? first.plus : second.plus;
    t.log_weight = log_sum_exp(first.log_weight, second.log_weight);
    // multinomial sampling within the subtree
    if (second.log_weight > kNegInf &&
        std::log(rng_.uniform01()) < second.log_weight - t.log_weight) {
      t.w_prop = std::move(second.w_prop);
    } else {
      t.w_prop = std::move(first.w_prop);
    }
    t.cont = second.cont && no_uturn(t.minus, t.plus);
    return t;
  }

  // One NUTS transition from state; updates it in place. Returns accept stat.
  double transition(Phase& state, int max_depth) {
    if (vel_.size() != state.w.size()) vel_.resize(state.w.size());
    draw_momentum(state.p);
    joint0 = joint(state);
    divergent = false;
    sum_accept = 0.0;
    n_accept = 0;

    Phase minus = state, plus = state;
    VectorXd w_sel = state.w;
    bool moved = false;
    double log_w_total = 0.0;  // weight of the initial point
    bool cont = true;
    for (int depth = 0; depth < max_depth && cont; ++depth) {
      const int dir = rng_.uniform01() < 0.5 ? -1 : 1;
      Tree tree = build_tree(dir == -1 ? minus : plus, dir, depth);
      if (dir == -1)
        minus = tree.minus;
      else
        plus = tree.plus;
      // biased progressive sampling favors the fresh subtree
      if (tree.cont && tree.log_weight > kNegInf &&
          std::log(rng_.uniform01()) < tree.log_weight - log_w_total) {
        w_sel = tree.w_prop;
        moved = true;
      }
      log_w_total = log_sum_exp(log_w_total, tree.log_weight);
      cont = tree.cont && no_uturn(minus, plus);
    }
    if (moved) {
      state.w = w_sel;
      state.logp = target_.logp_grad(state.w, state.grad);
      ++evals;
    }
    return n_accept > 0 ? sum_accept / static_cast<double>(n_accept) : 0.0;
  }

  double find_reasonable_epsilon(const Phase& state) {
    if (vel_.size() != state.w.size()) vel_.resize(state.w.size());
    double e = 1.0;
    const double j0 = [&] {
      Phase s = state;
      draw_momentum(s.p);
      // keep this exact momentum for all probes
      probe_ = s;
      return joint(s);
    }();
    auto probe = [&](double step) {
      Phase s = probe_;
      leapfrog(s, step);
      return std::isfinite(s.logp) ? joint(s) : kNegInf;
    };
    double j1 = probe(e);
    int guard = 0;
    while (!std::isfinite(j1) && ++guard < 60) {
      e *= 0.5;
      j1 = probe(e);
    }
    if (!std::isfinite(j1)) return 1e-6;
    const double dir = (j1 - j0 > std::log(0.5)) ? 1.0 : -1.0;
    guard = 0;
    while (dir * (j1 - j0) > -dir * std::log(2.0) && ++guard < 60) {
      e *= std::pow(2.0, dir);
      j1 = probe(e);
      if (!std::isfinite(j1)) {
        e *= 0.5;
        break;
      }
    }
    return std::max(e, 1e-10);
  }

 private:
  Phase probe_;
  VectorXd vel_;
};

// Welford accumulator for the diagonal mass matrix, with an optional dense
// covariance over the leading block.
struct Welford {
  VectorXd mean, m2;
  MatrixXd m2_block;
  int nblock = 0;
  long n = 0;
  void reset(int dim, int dense_block = 0) {
    mean = VectorXd::Zero(dim);
    m2 = VectorXd::Zero(dim);
    nblock = dense_block;
    if (nblock > 0) m2_block = MatrixXd::Zero(nblock, nblock);
    n = 0;
  }
  void add(const VectorXd& x) {
    ++n;
    const VectorXd delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2.array() += delta.array() * (x - mean).array();
    if (nblock > 0)
      m2_block.noalias() +=
          delta.head(nblock) * (x - mean).head(nblock).transpose();
  }
  VectorXd variance() const {
    if (n < 2) return VectorXd::Ones(mean.size());
    const double nn = static_cast<double>(n);
    // Stan-style regularization toward a small diagonal
    VectorXd var = m2 / (nn - 1.0);
    var = (nn / (nn + 5.0)) * var;
    var.array() += 1e-3 * (5.0 / (nn + 5.0));
    return var;
  }
  // Dense estimate shrunk toward its own diagonal; off-diagonal structure is
  // only trusted in proportion to the sample count.
  MatrixXd block_covariance() const {
    if (n < 2) return MatrixXd::Identity(nblock, nblock);
    const double nn = static_cast<double>(n);
    MatrixXd cov = m2_block / (nn - 1.0);
    cov = 0.5 * (cov + cov.transpose());
    const double lambda = nn / (nn + 5.0 + static_cast<double>(nblock));
    const VectorXd diag = cov.diagonal();
    cov *= lambda;
    cov.diagonal() = diag * (nn / (nn + 5.0));
    cov.diagonal().array() += 1e-3 * (5.0 / (nn + 5.0));
    return cov;
  }
};

struct DualAveraging {
  double mu = 0.0, h_bar = 0.0, log_eps_bar = 0.0;
  long m = 0;
  static constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;

  void restart(double eps0) {
    mu = std::log(10.0 * eps0);
    h_bar = 0.0;
    log_eps_bar = std::log(eps0);
    m = 0;
  }
  double update(double accept, double target) {
    ++m;
    const double mm = static_cast<double>(m);
    h_bar = (1.0 - 1.0 / (mm + t0)) * h_bar + (target - accept) / (mm + t0);
    const double log_eps = mu - std::sqrt(mm) / gamma * h_bar;
    const double w = std::pow(mm, -kappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    return std::exp(log_eps);
  }
  double final_eps() const { return std::exp(log_eps_bar); }
};

// Warmup schedule: fast start, expanding covariance-estimation windows, fast
// tail, proportionally shrunk for short warmups.
struct AdaptSchedule {
  int init_buffer, term_buffer, warmup;
  std::vector<int> window_ends;

  explicit AdaptSchedule(int warmup_iters) : warmup(warmup_iters) {
    init_buffer = 75;
    term_buffer = 50;
    int base = 25;
    if (init_buffer + term_buffer + base > warmup) {
      init_buffer = static_cast<int>(0.15 * warmup);
      term_buffer = static_cast<int>(0.1 * warmup);
      base = std::max(warmup - init_buffer - term_buffer, 1);
    }
    int pos = init_buffer;
    int size = base;
    while (pos < warmup - term_buffer) {
      int end = pos + size;
      if (end + 2 * size > warmup - term_buffer) end = warmup - term_buffer;
      window_ends.push_back(end);
      pos = end;
      size *= 2;
    }
  }
  bool in_slow(int iter) const {
    return iter >= init_buffer && iter < warmup - term_buffer;
  }
  bool window_end(int iter) const {
    for (int e : window_ends)
      if (iter + 1 == e) return true;
    return false;
  }
};

}  // namespace

ChainResult run_nuts(TargetDensity& target, const VectorXd& init,
                     const SamplerOptions& opts, Rng& rng) {
  const int dense_block = std::min(opts.dense_block, target.dim());
  NutsKernel kernel(target, rng, dense_block);
  Phase state;
  state.w = init;
  state.p = VectorXd::Zero(target.dim());
  state.grad = VectorXd::Zero(target.dim());
  state.logp = target.logp_grad(state.w, state.grad);
  ++kernel.evals;
  if (!std::isfinite(state.logp))
    throw SamplerError("run_nuts: non-finite density at the initial state",
                       std::vector<double>(init.data(), init.data() + init.size()));

  kernel.eps = kernel.find_reasonable_epsilon(state);
  DualAveraging da;
  da.restart(kernel.eps);
  AdaptSchedule schedule(opts.warmup);
  Welford welford;
  welford.reset(target.dim(), dense_block);

  ChainResult result;
  result.draws.reserve(static_cast<std::size_t>(opts.draws));

  for (int iter = 0; iter < opts.warmup; ++iter) {
    const double accept = kernel.transition(state, opts.max_treedepth);
    kernel.eps = da.update(accept, opts.target_accept);
    if (schedule.in_slow(iter)) {
      welford.add(state.w);
      if (schedule.window_end(iter) && welford.n > 1) {
        kernel.inv_mass = welford.variance();
        if (dense_block > 0 && welford.n >= 2 * dense_block + 10)
          kernel.set_block_mass(welford.block_covariance());
        else if (dense_block > 0)
          kernel.set_block_mass(
              MatrixXd(kernel.inv_mass.head(dense_block).asDiagonal()));
        welford.reset(target.dim(), dense_block);
        kernel.eps = kernel.find_reasonable_epsilon(state);
        da.restart(kernel.eps);
      }
    }
  }
  kernel.eps = opts.warmup > 0 ? da.final_eps() : kernel.eps;

  for (int iter = 0; iter < opts.draws; ++iter) {
    kernel.transition(state, opts.max_treedepth);
    if (kernel.divergent) ++result.divergences;
    result.draws.push_back(state.w);
  }
  result.step_size = kernel.eps;
  result.inv_mass = kernel.inv_mass;
  result.gradient_evals = kernel.evals;
  return result;
}

ChainResult run_rwm(TargetDensity& target, const VectorXd& init,
                    const SamplerOptions& opts, Rng& rng) {
  const int dim = target.dim();
  VectorXd w = init, grad(dim), prop(dim);
  double logp = target.logp_grad(w, grad);
  if (!std::isfinite(logp))
    throw SamplerError("run_rwm: non-finite density at the initial state",
                       std::vector<double>(init.data(), init.data() + init.size()));

  VectorXd scale = VectorXd::Constant(dim, 0.1);
  Welford welford;
  welford.reset(dim);
  double log_global = 0.0;
  long evals = 1;

  auto step = [&](bool adapt, int iter) {
    for (int i = 0; i < dim; ++i)
      prop(i) = w(i) + std::exp(log_global) * scale(i) * rng.normal();
    const double lp = target.logp_grad(prop, grad);
    ++evals;
    const bool accept = std::log(rng.uniform01()) < lp - logp;
    if (accept) {
      w = prop;
      logp = lp;
    }
    if (adapt) {
      const double rate = accept ? 1.0 : 0.0;
      log_global += (rate - 0.234) / std::sqrt(iter + 1.0);
      welford.add(w);
      if (welford.n > 20) scale = welford.variance().cwiseSqrt();
    }
  };

  for (int iter = 0; iter < opts.warmup; ++iter) step(true, iter);
  ChainResult result;
  result.draws.reserve(static_cast<std::size_t>(opts.draws));
  for (int iter = 0; iter < opts.draws; ++iter) {
    step(false, iter);
    result.draws.push_back(w);
  }
  result.step_size = std::exp(log_global);
  result.inv_mass = scale;
  result.gradient_evals = evals;
  return result;
}

}  // namespace panel
