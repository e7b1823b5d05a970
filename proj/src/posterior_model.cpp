#include "panel/posterior_model.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "panel/errors.hpp"
#include "panel/simplex.hpp"

namespace panel {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// strict lower triangle, row-major: (i, j) with i > j
inline int pair_index(int i, int j) { return i * (i - 1) / 2 + j; }

inline double log_half_normal(double x, double scale) {
  return 0.5 * std::log(2.0 / M_PI) - std::log(scale) -
         0.5 * x * x / (scale * scale);
}

}  // namespace

void ModelSpec::finalize() {
  patterns.clear();
  std::map<std::vector<int>, int> seen;
  const int block = num_classes - 1;
  for (auto& cb : blocks) {
    for (int c : cb.coords)
      if (c < 0 || c >= panel_dim)
        throw DomainError("ModelSpec: coordinate out of range");
    const int len = static_cast<int>(cb.coords.size());
    if (cb.latent_offset < 0 || cb.latent_offset + len > n_latent)
      throw DomainError("ModelSpec: latent slice out of range");
    for (const auto& [off, vote] : cb.votes) {
      if (off < 0 || off + block > len)
        throw DomainError("ModelSpec: vote slice out of range");
      if (vote < 1 || vote > num_classes)
        throw DomainError("ModelSpec: vote out of range");
    }
    auto [it, inserted] = seen.emplace(cb.coords, static_cast<int>(patterns.size()));
    if (inserted) patterns.push_back(cb.coords);
    cb.pattern = it->second;
  }
  const int expected_logits = static_cast<int>(model_coords.size());
  for (const auto& m : marginals)
    if (static_cast<int>(m.model_logits.size()) != expected_logits)
      throw DomainError("ModelSpec: marginal data length mismatch");
  for (const auto& cb : blocks)
    if (static_cast<int>(cb.model_logits.size()) != expected_logits)
      throw DomainError("ModelSpec: block conditioning data length mismatch");
}

ModelSpec build_full_spec(const History& history, const HyperParams& hp) {
  history.validate();
  hp.validate();
  const PanelLayout layout{history.num_classes, history.num_models,
                           history.num_experts};
  const int block = layout.block();

  ModelSpec spec;
  spec.num_classes = history.num_classes;
  spec.panel_dim = layout.dim();
  spec.hp = hp;
  spec.model_coords = layout.model_coords();

  int latent_offset = 0;
  for (const auto& rec : history.records) {
    const std::vector<double> logits(rec.model_logits.data(),
                                     rec.model_logits.data() + rec.model_logits.size());
    spec.marginals.push_back({logits});
    const int n_obs = static_cast<int>(rec.observed.size());
    spec.record_latents.push_back({latent_offset, block * n_obs});
    if (n_obs == 0) continue;

    CondBlock cb;
    cb.latent_offset = latent_offset;
    cb.model_logits = logits;
    for (int q = 0; q < n_obs; ++q) {
      for (int c = 0; c < block; ++c)
        cb.coords.push_back(
            layout.expert_coord(rec.observed[static_cast<std::size_t>(q)], c));
      cb.votes.emplace_back(q * block, rec.votes[static_cast<std::size_t>(q)]);
    }
    spec.blocks.push_back(std::move(cb));
    latent_offset += block * n_obs;
  }
  spec.n_latent = latent_offset;
  spec.finalize();
  return spec;
}

ModelSpec build_exchangeable_spec(const History& history, const HyperParams& hp) {
  history.validate();
  hp.validate();
  // one shared expert block followed by the classifier blocks
  const PanelLayout layout{history.num_classes, history.num_models, 1};
  const int block = layout.block();
  std::vector<int> expert_coords;
  for (int c = 0; c < block; ++c) expert_coords.push_back(layout.expert_coord(0, c));

  ModelSpec spec;
  spec.num_classes = history.num_classes;
  spec.panel_dim = layout.dim();
  spec.hp = hp;
  spec.model_coords = layout.model_coords();

  int latent_offset = 0;
  for (const auto& rec : history.records) {
    const std::vector<double> logits(rec.model_logits.data(),
                                     rec.model_logits.data() + rec.model_logits.size());
    spec.marginals.push_back({logits});
    const int n_obs = static_cast<int>(rec.observed.size());
    spec.record_latents.push_back({latent_offset, block * n_obs});
    // experts are iid given z_M: an independent conditional block per vote
    for (int q = 0; q < n_obs; ++q) {
      CondBlock cb;
      cb.coords = expert_coords;
      cb.latent_offset = latent_offset + q * block;
      cb.model_logits = logits;
      cb.votes.emplace_back(0, rec.votes[static_cast<std::size_t>(q)]);
      spec.blocks.push_back(std::move(cb));
    }
    latent_offset += block * n_obs;
  }
  spec.n_latent = latent_offset;
  spec.finalize();
  return spec;
}

struct PosteriorDensity::Impl {
  ModelSpec spec;
  int d = 0;       // panel dimension
  int dm = 0;      // classifier-coordinate count
  int npairs = 0;  // correlation degrees of freedom
  int ntotal = 0;

  // correlation construction state (row i uses columns 0..i)
  MatrixXd L, z_mat, one_minus_z2, log_omz2, s_mat, w_mat;
  MatrixXd A, sigma_full, sigma_bar, dA, gL;
  VectorXd sigma, mu, gmu, gsigma;

  // classifier-marginal workspace
  MatrixXd cov_mm, chol_mm, inv_mm, mm_bar, marg_outer;
  VectorXd mu_m, r_m, alpha_m, tmp_m, tmp_m2;
  double logdet_mm_half = 0.0;
  long n_marginals = 0;

  struct Pattern {
    std::vector<int> coords;
    int dr = 0;
    MatrixXd b;          // Sigma_OM
    MatrixXd gain;       // Sigma_OM Sigma_MM^-1
    MatrixXd cond, chol; // Sigma_O|M and its factor
    MatrixXd t_bar, b_bar, work;
    VectorXd z, gz, xi, scratch;
    double sum_logdiag = 0.0;
    bool ready = false;
  };
  std::vector<Pattern> patterns;

  std::vector<double> temper_probs;

  explicit Impl(ModelSpec s) : spec(std::move(s)) {
    d = spec.panel_dim;
    dm = static_cast<int>(spec.model_coords.size());
    npairs = spec.corr_pairs();
    ntotal = spec.unconstrained_dim();
    L = MatrixXd::Zero(d, d);
    z_mat = one_minus_z2 = log_omz2 = s_mat = w_mat = MatrixXd::Zero(d, d);
    A = sigma_full = sigma_bar = dA = gL = MatrixXd::Zero(d, d);
    sigma = mu = gmu = gsigma = VectorXd::Zero(d);
    cov_mm = chol_mm = inv_mm = mm_bar = marg_outer = MatrixXd::Zero(dm, dm);
    mu_m = r_m = alpha_m = tmp_m = tmp_m2 = VectorXd::Zero(dm);
    for (const auto& coords : spec.patterns) {
      Pattern p;
      p.coords = coords;
      p.dr = static_cast<int>(coords.size());
      p.b = p.gain = MatrixXd::Zero(p.dr, dm);
      p.b_bar = MatrixXd::Zero(p.dr, dm);
      p.cond = p.chol = p.t_bar = p.work = MatrixXd::Zero(p.dr, p.dr);
      p.z = p.gz = p.xi = p.scratch = VectorXd::Zero(p.dr);
      patterns.push_back(std::move(p));
    }
    temper_probs.resize(static_cast<std::size_t>(spec.num_classes));
  }

  bool build_correlation(const VectorXd& w) {
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < i; ++j) {
        const double one_minus_s = 1.0 - s;
        if (one_minus_s <= 1e-290) return false;
        const double wj = std::sqrt(one_minus_s);
        const double y = w(2 * d + pair_index(i, j));
        const double ay = std::abs(y);
        const double lomz2 =
            std::log(4.0) - 2.0 * (ay + std::log1p(std::exp(-2.0 * ay)));
        const double zz = std::tanh(y);
        s_mat(i, j) = s;
        w_mat(i, j) = wj;
        z_mat(i, j) = zz;
        log_omz2(i, j) = lomz2;
        one_minus_z2(i, j) = std::exp(lomz2);
        L(i, j) = zz * wj;
        s += L(i, j) * L(i, j);
      }
      const double one_minus_s = 1.0 - s;
      if (one_minus_s <= 1e-290) return false;
      s_mat(i, i) = s;
      L(i, i) = std::sqrt(one_minus_s);
    }
    return true;
  }

  // In-place lower Cholesky of `cov` into `chol`; false on a bad pivot.
  static bool dense_cholesky(const MatrixXd& cov, MatrixXd& chol,
                             double* sum_logdiag) {
    const int n = static_cast<int>(cov.rows());
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      double diag = cov(j, j);
      for (int k = 0; k < j; ++k) diag -= chol(j, k) * chol(j, k);
      if (!(diag > 0.0) || !std::isfinite(diag)) return false;
      diag = std::sqrt(diag);
      chol(j, j) = diag;
      acc += std::log(diag);
      for (int i = j + 1; i < n; ++i) {
        double x = cov(i, j);
        for (int k = 0; k < j; ++k) x -= chol(i, k) * chol(j, k);
        chol(i, j) = x / diag;
      }
    }
    if (sum_logdiag) *sum_logdiag = acc;
    return true;
  }

  // Reverse-mode Cholesky (Murray 2016): given T = chol(C) and T_bar,
  // accumulates C_bar (raw, unsymmetrized) into `out`.
  static void cholesky_backward(const MatrixXd& t, const MatrixXd& t_bar,
                                MatrixXd& work, MatrixXd& out) {
    const int n = static_cast<int>(t.rows());
    work.noalias() = t.transpose() * t_bar;
    for (int i = 0; i < n; ++i) {
      work(i, i) *= 0.5;
      for (int j = i + 1; j < n; ++j) work(i, j) = 0.0;
    }
    // out = T^-T work T^-1
    t.transpose().triangularView<Eigen::Upper>().solveInPlace(work);
    t.triangularView<Eigen::Lower>().solveInPlace<Eigen::OnTheRight>(work);
    out = work;
  }

  double eval(const VectorXd& w, VectorXd* grad) {
    const HyperParams& hp = spec.hp;
    if (grad) grad->setZero(ntotal);

    mu = w.head(d);
    for (int i = 0; i < d; ++i) sigma(i) = std::exp(w(d + i));
    const double log_tau = w(2 * d + npairs);
    const double tau = std::exp(log_tau);
    if (!std::isfinite(tau) || !(tau > 0.0) || !sigma.allFinite()) return kNegInf;
    if (!build_correlation(w)) return kNegInf;

    double lp = 0.0;
    for (int i = 0; i < d; ++i) {
      lp += -0.5 * mu(i) * mu(i) / (hp.sigma_mu * hp.sigma_mu) -
            std::log(hp.sigma_mu) - 0.5 * kLog2Pi;
      lp += log_half_normal(sigma(i), hp.sigma_sigma) + w(d + i);
    }
    lp += log_half_normal(tau, hp.sigma_tau) + log_tau;
    for (int i = 1; i < d; ++i)
      lp += (d - i + 2.0 * hp.eta - 3.0) * std::log(L(i, i));
    for (int i = 1; i < d; ++i)
      for (int j = 0; j < i; ++j)
        lp += log_omz2(i, j) + 0.5 * std::log(1.0 - s_mat(i, j));

    // standard-normal latents
    const int latent_start = 2 * d + npairs + 1;
    if (spec.n_latent > 0) {
      lp += -0.5 * w.tail(spec.n_latent).squaredNorm() -
            0.5 * spec.n_latent * kLog2Pi;
      if (grad) grad->tail(spec.n_latent) = -w.tail(spec.n_latent);
    }

    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) A(i, j) = sigma(i) * L(i, j);
    sigma_full.noalias() = A * A.transpose();

    if (grad) {
      gmu.setZero();
      gsigma.setZero();
      sigma_bar.setZero();
    }

    // classifier block factorization, shared by every term
    for (int a = 0; a < dm; ++a) {
      mu_m(a) = mu(spec.model_coords[static_cast<std::size_t>(a)]);
      for (int b = 0; b < dm; ++b)
        cov_mm(a, b) = sigma_full(spec.model_coords[static_cast<std::size_t>(a)],
                                  spec.model_coords[static_cast<std::size_t>(b)]);
    }
    if (!dense_cholesky(cov_mm, chol_mm, &logdet_mm_half)) return kNegInf;
    inv_mm.setIdentity(dm, dm);
    chol_mm.triangularView<Eigen::Lower>().solveInPlace(inv_mm);
    chol_mm.transpose().triangularView<Eigen::Upper>().solveInPlace(inv_mm);

    // per-record classifier marginals
    if (grad) {
      mm_bar.setZero();
      marg_outer.setZero();
      n_marginals = 0;
    }
    for (const auto& m : spec.marginals) {
      for (int a = 0; a < dm; ++a)
        r_m(a) = m.model_logits[static_cast<std::size_t>(a)] - mu_m(a);
      alpha_m.noalias() = inv_mm * r_m;
      lp += -0.5 * r_m.dot(alpha_m) - logdet_mm_half - 0.5 * dm * kLog2Pi;
      if (grad) {
        for (int a = 0; a < dm; ++a)
          gmu(spec.model_coords[static_cast<std::size_t>(a)]) += alpha_m(a);
        marg_outer.noalias() += alpha_m * alpha_m.transpose();
        ++n_marginals;
      }
    }
    if (grad) {
      mm_bar.noalias() += 0.5 * marg_outer;
      mm_bar.noalias() -= 0.5 * static_cast<double>(n_marginals) * inv_mm;
    }

    // conditional latent blocks
    for (auto& p : patterns) p.ready = false;
    const int k = spec.num_classes;
    for (const auto& cb : spec.blocks) {
      Pattern& p = patterns[static_cast<std::size_t>(cb.pattern)];
      if (!p.ready) {
        for (int a = 0; a < p.dr; ++a)
          for (int b = 0; b < dm; ++b)
            p.b(a, b) = sigma_full(p.coords[static_cast<std::size_t>(a)],
                                   spec.model_coords[static_cast<std::size_t>(b)]);
        p.gain.noalias() = p.b * inv_mm;
        for (int a = 0; a < p.dr; ++a)
          for (int b = 0; b < p.dr; ++b)
            p.cond(a, b) = sigma_full(p.coords[static_cast<std::size_t>(a)],
                                      p.coords[static_cast<std::size_t>(b)]);
        p.cond.noalias() -= p.gain * p.b.transpose();
        if (!dense_cholesky(p.cond, p.chol, &p.sum_logdiag)) return kNegInf;
        if (grad) {
          p.t_bar.setZero();
          p.b_bar.setZero();
        }
        p.ready = true;
      }

      for (int a = 0; a < dm; ++a)
        r_m(a) = cb.model_logits[static_cast<std::size_t>(a)] - mu_m(a);
      alpha_m.noalias() = inv_mm * r_m;
      for (int a = 0; a < p.dr; ++a)
        p.xi(a) = w(latent_start + cb.latent_offset + a);
      p.z.noalias() = p.gain * r_m;
      p.z.noalias() += p.chol.triangularView<Eigen::Lower>() * p.xi;
      for (int a = 0; a < p.dr; ++a)
        p.z(a) += mu(p.coords[static_cast<std::size_t>(a)]);

      if (grad) p.gz.setZero();
      for (const auto& [off, vote] : cb.votes) {
        const double* zblock = p.z.data() + off;
        double vmax = 0.0;
        for (int c = 0; c < k - 1; ++c) vmax = std::max(vmax, zblock[c] / tau);
        double sumexp = std::exp(-vmax);
        for (int c = 0; c < k - 1; ++c) {
          temper_probs[static_cast<std::size_t>(c)] = std::exp(zblock[c] / tau - vmax);
          sumexp += temper_probs[static_cast<std::size_t>(c)];
        }
        const double vy = vote == k ? 0.0 : zblock[vote - 1] / tau;
        lp += vy - vmax - std::log(sumexp);
        if (grad) {
          double dlogtau = 0.0;
          for (int c = 0; c < k - 1; ++c) {
            const double pc = temper_probs[static_cast<std::size_t>(c)] / sumexp;
            const double ind = (c == vote - 1) ? 1.0 : 0.0;
            p.gz(off + c) += (ind - pc) / tau;
            dlogtau -= (ind - pc) * zblock[c] / tau;
          }
          (*grad)(2 * d + npairs) += dlogtau;
        }
      }

      if (grad) {
        // z = mu_O + gain r + T xi
        for (int a = 0; a < p.dr; ++a)
          gmu(p.coords[static_cast<std::size_t>(a)]) += p.gz(a);
        p.t_bar.noalias() += p.gz * p.xi.transpose();
        p.b_bar.noalias() += p.gz * alpha_m.transpose();
        p.scratch.noalias() = p.chol.transpose().triangularView<Eigen::Upper>() * p.gz;
        for (int a = 0; a < p.dr; ++a)
          (*grad)(latent_start + cb.latent_offset + a) += p.scratch(a);
        // gain r = B inv_mm r: the r-path flows into mu_M and Sigma_MM
        tmp_m.noalias() = p.b.transpose() * p.gz;
        tmp_m2.noalias() = inv_mm * tmp_m;
        for (int a = 0; a < dm; ++a)
          gmu(spec.model_coords[static_cast<std::size_t>(a)]) -= tmp_m2(a);
        mm_bar.noalias() -= tmp_m2 * alpha_m.transpose();
      }
    }

    if (!std::isfinite(lp)) return kNegInf;
    if (!grad) return lp;

    // pattern-level backward: chol and Schur complement
    for (auto& p : patterns) {
      if (!p.ready) continue;
      // keep only the lower part of t_bar (T is lower triangular)
      for (int a = 0; a < p.dr; ++a)
        for (int b = a + 1; b < p.dr; ++b) p.t_bar(a, b) = 0.0;
      cholesky_backward(p.chol, p.t_bar, p.work, p.cond /*reuse as c_bar*/);
      const MatrixXd& c_bar = p.cond;
      // C = Sigma_OO - gain B^T
      for (int a = 0; a < p.dr; ++a)
        for (int b = 0; b < p.dr; ++b)
          sigma_bar(p.coords[static_cast<std::size_t>(a)],
                    p.coords[static_cast<std::size_t>(b)]) += c_bar(a, b);
      p.b_bar.noalias() -= (c_bar + c_bar.transpose()) * p.gain;
      // Sigma_MM part: gain^T c_bar gain (symmetrized later by the fold)
      mm_bar.noalias() += p.gain.transpose() * c_bar * p.gain;
      for (int a = 0; a < p.dr; ++a)
        for (int b = 0; b < dm; ++b)
          sigma_bar(p.coords[static_cast<std::size_t>(a)],
                    spec.model_coords[static_cast<std::size_t>(b)]) += p.b_bar(a, b);
    }
    sigma_bar_mm_add(mm_bar);

    // fold Sigma-level gradient into sigma and L via A = diag(sigma) L
    dA.noalias() = (sigma_bar + sigma_bar.transpose()) * A;
    gL.setZero();
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j <= i; ++j) {
        gL(i, j) = sigma(i) * dA(i, j);
        gsigma(i) += dA(i, j) * L(i, j);
      }
    }
    for (int i = 1; i < d; ++i)
      gL(i, i) += (d - i + 2.0 * spec.hp.eta - 3.0) / L(i, i);

    const double smu2 = hp.sigma_mu * hp.sigma_mu;
    for (int i = 0; i < d; ++i) {
      (*grad)(i) = gmu(i) - mu(i) / smu2;
      (*grad)(d + i) = sigma(i) * gsigma(i) -
                       sigma(i) * sigma(i) / (hp.sigma_sigma * hp.sigma_sigma) + 1.0;
    }
    (*grad)(2 * d + npairs) += -tau * tau / (hp.sigma_tau * hp.sigma_tau) + 1.0;

    // reverse sweep of the CPC construction, row by row
    for (int i = 1; i < d; ++i) {
      double gs = gL(i, i) * (-0.5 / L(i, i));
      for (int j = i - 1; j >= 0; --j) {
        const double g_lij = gL(i, j) + gs * 2.0 * L(i, j);
        const double gz = g_lij * w_mat(i, j);
        const double gw = g_lij * z_mat(i, j);
        // d/dz log(1-z^2) simplifies against the tanh chain factor (1-z^2)
        // to -2z; d/ds of 0.5 log(1-s) is -0.5/(1-s)
        (*grad)(2 * d + pair_index(i, j)) =
            gz * one_minus_z2(i, j) - 2.0 * z_mat(i, j);
        gs += gw * (-0.5 / w_mat(i, j)) - 0.5 / (1.0 - s_mat(i, j));
      }
    }

    if (!grad->allFinite()) {
      grad->setZero();
      return kNegInf;
    }
    return lp;
  }

  void sigma_bar_mm_add(const MatrixXd& mm) {
    for (int a = 0; a < dm; ++a)
      for (int b = 0; b < dm; ++b)
        sigma_bar(spec.model_coords[static_cast<std::size_t>(a)],
                  spec.model_coords[static_cast<std::size_t>(b)]) += mm(a, b);
  }
};

PosteriorDensity::PosteriorDensity(const ModelSpec& spec)
    : impl_(std::make_unique<Impl>(spec)) {}
PosteriorDensity::~PosteriorDensity() = default;
PosteriorDensity::PosteriorDensity(PosteriorDensity&&) noexcept = default;
PosteriorDensity& PosteriorDensity::operator=(PosteriorDensity&&) noexcept = default;

int PosteriorDensity::dim() const { return impl_->ntotal; }

double PosteriorDensity::logp(const VectorXd& w) { return impl_->eval(w, nullptr); }

double PosteriorDensity::logp_grad(const VectorXd& w, VectorXd& grad) {
  return impl_->eval(w, &grad);
}

PanelParams PosteriorDensity::constrain(const VectorXd& w) const {
  const int d = impl_->d;
  PanelParams params;
  params.mu = w.head(d);
  params.sigma.resize(d);
  for (int i = 0; i < d; ++i) params.sigma(i) = std::exp(w(d + i));
  MatrixXd chol = MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < i; ++j) {
      const double y = w(2 * d + pair_index(i, j));
      chol(i, j) = std::tanh(y) * std::sqrt(1.0 - s);
      s += chol(i, j) * chol(i, j);
    }
    chol(i, i) = std::sqrt(std::max(1.0 - s, 0.0));
  }
  params.omega.noalias() = chol * chol.transpose();
  params.omega.diagonal().setOnes();
  params.omega = (0.5 * (params.omega + params.omega.transpose())).eval();
  params.tau = std::exp(w(2 * d + impl_->npairs));
  return params;
}

std::vector<std::string> PosteriorDensity::coordinate_names() const {
  const int d = impl_->d;
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(impl_->ntotal));
  for (int i = 0; i < d; ++i) names.push_back("mu[" + std::to_string(i) + "]");
  for (int i = 0; i < d; ++i) names.push_back("log_sigma[" + std::to_string(i) + "]");
  for (int i = 1; i < d; ++i)
    for (int j = 0; j < i; ++j)
      names.push_back("cpc[" + std::to_string(i) + "," + std::to_string(j) + "]");
  names.push_back("log_tau");
  for (std::size_t r = 0; r < impl_->spec.record_latents.size(); ++r)
    for (int q = 0; q < impl_->spec.record_latents[r].len; ++q)
      names.push_back("xi[" + std::to_string(r) + "][" + std::to_string(q) + "]");
  return names;
}

const ModelSpec& PosteriorDensity::spec() const { return impl_->spec; }

}  // namespace panel
