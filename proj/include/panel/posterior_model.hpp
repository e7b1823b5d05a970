#pragma once

#include <memory>
#include <string>
#include <vector>

#include "panel/model.hpp"
#include "panel/rng.hpp"

namespace panel {

// Generic description of the hierarchical model's density. Both the full
// panel model and the exchangeable reduction used by the INFEXP baseline
// compile to this form, so one evaluator serves both.
//
// Per record the classifier logits contribute a marginal Gaussian factor
// log N(z_M; mu_M, Sigma_MM). Latent expert logits are sampled fully
// non-centered: the sampler's latent coordinates xi are iid standard normal
// and the logits are reassembled as
//   z_O = mu_O + Sigma_OM Sigma_MM^-1 (z_M - mu_M) + chol(Sigma_O|M) xi,
// which leaves no direct coupling between the latent cloud and the global
// scale or correlation parameters except through the vote likelihoods.
// Tempered-categorical vote factors then act on slices of z_O.

// One record's classifier-marginal factor.
struct MarginalTerm {
  std::vector<double> model_logits;
};

// One conditional latent block (a whole record for the full model, one vote
// for the exchangeable reduction).
struct CondBlock {
  std::vector<int> coords;           // latent-side panel coordinates
  int latent_offset = 0;             // xi slots, one per coordinate
  std::vector<double> model_logits;  // conditioning data for this record
  // votes as (offset of the expert's K-1 slice within the block, class)
  std::vector<std::pair<int, int>> votes;
  int pattern = 0;  // filled by finalize()
};

struct ModelSpec {
  int num_classes = 0;
  int panel_dim = 0;
  HyperParams hp;
  std::vector<int> model_coords;  // classifier coordinates, shared by terms
  std::vector<MarginalTerm> marginals;
  std::vector<CondBlock> blocks;
  int n_latent = 0;

  struct RecordLatent {
    int offset = 0;
    int len = 0;
  };
  std::vector<RecordLatent> record_latents;  // per history record

  std::vector<std::vector<int>> patterns;  // unique block coordinate sets

  int corr_pairs() const { return panel_dim * (panel_dim - 1) / 2; }
  // unconstrained layout: mu | log sigma | corr cpc | log tau | latents
  int unconstrained_dim() const {
    return 2 * panel_dim + corr_pairs() + 1 + n_latent;
  }
  void finalize();  // dedup patterns, validate offsets
};

ModelSpec build_full_spec(const History& history, const HyperParams& hp);

// Exchangeable reduction: one shared expert block, experts iid given the
// classifier logits. Panel dimension is (K-1)(1+M).
ModelSpec build_exchangeable_spec(const History& history, const HyperParams& hp);

// Density evaluator with preallocated workspaces; one instance per thread.
// Operates on the unconstrained vector (log/tanh-CPC reparameterization) and
// includes all transform Jacobians, so its gradient is what a gradient-based
// sampler needs.
class PosteriorDensity {
 public:
  explicit PosteriorDensity(const ModelSpec& spec);
  ~PosteriorDensity();
  PosteriorDensity(PosteriorDensity&&) noexcept;
  PosteriorDensity& operator=(PosteriorDensity&&) noexcept;

  int dim() const;
  double logp(const VectorXd& w);
  double logp_grad(const VectorXd& w, VectorXd& grad);

  PanelParams constrain(const VectorXd& w) const;
  std::vector<std::string> coordinate_names() const;

  const ModelSpec& spec() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs the configured sampler over an arbitrary ModelSpec; the exchangeable
// baseline reuses this with its reduced spec.
PosteriorSampleSet sample_posterior_spec(const ModelSpec& spec,
                                         const ChainConfig& cfg, Rng& rng);

}  // namespace panel
