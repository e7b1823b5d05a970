#pragma once

#include <optional>
#include <string>
#include <vector>

#include "panel/rng.hpp"
#include "panel/simplex.hpp"

namespace panel {

// One example's agent outputs: M classifier probability vectors plus the full
// panel's replay votes (1-based). Votes are revealed to policies only when
// queried; the file stores all of them.
struct ExampleRecord {
  std::vector<ProbVec> model_probs;
  std::vector<int> expert_votes;
  std::string segment;  // optional tag for shift experiments
};

struct Dataset {
  int num_classes = 0;   // K
  int num_models = 0;    // M
  int num_experts = 0;   // H
  std::vector<ExampleRecord> records;
  std::string provenance;
  int floored_entries = 0;  // probabilities clamped during ingestion

  void validate() const;
};

// Line-delimited JSON: a header object {"format":"panel-dataset","version":1,
// "K":..,"M":..,"H":..} followed by one record object per line with keys
// model_probs, expert_votes and optional segment. Probabilities are written
// with 17 significant digits so a save/load round trip is value-exact.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

// Binary-vote panel driven by latent equicorrelated Gaussian logits: experts
// are pairwise correlated at rho, one classifier coordinate is correlated at
// classifier_corr with every expert. Vote 1 iff the latent logit is positive;
// the classifier emits the logistic transform of its own coordinate.
Dataset gen_equicorr_voters(int num_experts, double rho, int num_examples,
                            double classifier_corr, Rng& rng);

struct ClasswiseSpec {
  int num_classes = 3;
  int num_experts = 3;
  // H x K: probability expert i votes the true class when it is k
  std::vector<std::vector<double>> expert_class_accuracy;
  // K: probability the classifier's mass concentrates on the true class
  std::vector<double> classifier_class_accuracy;
  double confidence_sharpness = 8.0;  // Dirichlet weight on the argmax class
  std::vector<double> class_prior;    // defaults to uniform when empty

  void validate() const;
};

struct ClasswiseData {
  Dataset dataset;
  std::vector<int> true_classes;  // generator-internal; never serialized
};

// Panel with class-wise expertise: each expert votes the true class with its
// class-conditional accuracy, otherwise uniformly among the wrong classes.
// The classifier concentrates a Dirichlet draw on the true class with its
// class accuracy, otherwise on a random wrong class.
ClasswiseData gen_classwise_experts(const ClasswiseSpec& spec, int num_examples,
                                    Rng& rng);

// Records of a followed by records of b; shapes must match, segment tags kept.
Dataset concat_shift(const Dataset& a, const Dataset& b);

}  // namespace panel
