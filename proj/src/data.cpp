#include "panel/data.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "panel/errors.hpp"
#include "panel/gaussian.hpp"

// vendored nlohmann/json lives at vendor/json.hpp
#if !__has_include(<nlohmann/json.hpp>)
#error "expected nlohmann/json"
#endif

namespace panel {

using json = nlohmann::json;

void Dataset::validate() const {
  if (num_classes < 2 || num_models < 1 || num_experts < 1)
    throw SchemaError("Dataset: need K >= 2, M >= 1, H >= 1");
  for (const auto& rec : records) {
    if (static_cast<int>(rec.model_probs.size()) != num_models)
      throw SchemaError("Dataset: record with wrong number of classifiers");
    for (const auto& p : rec.model_probs)
      if (p.k() != num_classes)
        throw SchemaError("Dataset: classifier output with wrong K");
    if (static_cast<int>(rec.expert_votes.size()) != num_experts)
      throw SchemaError("Dataset: record with wrong number of votes");
    for (int v : rec.expert_votes)
      if (v < 1 || v > num_classes) throw SchemaError("Dataset: vote out of range");
  }
}

namespace {

void append_double(std::string& out, double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  out += buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream f(path);
  if (!f) throw DomainError("save_dataset: cannot open " + path);
  f << "{\"format\":\"panel-dataset\",\"version\":1,\"K\":" << ds.num_classes
    << ",\"M\":" << ds.num_models << ",\"H\":" << ds.num_experts << "}\n";
  std::string line;
  for (const auto& rec : ds.records) {
    line.clear();
    line += "{\"model_probs\":[";
    for (std::size_t m = 0; m < rec.model_probs.size(); ++m) {
      if (m) line += ',';
      line += '[';
      for (int k = 0; k < rec.model_probs[m].k(); ++k) {
        if (k) line += ',';
        append_double(line, rec.model_probs[m][k]);
      }
      line += ']';
    }
    line += "],\"expert_votes\":[";
    for (std::size_t i = 0; i < rec.expert_votes.size(); ++i) {
      if (i) line += ',';
      line += std::to_string(rec.expert_votes[i]);
    }
    line += ']';
    if (!rec.segment.empty()) {
      line += ",\"segment\":";
      line += json(rec.segment).dump();
    }
    line += '}';
    f << line << '\n';
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DomainError("load_dataset: cannot open " + path);

  Dataset ds;
  std::string line;
  int lineno = 0;

  if (!std::getline(f, line)) throw ParseError("empty file", 1);
  ++lineno;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad header: ") + e.what(), lineno);
  }
  if (!header.is_object() || header.value("format", "") != "panel-dataset")
    throw ParseError("missing panel-dataset header", lineno);
  if (header.value("version", 0) != 1)
    throw SchemaError("load_dataset: unsupported format version");
  try {
    ds.num_classes = header.at("K").get<int>();
    ds.num_models = header.at("M").get<int>();
    ds.num_experts = header.at("H").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad header fields: ") + e.what(), lineno);
  }
  if (ds.num_classes < 2 || ds.num_models < 1 || ds.num_experts < 1)
    throw SchemaError("load_dataset: need K >= 2, M >= 1, H >= 1");

  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), lineno);
    }
    if (!rec.is_object() || !rec.contains("model_probs") ||
        !rec.contains("expert_votes"))
      throw ParseError("record needs model_probs and expert_votes", lineno);

    ExampleRecord out;
    const json& mp = rec["model_probs"];
    if (!mp.is_array() || static_cast<int>(mp.size()) != ds.num_models)
      throw SchemaError("load_dataset: wrong number of classifiers at line " +
                        std::to_string(lineno));
    for (const json& probs : mp) {
      if (!probs.is_array() || static_cast<int>(probs.size()) != ds.num_classes)
        throw SchemaError("load_dataset: classifier row with wrong K at line " +
                          std::to_string(lineno));
      std::vector<double> v;
      v.reserve(probs.size());
      for (const json& x : probs) {
        if (!x.is_number()) throw ParseError("probability is not a number", lineno);
        v.push_back(x.get<double>());
      }
      int clamped = 0;
      try {
        out.model_probs.push_back(ProbVec::floored(v, 1e-12, &clamped));
      } catch (const DomainError& e) {
        throw SchemaError(std::string("load_dataset: ") + e.what() + " at line " +
                          std::to_string(lineno));
      }
      ds.floored_entries += clamped;
    }

    const json& votes = rec["expert_votes"];
    if (!votes.is_array() || static_cast<int>(votes.size()) != ds.num_experts)
      throw SchemaError("load_dataset: wrong number of votes at line " +
                        std::to_string(lineno));
    for (const json& v : votes) {
      if (!v.is_number_integer()) throw ParseError("vote is not an integer", lineno);
      const int vote = v.get<int>();
      if (vote < 1 || vote > ds.num_classes)
        throw SchemaError("load_dataset: vote out of range at line " +
                          std::to_string(lineno));
      out.expert_votes.push_back(vote);
    }
    if (rec.contains("segment")) {
      if (!rec["segment"].is_string()) throw ParseError("segment must be a string", lineno);
      out.segment = rec["segment"].get<std::string>();
    }
    ds.records.push_back(std::move(out));
  }
  if (ds.floored_entries > 0)
    std::fprintf(stderr, "load_dataset: floored %d nonpositive probabilities\n",
                 ds.floored_entries);
  ds.provenance = path;
  return ds;
}

Dataset gen_equicorr_voters(int num_experts, double rho, int num_examples,
                            double classifier_corr, Rng& rng) {
  if (num_experts < 1) throw DomainError("gen_equicorr_voters: H must be >= 1");
  if (num_examples < 1) throw DomainError("gen_equicorr_voters: T must be >= 1");
  const int d = num_experts + 1;  // experts then one classifier coordinate
  MatrixXd corr = equicorrelated_cov(num_experts, rho);
  MatrixXd full = MatrixXd::Identity(d, d);
  full.topLeftCorner(num_experts, num_experts) = corr;
  for (int i = 0; i < num_experts; ++i) {
    full(i, d - 1) = classifier_corr;
    full(d - 1, i) = classifier_corr;
  }
  MatrixXd chol;
  try {
    chol = cholesky(full);
  } catch (const NumericalError&) {
    throw DomainError("gen_equicorr_voters: correlation matrix is not SPD");
  }

  Dataset ds;
  ds.num_classes = 2;
  ds.num_models = 1;
  ds.num_experts = num_experts;
  ds.provenance = "gen_equicorr_voters";
  ds.records.reserve(static_cast<std::size_t>(num_examples));
  VectorXd eps(d);
  for (int t = 0; t < num_examples; ++t) {
    for (int i = 0; i < d; ++i) eps(i) = rng.normal();
    const VectorXd z = chol * eps;
    ExampleRecord rec;
    rec.expert_votes.reserve(static_cast<std::size_t>(num_experts));
    for (int i = 0; i < num_experts; ++i)
      rec.expert_votes.push_back(z(i) > 0.0 ? 1 : 2);
    rec.model_probs.push_back(from_logits(LogitVec({z(d - 1)})));
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void ClasswiseSpec::validate() const {
  if (num_classes < 2 || num_experts < 1)
    throw DomainError("ClasswiseSpec: need K >= 2 and H >= 1");
  if (static_cast<int>(expert_class_accuracy.size()) != num_experts)
    throw DomainError("ClasswiseSpec: expert accuracy matrix must have H rows");
  for (const auto& row : expert_class_accuracy) {
    if (static_cast<int>(row.size()) != num_classes)
      throw DomainError("ClasswiseSpec: expert accuracy row must have K entries");
    for (double a : row)
      if (!(a > 0.0 && a < 1.0) && a != 1.0)
        throw DomainError("ClasswiseSpec: accuracies must lie in (0, 1]");
  }
  if (static_cast<int>(classifier_class_accuracy.size()) != num_classes)
    throw DomainError("ClasswiseSpec: classifier accuracy must have K entries");
  for (double a : classifier_class_accuracy)
    if (!(a > 0.0 && a < 1.0) && a != 1.0)
      throw DomainError("ClasswiseSpec: accuracies must lie in (0, 1]");
  if (!(confidence_sharpness > 0.0))
    throw DomainError("ClasswiseSpec: confidence_sharpness must be positive");
  if (!class_prior.empty()) {
    if (static_cast<int>(class_prior.size()) != num_classes)
      throw DomainError("ClasswiseSpec: class_prior must have K entries");
    ProbVec check(class_prior);
  }
}

ClasswiseData gen_classwise_experts(const ClasswiseSpec& spec, int num_examples,
                                    Rng& rng) {
  spec.validate();
  if (num_examples < 1) throw DomainError("gen_classwise_experts: T must be >= 1");
  const int k = spec.num_classes;
  std::vector<double> prior = spec.class_prior;
  if (prior.empty()) prior.assign(static_cast<std::size_t>(k), 1.0 / k);

  ClasswiseData out;
  out.dataset.num_classes = k;
  out.dataset.num_models = 1;
  out.dataset.num_experts = spec.num_experts;
  out.dataset.provenance = "gen_classwise_experts";
  out.dataset.records.reserve(static_cast<std::size_t>(num_examples));
  out.true_classes.reserve(static_cast<std::size_t>(num_examples));

  std::vector<double> dirichlet(static_cast<std::size_t>(k));
  for (int t = 0; t < num_examples; ++t) {
    const int truth = 1 + rng.categorical(prior.data(), k);
    ExampleRecord rec;
    for (int i = 0; i < spec.num_experts; ++i) {
      const double acc =
          spec.expert_class_accuracy[static_cast<std::size_t>(i)][static_cast<std::size_t>(truth - 1)];
      int vote = truth;
      if (rng.uniform01() >= acc) {
        // uniform among the K-1 wrong classes
        int wrong = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k - 1)));
        if (wrong >= truth) ++wrong;
        vote = wrong;
      }
      rec.expert_votes.push_back(vote);
    }

    int target = truth;
    if (rng.uniform01() >= spec.classifier_class_accuracy[static_cast<std::size_t>(truth - 1)]) {
      int wrong = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k - 1)));
      if (wrong >= truth) ++wrong;
      target = wrong;
    }
    // Dirichlet spread with extra weight on the target class; the largest
    // entry is swapped into the target slot so the argmax is the target.
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      const double alpha = c + 1 == target ? spec.confidence_sharpness : 1.0;
      dirichlet[static_cast<std::size_t>(c)] = rng.gamma(alpha);
      sum += dirichlet[static_cast<std::size_t>(c)];
    }
    for (double& x : dirichlet) x /= sum;
    const std::size_t argmax = static_cast<std::size_t>(
        std::max_element(dirichlet.begin(), dirichlet.end()) - dirichlet.begin());
    std::swap(dirichlet[argmax], dirichlet[static_cast<std::size_t>(target - 1)]);
    rec.model_probs.push_back(ProbVec::floored(dirichlet, 1e-12));

    out.dataset.records.push_back(std::move(rec));
    out.true_classes.push_back(truth);
  }
  return out;
}

Dataset concat_shift(const Dataset& a, const Dataset& b) {
  if (b.records.empty() && b.num_classes == 0) return a;
  if (a.num_classes != b.num_classes || a.num_models != b.num_models ||
      a.num_experts != b.num_experts)
    throw SchemaError("concat_shift: K/M/H mismatch");
  Dataset out = a;
  out.records.insert(out.records.end(), b.records.begin(), b.records.end());
  out.provenance = a.provenance + "+" + b.provenance;
  out.floored_entries = a.floored_entries + b.floored_entries;
  return out;
}

}  // namespace panel
