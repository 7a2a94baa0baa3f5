#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bnnood/autodiff.hpp"
#include "bnnood/data.hpp"
#include "bnnood/models.hpp"

namespace bnnood {

enum class LikelihoodVariant : std::uint8_t {
  Categorical,   // baseline, in-distribution only
  NoneClass,     // extra class absorbs OOD inputs
  SoftLabel,     // Dirichlet over soft labels for both D and D_out
  MixedLabel,    // Categorical over D + Dirichlet(u) over D_out
  OeLikelihood,  // tempered Categorical over label-replicated D_out
};

struct LikelihoodSpec {
  LikelihoodVariant variant = LikelihoodVariant::Categorical;
  double gamma = 0.0;       // Dirichlet precision; <= 0 means "use class count"
  double ood_weight = 1.0;  // multiplier on the OOD term
  bool tempered_oe = true;  // apply the 1/(c*m_out) scale to the OE term
  double label_smoothing = 0.01;  // SoftLabel in-distribution smoothing epsilon

  bool uses_ood() const { return variant != LikelihoodVariant::Categorical; }
  double resolved_gamma(std::size_t c) const {
    return gamma > 0.0 ? gamma : static_cast<double>(c);
  }
  void validate() const;
};

// ---- label transforms ----

// Disjoint union of D and D_out with every OOD row hard-labeled c (0-indexed
// index of the added class). Pair with expand_none_class.
LabeledSet none_class_transform(const LabeledSet& D, const LabeledSet& D_out, std::size_t c);

// Each OOD point appears once per class, i-major k-minor.
LabeledSet replicate_ood_labels(const LabeledSet& D_out, std::size_t c);

ad::Tensor smooth_one_hot(std::span<const int> labels, std::size_t c, double eps);
ad::Tensor uniform_soft_labels(std::size_t m, std::size_t c);

// ---- graph-level terms (logits node -> scalar node) ----

// sum_i log_softmax(logits)[i, labels[i]]
int categorical_term(ad::Graph& g, int logits, std::span<const int> labels);

// sum_i [ lgamma(gamma) - sum_k lgamma(gamma*sigma_k) + sum_k (gamma*sigma_k - 1) log y_ik ]
// with sigma = softmax(logits) rows; soft label entries must be strictly positive.
int dirichlet_term(ad::Graph& g, int logits, const ad::Tensor& soft_labels, double gamma);

// sum_{i,k} log_softmax(logits)[i,k]; exactly categorical_term over the
// label-replicated set (same summation order).
int oe_term(ad::Graph& g, int logits);

// ---- scalar objectives over a batch ----

double categorical_log_lik(const Mlp& model, std::span<const double> theta,
                           const LabeledSet& batch);
double dirichlet_log_lik(const Mlp& model, std::span<const double> theta, const LabeledSet& batch,
                         double gamma);
double mixed_log_lik(const Mlp& model, std::span<const double> theta, const LabeledSet& D,
                     const LabeledSet& D_out, double gamma, double ood_weight = 1.0);
double oe_log_lik(const Mlp& model, std::span<const double> theta, const LabeledSet& D_out);

// ---- joint MAP objective (to maximize) ----

struct JointBatch {
  const LabeledSet* in_set = nullptr;
  const LabeledSet* out_set = nullptr;  // required for OOD variants
  double in_scale = 1.0;                // full-set / batch correction
  double out_scale = 1.0;
};

struct BuiltJoint {
  int root = -1;
  std::vector<int> param_nodes;
};

// in-distribution log-likelihood + OOD term per variant + log-prior
// (-lambda/2 ||theta||^2). The prior covers every parameter in theta.
BuiltJoint build_joint_objective(ad::Graph& g, const LikelihoodSpec& spec, const Mlp& model,
                                 std::span<const double> theta, const JointBatch& batch,
                                 double prior_precision);

double joint_objective(const LikelihoodSpec& spec, const Mlp& model,
                       std::span<const double> theta, const LabeledSet& D,
                       const LabeledSet* D_out, double prior_precision);

ad::ValueGrad joint_objective_grad(const LikelihoodSpec& spec, const Mlp& model,
                                   std::span<const double> theta, const JointBatch& batch,
                                   double prior_precision);

}  // namespace bnnood
