#include "bnnood/likelihoods.hpp"

#include <cmath>
#include <stdexcept>

#include "bnnood/special.hpp"

namespace bnnood {

void LikelihoodSpec::validate() const {
  if (gamma < 0.0) throw std::invalid_argument("likelihood spec: gamma must be > 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("likelihood spec: smoothing must be in [0, 1)");
  }
}

LabeledSet none_class_transform(const LabeledSet& D, const LabeledSet& D_out, std::size_t c) {
  if (D.size() > 0 && D_out.size() > 0 && D.dim() != D_out.dim()) {
    throw std::invalid_argument("none_class_transform: feature dimension mismatch");
  }
  for (int y : D.hard) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::invalid_argument("none_class_transform: in-distribution label out of [0, c)");
    }
  }
  LabeledSet out_labeled = D_out;
  out_labeled.hard.assign(D_out.size(), static_cast<int>(c));
  out_labeled.soft = ad::Tensor();
  if (D.size() == 0) return out_labeled;
  if (D_out.size() == 0) {
    LabeledSet copy = D;
    return copy;
  }
  LabeledSet joined = concat(D, out_labeled);
  joined.origin = Origin::InDistribution;
  return joined;
}

LabeledSet replicate_ood_labels(const LabeledSet& D_out, std::size_t c) {
  if (c < 2) throw std::invalid_argument("replicate_ood_labels: need c >= 2");
  const std::size_t m = D_out.size();
  LabeledSet out;
  out.X = ad::Tensor::zeros({m * c, D_out.dim()});
  out.hard.resize(m * c);
  out.origin = Origin::OutOfDistribution;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t row = i * c + k;
      for (std::size_t j = 0; j < D_out.dim(); ++j) out.X.at(row, j) = D_out.X.at(i, j);
      out.hard[row] = static_cast<int>(k);
    }
  }
  return out;
}

ad::Tensor smooth_one_hot(std::span<const int> labels, std::size_t c, double eps) {
  ad::Tensor y = ad::Tensor::zeros({labels.size(), c});
  const double off = eps / static_cast<double>(c);
  const double on = 1.0 - eps + off;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t k = 0; k < c; ++k) y.at(i, k) = off;
    y.at(i, static_cast<std::size_t>(labels[i])) = on;
  }
  return y;
}

ad::Tensor uniform_soft_labels(std::size_t m, std::size_t c) {
  ad::Tensor y = ad::Tensor::zeros({m, c});
  const double u = 1.0 / static_cast<double>(c);
  for (double& v : y.values) v = u;
  return y;
}

int categorical_term(ad::Graph& g, int logits, std::span<const int> labels) {
  const std::size_t m = g.value(logits).rows();
  const std::size_t c = g.value(logits).cols();
  if (labels.size() != m) {
    throw std::invalid_argument("categorical_term: label count != logit rows");
  }
  ad::Tensor mask = ad::Tensor::zeros({m, c});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::invalid_argument("categorical_term: label out of range");
    }
    mask.at(i, static_cast<std::size_t>(y)) = 1.0;
  }
  return g.sum(g.mul(g.log_softmax(logits), g.constant(std::move(mask))));
}

int dirichlet_term(ad::Graph& g, int logits, const ad::Tensor& soft_labels, double gamma) {
  // capture dims by value: pushing nodes may reallocate the tape
  const std::size_t m = g.value(logits).rows();
  const std::size_t c = g.value(logits).cols();
  if (soft_labels.rows() != m || soft_labels.cols() != c) {
    throw std::invalid_argument("dirichlet_term: soft label shape != logit shape");
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("dirichlet_term: gamma must be > 0");
  ad::Tensor log_y = soft_labels;
  log_y.grad.clear();
  for (double& v : log_y.values) {
    if (!(v > 0.0)) {
      throw std::domain_error("dirichlet_term: soft labels must be interior (one-hot undefined)");
    }
    v = std::log(v);
  }
  // alpha = gamma * softmax(logits); alpha_0 = gamma
  const int alpha = g.mul(g.exp(g.log_softmax(logits)), g.constant_scalar(gamma));
  const int lg_alpha0 = g.constant_scalar(static_cast<double>(m) * log_gamma(gamma));
  const int neg_lg_alpha = g.sub(lg_alpha0, g.sum(g.lgamma(alpha)));
  const int ones = g.constant(ad::Tensor({m, c}, std::vector<double>(m * c, 1.0)));
  const int y_term = g.sum(g.mul(g.sub(alpha, ones), g.constant(std::move(log_y))));
  return g.add(neg_lg_alpha, y_term);
}

int oe_term(ad::Graph& g, int logits) { return g.sum(g.log_softmax(logits)); }

namespace {

ad::Tensor logits_graph_free(const Mlp& model, std::span<const double> theta,
                             const ad::Tensor& X) {
  return mlp_logits(model, theta, X);
}

// Scalar evaluation without a tape; keeps summation order identical to the
// graph path (row-major, left to right).
double categorical_value(const ad::Tensor& logits, std::span<const int> labels) {
  ad::Tensor ls = logits;
  const std::size_t m = ls.rows(), c = ls.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &ls.values[i * c];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    lse = mx + std::log(lse);
    total += row[static_cast<std::size_t>(labels[i])] - lse;
  }
  return total;
}

}  // namespace

double categorical_log_lik(const Mlp& model, std::span<const double> theta,
                           const LabeledSet& batch) {
  if (!batch.has_hard()) {
    throw std::invalid_argument("categorical_log_lik: batch must carry hard labels");
  }
  if (batch.size() == 0) return 0.0;
  for (int y : batch.hard) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.output_dim()) {
      throw std::invalid_argument("categorical_log_lik: label out of range");
    }
  }
  return categorical_value(logits_graph_free(model, theta, batch.X), batch.hard);
}

double dirichlet_log_lik(const Mlp& model, std::span<const double> theta, const LabeledSet& batch,
                         double gamma) {
  if (!batch.has_soft()) {
    throw std::invalid_argument("dirichlet_log_lik: batch must carry soft labels");
  }
  if (batch.size() == 0) return 0.0;
  ad::Graph g;
  const int logits = g.constant(logits_graph_free(model, theta, batch.X));
  return g.scalar_value(dirichlet_term(g, logits, batch.soft, gamma));
}

double mixed_log_lik(const Mlp& model, std::span<const double> theta, const LabeledSet& D,
                     const LabeledSet& D_out, double gamma, double ood_weight) {
  double total = 0.0;
  if (D.size() > 0) total += categorical_log_lik(model, theta, D);
  if (D_out.size() > 0) total += ood_weight * dirichlet_log_lik(model, theta, D_out, gamma);
  return total;
}

double oe_log_lik(const Mlp& model, std::span<const double> theta, const LabeledSet& D_out) {
  if (D_out.size() == 0) return 0.0;
  const ad::Tensor logits = logits_graph_free(model, theta, D_out.X);
  ad::Tensor ls = logits;
  const std::size_t m = ls.rows(), c = ls.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &ls.values[i * c];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    lse = mx + std::log(lse);
    for (std::size_t j = 0; j < c; ++j) total += row[j] - lse;
  }
  return total;
}

BuiltJoint build_joint_objective(ad::Graph& g, const LikelihoodSpec& spec, const Mlp& model,
                                 std::span<const double> theta, const JointBatch& batch,
                                 double prior_precision) {
  spec.validate();
  if (batch.in_set == nullptr) {
    throw std::invalid_argument("joint objective: in-distribution batch missing");
  }
  const bool have_out = batch.out_set != nullptr && batch.out_set->size() > 0;
  if (spec.uses_ood() && batch.out_set == nullptr) {
    throw std::invalid_argument("joint objective: OOD variant requires an OOD set");
  }
  const std::size_t c = model.output_dim();

  BuiltJoint out;
  out.param_nodes = add_param_inputs(g, model, theta);
  std::vector<int> terms;

  const LabeledSet& D = *batch.in_set;
  if (D.size() > 0) {
    const int logits = mlp_logits_graph(g, model, out.param_nodes, D.X);
    int term;
    if (spec.variant == LikelihoodVariant::SoftLabel) {
      const std::size_t label_c = c;  // SoftLabel never pairs with class expansion
      const ad::Tensor y = D.has_soft()
                               ? D.soft
                               : smooth_one_hot(D.hard, label_c, spec.label_smoothing);
      term = dirichlet_term(g, logits, y, spec.resolved_gamma(label_c));
    } else {
      if (!D.has_hard()) {
        throw std::invalid_argument("joint objective: variant requires hard labels");
      }
      term = categorical_term(g, logits, D.hard);
    }
    terms.push_back(batch.in_scale == 1.0
                        ? term
                        : g.mul(term, g.constant_scalar(batch.in_scale)));
  }

  if (spec.uses_ood() && have_out) {
    const LabeledSet& D_out = *batch.out_set;
    const int logits = mlp_logits_graph(g, model, out.param_nodes, D_out.X);
    int term = -1;
    double weight = spec.ood_weight;
    switch (spec.variant) {
      case LikelihoodVariant::NoneClass: {
        // c+1-way categorical with every OOD row labeled as the last class.
        const std::vector<int> labels(D_out.size(), static_cast<int>(c - 1));
        term = categorical_term(g, logits, labels);
        weight *= batch.out_scale;
        break;
      }
      case LikelihoodVariant::SoftLabel:
      case LikelihoodVariant::MixedLabel: {
        term = dirichlet_term(g, logits, uniform_soft_labels(D_out.size(), c),
                              spec.resolved_gamma(c));
        weight *= batch.out_scale;
        break;
      }
      case LikelihoodVariant::OeLikelihood: {
        term = oe_term(g, logits);
        // Tempered: the 1/(c*m) factor makes the term a per-point mean, so the
        // full-set/batch correction cancels. Untempered: plain sum, corrected.
        weight *= spec.tempered_oe
                      ? 1.0 / (static_cast<double>(c) * static_cast<double>(D_out.size()))
                      : batch.out_scale;
        break;
      }
      default:
        break;
    }
    terms.push_back(weight == 1.0 ? term : g.mul(term, g.constant_scalar(weight)));
  }

  if (prior_precision > 0.0) {
    int sq = -1;
    for (int p : out.param_nodes) {
      const int s = g.sum(g.mul(p, p));
      sq = sq < 0 ? s : g.add(sq, s);
    }
    terms.push_back(g.mul(sq, g.constant_scalar(-0.5 * prior_precision)));
  }

  if (terms.empty()) {
    out.root = g.constant_scalar(0.0);
    return out;
  }
  int root = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) root = g.add(root, terms[i]);
  out.root = root;
  return out;
}

double joint_objective(const LikelihoodSpec& spec, const Mlp& model,
                       std::span<const double> theta, const LabeledSet& D,
                       const LabeledSet* D_out, double prior_precision) {
  ad::Graph g;
  JointBatch batch;
  batch.in_set = &D;
  batch.out_set = D_out;
  const BuiltJoint built = build_joint_objective(g, spec, model, theta, batch, prior_precision);
  return g.scalar_value(built.root);
}

ad::ValueGrad joint_objective_grad(const LikelihoodSpec& spec, const Mlp& model,
                                   std::span<const double> theta, const JointBatch& batch,
                                   double prior_precision) {
  ad::Graph g;
  const BuiltJoint built = build_joint_objective(g, spec, model, theta, batch, prior_precision);
  g.backward(built.root);
  ad::ValueGrad out;
  out.value = g.scalar_value(built.root);
  out.grad.assign(model.param_count(), 0.0);
  accumulate_param_grad(g, model, built.param_nodes, out.grad);
  return out;
}

}  // namespace bnnood
