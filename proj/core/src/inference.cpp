#include "bnnood/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "bnnood/metrics.hpp"
#include "bnnood/rng.hpp"

namespace bnnood {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
}

void VbConfig::validate() const {
  if (tau < 0.0) throw std::invalid_argument("vb config: tau must be >= 0");
  if (!(prior_precision > 0.0)) {
    throw std::invalid_argument("vb config: prior precision must be > 0");
  }
  if (elbo_samples < 1 || predict_samples < 1) {
    throw std::invalid_argument("vb config: sample counts must be >= 1");
  }
}

void LaplaceConfig::validate() const {
  for (double v : prior_grid) {
    if (!(v > 0.0)) throw std::invalid_argument("laplace config: grid entries must be > 0");
  }
  if (predict_samples < 1) {
    throw std::invalid_argument("laplace config: predict_samples must be >= 1");
  }
}

std::vector<double> LaplaceConfig::resolved_grid() const {
  if (!prior_grid.empty()) return prior_grid;
  std::vector<double> grid(15);
  for (int i = 0; i < 15; ++i) {
    grid[static_cast<std::size_t>(i)] = std::pow(10.0, -4.0 + 8.0 * i / 14.0);
  }
  return grid;
}

TrainingAbort::TrainingAbort(std::size_t step_, double lr_, const std::string& what)
    : std::runtime_error(what), step(step_), lr(lr_) {}

double cosine_lr(double lr0, std::size_t step, std::size_t total_steps) {
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace,
                     bool vb_columns) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("trace csv: cannot open " + path.string());
  os << (vb_columns ? "step,lr,objective,elbo,kl\n" : "step,lr,objective\n");
  char buf[128];
  for (const TraceRow& row : trace) {
    if (vb_columns) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", row.step, row.lr,
                    row.objective, row.elbo, row.kl);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", row.step, row.lr, row.objective);
    }
    os << buf;
  }
}

namespace {

// Maximizing optimizer over a flat parameter vector.
class Ascender {
 public:
  Ascender(const TrainConfig& cfg, std::size_t dim)
      : cfg_(cfg), m_(dim, 0.0), v_(dim, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    if (cfg_.optimizer == OptimizerKind::Adam) {
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        params[i] += lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.adam_eps);
      }
    } else {
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.momentum * m_[i] + grad[i];
        params[i] += lr * m_[i];
      }
    }
  }

 private:
  const TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// Deterministic cycling sampler over a shuffled index pool.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : idx_(n), rng_(seed) {
    std::iota(idx_.begin(), idx_.end(), std::size_t{0});
    rng_.shuffle(idx_);
  }

  std::vector<std::size_t> next(std::size_t want) {
    std::vector<std::size_t> out;
    out.reserve(want);
    while (out.size() < want) {
      if (at_ == idx_.size()) {
        rng_.shuffle(idx_);
        at_ = 0;
      }
      out.push_back(idx_[at_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> idx_;
  Rng rng_;
  std::size_t at_ = 0;
};

}  // namespace

TrainResult train_map(Mlp model, const LikelihoodSpec& spec, const LabeledSet& D,
                      const LabeledSet* D_out, const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (spec.uses_ood() && (D_out == nullptr || D_out->size() == 0)) {
    throw std::invalid_argument("train_map: OOD variant requires a non-empty OOD set");
  }
  const std::size_t m = D.size();
  const std::size_t bs = std::min(cfg.batch_size, m);
  const std::size_t steps_per_epoch = (m + bs - 1) / bs;
  const std::size_t total_steps = cfg.epochs * steps_per_epoch;

  Rng shuffle_rng(Rng::mix(cfg.seed, 1));
  BatchSampler ood_sampler(D_out != nullptr && D_out->size() > 0 ? D_out->size() : 1,
                           Rng::mix(cfg.seed, 2));

  Ascender opt(cfg, model.param_count());
  std::vector<TraceRow> trace;
  trace.reserve(total_steps);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(lo + bs, m);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                          order.begin() + static_cast<std::ptrdiff_t>(hi));
      const LabeledSet in_batch = take_rows(D, rows);

      LabeledSet out_batch;
      JointBatch jb;
      jb.in_set = &in_batch;
      jb.in_scale = static_cast<double>(m) / static_cast<double>(in_batch.size());
      if (spec.uses_ood()) {
        const std::size_t want = std::min(cfg.batch_size, D_out->size());
        out_batch = take_rows(*D_out, ood_sampler.next(want));
        jb.out_set = &out_batch;
        jb.out_scale = static_cast<double>(D_out->size()) / static_cast<double>(out_batch.size());
      }

      const double lr =
          cfg.cosine_decay ? cosine_lr(cfg.lr, step, total_steps) : cfg.lr;
      const ad::ValueGrad vg =
          joint_objective_grad(spec, model, model.params, jb, cfg.weight_decay);
      if (!std::isfinite(vg.value)) {
        char msg[96];
        std::snprintf(msg, sizeof(msg), "train_map: non-finite objective at step %zu (lr %.6g)",
                      step, lr);
        throw TrainingAbort(step, lr, msg);
      }
      opt.step(model.params, vg.grad, lr);
      trace.push_back({step, lr, vg.value, std::numeric_limits<double>::quiet_NaN(),
                       std::numeric_limits<double>::quiet_NaN()});
    }
  }
  return {std::move(model), std::move(trace)};
}

double kl_diag_gaussian(std::span<const double> q_mean, std::span<const double> q_var,
                        std::span<const double> p_mean, std::span<const double> p_var) {
  const std::size_t n = q_mean.size();
  if (q_var.size() != n || p_mean.size() != n || p_var.size() != n) {
    throw std::invalid_argument("kl_diag_gaussian: length mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(q_var[i] > 0.0) || !(p_var[i] > 0.0)) {
      throw std::domain_error("kl_diag_gaussian: variances must be positive");
    }
    const double dm = q_mean[i] - p_mean[i];
    kl += q_var[i] / p_var[i] + dm * dm / p_var[i] - 1.0 + std::log(p_var[i] / q_var[i]);
  }
  return 0.5 * kl;
}

namespace {

// Activations after the last hidden layer; the frozen part of a last-layer
// posterior. For a 0-hidden-layer model this is X itself.
ad::Tensor frozen_features(const Mlp& model, const ad::Tensor& X) {
  const std::size_t L = model.num_layers();
  if (L == 1) return X;
  ad::Tensor h = X;
  std::size_t at = 0;
  for (std::size_t l = 0; l + 2 < model.widths.size(); ++l) {
    const std::size_t in = model.widths[l], out = model.widths[l + 1];
    const double* W = &model.params[at];
    const double* bias = &model.params[at + in * out];
    at += in * out + out;
    ad::Tensor z = ad::Tensor::zeros({h.rows(), out});
    for (std::size_t i = 0; i < h.rows(); ++i) {
      double* zrow = &z.values[i * out];
      for (std::size_t j = 0; j < out; ++j) zrow[j] = bias[j];
      const double* hrow = &h.values[i * in];
      for (std::size_t p = 0; p < in; ++p) {
        const double hv = hrow[p];
        if (hv == 0.0) continue;
        const double* wrow = &W[p * out];
        for (std::size_t j = 0; j < out; ++j) zrow[j] += hv * wrow[j];
      }
    }
    if (model.activation == Activation::Relu) {
      for (double& v : z.values) v = v > 0.0 ? v : 0.0;
    } else {
      for (double& v : z.values) v = std::tanh(v);
    }
    h = std::move(z);
  }
  return h;
}

LabeledSet with_features(const LabeledSet& src, ad::Tensor features) {
  LabeledSet out = src;
  out.X = std::move(features);
  return out;
}

}  // namespace

VbResult fit_vb(const Mlp& map_model, const LikelihoodSpec& spec, const LabeledSet& D,
                const LabeledSet* D_out, const VbConfig& cfg, const TrainConfig& train_cfg) {
  cfg.validate();
  train_cfg.validate();
  spec.validate();
  if (spec.uses_ood() && (D_out == nullptr || D_out->size() == 0)) {
    throw std::invalid_argument("fit_vb: OOD variant requires a non-empty OOD set");
  }

  const Mlp::Slice slice = map_model.last_layer_slice();
  const std::size_t len = slice.length;

  // Earlier layers are frozen, so the head sees fixed features.
  Mlp head;
  head.widths = {map_model.widths[map_model.widths.size() - 2], map_model.output_dim()};
  head.activation = map_model.activation;
  head.params.assign(map_model.params.begin() + static_cast<std::ptrdiff_t>(slice.offset),
                     map_model.params.end());

  const LabeledSet D_feat = with_features(D, frozen_features(map_model, D.X));
  LabeledSet D_out_feat;
  if (spec.uses_ood()) {
    D_out_feat = with_features(*D_out, frozen_features(map_model, D_out->X));
  }

  // Variational parameters: per-coordinate mean (init MAP) and log-std.
  std::vector<double> mu = head.params;
  std::vector<double> log_std(len, cfg.init_log_std);
  const std::vector<double> p_mean(len, 0.0);
  const std::vector<double> p_var(len, 1.0 / cfg.prior_precision);

  const std::size_t m = D.size();
  const std::size_t bs = std::min(train_cfg.batch_size, m);
  const std::size_t steps_per_epoch = (m + bs - 1) / bs;
  const std::size_t total_steps = train_cfg.epochs * steps_per_epoch;

  Rng shuffle_rng(Rng::mix(train_cfg.seed, 11));
  Rng eps_rng(Rng::mix(train_cfg.seed, 12));
  BatchSampler ood_sampler(spec.uses_ood() ? D_out->size() : 1, Rng::mix(train_cfg.seed, 13));

  // One flat buffer [mu, log_std] so a single optimizer covers both.
  std::vector<double> flat(2 * len);
  std::copy(mu.begin(), mu.end(), flat.begin());
  std::copy(log_std.begin(), log_std.end(), flat.begin() + static_cast<std::ptrdiff_t>(len));
  Ascender opt(train_cfg, 2 * len);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TraceRow> trace;
  trace.reserve(total_steps);

  std::vector<double> theta(len), eps(len), grad(2 * len), q_var(len);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(lo + bs, m);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                          order.begin() + static_cast<std::ptrdiff_t>(hi));
      const LabeledSet in_batch = take_rows(D_feat, rows);

      LabeledSet out_batch;
      JointBatch jb;
      jb.in_set = &in_batch;
      jb.in_scale = static_cast<double>(m) / static_cast<double>(in_batch.size());
      if (spec.uses_ood()) {
        const std::size_t want = std::min(train_cfg.batch_size, D_out_feat.size());
        out_batch = take_rows(D_out_feat, ood_sampler.next(want));
        jb.out_set = &out_batch;
        jb.out_scale =
            static_cast<double>(D_out_feat.size()) / static_cast<double>(out_batch.size());
      }

      double* mu_ptr = flat.data();
      double* ls_ptr = flat.data() + len;
      std::fill(grad.begin(), grad.end(), 0.0);
      double data_value = 0.0;
      for (int s = 0; s < cfg.elbo_samples; ++s) {
        for (std::size_t i = 0; i < len; ++i) {
          eps[i] = eps_rng.normal();
          theta[i] = mu_ptr[i] + std::exp(ls_ptr[i]) * eps[i];
        }
        const ad::ValueGrad vg = joint_objective_grad(spec, head, theta, jb, 0.0);
        data_value += vg.value;
        for (std::size_t i = 0; i < len; ++i) {
          grad[i] += vg.grad[i];
          grad[len + i] += vg.grad[i] * eps[i] * std::exp(ls_ptr[i]);
        }
      }
      const double inv_s = 1.0 / static_cast<double>(cfg.elbo_samples);
      data_value *= inv_s;
      for (double& gv : grad) gv *= inv_s;

      for (std::size_t i = 0; i < len; ++i) q_var[i] = std::exp(2.0 * ls_ptr[i]);
      const double kl =
          kl_diag_gaussian({mu_ptr, len}, q_var, p_mean, p_var);
      // closed-form KL gradient under the zero-mean isotropic prior
      for (std::size_t i = 0; i < len; ++i) {
        grad[i] -= cfg.tau * mu_ptr[i] / p_var[i];
        grad[len + i] -= cfg.tau * (q_var[i] / p_var[i] - 1.0);
      }
      if (cfg.pin_log_std) {
        std::fill(grad.begin() + static_cast<std::ptrdiff_t>(len), grad.end(), 0.0);
      }

      const double elbo = data_value - cfg.tau * kl;
      const double lr =
          train_cfg.cosine_decay ? cosine_lr(train_cfg.lr, step, total_steps) : train_cfg.lr;
      if (!std::isfinite(elbo)) {
        char msg[96];
        std::snprintf(msg, sizeof(msg), "fit_vb: non-finite ELBO at step %zu (lr %.6g)", step, lr);
        throw TrainingAbort(step, lr, msg);
      }
      opt.step(flat, grad, lr);
      trace.push_back({step, lr, elbo, elbo, kl});
    }
  }

  Posterior post;
  post.kind = PosteriorKind::DiagGaussian;
  post.slice = slice;
  post.mean.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(len));
  post.variance.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    post.variance[i] = std::exp(2.0 * flat[len + i]);
  }
  post.n_samples = cfg.predict_samples;
  post.validate();
  return {std::move(post), std::move(trace)};
}

namespace {

// d(term)/d(logits) for one OOD example under the spec's OOD objective,
// obtained from a one-row tape.
ad::Tensor ood_logit_seed(const LikelihoodSpec& spec, const ad::Tensor& logits_row,
                          std::size_t c, double weight) {
  ad::Graph g;
  const int z = g.input(logits_row);
  int term = -1;
  switch (spec.variant) {
    case LikelihoodVariant::SoftLabel:
    case LikelihoodVariant::MixedLabel:
      term = dirichlet_term(g, z, uniform_soft_labels(1, c), spec.resolved_gamma(c));
      break;
    case LikelihoodVariant::OeLikelihood:
      term = oe_term(g, z);
      break;
    default:
      throw std::logic_error("ood_logit_seed: variant has no separate OOD term");
  }
  g.backward(term);
  ad::Tensor seed = ad::Tensor::zeros({1, c});
  const std::span<const double> gz = g.grad(z);
  for (std::size_t j = 0; j < c; ++j) seed.values[j] = weight * gz[j];
  return seed;
}

}  // namespace

std::vector<double> fisher_diagonal(const Mlp& model, const LikelihoodSpec& spec,
                                    const LabeledSet& D, const LabeledSet* D_out,
                                    LaplaceScope scope, bool include_ood) {
  const Mlp::Slice slice =
      scope == LaplaceScope::Full ? model.full_slice() : model.last_layer_slice();
  const std::size_t c = model.output_dim();
  std::vector<double> fisher(slice.length, 0.0);
  std::vector<double> grad(model.param_count());

  // One temporary per example so the dataset-level sum is a single addition
  // per example (keeps Fisher exactly additive under dataset concatenation).
  std::vector<double> example(slice.length);
  const auto expected_fisher_rows = [&](const ad::Tensor& X) {
    ad::Tensor xrow = ad::Tensor::zeros({1, X.cols()});
    for (std::size_t i = 0; i < X.rows(); ++i) {
      std::copy(&X.values[i * X.cols()], &X.values[(i + 1) * X.cols()], xrow.values.begin());
      const ForwardCache cache = mlp_forward_cached(model, model.params, xrow);
      const ad::Tensor probs = softmax_rows(cache.logits());
      std::fill(example.begin(), example.end(), 0.0);
      for (std::size_t k = 0; k < c; ++k) {
        const double pk = probs.values[k];
        if (pk == 0.0) continue;
        ad::Tensor seed = ad::Tensor::zeros({1, c});
        for (std::size_t j = 0; j < c; ++j) seed.values[j] = (j == k ? 1.0 : 0.0) - probs.values[j];
        std::fill(grad.begin(), grad.end(), 0.0);
        mlp_backward_from_logits(model, model.params, cache, seed, grad);
        for (std::size_t j = 0; j < slice.length; ++j) {
          const double gj = grad[slice.offset + j];
          example[j] += pk * gj * gj;
        }
      }
      for (std::size_t j = 0; j < slice.length; ++j) fisher[j] += example[j];
    }
  };

  expected_fisher_rows(D.X);

  if (include_ood && spec.uses_ood() && D_out != nullptr && D_out->size() > 0) {
    if (spec.variant == LikelihoodVariant::NoneClass) {
      // Same class-weighted form; the none class is just one of the c outputs.
      expected_fisher_rows(D_out->X);
    } else {
      const double weight =
          spec.ood_weight * (spec.variant == LikelihoodVariant::OeLikelihood && spec.tempered_oe
                                 ? 1.0 / (static_cast<double>(c) *
                                          static_cast<double>(D_out->size()))
                                 : 1.0);
      ad::Tensor xrow = ad::Tensor::zeros({1, D_out->dim()});
      for (std::size_t i = 0; i < D_out->size(); ++i) {
        std::copy(&D_out->X.values[i * D_out->dim()], &D_out->X.values[(i + 1) * D_out->dim()],
                  xrow.values.begin());
        const ForwardCache cache = mlp_forward_cached(model, model.params, xrow);
        const ad::Tensor seed = ood_logit_seed(spec, cache.logits(), c, weight);
        std::fill(grad.begin(), grad.end(), 0.0);
        mlp_backward_from_logits(model, model.params, cache, seed, grad);
        for (std::size_t j = 0; j < slice.length; ++j) {
          const double gj = grad[slice.offset + j];
          fisher[j] += gj * gj;
        }
      }
    }
  }

  for (double v : fisher) {
    if (!std::isfinite(v)) throw std::runtime_error("fisher_diagonal: non-finite entry");
  }
  return fisher;
}

double tune_prior_precision(const Mlp& model, std::span<const double> fisher,
                            std::span<const double> grid, const LabeledSet& validation,
                            Mlp::Slice slice, int predict_samples, std::uint64_t seed) {
  if (grid.empty()) throw std::invalid_argument("tune_prior_precision: grid is empty");
  if (grid.size() == 1) return grid[0];
  if (!validation.has_hard() || validation.size() == 0) {
    throw std::invalid_argument("tune_prior_precision: validation set must be labeled");
  }
  double best_lambda = grid[0];
  double best_brier = std::numeric_limits<double>::infinity();
  Posterior cand;
  cand.kind = PosteriorKind::DiagGaussian;
  cand.slice = slice;
  cand.mean.assign(model.params.begin() + static_cast<std::ptrdiff_t>(slice.offset),
                   model.params.begin() + static_cast<std::ptrdiff_t>(slice.offset + slice.length));
  cand.n_samples = predict_samples;
  for (double lambda : grid) {
    cand.variance.resize(slice.length);
    for (std::size_t i = 0; i < slice.length; ++i) {
      cand.variance[i] = 1.0 / (fisher[i] + lambda);
    }
    PredictionLog log;
    log.probs = predict(model, cand, validation.X, seed);  // fixed seed across candidates
    log.labels = validation.hard;
    const double score = brier(log);
    if (score < best_brier || (score == best_brier && lambda > best_lambda)) {
      best_brier = score;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

Posterior fit_laplace(const Mlp& map_model, const LikelihoodSpec& spec, const LabeledSet& D,
                      const LabeledSet* D_out, const LaplaceConfig& cfg,
                      const LabeledSet& validation) {
  cfg.validate();
  const Mlp::Slice slice =
      cfg.scope == LaplaceScope::Full ? map_model.full_slice() : map_model.last_layer_slice();
  const std::vector<double> fisher =
      fisher_diagonal(map_model, spec, D, D_out, cfg.scope, cfg.include_ood_in_fisher);
  const std::vector<double> grid = cfg.resolved_grid();
  const double lambda = tune_prior_precision(map_model, fisher, grid, validation, slice,
                                             cfg.predict_samples, cfg.seed);
  Posterior post;
  post.kind = PosteriorKind::DiagGaussian;
  post.slice = slice;
  post.mean.assign(
      map_model.params.begin() + static_cast<std::ptrdiff_t>(slice.offset),
      map_model.params.begin() + static_cast<std::ptrdiff_t>(slice.offset + slice.length));
  post.variance.resize(slice.length);
  for (std::size_t i = 0; i < slice.length; ++i) {
    post.variance[i] = 1.0 / (fisher[i] + lambda);
  }
  post.n_samples = cfg.predict_samples;
  post.validate();
  return post;
}

}  // namespace bnnood
