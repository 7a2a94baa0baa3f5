#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bnnood/data.hpp"
#include "bnnood/likelihoods.hpp"
#include "bnnood/models.hpp"

namespace bnnood {

enum class OptimizerKind : std::uint8_t { Adam = 0, SgdMomentum = 1 };

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 5e-4;  // prior precision of the MAP objective
  bool cosine_decay = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// step, lr, objective; elbo/kl populated by VB only.
struct TraceRow {
  std::size_t step = 0;
  double lr = 0.0;
  double objective = 0.0;
  double elbo = std::numeric_limits<double>::quiet_NaN();
  double kl = std::numeric_limits<double>::quiet_NaN();
};

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace,
                     bool vb_columns);

// Thrown when an objective goes non-finite mid-run; carries the abort site.
class TrainingAbort : public std::runtime_error {
 public:
  TrainingAbort(std::size_t step, double lr, const std::string& what);
  std::size_t step;
  double lr;
};

struct TrainResult {
  Mlp model;
  std::vector<TraceRow> trace;
};

// Minibatch ascent on the joint objective. Deterministic under cfg.seed
// (fixed shuffles, fixed OOD-batch pairing). lr follows cosine decay over
// total steps when enabled.
TrainResult train_map(Mlp model, const LikelihoodSpec& spec, const LabeledSet& D,
                      const LabeledSet* D_out, const TrainConfig& cfg);

double cosine_lr(double lr0, std::size_t step, std::size_t total_steps);

// ---- variational Bayes (last layer) ----

struct VbConfig {
  double tau = 0.1;              // ELBO KL trade-off
  double prior_precision = 5e-4;
  int elbo_samples = 5;
  int predict_samples = 200;
  double init_log_std = -3.0;
  bool pin_log_std = false;  // diagnostic: keep q degenerate at init scale

  void validate() const;
};

struct VbResult {
  Posterior posterior;  // DiagGaussian over the last-layer slice
  std::vector<TraceRow> trace;
};

// Maximizes ELBO(q) = E_q[data log-lik] - tau * KL(q || p) over a diagonal
// Gaussian on the last-layer slice, earlier layers frozen at the MAP.
VbResult fit_vb(const Mlp& map_model, const LikelihoodSpec& spec, const LabeledSet& D,
                const LabeledSet* D_out, const VbConfig& cfg, const TrainConfig& train_cfg);

// KL(q || p) for diagonal Gaussians:
// 0.5 * sum_i [ qv/pv + (qm-pm)^2/pv - 1 + log(pv/qv) ]
double kl_diag_gaussian(std::span<const double> q_mean, std::span<const double> q_var,
                        std::span<const double> p_mean, std::span<const double> p_var);

// ---- diagonal Laplace approximation ----

enum class LaplaceScope : std::uint8_t { Full = 0, LastLayer = 1 };

struct LaplaceConfig {
  std::vector<double> prior_grid;  // empty -> 15 log-spaced in [1e-4, 1e4]
  bool include_ood_in_fisher = true;
  int predict_samples = 20;
  LaplaceScope scope = LaplaceScope::Full;
  std::uint64_t seed = 0;  // MC seed shared by all tuning candidates

  std::vector<double> resolved_grid() const;
  void validate() const;
};

// Diagonal Fisher over the slice: expected (class-weighted) form on
// categorical terms, squared per-example OOD-term gradients on SL/ML/OE.
std::vector<double> fisher_diagonal(const Mlp& model, const LikelihoodSpec& spec,
                                    const LabeledSet& D, const LabeledSet* D_out,
                                    LaplaceScope scope, bool include_ood);

// arg min over grid of the validation Brier score of the LA predictive,
// fixed MC seed across candidates; ties broken toward larger lambda.
double tune_prior_precision(const Mlp& model, std::span<const double> fisher,
                            std::span<const double> grid, const LabeledSet& validation,
                            Mlp::Slice slice, int predict_samples, std::uint64_t seed);

Posterior fit_laplace(const Mlp& map_model, const LikelihoodSpec& spec, const LabeledSet& D,
                      const LabeledSet* D_out, const LaplaceConfig& cfg,
                      const LabeledSet& validation);

}  // namespace bnnood
