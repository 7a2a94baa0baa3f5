#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnnood/autodiff.hpp"

namespace bnnood {

enum class Activation : std::uint8_t { Relu = 0, Tanh = 1 };

// Fully connected classifier. Parameters are a single flat vector laid out
// per layer as [W (in-major, in*out), b (out)]; the final layer's block is
// the suffix of the vector.
struct Mlp {
  std::vector<std::size_t> widths;  // [n, h1, ..., c]
  Activation activation = Activation::Tanh;
  std::vector<double> params;

  struct Slice {
    std::size_t offset = 0;
    std::size_t length = 0;
  };

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t num_layers() const { return widths.size() - 1; }
  std::size_t param_count() const { return params.size(); }
  Slice last_layer_slice() const;
  Slice full_slice() const { return {0, params.size()}; }

  static std::size_t count_params(const std::vector<std::size_t>& widths);
};

Mlp init_mlp(std::vector<std::size_t> widths, Activation activation, std::uint64_t seed);

// Adds one output unit backed by fresh last-layer parameters; all existing
// parameters are copied unchanged, so the original c logits are preserved
// whenever the new ones are zero.
Mlp expand_none_class(const Mlp& model, std::uint64_t seed = 0);

// Plain (tape-free) forward pass; used wherever no gradient is needed.
ad::Tensor mlp_logits(const Mlp& model, std::span<const double> theta, const ad::Tensor& X);
ad::Tensor softmax_rows(const ad::Tensor& logits);

// Graph forward pass. Parameters enter as one Input node per weight matrix /
// bias vector so a single set of nodes can feed several batches and gradient
// accumulation happens on the tape.
std::vector<int> add_param_inputs(ad::Graph& g, const Mlp& model, std::span<const double> theta);
int mlp_logits_graph(ad::Graph& g, const Mlp& model, const std::vector<int>& param_nodes,
                     const ad::Tensor& X);
// Adds d(objective)/d(theta) from the tape into grad_out (length d).
void accumulate_param_grad(const ad::Graph& g, const Mlp& model,
                           const std::vector<int>& param_nodes, std::span<double> grad_out);

// Hand-rolled per-batch backward for d(sum_i logit_select(i))/d(theta) style
// curvature computations where building a tape per example would be wasteful.
// Computes the gradient of sum_i w_i * logits[i, k_i] ... see fisher use.
struct ForwardCache {
  std::vector<ad::Tensor> pre;    // pre-activations per layer
  std::vector<ad::Tensor> post;   // activations per layer (post[0] = X)
  const ad::Tensor& logits() const { return pre.back(); }
};
ForwardCache mlp_forward_cached(const Mlp& model, std::span<const double> theta,
                                const ad::Tensor& X);
// Gradient of sum_{i,k} seed[i,k] * logits[i,k] w.r.t. theta, added into grad_out.
void mlp_backward_from_logits(const Mlp& model, std::span<const double> theta,
                              const ForwardCache& cache, const ad::Tensor& logit_seed,
                              std::span<double> grad_out);

enum class PosteriorKind : std::uint8_t { MapPoint = 0, DiagGaussian = 1 };

// Tagged posterior over a parameter slice. MapPoint carries the point
// estimate; DiagGaussian carries per-coordinate mean/variance plus the MC
// sample count used for prediction.
struct Posterior {
  PosteriorKind kind = PosteriorKind::MapPoint;
  Mlp::Slice slice;
  std::vector<double> mean;
  std::vector<double> variance;  // DiagGaussian only, all > 0
  int n_samples = 1;

  static Posterior map_point(const Mlp& model);
  void validate() const;
};

// Predictive probabilities, rows on the simplex. MapPoint: softmax at the
// point. DiagGaussian: MC average of softmax over slice-resampled parameters
// (coordinates outside the slice stay at the model's values).
ad::Tensor predict(const Mlp& model, const Posterior& posterior, const ad::Tensor& X,
                   std::uint64_t rng_seed);

// Arithmetic mean of member softmax outputs.
ad::Tensor ensemble_predict(const std::vector<Mlp>& members, const ad::Tensor& X);

// Binary model container: magic "BNOD", version, widths, activation,
// parameters, optional posterior block. Little-endian, bit-exact round-trip.
void save_model(const std::filesystem::path& path, const Mlp& model,
                const Posterior* posterior = nullptr);

struct LoadedModel {
  Mlp model;
  std::optional<Posterior> posterior;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace bnnood
