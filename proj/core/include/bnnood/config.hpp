#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnnood {

// Raised with the offending line number for any parse/validation problem.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& message)
      : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : "") + message),
        line(line) {}
  int line;
};

// Experiment settings, parsed from a line-based `key = value` file with `#`
// comments. Unknown keys are rejected; every value is type-checked at parse
// time.
struct ExperimentConfig {
  // data
  std::string data = "toy";  // toy | idx:IMAGES,LABELS | csv:PATH
  std::size_t data_n_per_class = 100;
  double data_std = 0.35;
  std::uint64_t data_seed = 0;
  std::size_t data_limit = 0;  // 0 -> use everything

  // model
  std::vector<std::size_t> hidden = {32, 32};
  std::string activation = "tanh";  // tanh | relu

  // likelihood
  std::string likelihood = "cat";  // cat | nc | sl | ml | oe
  double gamma = 0.0;              // 0 -> class count
  double ood_weight = 1.0;
  bool oe_tempered = true;
  double label_smoothing = 0.01;

  // OOD training source
  std::string ood = "none";  // none | uniform | smooth | idx:IMAGES,LABELS
  std::size_t ood_n = 400;
  double ood_low = -6.0;
  double ood_high = 6.0;
  std::uint64_t ood_seed = 1;

  // optimization
  std::string method = "map";  // map | vb | la
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::string optimizer = "adam";  // adam | sgd
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 5e-4;
  bool cosine_decay = true;
  std::uint64_t seed = 0;
  std::size_t val_split = 0;  // 0 -> one fifth of the training set

  // variational Bayes
  double vb_tau = 0.1;
  double vb_prior_precision = 5e-4;
  int vb_elbo_samples = 5;
  int vb_predict_samples = 200;
  double vb_init_log_std = -3.0;
  std::size_t vb_epochs = 0;  // 0 -> epochs
  double vb_lr = 0.0;         // 0 -> lr

  // Laplace
  double la_grid_min = 1e-4;
  double la_grid_max = 1e4;
  int la_grid_size = 15;
  bool la_include_ood = true;
  int la_predict_samples = 20;
  std::string la_scope = "full";  // full | last-layer

  // outputs
  std::string out;
  std::string trace;
};

ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

}  // namespace bnnood
