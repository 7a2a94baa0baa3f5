#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnnood/autodiff.hpp"
#include "bnnood/data.hpp"

namespace bnnood {

// Confidence functional: max over all entries, or (for none-class models)
// max over the first `real_classes` entries only.
struct ConfidenceMode {
  std::size_t real_classes = 0;  // 0 -> all columns
  static ConfidenceMode max_softmax() { return {0}; }
  static ConfidenceMode nc_aware(std::size_t c) { return {c}; }
};

double confidence(std::span<const double> probs_row, ConfidenceMode mode);

// Predictions with optional labels and per-row origin flags.
struct PredictionLog {
  ad::Tensor probs;             // m x c, rows on the simplex
  std::vector<int> labels;      // optional
  std::vector<Origin> origin;   // optional; empty means all in-distribution
  std::size_t real_classes = 0; // 0 -> no none class

  std::size_t size() const { return probs.rows(); }
  ConfidenceMode mode() const { return {real_classes}; }
  void validate() const;
};

double accuracy(const PredictionLog& log);
double ece(const PredictionLog& log, int n_bins = 15);
double brier(const PredictionLog& log);
double mmc(const PredictionLog& log, Origin subset);
std::vector<double> confidence_scores(const PredictionLog& log);
std::vector<double> confidence_scores(const PredictionLog& log, Origin subset);

// OOD detection; in-distribution is the positive class and a higher score
// means "more in-distribution".
double fpr95(std::span<const double> in_scores, std::span<const double> out_scores);
double auroc(std::span<const double> in_scores, std::span<const double> out_scores);
double auprc(std::span<const double> in_scores, std::span<const double> out_scores);

struct MetricsReport {
  std::string dataset;
  std::string method;
  std::string likelihood;
  std::optional<double> accuracy, ece, brier, mmc_in, mmc_out, fpr95, auroc, auprc;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);

}  // namespace bnnood
