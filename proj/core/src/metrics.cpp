#include "bnnood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace bnnood {

double confidence(std::span<const double> probs_row, ConfidenceMode mode) {
  const std::size_t upto =
      mode.real_classes == 0 ? probs_row.size() : std::min(mode.real_classes, probs_row.size());
  double best = probs_row[0];
  for (std::size_t k = 1; k < upto; ++k) best = std::max(best, probs_row[k]);
  return best;
}

void PredictionLog::validate() const {
  if (!labels.empty() && labels.size() != size()) {
    throw std::invalid_argument("prediction log: label count != row count");
  }
  if (!origin.empty() && origin.size() != size()) {
    throw std::invalid_argument("prediction log: origin count != row count");
  }
}

namespace {

std::span<const double> row(const ad::Tensor& t, std::size_t i) {
  return {&t.values[i * t.cols()], t.cols()};
}

void require_labels(const PredictionLog& log, const char* what) {
  log.validate();
  if (log.labels.empty() || log.size() == 0) {
    throw std::invalid_argument(std::string(what) + ": labeled, non-empty log required");
  }
}

}  // namespace

double accuracy(const PredictionLog& log) {
  require_labels(log, "accuracy");
  const std::size_t upto =
      log.real_classes == 0 ? log.probs.cols() : std::min(log.real_classes, log.probs.cols());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const std::span<const double> p = row(log.probs, i);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < upto; ++k) {
      if (p[k] > p[arg]) arg = k;  // ties -> lowest index
    }
    if (static_cast<int>(arg) == log.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(log.size());
}

double ece(const PredictionLog& log, int n_bins) {
  require_labels(log, "ece");
  if (n_bins < 1) throw std::invalid_argument("ece: need n_bins >= 1");
  const std::size_t nb = static_cast<std::size_t>(n_bins);
  const std::size_t upto =
      log.real_classes == 0 ? log.probs.cols() : std::min(log.real_classes, log.probs.cols());

  std::vector<std::size_t> count(nb, 0);
  std::vector<double> conf_sum(nb, 0.0), acc_sum(nb, 0.0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const std::span<const double> p = row(log.probs, i);
    const double conf = confidence(p, log.mode());
    // equal-width bins over (0,1], left-open right-closed; confidence 0
    // joins bin 1. Bin edges are b/n_bins evaluated in double.
    std::size_t bin = nb - 1;
    for (std::size_t b = 0; b + 1 < nb; ++b) {
      if (conf <= static_cast<double>(b + 1) / static_cast<double>(nb)) {
        bin = b;
        break;
      }
    }
    std::size_t arg = 0;
    for (std::size_t k = 1; k < upto; ++k) {
      if (p[k] > p[arg]) arg = k;
    }
    count[bin] += 1;
    conf_sum[bin] += conf;
    acc_sum[bin] += static_cast<int>(arg) == log.labels[i] ? 1.0 : 0.0;
  }
  const double m = static_cast<double>(log.size());
  double total = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    if (count[b] == 0) continue;
    const double nb_d = static_cast<double>(count[b]);
    total += (nb_d / m) * std::abs(acc_sum[b] / nb_d - conf_sum[b] / nb_d);
  }
  return total;
}

double brier(const PredictionLog& log) {
  require_labels(log, "brier");
  double total = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const std::span<const double> p = row(log.probs, i);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double target = static_cast<int>(k) == log.labels[i] ? 1.0 : 0.0;
      const double d = p[k] - target;
      total += d * d;
    }
  }
  return total / static_cast<double>(log.size());
}

std::vector<double> confidence_scores(const PredictionLog& log) {
  std::vector<double> out(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) out[i] = confidence(row(log.probs, i), log.mode());
  return out;
}

std::vector<double> confidence_scores(const PredictionLog& log, Origin subset) {
  log.validate();
  std::vector<double> out;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const Origin o = log.origin.empty() ? Origin::InDistribution : log.origin[i];
    if (o == subset) out.push_back(confidence(row(log.probs, i), log.mode()));
  }
  return out;
}

double mmc(const PredictionLog& log, Origin subset) {
  const std::vector<double> scores = confidence_scores(log, subset);
  if (scores.empty()) throw std::invalid_argument("mmc: empty subset");
  double s = 0.0;
  for (double v : scores) s += v;
  return s / static_cast<double>(scores.size());
}

double fpr95(std::span<const double> in_scores, std::span<const double> out_scores) {
  if (in_scores.empty() || out_scores.empty()) {
    throw std::invalid_argument("fpr95: both score sets must be non-empty");
  }
  const std::size_t n = in_scores.size();
  // Largest threshold t (among observed in-scores and -inf) with
  // |{in >= t}| / n >= 0.95; the predicate is exact integer arithmetic.
  std::vector<double> sorted(in_scores.begin(), in_scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double threshold = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double t = sorted[k];
    std::size_t ge = k + 1;
    while (ge < n && sorted[ge] == t) ++ge;  // duplicates of t below position k
    if (20 * ge >= 19 * n) {
      threshold = t;
      break;
    }
  }
  std::size_t fp = 0;
  for (double s : out_scores) {
    if (s >= threshold) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(out_scores.size());
}

double auroc(std::span<const double> in_scores, std::span<const double> out_scores) {
  if (in_scores.empty() || out_scores.empty()) {
    throw std::invalid_argument("auroc: both score sets must be non-empty");
  }
  std::vector<double> in_sorted(in_scores.begin(), in_scores.end());
  std::vector<double> out_sorted(out_scores.begin(), out_scores.end());
  std::sort(in_sorted.begin(), in_sorted.end());
  std::sort(out_sorted.begin(), out_sorted.end());
  std::uint64_t greater = 0, ties = 0;
  for (double s : in_sorted) {
    const auto lo = std::lower_bound(out_sorted.begin(), out_sorted.end(), s);
    const auto hi = std::upper_bound(lo, out_sorted.end(), s);
    greater += static_cast<std::uint64_t>(lo - out_sorted.begin());
    ties += static_cast<std::uint64_t>(hi - lo);
  }
  const std::uint64_t n = in_scores.size(), m = out_scores.size();
  // Mann-Whitney (greater + ties/2) / (n*m), with the final division done on
  // the smaller half so that auroc(a,b) + auroc(b,a) == 1 holds exactly.
  const std::uint64_t num2 = 2 * greater + ties;  // 2*(pairs> + ties/2)
  const std::uint64_t den2 = 2 * n * m;
  if (2 * num2 <= den2) {
    return static_cast<double>(num2) / static_cast<double>(den2);
  }
  return 1.0 - static_cast<double>(den2 - num2) / static_cast<double>(den2);
}

double auprc(std::span<const double> in_scores, std::span<const double> out_scores) {
  if (in_scores.empty() || out_scores.empty()) {
    throw std::invalid_argument("auprc: both score sets must be non-empty");
  }
  // Positives are in-distribution; walk score groups in descending order,
  // handling each tie group atomically (precision after the whole group).
  std::vector<std::pair<double, int>> all;  // (score, is_positive)
  all.reserve(in_scores.size() + out_scores.size());
  for (double s : in_scores) all.emplace_back(s, 1);
  for (double s : out_scores) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  double ap_sum = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t tp_g = 0, fp_g = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      if (all[j].second == 1) {
        ++tp_g;
      } else {
        ++fp_g;
      }
      ++j;
    }
    tp += tp_g;
    fp += fp_g;
    if (tp_g > 0) {
      const double precision =
          static_cast<double>(tp) / static_cast<double>(tp + fp);
      ap_sum += static_cast<double>(tp_g) * precision;
    }
    i = j;
  }
  return ap_sum / static_cast<double>(in_scores.size());
}

namespace {

std::string format_opt(const std::optional<double>& v) {
  if (!v.has_value()) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", *v);
  return buf;
}

}  // namespace

std::string metrics_csv_header() {
  return "dataset,method,likelihood,accuracy,ece,brier,mmc_in,mmc_out,fpr95,auroc,auprc";
}

std::string metrics_csv_row(const MetricsReport& r) {
  std::string out = r.dataset + "," + r.method + "," + r.likelihood;
  for (const auto* v : {&r.accuracy, &r.ece, &r.brier, &r.mmc_in, &r.mmc_out, &r.fpr95, &r.auroc,
                        &r.auprc}) {
    out += ",";
    out += format_opt(*v);
  }
  return out;
}

}  // namespace bnnood
