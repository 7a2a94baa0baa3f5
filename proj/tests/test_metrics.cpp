#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bnnood/metrics.hpp"
#include "bnnood/rng.hpp"

using namespace bnnood;
using ad::Tensor;

namespace {

// ---- brute-force oracles (independent of the implementations) ----

double ece_oracle(const PredictionLog& log, int n_bins) {
  const std::size_t m = log.size();
  double total = 0.0;
  for (int b = 1; b <= n_bins; ++b) {
    const double lo = static_cast<double>(b - 1) / static_cast<double>(n_bins);
    const double hi = static_cast<double>(b) / static_cast<double>(n_bins);
    std::size_t n_b = 0;
    double conf_sum = 0.0, acc_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const std::span<const double> p{&log.probs.values[i * log.probs.cols()], log.probs.cols()};
      const double conf = confidence(p, log.mode());
      const bool inside = b == 1 ? conf <= hi : (conf > lo && conf <= hi);
      if (!inside) continue;
      ++n_b;
      conf_sum += conf;
      std::size_t upto = log.real_classes == 0 ? p.size() : log.real_classes;
      std::size_t arg = 0;
      for (std::size_t k = 1; k < upto; ++k) {
        if (p[k] > p[arg]) arg = k;
      }
      acc_sum += static_cast<int>(arg) == log.labels[i] ? 1.0 : 0.0;
    }
    if (n_b == 0) continue;
    const double nb_d = static_cast<double>(n_b);
    total += (nb_d / static_cast<double>(m)) * std::abs(acc_sum / nb_d - conf_sum / nb_d);
  }
  return total;
}

double fpr95_oracle(const std::vector<double>& in_s, const std::vector<double>& out_s) {
  // exhaustive sweep over all candidate thresholds
  std::vector<double> candidates = in_s;
  candidates.push_back(-std::numeric_limits<double>::infinity());
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (double t : candidates) {
    std::size_t ge = 0;
    for (double s : in_s) {
      if (s >= t) ++ge;
    }
    if (20 * ge >= 19 * in_s.size() && (!found || t > best)) {
      best = t;
      found = true;
    }
  }
  std::size_t fp = 0;
  for (double s : out_s) {
    if (s >= best) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(out_s.size());
}

double auroc_oracle(const std::vector<double>& in_s, const std::vector<double>& out_s) {
  std::uint64_t greater = 0, ties = 0;
  for (double a : in_s) {
    for (double b : out_s) {
      if (a > b) {
        ++greater;
      } else if (a == b) {
        ++ties;
      }
    }
  }
  const std::uint64_t num2 = 2 * greater + ties;
  const std::uint64_t den2 = 2 * in_s.size() * out_s.size();
  if (2 * num2 <= den2) return static_cast<double>(num2) / static_cast<double>(den2);
  return 1.0 - static_cast<double>(den2 - num2) / static_cast<double>(den2);
}

double auprc_oracle(const std::vector<double>& in_s, const std::vector<double>& out_s) {
  // walk distinct scores from the top, recomputing counts from scratch
  std::vector<double> distinct;
  distinct.insert(distinct.end(), in_s.begin(), in_s.end());
  distinct.insert(distinct.end(), out_s.begin(), out_s.end());
  std::sort(distinct.begin(), distinct.end(), std::greater<>());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  double ap_sum = 0.0;
  for (double t : distinct) {
    std::size_t tp_before = 0, fp_before = 0, tp_at = 0, fp_at = 0;
    for (double s : in_s) {
      if (s > t) ++tp_before;
      if (s == t) ++tp_at;
    }
    for (double s : out_s) {
      if (s > t) ++fp_before;
      if (s == t) ++fp_at;
    }
    if (tp_at == 0) continue;
    const std::size_t tp = tp_before + tp_at;
    const std::size_t fp = fp_before + fp_at;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap_sum += static_cast<double>(tp_at) * precision;
  }
  return ap_sum / static_cast<double>(in_s.size());
}

std::vector<double> random_scores(Rng& rng, std::size_t n, bool with_ties) {
  std::vector<double> out(n);
  for (double& v : out) {
    if (with_ties) {
      v = static_cast<double>(rng.below(12)) / 11.0;  // heavy ties
    } else {
      v = rng.uniform01();
    }
  }
  return out;
}

PredictionLog random_log(Rng& rng, std::size_t m, std::size_t c) {
  PredictionLog log;
  log.probs = Tensor::zeros({m, c});
  log.labels.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      log.probs.at(i, k) = rng.uniform(0.01, 1.0);
      total += log.probs.at(i, k);
    }
    for (std::size_t k = 0; k < c; ++k) log.probs.at(i, k) /= total;
    log.labels[i] = static_cast<int>(rng.below(c));
  }
  return log;
}

}  // namespace

TEST_CASE("confidence modes") {
  const std::vector<double> row = {0.1, 0.1, 0.8};
  CHECK(confidence(row, ConfidenceMode::max_softmax()) == doctest::Approx(0.8));
  CHECK(confidence(row, ConfidenceMode::nc_aware(2)) == doctest::Approx(0.1));
  const std::vector<double> pair = {0.7, 0.3};
  CHECK(confidence(pair, ConfidenceMode::max_softmax()) == doctest::Approx(0.7));
  const std::vector<double> uniform = {0.25, 0.25, 0.25, 0.25};
  CHECK(confidence(uniform, ConfidenceMode::max_softmax()) == doctest::Approx(0.25));
}

TEST_CASE("accuracy: tie goes to the lowest index") {
  PredictionLog log;
  log.probs = Tensor::matrix(4, 2, {1, 0, 0.5, 0.5, 0.2, 0.8, 0.9, 0.1});
  log.labels = {0, 1, 1, 0};
  CHECK(accuracy(log) == doctest::Approx(0.75));  // the tie row counts wrong
  log.labels = {0, 0, 1, 0};
  CHECK(accuracy(log) == doctest::Approx(1.0));
  log.labels.clear();
  CHECK_THROWS_AS(accuracy(log), std::invalid_argument);
}

TEST_CASE("ece: perfect confidence and the one-sample case") {
  PredictionLog perfect;
  perfect.probs = Tensor::matrix(3, 2, {1, 0, 1, 0, 0, 1});
  perfect.labels = {0, 0, 1};
  CHECK(ece(perfect) == doctest::Approx(0.0));

  PredictionLog one;
  one.probs = Tensor::matrix(1, 2, {0.8, 0.2});
  one.labels = {1};  // incorrect at confidence 0.8
  CHECK(ece(one) == doctest::Approx(0.8));
}

TEST_CASE("ece equals its brute-force oracle exactly on 200 random instances") {
  Rng rng(100);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t m = 1 + rng.below(50);
    const std::size_t c = 2 + rng.below(4);
    const PredictionLog log = random_log(rng, m, c);
    CHECK(ece(log) == ece_oracle(log, 15));
  }
}

TEST_CASE("brier: bounds and hand values") {
  PredictionLog log;
  log.probs = Tensor::matrix(1, 2, {0.5, 0.5});
  log.labels = {0};
  CHECK(brier(log) == doctest::Approx(0.5));
  log.probs = Tensor::matrix(1, 2, {1.0, 0.0});
  CHECK(brier(log) == doctest::Approx(0.0));
  log.labels = {1};
  CHECK(brier(log) == doctest::Approx(2.0));  // confident-wrong attains the bound
}

TEST_CASE("mmc over subsets") {
  PredictionLog log;
  log.probs = Tensor::matrix(3, 2, {0.7, 0.3, 0.6, 0.4, 0.9, 0.1});
  log.origin = {Origin::InDistribution, Origin::InDistribution, Origin::OutOfDistribution};
  CHECK(mmc(log, Origin::InDistribution) == doctest::Approx(0.65));
  CHECK(mmc(log, Origin::OutOfDistribution) == doctest::Approx(0.9));
  log.origin.assign(3, Origin::InDistribution);
  CHECK_THROWS_AS(mmc(log, Origin::OutOfDistribution), std::invalid_argument);
}

TEST_CASE("fpr95: separation and identical-multiset behavior") {
  std::vector<double> in(20);
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = 10.0 + static_cast<double>(i);
  const std::vector<double> out = {1, 2, 3, 4, 5};
  CHECK(fpr95(in, out) == doctest::Approx(0.0));
  CHECK(fpr95(in, in) >= 0.95);
  CHECK_THROWS_AS(fpr95(std::vector<double>{}, out), std::invalid_argument);
}

TEST_CASE("fpr95 equals the exhaustive sweep oracle exactly on 200 random instances") {
  Rng rng(200);
  for (int rep = 0; rep < 200; ++rep) {
    const std::vector<double> in = random_scores(rng, 1 + rng.below(100), rep % 2 == 0);
    const std::vector<double> out = random_scores(rng, 1 + rng.below(100), rep % 2 == 0);
    CHECK(fpr95(in, out) == fpr95_oracle(in, out));
  }
}

TEST_CASE("auroc: separation, all-ties, oracle equality") {
  CHECK(auroc(std::vector<double>{5, 6, 7}, std::vector<double>{1, 2, 3}) == doctest::Approx(1.0));
  CHECK(auroc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 1, 1}) == doctest::Approx(0.5));
  Rng rng(300);
  for (int rep = 0; rep < 200; ++rep) {
    const std::vector<double> in = random_scores(rng, 1 + rng.below(100), rep % 2 == 0);
    const std::vector<double> out = random_scores(rng, 1 + rng.below(100), rep % 2 == 0);
    CHECK(auroc(in, out) == auroc_oracle(in, out));
  }
}

TEST_CASE("auroc complement identity holds exactly") {
  Rng rng(400);
  for (int rep = 0; rep < 500; ++rep) {
    const std::vector<double> in = random_scores(rng, 1 + rng.below(60), rep % 3 != 0);
    const std::vector<double> out = random_scores(rng, 1 + rng.below(60), rep % 3 != 0);
    CHECK(auroc(in, out) + auroc(out, in) == 1.0);
  }
}

TEST_CASE("auprc: separation, prevalence under full ties, oracle equality") {
  CHECK(auprc(std::vector<double>{5, 6, 7}, std::vector<double>{1, 2, 3}) == doctest::Approx(1.0));
  CHECK(auprc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 1, 1}) == doctest::Approx(0.5));  // single operating point
  Rng rng(500);
  for (int rep = 0; rep < 200; ++rep) {
    const std::vector<double> in = random_scores(rng, 1 + rng.below(100), rep % 2 == 0);
    const std::vector<double> out = random_scores(rng, 1 + rng.below(100), rep % 2 == 0);
    CHECK(auprc(in, out) == auprc_oracle(in, out));
  }
}

TEST_CASE("detection metrics are invariant under strictly increasing transforms") {
  Rng rng(600);
  const auto warp = [](std::vector<double> v) {
    for (double& x : v) x = std::exp(2.0 * x) + 1.0;
    return v;
  };
  for (int rep = 0; rep < 50; ++rep) {
    const std::vector<double> in = random_scores(rng, 1 + rng.below(80), true);
    const std::vector<double> out = random_scores(rng, 1 + rng.below(80), true);
    CHECK(auroc(in, out) == auroc(warp(in), warp(out)));
    CHECK(fpr95(in, out) == fpr95(warp(in), warp(out)));
    CHECK(auprc(in, out) == auprc(warp(in), warp(out)));
  }
}

TEST_CASE("metric ranges on random logs") {
  Rng rng(700);
  for (int rep = 0; rep < 30; ++rep) {
    const PredictionLog log = random_log(rng, 1 + rng.below(40), 2 + rng.below(5));
    const double e = ece(log);
    const double b = brier(log);
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
    CHECK(b >= 0.0);
    CHECK(b <= 2.0);
  }
}

TEST_CASE("metrics csv layout") {
  MetricsReport r;
  r.dataset = "toy";
  r.method = "map";
  r.likelihood = "cat";
  r.accuracy = 0.5;
  CHECK(metrics_csv_header() ==
        "dataset,method,likelihood,accuracy,ece,brier,mmc_in,mmc_out,fpr95,auroc,auprc");
  CHECK(metrics_csv_row(r) == "toy,map,cat,0.5,,,,,,,");
}
