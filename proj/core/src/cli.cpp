#include "bnnood/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "bnnood/config.hpp"
#include "bnnood/inference.hpp"
#include "bnnood/likelihoods.hpp"
#include "bnnood/metrics.hpp"
#include "bnnood/models.hpp"
#include "bnnood/rng.hpp"

namespace bnnood {

namespace {

std::map<std::string, std::string> parse_kv(const std::string& body) {
  std::map<std::string, std::string> out;
  std::stringstream ss(body);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const std::size_t eq = cell.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("data spec: expected key=value, got '" + cell + "'");
    }
    out[cell.substr(0, eq)] = cell.substr(eq + 1);
  }
  return out;
}

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key,
                 double fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stod(it->second);
}

std::uint64_t kv_u64(const std::map<std::string, std::string>& kv, const std::string& key,
                     std::uint64_t fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoull(it->second);
}

LabeledSet truncate_rows(const LabeledSet& s, std::size_t limit) {
  if (limit == 0 || limit >= s.size()) return s;
  std::vector<std::size_t> rows(limit);
  for (std::size_t i = 0; i < limit; ++i) rows[i] = i;
  return take_rows(s, rows);
}

}  // namespace

LabeledSet parse_data_spec(const std::string& spec) {
  const std::size_t colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string body = colon == std::string::npos ? "" : spec.substr(colon + 1);

  if (kind == "toy") {
    const auto kv = parse_kv(body);
    ToyGaussiansSpec toy;
    toy.n_per_class = kv_u64(kv, "n", toy.n_per_class);
    toy.stddev = kv_double(kv, "std", toy.stddev);
    toy.seed = kv_u64(kv, "seed", toy.seed);
    return gen_toy_gaussians(toy);
  }
  if (kind == "uniform") {
    const auto kv = parse_kv(body);
    return gen_uniform_ood(kv_double(kv, "low", -6.0), kv_double(kv, "high", 6.0),
                           kv_u64(kv, "dim", 2), kv_u64(kv, "n", 400), kv_u64(kv, "seed", 1));
  }
  if (kind == "ring") {
    const auto kv = parse_kv(body);
    return gen_ring_ood(kv_double(kv, "rlo", 8.0), kv_double(kv, "rhi", 12.0),
                        kv_u64(kv, "n", 500), kv_u64(kv, "seed", 2));
  }
  if (kind == "idx") {
    const std::size_t comma = body.find(',');
    if (comma == std::string::npos) {
      throw std::invalid_argument("data spec: idx needs IMAGES,LABELS");
    }
    return load_idx(body.substr(0, comma), body.substr(comma + 1));
  }
  if (kind == "csv") {
    if (body.empty()) throw std::invalid_argument("data spec: csv needs a path");
    return load_csv(body);
  }
  if (kind == "smooth") {
    const auto kv = parse_kv(body);
    const auto from = kv.find("from");
    const auto labels = kv.find("labels");
    if (from == kv.end() || labels == kv.end()) {
      throw std::invalid_argument("data spec: smooth needs from=IMAGES,labels=LABELS");
    }
    LabeledSet source = load_idx(from->second, labels->second);
    source = truncate_rows(source, kv_u64(kv, "n", 0));
    SmoothNoiseSpec sn;
    sn.seed = kv_u64(kv, "seed", 0);
    return gen_smooth_ood(source, sn);
  }
  throw std::invalid_argument("data spec: unknown kind '" + kind + "'");
}

namespace {

LikelihoodVariant variant_from_string(const std::string& s) {
  if (s == "cat") return LikelihoodVariant::Categorical;
  if (s == "nc") return LikelihoodVariant::NoneClass;
  if (s == "sl") return LikelihoodVariant::SoftLabel;
  if (s == "ml") return LikelihoodVariant::MixedLabel;
  if (s == "oe") return LikelihoodVariant::OeLikelihood;
  throw std::invalid_argument("unknown likelihood '" + s + "'");
}

LikelihoodSpec spec_from_config(const ExperimentConfig& cfg) {
  LikelihoodSpec spec;
  spec.variant = variant_from_string(cfg.likelihood);
  spec.gamma = cfg.gamma;
  spec.ood_weight = cfg.ood_weight;
  spec.tempered_oe = cfg.oe_tempered;
  spec.label_smoothing = cfg.label_smoothing;
  return spec;
}

TrainConfig train_config_from(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.optimizer = cfg.optimizer == "sgd" ? OptimizerKind::SgdMomentum : OptimizerKind::Adam;
  tc.lr = cfg.lr;
  tc.momentum = cfg.momentum;
  tc.beta1 = cfg.beta1;
  tc.beta2 = cfg.beta2;
  tc.weight_decay = cfg.weight_decay;
  tc.cosine_decay = cfg.cosine_decay;
  tc.seed = cfg.seed;
  return tc;
}

LabeledSet load_in_data(const ExperimentConfig& cfg) {
  LabeledSet D;
  if (cfg.data == "toy") {
    ToyGaussiansSpec toy;
    toy.n_per_class = cfg.data_n_per_class;
    toy.stddev = cfg.data_std;
    toy.seed = cfg.data_seed;
    D = gen_toy_gaussians(toy);
  } else {
    D = parse_data_spec(cfg.data);
  }
  D = truncate_rows(D, cfg.data_limit);
  if (!D.has_hard() || D.size() == 0) {
    throw std::invalid_argument("training data must be non-empty and hard-labeled");
  }
  return D;
}

LabeledSet load_ood_data(const ExperimentConfig& cfg, const LabeledSet& D) {
  if (cfg.ood == "none") return LabeledSet{};
  if (cfg.ood == "uniform") {
    return gen_uniform_ood(cfg.ood_low, cfg.ood_high, D.dim(), cfg.ood_n, cfg.ood_seed);
  }
  if (cfg.ood == "smooth") {
    LabeledSet source = truncate_rows(D, cfg.ood_n == 0 ? 0 : cfg.ood_n);
    SmoothNoiseSpec sn;
    sn.seed = cfg.ood_seed;
    return gen_smooth_ood(source, sn);
  }
  if (cfg.ood.rfind("idx:", 0) == 0) {
    LabeledSet out = parse_data_spec(cfg.ood);
    out.origin = Origin::OutOfDistribution;
    return truncate_rows(out, cfg.ood_n);
  }
  throw std::invalid_argument("unknown ood source '" + cfg.ood + "'");
}

int num_classes(const LabeledSet& D) {
  int c = 0;
  for (int y : D.hard) c = std::max(c, y + 1);
  return std::max(c, 2);
}

std::size_t env_threads() {
  const char* s = std::getenv("BNNOOD_THREADS");
  if (s == nullptr) return 1;
  const long v = std::strtol(s, nullptr, 10);
  return v > 0 ? static_cast<std::size_t>(v) : 1;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::string& method_override,
              const std::string& likelihood_override, const std::string& ood_override,
              std::int64_t seed_override, const std::string& out_override,
              const std::string& trace_override) {
  ExperimentConfig cfg = parse_config(config_path);
  if (!method_override.empty()) cfg.method = method_override;
  if (!likelihood_override.empty()) cfg.likelihood = likelihood_override;
  if (!ood_override.empty()) cfg.ood = ood_override;
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out = out_override;
  if (!trace_override.empty()) cfg.trace = trace_override;
  if (cfg.out.empty()) {
    throw std::invalid_argument("train: --out (or config key 'out') is required");
  }

  LikelihoodSpec spec = spec_from_config(cfg);
  LabeledSet D = load_in_data(cfg);
  LabeledSet D_out = load_ood_data(cfg, D);
  if (spec.uses_ood() && D_out.size() == 0) {
    throw std::invalid_argument("likelihood '" + cfg.likelihood + "' needs an OOD source");
  }
  const int c = num_classes(D);

  LabeledSet validation;
  if (cfg.method == "la") {
    const std::size_t n_val = cfg.val_split > 0 ? cfg.val_split : D.size() / 5;
    auto [rest, val] = split_validation(D, n_val, Rng::mix(cfg.seed, 0x76616c));
    D = std::move(rest);
    validation = std::move(val);
  }

  std::vector<std::size_t> widths;
  widths.push_back(D.dim());
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(static_cast<std::size_t>(c));
  Mlp model = init_mlp(widths, cfg.activation == "relu" ? Activation::Relu : Activation::Tanh,
                       cfg.seed);
  if (spec.variant == LikelihoodVariant::NoneClass) {
    model = expand_none_class(model, cfg.seed);
  }

  const TrainConfig tc = train_config_from(cfg);
  TrainResult result = train_map(std::move(model), spec, D, D_out.size() ? &D_out : nullptr, tc);

  const std::string trace_path = cfg.trace.empty() ? cfg.out + ".trace.csv" : cfg.trace;
  if (cfg.method == "map") {
    save_model(cfg.out, result.model, nullptr);
    write_trace_csv(trace_path, result.trace, false);
  } else if (cfg.method == "vb") {
    VbConfig vc;
    vc.tau = cfg.vb_tau;
    vc.prior_precision = cfg.vb_prior_precision;
    vc.elbo_samples = cfg.vb_elbo_samples;
    vc.predict_samples = cfg.vb_predict_samples;
    vc.init_log_std = cfg.vb_init_log_std;
    TrainConfig vb_tc = tc;
    if (cfg.vb_epochs > 0) vb_tc.epochs = cfg.vb_epochs;
    if (cfg.vb_lr > 0) vb_tc.lr = cfg.vb_lr;
    vb_tc.weight_decay = 0.0;  // KL term regularizes the last layer
    const VbResult vb =
        fit_vb(result.model, spec, D, D_out.size() ? &D_out : nullptr, vc, vb_tc);
    save_model(cfg.out, result.model, &vb.posterior);
    write_trace_csv(trace_path, vb.trace, true);
  } else {  // la
    LaplaceConfig lc;
    lc.include_ood_in_fisher = cfg.la_include_ood;
    lc.predict_samples = cfg.la_predict_samples;
    lc.scope = cfg.la_scope == "last-layer" ? LaplaceScope::LastLayer : LaplaceScope::Full;
    lc.seed = cfg.seed;
    lc.prior_grid.resize(static_cast<std::size_t>(cfg.la_grid_size));
    for (int i = 0; i < cfg.la_grid_size; ++i) {
      const double t = cfg.la_grid_size == 1
                           ? 0.0
                           : static_cast<double>(i) / static_cast<double>(cfg.la_grid_size - 1);
      lc.prior_grid[static_cast<std::size_t>(i)] =
          std::exp(std::log(cfg.la_grid_min) +
                   t * (std::log(cfg.la_grid_max) - std::log(cfg.la_grid_min)));
    }
    const Posterior post = fit_laplace(result.model, spec, D, D_out.size() ? &D_out : nullptr,
                                       lc, validation);
    save_model(cfg.out, result.model, &post);
    write_trace_csv(trace_path, result.trace, false);
  }
  std::cout << "wrote " << cfg.out << " and " << trace_path << "\n";
  return 0;
}

// ---- shared eval helpers ----

struct LoadedForEval {
  Mlp model;
  Posterior posterior;
  std::size_t real_classes = 0;
};

LoadedForEval load_for_eval(const std::string& model_path, int mc_samples, int real_classes_flag,
                            const std::vector<int>* labels) {
  LoadedModel lm = load_model(model_path);
  LoadedForEval out;
  out.model = std::move(lm.model);
  if (lm.posterior.has_value()) {
    out.posterior = std::move(*lm.posterior);
    if (mc_samples > 0) out.posterior.n_samples = mc_samples;
  } else {
    out.posterior = Posterior::map_point(out.model);
  }
  if (real_classes_flag > 0) {
    out.real_classes = static_cast<std::size_t>(real_classes_flag);
  } else if (labels != nullptr && !labels->empty()) {
    // None-class heuristic: labels span exactly one class fewer than the head.
    int max_label = 0;
    for (int y : *labels) max_label = std::max(max_label, y);
    if (static_cast<std::size_t>(max_label) + 2 == out.model.output_dim()) {
      out.real_classes = out.model.output_dim() - 1;
    }
  }
  return out;
}

int cmd_eval(const std::string& model_path, const std::string& data_spec, std::int64_t val_split,
             std::uint64_t seed, int mc_samples, int real_classes, const std::string& out_path) {
  LabeledSet data = parse_data_spec(data_spec);
  if (!data.has_hard() || data.size() == 0) {
    throw std::invalid_argument("eval: data must be non-empty and hard-labeled");
  }
  if (val_split > 0) {
    auto [rest, val] = split_validation(data, static_cast<std::size_t>(val_split),
                                        Rng::mix(seed, 0x76616c));
    data = std::move(val);
  }
  const LoadedForEval le = load_for_eval(model_path, mc_samples, real_classes, &data.hard);
  if (data.dim() != le.model.input_dim()) {
    throw std::invalid_argument("eval: data dimension does not match model input width");
  }

  PredictionLog log;
  log.probs = predict(le.model, le.posterior, data.X, seed);
  log.labels = data.hard;
  log.real_classes = le.real_classes;

  MetricsReport report;
  report.dataset = data_spec;
  report.method = le.posterior.kind == PosteriorKind::DiagGaussian ? "bayes" : "map";
  report.likelihood = le.real_classes > 0 ? "nc" : "";
  report.accuracy = accuracy(log);
  report.ece = ece(log);
  report.brier = brier(log);
  report.mmc_in = mmc(log, Origin::InDistribution);

  const std::string csv = metrics_csv_header() + "\n" + metrics_csv_row(report) + "\n";
  std::cout << csv;
  if (!out_path.empty()) write_text(out_path, csv);
  return 0;
}

int cmd_ood_detect(const std::string& model_path, const std::string& in_spec,
                   const std::string& out_spec, std::uint64_t seed, int mc_samples,
                   int real_classes, const std::string& out_path) {
  const LabeledSet in_data = parse_data_spec(in_spec);
  const LabeledSet out_data = parse_data_spec(out_spec);
  if (in_data.size() == 0 || out_data.size() == 0) {
    throw std::invalid_argument("ood-detect: both data sets must be non-empty");
  }
  const LoadedForEval le = load_for_eval(model_path, mc_samples, real_classes,
                                         in_data.has_hard() ? &in_data.hard : nullptr);
  if (in_data.dim() != le.model.input_dim() || out_data.dim() != le.model.input_dim()) {
    throw std::invalid_argument("ood-detect: data dimension does not match model input width");
  }

  PredictionLog in_log, out_log;
  in_log.probs = predict(le.model, le.posterior, in_data.X, seed);
  in_log.real_classes = le.real_classes;
  out_log.probs = predict(le.model, le.posterior, out_data.X, Rng::mix(seed, 1));
  out_log.real_classes = le.real_classes;
  const std::vector<double> in_scores = confidence_scores(in_log);
  const std::vector<double> out_scores = confidence_scores(out_log);

  MetricsReport report;
  report.dataset = in_spec + " vs " + out_spec;
  report.method = le.posterior.kind == PosteriorKind::DiagGaussian ? "bayes" : "map";
  report.likelihood = le.real_classes > 0 ? "nc" : "";
  double s = 0.0;
  for (double v : in_scores) s += v;
  report.mmc_in = s / static_cast<double>(in_scores.size());
  s = 0.0;
  for (double v : out_scores) s += v;
  report.mmc_out = s / static_cast<double>(out_scores.size());
  report.fpr95 = fpr95(in_scores, out_scores);
  report.auroc = auroc(in_scores, out_scores);
  report.auprc = auprc(in_scores, out_scores);

  const std::string csv = metrics_csv_header() + "\n" + metrics_csv_row(report) + "\n";
  std::cout << csv;
  if (!out_path.empty()) write_text(out_path, csv);
  return 0;
}

int cmd_grid(const std::string& model_path, double xmin, double xmax, double ymin, double ymax,
             int res, const std::string& prefix, std::uint64_t seed, int mc_samples,
             int real_classes) {
  if (res < 1) throw std::invalid_argument("grid: --res must be >= 1");
  if (!(xmin < xmax) || !(ymin < ymax)) {
    throw std::invalid_argument("grid: box must satisfy xmin < xmax and ymin < ymax");
  }
  const LoadedForEval le = load_for_eval(model_path, mc_samples, real_classes, nullptr);
  if (le.model.input_dim() != 2) {
    throw std::invalid_argument("grid: model must take 2-D inputs");
  }
  const std::size_t R = static_cast<std::size_t>(res);
  const double dx = (xmax - xmin) / static_cast<double>(R);
  const double dy = (ymax - ymin) / static_cast<double>(R);
  const ConfidenceMode mode{le.real_classes > 0 ? le.real_classes : 0};

  std::vector<double> conf(R * R, 0.0);
  // Rows are independent with per-row MC streams, so results are identical
  // for any worker count.
  const auto eval_row = [&](std::size_t i) {
    ad::Tensor X = ad::Tensor::zeros({R, 2});
    const double y = ymax - (static_cast<double>(i) + 0.5) * dy;  // top row = ymax
    for (std::size_t j = 0; j < R; ++j) {
      X.at(j, 0) = xmin + (static_cast<double>(j) + 0.5) * dx;
      X.at(j, 1) = y;
    }
    const ad::Tensor probs = predict(le.model, le.posterior, X, Rng::mix(seed, i));
    for (std::size_t j = 0; j < R; ++j) {
      conf[i * R + j] = confidence({&probs.values[j * probs.cols()], probs.cols()}, mode);
    }
  };
  const std::size_t workers = std::min(env_threads(), R);
  if (workers <= 1) {
    for (std::size_t i = 0; i < R; ++i) eval_row(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < R; i += workers) eval_row(i);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  // PGM (binary P5, maxval 255, pixel = round(255*confidence))
  {
    std::ofstream os(prefix + ".pgm", std::ios::binary);
    if (!os) throw std::runtime_error("grid: cannot open " + prefix + ".pgm");
    os << "P5\n" << R << " " << R << "\n255\n";
    for (double v : conf) {
      os.put(static_cast<char>(
          static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
    }
    if (!os) throw std::runtime_error("grid: write failed");
  }
  {
    std::ofstream os(prefix + ".csv", std::ios::binary);
    if (!os) throw std::runtime_error("grid: cannot open " + prefix + ".csv");
    os << "x,y,confidence\n";
    for (std::size_t i = 0; i < R; ++i) {
      const double y = ymax - (static_cast<double>(i) + 0.5) * dy;
      for (std::size_t j = 0; j < R; ++j) {
        const double x = xmin + (static_cast<double>(j) + 0.5) * dx;
        os << format_g17(x) << "," << format_g17(y) << "," << format_g17(conf[i * R + j])
           << "\n";
      }
    }
    if (!os) throw std::runtime_error("grid: write failed");
  }
  std::cout << "wrote " << prefix << ".pgm and " << prefix << ".csv\n";
  return 0;
}

int cmd_gen_ood(const std::string& kind, const std::string& from_spec, std::size_t n,
                std::uint64_t seed, double low, double high, std::size_t dim,
                const std::string& format, const std::string& out_path) {
  LabeledSet result;
  if (kind == "uniform") {
    std::size_t d = dim;
    if (!from_spec.empty()) {
      const std::size_t comma = from_spec.find(',');
      if (comma == std::string::npos) {
        throw std::invalid_argument("gen-ood: --from needs IMAGES,LABELS");
      }
      d = load_idx(from_spec.substr(0, comma), from_spec.substr(comma + 1)).dim();
    }
    if (d == 0) throw std::invalid_argument("gen-ood: need --dim or --from");
    result = gen_uniform_ood(low, high, d, n, seed);
  } else if (kind == "smooth") {
    if (from_spec.empty()) {
      throw std::invalid_argument("gen-ood: smooth requires --from IMAGES,LABELS");
    }
    const std::size_t comma = from_spec.find(',');
    if (comma == std::string::npos) {
      throw std::invalid_argument("gen-ood: --from needs IMAGES,LABELS");
    }
    LabeledSet source = load_idx(from_spec.substr(0, comma), from_spec.substr(comma + 1));
    if (n > 0) source = truncate_rows(source, n);
    SmoothNoiseSpec sn;
    sn.seed = seed;
    result = gen_smooth_ood(source, sn);
  } else {
    throw std::invalid_argument("gen-ood: --kind must be uniform or smooth");
  }

  std::string fmt = format;
  if (fmt == "auto") {
    const auto side =
        static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(result.dim()))));
    fmt = (result.dim() >= 16 && side * side == result.dim()) ? "idx" : "csv";
  }
  if (fmt == "idx") {
    const auto side =
        static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(result.dim()))));
    if (side * side != result.dim()) {
      throw std::invalid_argument("gen-ood: idx output requires square image dimensions");
    }
    write_idx(out_path, out_path + ".labels", result, side, side);
    std::cout << "wrote " << out_path << " and " << out_path << ".labels\n";
  } else {
    write_csv(out_path, result);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"OOD-aware likelihoods for small Bayesian neural classifiers"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model and write it with its posterior");
  std::string config_path, method, likelihood, ood, out, trace;
  std::int64_t seed_override = -1;
  train->add_option("--config", config_path, "experiment config file")->required();
  train->add_option("--method", method)->check(CLI::IsMember({"map", "vb", "la"}));
  train->add_option("--likelihood", likelihood)
      ->check(CLI::IsMember({"cat", "nc", "sl", "ml", "oe"}));
  train->add_option("--ood", ood, "none|uniform|smooth|idx:IMAGES,LABELS");
  train->add_option("--seed", seed_override);
  train->add_option("--out", out, "output model path");
  train->add_option("--trace", trace, "training trace CSV path");

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy / ECE / Brier on a labeled set");
  std::string e_model, e_data, e_out;
  std::int64_t e_val_split = 0;
  std::uint64_t e_seed = 0;
  int e_mc = 0, e_rc = 0;
  eval->add_option("--model", e_model)->required();
  eval->add_option("--data", e_data)->required();
  eval->add_option("--val-split", e_val_split, "evaluate on a held-out split of this size");
  eval->add_option("--seed", e_seed);
  eval->add_option("--mc-samples", e_mc, "override posterior MC samples");
  eval->add_option("--real-classes", e_rc, "confidence over the first N classes only");
  eval->add_option("--out", e_out, "also write the CSV here");

  // ood-detect
  auto* det = app.add_subcommand("ood-detect", "FPR95 / AUROC / AUPRC / MMC for an in/out pair");
  std::string d_model, d_in, d_out_data, d_out;
  std::uint64_t d_seed = 0;
  int d_mc = 0, d_rc = 0;
  det->add_option("--model", d_model)->required();
  det->add_option("--in-data", d_in)->required();
  det->add_option("--out-data", d_out_data)->required();
  det->add_option("--seed", d_seed);
  det->add_option("--mc-samples", d_mc);
  det->add_option("--real-classes", d_rc);
  det->add_option("--out", d_out);

  // grid
  auto* grid = app.add_subcommand("grid", "confidence heatmap over a 2-D box (PGM + CSV)");
  std::string g_model, g_prefix;
  double g_xmin = -10, g_xmax = 10, g_ymin = -10, g_ymax = 10;
  int g_res = 100, g_mc = 0, g_rc = 0;
  std::uint64_t g_seed = 0;
  grid->add_option("--model", g_model)->required();
  grid->add_option("--xmin", g_xmin)->required();
  grid->add_option("--xmax", g_xmax)->required();
  grid->add_option("--ymin", g_ymin)->required();
  grid->add_option("--ymax", g_ymax)->required();
  grid->add_option("--res", g_res)->required();
  grid->add_option("--out", g_prefix, "output prefix for .pgm and .csv")->required();
  grid->add_option("--seed", g_seed);
  grid->add_option("--mc-samples", g_mc);
  grid->add_option("--real-classes", g_rc);

  // gen-ood
  auto* gen = app.add_subcommand("gen-ood", "write a synthetic OOD dataset");
  std::string n_kind, n_from, n_out, n_format = "auto";
  std::size_t n_n = 0, n_dim = 0;
  std::uint64_t n_seed = 0;
  double n_low = 0.0, n_high = 1.0;
  gen->add_option("--kind", n_kind)->required()->check(CLI::IsMember({"uniform", "smooth"}));
  gen->add_option("--from", n_from, "IMAGES,LABELS idx pair");
  gen->add_option("--n", n_n);
  gen->add_option("--seed", n_seed);
  gen->add_option("--low", n_low);
  gen->add_option("--high", n_high);
  gen->add_option("--dim", n_dim);
  gen->add_option("--format", n_format)->check(CLI::IsMember({"auto", "csv", "idx"}));
  gen->add_option("--out", n_out)->required();

  std::vector<std::string> argv_like = args;
  try {
    std::vector<const char*> argv;
    argv.push_back("bnnood");
    for (const std::string& a : argv_like) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (train->parsed()) {
      return cmd_train(config_path, method, likelihood, ood, seed_override, out, trace);
    }
    if (eval->parsed()) {
      return cmd_eval(e_model, e_data, e_val_split, e_seed, e_mc, e_rc, e_out);
    }
    if (det->parsed()) {
      return cmd_ood_detect(d_model, d_in, d_out_data, d_seed, d_mc, d_rc, d_out);
    }
    if (grid->parsed()) {
      return cmd_grid(g_model, g_xmin, g_xmax, g_ymin, g_ymax, g_res, g_prefix, g_seed, g_mc,
                      g_rc);
    }
    if (gen->parsed()) {
      return cmd_gen_ood(n_kind, n_from, n_n, n_seed, n_low, n_high, n_dim, n_format, n_out);
    }
  } catch (const TrainingAbort& e) {
    std::cerr << "abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace bnnood
