#include "bnnood/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace bnnood {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& v, int line) {
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(line, "expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(line, "trailing junk after number in '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& v, int line) {
  std::size_t used = 0;
  unsigned long long out;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(line, "expected a non-negative integer, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(line, "trailing junk after integer in '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(line, "expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& v, int line) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) throw ConfigError(line, "empty entry in list '" + v + "'");
    out.push_back(static_cast<std::size_t>(parse_u64(cell, line)));
  }
  return out;
}

void check_choice(const std::string& v, std::initializer_list<const char*> allowed,
                  const std::string& key, int line) {
  for (const char* a : allowed) {
    if (v == a) return;
  }
  std::string msg = "invalid value '" + v + "' for " + key + " (expected one of:";
  for (const char* a : allowed) msg += std::string(" ") + a;
  throw ConfigError(line, msg + ")");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  using Setter = std::function<void(ExperimentConfig&, const std::string&, int)>;
  static const std::map<std::string, Setter> schema = {
      {"data", [](auto& c, const auto& v, int) { c.data = v; }},
      {"data.n_per_class",
       [](auto& c, const auto& v, int l) { c.data_n_per_class = parse_u64(v, l); }},
      {"data.std", [](auto& c, const auto& v, int l) { c.data_std = parse_double(v, l); }},
      {"data.seed", [](auto& c, const auto& v, int l) { c.data_seed = parse_u64(v, l); }},
      {"data.limit", [](auto& c, const auto& v, int l) { c.data_limit = parse_u64(v, l); }},
      {"hidden", [](auto& c, const auto& v, int l) { c.hidden = parse_size_list(v, l); }},
      {"activation",
       [](auto& c, const auto& v, int l) {
         check_choice(v, {"tanh", "relu"}, "activation", l);
         c.activation = v;
       }},
      {"likelihood",
       [](auto& c, const auto& v, int l) {
         check_choice(v, {"cat", "nc", "sl", "ml", "oe"}, "likelihood", l);
         c.likelihood = v;
       }},
      {"gamma", [](auto& c, const auto& v, int l) { c.gamma = parse_double(v, l); }},
      {"ood_weight", [](auto& c, const auto& v, int l) { c.ood_weight = parse_double(v, l); }},
      {"oe_tempered", [](auto& c, const auto& v, int l) { c.oe_tempered = parse_bool(v, l); }},
      {"label_smoothing",
       [](auto& c, const auto& v, int l) { c.label_smoothing = parse_double(v, l); }},
      {"ood", [](auto& c, const auto& v, int) { c.ood = v; }},
      {"ood.n", [](auto& c, const auto& v, int l) { c.ood_n = parse_u64(v, l); }},
      {"ood.low", [](auto& c, const auto& v, int l) { c.ood_low = parse_double(v, l); }},
      {"ood.high", [](auto& c, const auto& v, int l) { c.ood_high = parse_double(v, l); }},
      {"ood.seed", [](auto& c, const auto& v, int l) { c.ood_seed = parse_u64(v, l); }},
      {"method",
       [](auto& c, const auto& v, int l) {
         check_choice(v, {"map", "vb", "la"}, "method", l);
         c.method = v;
       }},
      {"epochs", [](auto& c, const auto& v, int l) { c.epochs = parse_u64(v, l); }},
      {"batch_size", [](auto& c, const auto& v, int l) { c.batch_size = parse_u64(v, l); }},
      {"optimizer",
       [](auto& c, const auto& v, int l) {
         check_choice(v, {"adam", "sgd"}, "optimizer", l);
         c.optimizer = v;
       }},
      {"lr", [](auto& c, const auto& v, int l) { c.lr = parse_double(v, l); }},
      {"momentum", [](auto& c, const auto& v, int l) { c.momentum = parse_double(v, l); }},
      {"beta1", [](auto& c, const auto& v, int l) { c.beta1 = parse_double(v, l); }},
      {"beta2", [](auto& c, const auto& v, int l) { c.beta2 = parse_double(v, l); }},
      {"weight_decay",
       [](auto& c, const auto& v, int l) { c.weight_decay = parse_double(v, l); }},
      {"cosine_decay", [](auto& c, const auto& v, int l) { c.cosine_decay = parse_bool(v, l); }},
      {"seed", [](auto& c, const auto& v, int l) { c.seed = parse_u64(v, l); }},
      {"val_split", [](auto& c, const auto& v, int l) { c.val_split = parse_u64(v, l); }},
      {"vb.tau", [](auto& c, const auto& v, int l) { c.vb_tau = parse_double(v, l); }},
      {"vb.prior_precision",
       [](auto& c, const auto& v, int l) { c.vb_prior_precision = parse_double(v, l); }},
      {"vb.elbo_samples",
       [](auto& c, const auto& v, int l) { c.vb_elbo_samples = static_cast<int>(parse_u64(v, l)); }},
      {"vb.predict_samples",
       [](auto& c, const auto& v, int l) {
         c.vb_predict_samples = static_cast<int>(parse_u64(v, l));
       }},
      {"vb.init_log_std",
       [](auto& c, const auto& v, int l) { c.vb_init_log_std = parse_double(v, l); }},
      {"vb.epochs", [](auto& c, const auto& v, int l) { c.vb_epochs = parse_u64(v, l); }},
      {"vb.lr", [](auto& c, const auto& v, int l) { c.vb_lr = parse_double(v, l); }},
      {"la.grid_min", [](auto& c, const auto& v, int l) { c.la_grid_min = parse_double(v, l); }},
      {"la.grid_max", [](auto& c, const auto& v, int l) { c.la_grid_max = parse_double(v, l); }},
      {"la.grid_size",
       [](auto& c, const auto& v, int l) { c.la_grid_size = static_cast<int>(parse_u64(v, l)); }},
      {"la.include_ood",
       [](auto& c, const auto& v, int l) { c.la_include_ood = parse_bool(v, l); }},
      {"la.predict_samples",
       [](auto& c, const auto& v, int l) {
         c.la_predict_samples = static_cast<int>(parse_u64(v, l));
       }},
      {"la.scope",
       [](auto& c, const auto& v, int l) {
         check_choice(v, {"full", "last-layer"}, "la.scope", l);
         c.la_scope = v;
       }},
      {"out", [](auto& c, const auto& v, int) { c.out = v; }},
      {"trace", [](auto& c, const auto& v, int) { c.trace = v; }},
  };

  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(lineno, "expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(lineno, "empty key");
    const auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError(lineno, "unknown key '" + key + "'");
    it->second(cfg, value, lineno);
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(0, "cannot open config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace bnnood
