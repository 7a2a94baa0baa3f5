#include "bnnood/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "bnnood/rng.hpp"

namespace bnnood {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'O', 'D'};
constexpr std::uint32_t kFormatVersion = 1;

void check_widths(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) {
    throw std::invalid_argument("mlp: need at least input and output widths");
  }
  for (std::size_t w : widths) {
    if (w < 1) throw std::invalid_argument("mlp: widths must be >= 1");
  }
}

}  // namespace

std::size_t Mlp::count_params(const std::vector<std::size_t>& widths) {
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    d += widths[l] * widths[l + 1] + widths[l + 1];
  }
  return d;
}

Mlp::Slice Mlp::last_layer_slice() const {
  const std::size_t in = widths[widths.size() - 2];
  const std::size_t out = widths.back();
  const std::size_t len = in * out + out;
  return {params.size() - len, len};
}

Mlp init_mlp(std::vector<std::size_t> widths, Activation activation, std::uint64_t seed) {
  check_widths(widths);
  Mlp m;
  m.widths = std::move(widths);
  m.activation = activation;
  m.params.resize(Mlp::count_params(m.widths));
  Rng rng(seed);
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    const std::size_t in = m.widths[l], out = m.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (std::size_t i = 0; i < in * out; ++i) m.params[at++] = rng.uniform(-bound, bound);
    for (std::size_t i = 0; i < out; ++i) m.params[at++] = 0.0;
  }
  return m;
}

Mlp expand_none_class(const Mlp& model, std::uint64_t seed) {
  Mlp out;
  out.widths = model.widths;
  out.widths.back() += 1;
  out.activation = model.activation;
  out.params.reserve(Mlp::count_params(out.widths));

  const std::size_t in = model.widths[model.widths.size() - 2];
  const std::size_t c = model.output_dim();
  const Mlp::Slice ll = model.last_layer_slice();

  // earlier layers copied verbatim
  out.params.assign(model.params.begin(),
                    model.params.begin() + static_cast<std::ptrdiff_t>(ll.offset));

  Rng rng(Rng::mix(seed, 0x6e6f6e65));  // "none"
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  const double* w = &model.params[ll.offset];
  for (std::size_t i = 0; i < in; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.params.push_back(w[i * c + j]);
    out.params.push_back(rng.uniform(-bound, bound));
  }
  const double* b = &model.params[ll.offset + in * c];
  for (std::size_t j = 0; j < c; ++j) out.params.push_back(b[j]);
  out.params.push_back(0.0);
  return out;
}

ad::Tensor mlp_logits(const Mlp& model, std::span<const double> theta, const ad::Tensor& X) {
  if (theta.size() != model.param_count()) {
    throw std::invalid_argument("mlp_logits: parameter vector length mismatch");
  }
  if (X.cols() != model.input_dim()) {
    throw std::invalid_argument("mlp_logits: input width mismatch");
  }
  const std::size_t m = X.rows();
  ad::Tensor h = X;
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < model.widths.size(); ++l) {
    const std::size_t in = model.widths[l], out = model.widths[l + 1];
    const double* W = &theta[at];
    const double* b = &theta[at + in * out];
    at += in * out + out;
    ad::Tensor z = ad::Tensor::zeros({m, out});
    for (std::size_t i = 0; i < m; ++i) {
      double* zrow = &z.values[i * out];
      for (std::size_t j = 0; j < out; ++j) zrow[j] = b[j];
      const double* hrow = &h.values[i * in];
      for (std::size_t p = 0; p < in; ++p) {
        const double hv = hrow[p];
        if (hv == 0.0) continue;
        const double* wrow = &W[p * out];
        for (std::size_t j = 0; j < out; ++j) zrow[j] += hv * wrow[j];
      }
    }
    const bool last = l + 2 == model.widths.size();
    if (!last) {
      if (model.activation == Activation::Relu) {
        for (double& v : z.values) v = v > 0.0 ? v : 0.0;
      } else {
        for (double& v : z.values) v = std::tanh(v);
      }
    }
    h = std::move(z);
  }
  return h;
}

ad::Tensor softmax_rows(const ad::Tensor& logits) {
  ad::Tensor out = logits;
  out.grad.clear();
  const std::size_t m = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out.values[i * c];
    const double mx = *std::max_element(row, row + c);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    lse = mx + std::log(lse);
    for (std::size_t j = 0; j < c; ++j) row[j] = std::exp(row[j] - lse);
  }
  return out;
}

std::vector<int> add_param_inputs(ad::Graph& g, const Mlp& model, std::span<const double> theta) {
  if (theta.size() != model.param_count()) {
    throw std::invalid_argument("add_param_inputs: parameter vector length mismatch");
  }
  std::vector<int> nodes;
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < model.widths.size(); ++l) {
    const std::size_t in = model.widths[l], out = model.widths[l + 1];
    nodes.push_back(g.input(ad::Tensor::matrix(
        in, out, std::vector<double>(theta.begin() + static_cast<std::ptrdiff_t>(at),
                                     theta.begin() + static_cast<std::ptrdiff_t>(at + in * out)))));
    at += in * out;
    nodes.push_back(g.input(ad::Tensor(
        {out}, std::vector<double>(theta.begin() + static_cast<std::ptrdiff_t>(at),
                                   theta.begin() + static_cast<std::ptrdiff_t>(at + out)))));
    at += out;
  }
  return nodes;
}

int mlp_logits_graph(ad::Graph& g, const Mlp& model, const std::vector<int>& param_nodes,
                     const ad::Tensor& X) {
  if (X.cols() != model.input_dim()) {
    throw std::invalid_argument("mlp_logits_graph: input width mismatch");
  }
  int h = g.constant(X);
  for (std::size_t l = 0; l + 1 < model.widths.size(); ++l) {
    int z = g.add(g.matmul(h, param_nodes[2 * l]), param_nodes[2 * l + 1]);
    const bool last = l + 2 == model.widths.size();
    if (!last) {
      z = model.activation == Activation::Relu ? g.relu(z) : g.tanh(z);
    }
    h = z;
  }
  return h;
}

void accumulate_param_grad(const ad::Graph& g, const Mlp& model,
                           const std::vector<int>& param_nodes, std::span<double> grad_out) {
  if (grad_out.size() != model.param_count()) {
    throw std::invalid_argument("accumulate_param_grad: gradient buffer length mismatch");
  }
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < model.widths.size(); ++l) {
    for (int part = 0; part < 2; ++part) {
      const std::span<const double> src = g.grad(param_nodes[2 * l + part]);
      for (double v : src) grad_out[at++] += v;
    }
  }
}

ForwardCache mlp_forward_cached(const Mlp& model, std::span<const double> theta,
                                const ad::Tensor& X) {
  ForwardCache cache;
  cache.post.push_back(X);
  const std::size_t m = X.rows();
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < model.widths.size(); ++l) {
    const std::size_t in = model.widths[l], out = model.widths[l + 1];
    const double* W = &theta[at];
    const double* b = &theta[at + in * out];
    at += in * out + out;
    const ad::Tensor& h = cache.post.back();
    ad::Tensor z = ad::Tensor::zeros({m, out});
    for (std::size_t i = 0; i < m; ++i) {
      double* zrow = &z.values[i * out];
      for (std::size_t j = 0; j < out; ++j) zrow[j] = b[j];
      const double* hrow = &h.values[i * in];
      for (std::size_t p = 0; p < in; ++p) {
        const double hv = hrow[p];
        if (hv == 0.0) continue;
        const double* wrow = &W[p * out];
        for (std::size_t j = 0; j < out; ++j) zrow[j] += hv * wrow[j];
      }
    }
    cache.pre.push_back(z);
    const bool last = l + 2 == model.widths.size();
    if (!last) {
      ad::Tensor a = z;
      if (model.activation == Activation::Relu) {
        for (double& v : a.values) v = v > 0.0 ? v : 0.0;
      } else {
        for (double& v : a.values) v = std::tanh(v);
      }
      cache.post.push_back(std::move(a));
    }
  }
  return cache;
}

void mlp_backward_from_logits(const Mlp& model, std::span<const double> theta,
                              const ForwardCache& cache, const ad::Tensor& logit_seed,
                              std::span<double> grad_out) {
  const std::size_t L = model.num_layers();
  const std::size_t m = logit_seed.rows();

  // parameter offsets per layer
  std::vector<std::size_t> offsets(L);
  std::size_t at = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offsets[l] = at;
    at += model.widths[l] * model.widths[l + 1] + model.widths[l + 1];
  }

  ad::Tensor delta = logit_seed;  // d(obj)/d(pre-activation of layer l)
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t in = model.widths[l], out = model.widths[l + 1];
    const ad::Tensor& h = cache.post[l];
    double* gW = &grad_out[offsets[l]];
    double* gb = &grad_out[offsets[l] + in * out];
    for (std::size_t i = 0; i < m; ++i) {
      const double* drow = &delta.values[i * out];
      const double* hrow = &h.values[i * in];
      for (std::size_t j = 0; j < out; ++j) gb[j] += drow[j];
      for (std::size_t p = 0; p < in; ++p) {
        const double hv = hrow[p];
        if (hv == 0.0) continue;
        double* gwrow = &gW[p * out];
        for (std::size_t j = 0; j < out; ++j) gwrow[j] += hv * drow[j];
      }
    }
    if (l == 0) break;
    // propagate to previous layer: delta_prev = (delta * W^T) .* act'(pre_prev)
    const double* W = &theta[offsets[l]];
    ad::Tensor prev = ad::Tensor::zeros({m, in});
    for (std::size_t i = 0; i < m; ++i) {
      const double* drow = &delta.values[i * out];
      double* prow = &prev.values[i * in];
      for (std::size_t p = 0; p < in; ++p) {
        const double* wrow = &W[p * out];
        double acc = 0.0;
        for (std::size_t j = 0; j < out; ++j) acc += drow[j] * wrow[j];
        prow[p] = acc;
      }
    }
    const ad::Tensor& pre_prev = cache.pre[l - 1];
    if (model.activation == Activation::Relu) {
      for (std::size_t i = 0; i < prev.size(); ++i) {
        if (!(pre_prev.values[i] > 0.0)) prev.values[i] = 0.0;
      }
    } else {
      for (std::size_t i = 0; i < prev.size(); ++i) {
        const double t = std::tanh(pre_prev.values[i]);
        prev.values[i] *= 1.0 - t * t;
      }
    }
    delta = std::move(prev);
  }
}

Posterior Posterior::map_point(const Mlp& model) {
  Posterior p;
  p.kind = PosteriorKind::MapPoint;
  p.slice = model.full_slice();
  p.mean = model.params;
  p.n_samples = 1;
  return p;
}

void Posterior::validate() const {
  if (slice.length != mean.size()) {
    throw std::invalid_argument("posterior: slice length != mean length");
  }
  if (kind == PosteriorKind::DiagGaussian) {
    if (variance.size() != mean.size()) {
      throw std::invalid_argument("posterior: variance length != mean length");
    }
    for (double v : variance) {
      if (!(v > 0.0)) throw std::invalid_argument("posterior: variance must be positive");
    }
    if (n_samples < 1) throw std::invalid_argument("posterior: n_samples must be >= 1");
  }
}

ad::Tensor predict(const Mlp& model, const Posterior& posterior, const ad::Tensor& X,
                   std::uint64_t rng_seed) {
  posterior.validate();
  if (X.cols() != model.input_dim()) {
    throw std::invalid_argument("predict: input width mismatch");
  }
  if (posterior.slice.offset + posterior.slice.length > model.param_count()) {
    throw std::invalid_argument("predict: posterior slice out of range");
  }

  std::vector<double> theta = model.params;
  if (posterior.kind == PosteriorKind::MapPoint) {
    std::copy(posterior.mean.begin(), posterior.mean.end(),
              theta.begin() + static_cast<std::ptrdiff_t>(posterior.slice.offset));
    return softmax_rows(mlp_logits(model, theta, X));
  }

  const std::size_t m = X.rows(), c = model.output_dim();
  const std::size_t len = posterior.slice.length;
  ad::Tensor acc = ad::Tensor::zeros({m, c});
  Rng rng(rng_seed);
  for (int s = 0; s < posterior.n_samples; ++s) {
    for (std::size_t i = 0; i < len; ++i) {
      theta[posterior.slice.offset + i] =
          posterior.mean[i] + std::sqrt(posterior.variance[i]) * rng.normal();
    }
    const ad::Tensor probs = softmax_rows(mlp_logits(model, theta, X));
    for (std::size_t i = 0; i < acc.size(); ++i) acc.values[i] += probs.values[i];
  }
  const double inv = 1.0 / static_cast<double>(posterior.n_samples);
  for (double& v : acc.values) v *= inv;
  return acc;
}

ad::Tensor ensemble_predict(const std::vector<Mlp>& members, const ad::Tensor& X) {
  if (members.empty()) throw std::invalid_argument("ensemble_predict: empty member list");
  for (const Mlp& m : members) {
    if (m.widths != members.front().widths) {
      throw std::invalid_argument("ensemble_predict: members must share shapes");
    }
  }
  ad::Tensor acc = ad::Tensor::zeros({X.rows(), members.front().output_dim()});
  for (const Mlp& m : members) {
    const ad::Tensor probs = softmax_rows(mlp_logits(m, m.params, X));
    for (std::size_t i = 0; i < acc.size(); ++i) acc.values[i] += probs.values[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : acc.values) v *= inv;
  return acc;
}

namespace {

void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ofstream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("model file: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("model file: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_model(const std::filesystem::path& path, const Mlp& model, const Posterior* posterior) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("model file: cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(model.widths.size()));
  for (std::size_t w : model.widths) put_u32(os, static_cast<std::uint32_t>(w));
  os.put(static_cast<char>(model.activation));
  put_u64(os, model.param_count());
  for (double v : model.params) put_f64(os, v);
  if (posterior != nullptr && posterior->kind == PosteriorKind::DiagGaussian) {
    posterior->validate();
    os.put(1);
    put_u64(os, posterior->slice.offset);
    put_u64(os, posterior->slice.length);
    for (double v : posterior->mean) put_f64(os, v);
    for (double v : posterior->variance) put_f64(os, v);
  } else {
    os.put(0);
  }
  if (!os) throw std::runtime_error("model file: write failed: " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("model file: cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("model file: bad magic: " + path.string());
  }
  const std::uint32_t version = get_u32(is);
  if (version != kFormatVersion) {
    throw std::runtime_error("model file: unsupported format version");
  }
  const std::uint32_t nw = get_u32(is);
  if (nw < 2 || nw > 1024) throw std::runtime_error("model file: implausible width count");
  LoadedModel out;
  out.model.widths.resize(nw);
  for (std::uint32_t i = 0; i < nw; ++i) out.model.widths[i] = get_u32(is);
  int act = is.get();
  if (act != 0 && act != 1) throw std::runtime_error("model file: bad activation tag");
  out.model.activation = static_cast<Activation>(act);
  const std::uint64_t d = get_u64(is);
  if (d != Mlp::count_params(out.model.widths)) {
    throw std::runtime_error("model file: parameter count does not match widths");
  }
  out.model.params.resize(d);
  for (std::uint64_t i = 0; i < d; ++i) out.model.params[i] = get_f64(is);
  const int tag = is.get();
  if (tag == 1) {
    Posterior p;
    p.kind = PosteriorKind::DiagGaussian;
    p.slice.offset = get_u64(is);
    p.slice.length = get_u64(is);
    if (p.slice.offset + p.slice.length > d) {
      throw std::runtime_error("model file: posterior slice out of range");
    }
    p.mean.resize(p.slice.length);
    for (double& v : p.mean) v = get_f64(is);
    p.variance.resize(p.slice.length);
    for (double& v : p.variance) v = get_f64(is);
    p.n_samples = 20;  // not persisted; caller may override
    p.validate();
    out.posterior = std::move(p);
  } else if (tag != 0) {
    throw std::runtime_error("model file: bad posterior tag");
  }
  return out;
}

}  // namespace bnnood
