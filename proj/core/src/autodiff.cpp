#include "bnnood/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "bnnood/special.hpp"

namespace bnnood::ad {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

[[noreturn]] void shape_error(const char* op) {
  throw std::invalid_argument(std::string("graph: operand shapes do not conform to ") + op);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (shape_product(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape does not match value count");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> s) {
  const std::size_t n = shape_product(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

double Tensor::item() const {
  if (!is_scalar()) throw std::invalid_argument("tensor: item() on non-scalar");
  return values[0];
}

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

int Graph::input(Tensor t) { return push({Op::Input, -1, -1, 0, std::move(t)}); }
int Graph::constant(Tensor t) { return push({Op::Constant, -1, -1, 0, std::move(t)}); }

int Graph::matmul(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows()) shape_error("matmul");
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ta.values[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &tb.values[p * n];
      double* orow = &out.values[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return push({Op::MatMul, a, b, 0, std::move(out)});
}

namespace {

// Broadcast classes for Add/Sub/Mul: equal shapes, scalar on either side,
// or (Add/Sub only) a length-c vector combined row-wise with an m-by-c matrix.
enum class Bcast { Equal, ScalarRhs, ScalarLhs, RowRhs };

Bcast classify(const Tensor& a, const Tensor& b, bool allow_row, const char* op) {
  if (a.shape == b.shape) return Bcast::Equal;
  if (b.is_scalar()) return Bcast::ScalarRhs;
  if (a.is_scalar()) return Bcast::ScalarLhs;
  if (allow_row && a.is_matrix() && b.shape.size() == 1 && b.shape[0] == a.cols()) {
    return Bcast::RowRhs;
  }
  shape_error(op);
}

}  // namespace

int Graph::add(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const Bcast k = classify(ta, tb, true, "add");
  Tensor out = ta;
  out.grad.clear();
  switch (k) {
    case Bcast::Equal:
      for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += tb.values[i];
      break;
    case Bcast::ScalarRhs:
      for (double& v : out.values) v += tb.values[0];
      break;
    case Bcast::ScalarLhs:
      out = tb;
      out.grad.clear();
      for (double& v : out.values) v += ta.values[0];
      break;
    case Bcast::RowRhs:
      for (std::size_t i = 0; i < ta.rows(); ++i)
        for (std::size_t j = 0; j < ta.cols(); ++j) out.values[i * ta.cols() + j] += tb.values[j];
      break;
  }
  return push({Op::Add, a, b, 0, std::move(out)});
}

int Graph::sub(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const Bcast k = classify(ta, tb, true, "sub");
  Tensor out;
  switch (k) {
    case Bcast::Equal:
      out = ta;
      out.grad.clear();
      for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= tb.values[i];
      break;
    case Bcast::ScalarRhs:
      out = ta;
      out.grad.clear();
      for (double& v : out.values) v -= tb.values[0];
      break;
    case Bcast::ScalarLhs:
      out = tb;
      out.grad.clear();
      for (double& v : out.values) v = ta.values[0] - v;
      break;
    case Bcast::RowRhs:
      out = ta;
      out.grad.clear();
      for (std::size_t i = 0; i < ta.rows(); ++i)
        for (std::size_t j = 0; j < ta.cols(); ++j) out.values[i * ta.cols() + j] -= tb.values[j];
      break;
  }
  return push({Op::Sub, a, b, 0, std::move(out)});
}

int Graph::mul(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  const Bcast k = classify(ta, tb, false, "mul");
  Tensor out;
  switch (k) {
    case Bcast::Equal:
      out = ta;
      out.grad.clear();
      for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= tb.values[i];
      break;
    case Bcast::ScalarRhs:
      out = ta;
      out.grad.clear();
      for (double& v : out.values) v *= tb.values[0];
      break;
    case Bcast::ScalarLhs:
      out = tb;
      out.grad.clear();
      for (double& v : out.values) v *= ta.values[0];
      break;
    default:
      shape_error("mul");
  }
  return push({Op::Mul, a, b, 0, std::move(out)});
}

int Graph::relu(int a) {
  Tensor out = value(a);
  out.grad.clear();
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  return push({Op::Relu, a, -1, 0, std::move(out)});
}

int Graph::tanh(int a) {
  Tensor out = value(a);
  out.grad.clear();
  for (double& v : out.values) v = std::tanh(v);
  return push({Op::Tanh, a, -1, 0, std::move(out)});
}

int Graph::exp(int a) {
  Tensor out = value(a);
  out.grad.clear();
  for (double& v : out.values) v = std::exp(v);
  return push({Op::Exp, a, -1, 0, std::move(out)});
}

int Graph::log(int a) {
  Tensor out = value(a);
  out.grad.clear();
  for (double& v : out.values) {
    if (!(v > 0.0)) throw std::domain_error("graph: log of non-positive value");
    v = std::log(v);
  }
  return push({Op::Log, a, -1, 0, std::move(out)});
}

int Graph::log_softmax(int a) {
  const Tensor& ta = value(a);
  if (!ta.is_matrix()) shape_error("log_softmax");
  Tensor out = ta;
  out.grad.clear();
  const std::size_t m = ta.rows(), c = ta.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out.values[i * c];
    const double mx = *std::max_element(row, row + c);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    lse = mx + std::log(lse);
    for (std::size_t j = 0; j < c; ++j) row[j] -= lse;
  }
  return push({Op::LogSoftmax, a, -1, 0, std::move(out)});
}

int Graph::lgamma(int a) {
  Tensor out = value(a);
  out.grad.clear();
  for (double& v : out.values) v = log_gamma(v);
  return push({Op::Lgamma, a, -1, 0, std::move(out)});
}

int Graph::sum(int a) {
  double s = 0.0;
  for (double v : value(a).values) s += v;
  return push({Op::Sum, a, -1, 0, Tensor::scalar(s)});
}

int Graph::mean(int a) {
  double s = 0.0;
  for (double v : value(a).values) s += v;
  return push({Op::Mean, a, -1, 0, Tensor::scalar(s / static_cast<double>(value(a).size()))});
}

int Graph::select_row(int a, std::size_t row) {
  const Tensor& ta = value(a);
  if (!ta.is_matrix() || row >= ta.rows()) shape_error("select_row");
  const std::size_t c = ta.cols();
  std::vector<double> v(ta.values.begin() + static_cast<std::ptrdiff_t>(row * c),
                        ta.values.begin() + static_cast<std::ptrdiff_t>((row + 1) * c));
  return push({Op::SelectRow, a, -1, row, Tensor::matrix(1, c, std::move(v))});
}

std::span<const double> Graph::grad(int i) const {
  return nodes_[static_cast<std::size_t>(i)].t.grad;
}

void Graph::zero_grad() {
  for (Node& n : nodes_) std::fill(n.t.grad.begin(), n.t.grad.end(), 0.0);
}

void Graph::backward(int root) {
  if (root < 0 || static_cast<std::size_t>(root) >= nodes_.size()) {
    throw std::invalid_argument("backward: root out of range");
  }
  if (!nodes_[static_cast<std::size_t>(root)].t.is_scalar()) {
    throw std::invalid_argument("backward: root must be scalar");
  }
  for (Node& n : nodes_) {
    if (n.t.grad.size() != n.t.size()) n.t.grad.assign(n.t.size(), 0.0);
  }
  nodes_[static_cast<std::size_t>(root)].t.grad[0] = 1.0;

  for (int idx = root; idx >= 0; --idx) {
    Node& n = nodes_[static_cast<std::size_t>(idx)];
    const std::vector<double>& g = n.t.grad;
    bool live = false;
    for (double v : g) {
      if (v != 0.0) {
        live = true;
        break;
      }
    }
    if (!live) continue;

    switch (n.op) {
      case Op::Input:
      case Op::Constant:
        break;
      case Op::MatMul: {
        const Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        const Tensor& tb = nodes_[static_cast<std::size_t>(n.b)].t;
        std::vector<double>& ga = nodes_[static_cast<std::size_t>(n.a)].t.grad;
        std::vector<double>& gb = nodes_[static_cast<std::size_t>(n.b)].t.grad;
        const std::size_t m = ta.rows(), k = ta.cols(), c = tb.cols();
        // dA += dC * B^T ; dB += A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
          const double* gro = &g[i * c];
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = &tb.values[p * c];
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) acc += gro[j] * brow[j];
            ga[i * k + p] += acc;
          }
          const double* arow = &ta.values[i * k];
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            double* gbrow = &gb[p * c];
            for (std::size_t j = 0; j < c; ++j) gbrow[j] += aip * gro[j];
          }
        }
        break;
      }
      case Op::Add:
      case Op::Sub: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        Tensor& tb = nodes_[static_cast<std::size_t>(n.b)].t;
        const double sign = n.op == Op::Sub ? -1.0 : 1.0;
        const Bcast k = classify(ta, tb, true, "add");
        switch (k) {
          case Bcast::Equal:
            for (std::size_t i = 0; i < g.size(); ++i) {
              ta.grad[i] += g[i];
              tb.grad[i] += sign * g[i];
            }
            break;
          case Bcast::ScalarRhs: {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
              ta.grad[i] += g[i];
              acc += g[i];
            }
            tb.grad[0] += sign * acc;
            break;
          }
          case Bcast::ScalarLhs: {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
              tb.grad[i] += sign * g[i];
              acc += g[i];
            }
            ta.grad[0] += acc;
            break;
          }
          case Bcast::RowRhs:
            for (std::size_t i = 0; i < ta.rows(); ++i) {
              for (std::size_t j = 0; j < ta.cols(); ++j) {
                const double gij = g[i * ta.cols() + j];
                ta.grad[i * ta.cols() + j] += gij;
                tb.grad[j] += sign * gij;
              }
            }
            break;
        }
        break;
      }
      case Op::Mul: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        Tensor& tb = nodes_[static_cast<std::size_t>(n.b)].t;
        const Bcast k = classify(ta, tb, false, "mul");
        switch (k) {
          case Bcast::Equal:
            for (std::size_t i = 0; i < g.size(); ++i) {
              ta.grad[i] += g[i] * tb.values[i];
              tb.grad[i] += g[i] * ta.values[i];
            }
            break;
          case Bcast::ScalarRhs: {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
              ta.grad[i] += g[i] * tb.values[0];
              acc += g[i] * ta.values[i];
            }
            tb.grad[0] += acc;
            break;
          }
          case Bcast::ScalarLhs: {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
              tb.grad[i] += g[i] * ta.values[0];
              acc += g[i] * tb.values[i];
            }
            ta.grad[0] += acc;
            break;
          }
          default:
            break;
        }
        break;
      }
      case Op::Relu: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        // subgradient at exactly 0 is 0
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (ta.values[i] > 0.0) ta.grad[i] += g[i];
        }
        break;
      }
      case Op::Tanh: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ta.grad[i] += g[i] * (1.0 - n.t.values[i] * n.t.values[i]);
        }
        break;
      }
      case Op::Exp: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        for (std::size_t i = 0; i < g.size(); ++i) ta.grad[i] += g[i] * n.t.values[i];
        break;
      }
      case Op::Log: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        for (std::size_t i = 0; i < g.size(); ++i) ta.grad[i] += g[i] / ta.values[i];
        break;
      }
      case Op::LogSoftmax: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        const std::size_t m = n.t.rows(), c = n.t.cols();
        // dx = dy - softmax(x) * sum(dy) per row
        for (std::size_t i = 0; i < m; ++i) {
          const double* yrow = &n.t.values[i * c];
          const double* grow = &g[i * c];
          double gsum = 0.0;
          for (std::size_t j = 0; j < c; ++j) gsum += grow[j];
          double* garow = &ta.grad[i * c];
          for (std::size_t j = 0; j < c; ++j) {
            garow[j] += grow[j] - std::exp(yrow[j]) * gsum;
          }
        }
        break;
      }
      case Op::Lgamma: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ta.grad[i] += g[i] * digamma(ta.values[i]);
        }
        break;
      }
      case Op::Sum: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        for (double& gv : ta.grad) gv += g[0];
        break;
      }
      case Op::Mean: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        const double scale = g[0] / static_cast<double>(ta.size());
        for (double& gv : ta.grad) gv += scale;
        break;
      }
      case Op::SelectRow: {
        Tensor& ta = nodes_[static_cast<std::size_t>(n.a)].t;
        const std::size_t c = n.t.cols();
        for (std::size_t j = 0; j < c; ++j) ta.grad[n.row * c + j] += g[j];
        break;
      }
    }
  }
}

double grad_check(const DiffFn& f, std::vector<double> theta, double eps) {
  const ValueGrad at_theta = f(theta);
  if (!std::isfinite(at_theta.value)) {
    throw std::domain_error("grad_check: objective not finite at theta");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + eps;
    const double fp = f(theta).value;
    theta[i] = orig - eps;
    const double fm = f(theta).value;
    theta[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::domain_error("grad_check: objective not finite near theta");
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double analytic = at_theta.grad[i];
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace bnnood::ad
