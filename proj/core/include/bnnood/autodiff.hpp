#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace bnnood::ad {

// Dense row-major tensor of 64-bit reals with a lazily allocated gradient
// buffer. Immutable after the forward pass that produced it; safe to read
// from multiple threads.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward() touches the node

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> v);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  bool is_scalar() const { return values.size() == 1; }
  bool is_matrix() const { return shape.size() == 2; }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  double item() const;  // value of a scalar tensor
};

enum class Op : std::uint8_t {
  Input,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,  // elementwise; equal shape or scalar broadcast (Add/Sub also take a row vector)
  Relu,
  Tanh,
  Exp,
  Log,
  LogSoftmax,  // row-wise, max-shifted logsumexp
  Lgamma,
  Sum,
  Mean,
  SelectRow,
};

// Append-only reverse-mode tape. Node indices are stable; every operand
// precedes its consumers, so backward() is a strict reverse sweep.
// Single-threaded per instance; distinct graphs may run in parallel.
class Graph {
 public:
  int input(Tensor t);
  int constant(Tensor t);
  int constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  int matmul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int relu(int a);
  int tanh(int a);
  int exp(int a);
  int log(int a);
  int log_softmax(int a);
  int lgamma(int a);
  int sum(int a);
  int mean(int a);
  int select_row(int a, std::size_t row);

  const Tensor& value(int i) const { return nodes_[static_cast<std::size_t>(i)].t; }
  double scalar_value(int i) const { return value(i).item(); }
  std::span<const double> grad(int i) const;
  std::size_t size() const { return nodes_.size(); }

  // Populates grad of every node reachable from root with d(root)/d(node).
  // root must be scalar. Unreachable nodes get zero grad.
  void backward(int root);
  void zero_grad();

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    std::size_t row = 0;  // SelectRow operand
    Tensor t;
  };

  int push(Node n);
  std::vector<Node> nodes_;
};

// Scalar function of a parameter vector that also reports its analytic
// gradient (normally computed with a Graph).
struct ValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};
using DiffFn = std::function<ValueGrad(const std::vector<double>&)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const DiffFn& f, std::vector<double> theta, double eps);

}  // namespace bnnood::ad
