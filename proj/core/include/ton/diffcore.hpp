#pragma once

// Reverse-mode automatic differentiation over dense row-major float64
// matrices. A Tape records every operation of one forward pass; backward()
// walks it once in reverse. Tapes are cheap and are rebuilt for each step.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ton {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Dense array with an optional gradient slot. Rank 1 tensors behave as a
// single row; everything else is viewed as rows x (product of the rest).
struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches it

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void zero_grad();
  bool has_grad() const { return !grad.empty(); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  std::span<const double> grad() const;
  const Shape& shape() const { return value().shape; }
  double item() const;
};

class Tape {
 public:
  // With recording off, ops compute values but keep no backward rules.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Value that never receives a gradient.
  Var constant(Tensor t);
  // Owned leaf; its gradient is read back with Var::grad().
  Var leaf(Tensor t);
  // Borrowed leaf. backward() adds into t.grad (allocating zeros if needed),
  // so gradients from several tapes accumulate. The tensor must outlive the
  // tape.
  Var param(Tensor& t);
  // Borrowed read-only value, no gradient.
  Var borrow(const Tensor& t);

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node once,
  // in reverse recording order.
  void backward(Var loss);

  // Used by op implementations.
  using BackwardFn = std::function<void(Tape&, int self)>;
  Var push(Tensor value, std::initializer_list<int> inputs, BackwardFn fn) {
    return push(std::move(value), std::span<const int>(inputs.begin(), inputs.size()),
                std::move(fn));
  }
  Var push(Tensor value, std::span<const int> inputs, BackwardFn fn);
  const Tensor& value(int id) const;
  std::vector<double>& grad_buffer(int id);  // allocates zeros on demand
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  std::span<const double> grad(int id) const;
  std::span<const int> inputs(int id) const;

 private:
  struct Node {
    Tensor own;
    const Tensor* borrowed = nullptr;
    Tensor* sink = nullptr;
    std::vector<double> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Var add_node(Node node);

  std::vector<Node> nodes_;
  bool record_;
};

// Operation set. Every function checks shapes and records on the operands'
// tape; shape errors name the op and both shapes.
namespace ops {

Var matmul(Var a, Var b);                 // [m,k] x [k,n]
Var add(Var a, Var b);                    // same shape, or b is [1,n] (row broadcast)
Var sub(Var a, Var b);                    // same broadcasting as add
Var mul(Var a, Var b);                    // elementwise, same shape
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var log(Var a);                           // DomainError on non-positive input
Var exp(Var a);
Var relu(Var a);                          // subgradient 0 at 0
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var embedding(Var table, std::span<const int> ids);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
// Mean over rows of -log softmax(logits)[target]; rows whose target is -1
// are ignored and receive zero gradient.
Var cross_entropy(Var logits, std::span<const int> targets);
// Row-softmax of scale * q k^T with entries above the diagonal masked out.
// The row index of q is offset so that q row r sits at key position
// (keys - queries + r).
Var causal_attention(Var q, Var k, double scale);
Var pick(Var a, std::span<const int> cols);  // [m,n] -> [m,1], a[r, cols[r]]
Var clamp(Var a, double lo, double hi);       // zero gradient outside [lo, hi]
Var minimum(Var a, Var b);                    // ties route gradient to a
Var sum(Var a);                               // -> [1,1]
Var mean(Var a);

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }
inline Var operator*(double s, Var a) { return ops::scale(a, s); }

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Max over every input entry of |analytic - numeric| / max(1e-8,
// |analytic| + |numeric|), numeric gradients by central differences.
double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5);

}  // namespace ton
