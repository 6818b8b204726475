#include "ton/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "kernels.hpp"

namespace ton {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& s) {
  if (s.empty()) throw ShapeError("tensor: empty shape");
  for (std::size_t d : s) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(s));
  }
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void require_same_tape(const char* op, Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  }
}

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  check_shape(shape);
  data.assign(product(shape), 0.0);
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  check_shape(shape);
  if (product(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

std::size_t Tensor::rows() const { return shape.size() == 1 ? 1 : shape[0]; }

std::size_t Tensor::cols() const {
  if (shape.size() == 1) return shape[0];
  return data.size() / shape[0];
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

// ---------------------------------------------------------------- Var

const Tensor& Var::value() const { return tape->value(id); }

std::span<const double> Var::grad() const { return tape->grad(id); }

double Var::item() const {
  const Tensor& t = value();
  if (t.size() != 1) throw ShapeError("item: expected a scalar, got " + shape_str(t.shape));
  return t.data[0];
}

// ---------------------------------------------------------------- Tape

Var Tape::add_node(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor t) {
  Node n;
  n.own = std::move(t);
  return add_node(std::move(n));
}

Var Tape::leaf(Tensor t) {
  Node n;
  n.own = std::move(t);
  n.needs_grad = record_;
  return add_node(std::move(n));
}

Var Tape::param(Tensor& t) {
  Node n;
  n.borrowed = &t;
  n.sink = record_ ? &t : nullptr;
  n.needs_grad = record_;
  return add_node(std::move(n));
}

Var Tape::borrow(const Tensor& t) {
  Node n;
  n.borrowed = &t;
  return add_node(std::move(n));
}

Var Tape::push(Tensor value, std::span<const int> inputs, BackwardFn fn) {
  Node n;
  n.own = std::move(value);
  if (record_) {
    for (int i : inputs) {
      if (nodes_[static_cast<std::size_t>(i)].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) {
      n.inputs.assign(inputs.begin(), inputs.end());
      n.backward = std::move(fn);
    }
  }
  return add_node(std::move(n));
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.borrowed ? *n.borrowed : n.own;
}

std::vector<double>& Tape::grad_buffer(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

std::span<const double> Tape::grad(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.grad;
}

std::span<const int> Tape::inputs(int id) const {
  return nodes_.at(static_cast<std::size_t>(id)).inputs;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss is not on this tape");
  if (!record_) throw std::logic_error("backward: tape was created without recording");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(lv.shape));

  grad_buffer(loss.id)[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
  }
  // Every borrowed parameter ends with a gradient slot, zero if unreachable.
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.sink == nullptr) continue;
    if (n.sink->grad.size() != n.sink->data.size()) n.sink->grad.assign(n.sink->data.size(), 0.0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.sink->grad[i] += n.grad[i];
  }
}

// ---------------------------------------------------------------- ops

namespace ops {

namespace {

enum class Broadcast { kNone, kRow };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape == b.shape) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == a.cols() && b.size() == a.cols()) return Broadcast::kRow;
  mismatch(op, a.shape, b.shape);
}

Var add_like(const char* op, Var a, Var b, double sign) {
  require_same_tape(op, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(op, av, bv);
  Tensor out(av.shape, av.data);
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] += sign * bv.data[kind == Broadcast::kNone ? i : i % cols];
  }
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib, kind, cols, sign](Tape& t, int self) {
    const auto g = t.grad(self);
    if (t.needs_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[kind == Broadcast::kNone ? i : i % cols] += sign * g[i];
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape);
  for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = fwd(av.data[i]);
  const int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia, deriv](Tape& t, int self) {
    const auto g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x.data[i], y.data[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) mismatch("matmul", av.shape, bv.shape);
  Tensor out = Tensor::zeros(m, n);
  kernels::gemm_nn(m, n, k, av.data.data(), bv.data.data(), out.data.data());
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib, m, n, k](Tape& t, int self) {
    const double* g = t.grad(self).data();
    if (t.needs_grad(ia)) {
      kernels::gemm_nt(m, k, n, g, t.value(ib).data.data(), t.grad_buffer(ia).data());
    }
    if (t.needs_grad(ib)) {
      kernels::gemm_tn(k, n, m, t.value(ia).data.data(), g, t.grad_buffer(ib).data());
    }
  });
}

Var add(Var a, Var b) { return add_like("add", a, b, 1.0); }

Var sub(Var a, Var b) { return add_like("sub", a, b, -1.0); }

Var mul(Var a, Var b) {
  require_same_tape("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape != bv.shape) mismatch("mul", av.shape, bv.shape);
  Tensor out(av.shape);
  for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const auto g = t.grad(self);
    if (t.needs_grad(ia)) {
      const Tensor& bv = t.value(ib);
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv.data[i];
    }
    if (t.needs_grad(ib)) {
      const Tensor& av = t.value(ia);
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av.data[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.shape, av.data);
  const std::size_t rows = av.rows(), cols = av.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::softmax_inplace(std::span<double>(out.data.data() + r * cols, cols));
  }
  const int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia, rows, cols](Tape& t, int self) {
    const auto g = t.grad(self);
    const Tensor& y = t.value(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[o + c] * y.data[o + c];
      for (std::size_t c = 0; c < cols; ++c) ga[o + c] += y.data[o + c] * (g[o + c] - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.shape, av.data);
  const std::size_t rows = av.rows(), cols = av.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::log_softmax_inplace(std::span<double>(out.data.data() + r * cols, cols));
  }
  const int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia, rows, cols](Tape& t, int self) {
    const auto g = t.grad(self);
    const Tensor& y = t.value(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * cols;
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gs += g[o + c];
      for (std::size_t c = 0; c < cols; ++c) ga[o + c] += g[o + c] - std::exp(y.data[o + c]) * gs;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape("layer_norm", x, gain);
  require_same_tape("layer_norm", x, bias);
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gv.size() != cols) mismatch("layer_norm", xv.shape, gv.shape);
  if (bv.size() != cols) mismatch("layer_norm", xv.shape, bv.shape);

  Tensor out(xv.shape);
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xr[c] - mu) * inv;
      xhat[r * cols + c] = h;
      out.data[r * cols + c] = h * gv.data[c] + bv.data[c];
    }
  }
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.tape->push(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                                   int self) {
        const auto g = t.grad(self);
        const Tensor& gv = t.value(ig);
        if (t.needs_grad(ig)) {
          auto& gg = t.grad_buffer(ig);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
        }
        if (t.needs_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
        }
        if (t.needs_grad(ix)) {
          auto& gx = t.grad_buffer(ix);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t o = r * cols;
            double mean_d = 0.0, mean_dh = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = g[o + c] * gv.data[c];
              mean_d += d;
              mean_dh += d * xhat[o + c];
            }
            mean_d /= n;
            mean_dh /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = g[o + c] * gv.data[c];
              gx[o + c] += inv_std[r] * (d - mean_d - xhat[o + c] * mean_dh);
            }
          }
        }
      });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  const std::size_t vocab = tv.rows(), dim = tv.cols();
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  Tensor out = Tensor::zeros(ids.size(), dim);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(ids[r]) + " out of range for table " +
                       shape_str(tv.shape));
    }
    std::copy_n(tv.data.data() + static_cast<std::size_t>(ids[r]) * dim, dim,
                out.data.data() + r * dim);
  }
  const int it = table.id;
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape->push(std::move(out), {it}, [it, dim, idv = std::move(idv)](Tape& t, int self) {
    const auto g = t.grad(self);
    auto& gt = t.grad_buffer(it);
    for (std::size_t r = 0; r < idv.size(); ++r) {
      const std::size_t o = static_cast<std::size_t>(idv[r]) * dim;
      for (std::size_t c = 0; c < dim; ++c) gt[o + c] += g[r * dim + c];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape* tape = parts[0].tape;
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_same_tape("concat_rows", parts[0], p);
    if (p.value().cols() != cols) mismatch("concat_rows", parts[0].shape(), p.shape());
    rows += p.value().rows();
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<int> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + offset);
    offset += p.value().size();
    ids.push_back(p.id);
  }
  return tape->push(std::move(out), std::span<const int>(ids), [ids](Tape& t, int self) {
    const auto g = t.grad(self);
    std::size_t off = 0;
    for (int i : ids) {
      const std::size_t n = t.value(i).size();
      if (t.needs_grad(i)) {
        auto& gi = t.grad_buffer(i);
        for (std::size_t j = 0; j < n; ++j) gi[j] += g[off + j];
      }
      off += n;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  const std::size_t cols = av.cols();
  if (count == 0 || begin + count > av.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_str(av.shape));
  }
  Tensor out = Tensor::zeros(count, cols);
  std::copy_n(av.data.begin() + static_cast<std::ptrdiff_t>(begin * cols), count * cols,
              out.data.begin());
  const int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia, begin, cols](Tape& t, int self) {
    const auto g = t.grad(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  const std::size_t rows = lv.rows(), cols = lv.cols();
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(lv.shape));
  }
  std::vector<double> probs(lv.data);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<double> row(probs.data() + r * cols, cols);
    kernels::log_softmax_inplace(row);
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= cols) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) +
                       " out of range for logits " + shape_str(lv.shape));
    }
    total -= row[static_cast<std::size_t>(targets[r])];
    ++counted;
  }
  const double denom = counted ? static_cast<double>(counted) : 1.0;
  for (double& p : probs) p = std::exp(p);
  const int il = logits.id;
  std::vector<int> tv(targets.begin(), targets.end());
  return logits.tape->push(
      Tensor::scalar(total / denom), {il},
      [il, cols, denom, tv = std::move(tv), probs = std::move(probs)](Tape& t, int self) {
        const double g = t.grad(self)[0] / denom;
        auto& gl = t.grad_buffer(il);
        for (std::size_t r = 0; r < tv.size(); ++r) {
          if (tv[r] < 0) continue;
          const std::size_t o = r * cols;
          for (std::size_t c = 0; c < cols; ++c) gl[o + c] += g * probs[o + c];
          gl[o + static_cast<std::size_t>(tv[r])] -= g;
        }
      });
}

Var causal_attention(Var q, Var k, double scale) {
  require_same_tape("causal_attention", q, k);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const std::size_t tq = qv.rows(), tk = kv.rows(), dh = qv.cols();
  if (kv.cols() != dh || tq > tk) mismatch("causal_attention", qv.shape, kv.shape);
  const std::size_t shift = tk - tq;

  Tensor out = Tensor::zeros(tq, tk);
  kernels::gemm_nt(tq, tk, dh, qv.data.data(), kv.data.data(), out.data.data());
  for (std::size_t r = 0; r < tq; ++r) {
    const std::size_t visible = shift + r + 1;
    double* row = out.data.data() + r * tk;
    for (std::size_t c = 0; c < visible; ++c) row[c] *= scale;
    kernels::softmax_inplace(std::span<double>(row, visible));
    std::fill(row + visible, row + tk, 0.0);
  }
  const int iq = q.id, ik = k.id;
  return q.tape->push(std::move(out), {iq, ik},
                      [iq, ik, tq, tk, dh, shift, scale](Tape& t, int self) {
                        const auto g = t.grad(self);
                        const Tensor& w = t.value(self);
                        std::vector<double> ds(tq * tk, 0.0);
                        for (std::size_t r = 0; r < tq; ++r) {
                          const std::size_t visible = shift + r + 1;
                          const std::size_t o = r * tk;
                          double dot = 0.0;
                          for (std::size_t c = 0; c < visible; ++c) dot += g[o + c] * w.data[o + c];
                          for (std::size_t c = 0; c < visible; ++c) {
                            ds[o + c] = scale * w.data[o + c] * (g[o + c] - dot);
                          }
                        }
                        if (t.needs_grad(iq)) {
                          kernels::gemm_nn(tq, dh, tk, ds.data(), t.value(ik).data.data(),
                                           t.grad_buffer(iq).data());
                        }
                        if (t.needs_grad(ik)) {
                          kernels::gemm_tn(tk, dh, tq, ds.data(), t.value(iq).data.data(),
                                           t.grad_buffer(ik).data());
                        }
                      });
}

Var pick(Var a, std::span<const int> cols_idx) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (cols_idx.size() != rows) {
    throw ShapeError("pick: " + std::to_string(cols_idx.size()) + " indices for " +
                     shape_str(av.shape));
  }
  Tensor out = Tensor::zeros(rows, 1);
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols_idx[r] < 0 || static_cast<std::size_t>(cols_idx[r]) >= cols) {
      throw ShapeError("pick: index " + std::to_string(cols_idx[r]) + " out of range for " +
                       shape_str(av.shape));
    }
    out.data[r] = av(r, static_cast<std::size_t>(cols_idx[r]));
  }
  const int ia = a.id;
  std::vector<int> idx(cols_idx.begin(), cols_idx.end());
  return a.tape->push(std::move(out), {ia}, [ia, cols, idx = std::move(idx)](Tape& t, int self) {
    const auto g = t.grad(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      ga[r * cols + static_cast<std::size_t>(idx[r])] += g[r];
    }
  });
}

Var minimum(Var a, Var b) {
  require_same_tape("minimum", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape != bv.shape) mismatch("minimum", av.shape, bv.shape);
  Tensor out(av.shape);
  for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = std::min(av.data[i], bv.data[i]);
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const auto g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool to_a = av.data[i] <= bv.data[i];
      const int target = to_a ? ia : ib;
      if (t.needs_grad(target)) t.grad_buffer(target)[i] += g[i];
    }
  });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double total = 0.0;
  for (double v : av.data) total += v;
  const int ia = a.id;
  return a.tape->push(Tensor::scalar(total), {ia}, [ia](Tape& t, int self) {
    const double g = t.grad(self)[0];
    auto& ga = t.grad_buffer(ia);
    for (double& v : ga) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

}  // namespace ops

// ---------------------------------------------------------------- grad_check

double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h) {
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    Var out = f(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) {
      std::vector<double> g(v.grad().begin(), v.grad().end());
      g.resize(v.value().size(), 0.0);
      analytic.push_back(std::move(g));
    }
  }

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const Tensor& t : xs) vars.push_back(tape.constant(t));
    return f(tape, vars).item();
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k].data[i];
      inputs[k].data[i] = orig + h;
      const double up = eval(inputs);
      inputs[k].data[i] = orig - h;
      const double down = eval(inputs);
      inputs[k].data[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace ton
