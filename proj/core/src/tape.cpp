#include "gca/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "gca/error.hpp"

namespace gca::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::mask: return "mask";
    case Op::matmul: return "matmul";
    case Op::sin_op: return "sin";
    case Op::sigmoid_op: return "sigmoid";
    case Op::tanh_op: return "tanh";
    case Op::relu_op: return "relu";
    case Op::exp_op: return "exp";
    case Op::log_op: return "log";
    case Op::square_op: return "square";
    case Op::softmax_lastdim_op: return "softmax_lastdim";
    case Op::concat_lastdim_op: return "concat_lastdim";
    case Op::sum_op: return "sum";
    case Op::mean_op: return "mean";
    case Op::reshape_op: return "reshape";
  }
  return "?";
}

namespace {

constexpr double kLogFloor = 1e-12;

void check_finite(const Tensor& t, Op op) {
  for (double x : t.v) {
    if (!std::isfinite(x))
      throw NumericError(std::string(op_name(op)) + " produced a non-finite value");
  }
}

// True when `small` may broadcast over `big`: identical shapes, scalar, or
// small's shape (minus leading 1s) is a suffix of big's shape.
bool broadcast_ok(const Shape& big, const Shape& small) {
  if (big == small) return true;
  if (numel(small) == 1) return true;
  std::size_t lead = 0;
  while (lead < small.size() && small[lead] == 1) ++lead;
  std::size_t ns = small.size() - lead;
  if (ns > big.size()) return false;
  for (std::size_t i = 0; i < ns; ++i) {
    if (small[lead + i] != big[big.size() - ns + i]) return false;
  }
  return true;
}

void require_same_tape(Op op, Var a, Var b) {
  if (a.tape == nullptr || b.tape == nullptr)
    throw ConfigError(std::string(op_name(op)) + ": variable detached from any tape");
  if (a.tape != b.tape)
    throw ConfigError(std::string(op_name(op)) + ": inputs recorded on different tapes");
}

void require_attached(Op op, Var x) {
  if (x.tape == nullptr)
    throw ConfigError(std::string(op_name(op)) + ": variable detached from any tape");
}

}  // namespace

const Tensor& Var::val() const {
  if (tape == nullptr) throw ConfigError("val: variable detached from any tape");
  return tape->node(id).val;
}

const Shape& Var::shape() const { return val().shape; }

Tensor Var::grad() const {
  if (tape == nullptr) throw ConfigError("grad: variable detached from any tape");
  const Node& n = tape->node(id);
  if (n.grad.empty())
    throw ConfigError("grad: no gradient recorded for this node; run backward on a loss that "
                      "depends on it");
  return Tensor(n.val.shape, n.grad);
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor t) {
  check_finite(t, Op::leaf);
  Node n;
  n.op = Op::leaf;
  n.val = std::move(t);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor t) {
  check_finite(t, Op::leaf);
  Node n;
  n.op = Op::leaf;
  n.val = std::move(t);
  n.needs_grad = false;
  return push(std::move(n));
}

Var binary(Tape* t, Op op, Var a, Var b) {
  require_same_tape(op, a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  const bool a_big = av.size() >= bv.size();
  const Tensor& big = a_big ? av : bv;
  const Tensor& small = a_big ? bv : av;
  if (!broadcast_ok(big.shape, small.shape) || big.size() % std::max<std::size_t>(small.size(), 1) != 0)
    throw ConfigError(std::string(op_name(op)) + ": shapes " + shape_str(av.shape) + " and " +
                      shape_str(bv.shape) + " do not conform");

  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = t->node(a.id).needs_grad || t->node(b.id).needs_grad;
  n.val = Tensor(big.shape);
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < n.val.size(); ++i) {
    double x = av.v[i % na];
    double y = bv.v[i % nb];
    switch (op) {
      case Op::add: n.val.v[i] = x + y; break;
      case Op::sub: n.val.v[i] = x - y; break;
      case Op::mul:
      case Op::mask: n.val.v[i] = x * y; break;
      default: throw ConfigError("binary: bad op");
    }
  }
  check_finite(n.val, op);
  return t->push(std::move(n));
}

Var add(Var a, Var b) { return binary(a.tape, Op::add, a, b); }
Var sub(Var a, Var b) { return binary(a.tape, Op::sub, a, b); }
Var mul(Var a, Var b) { return binary(a.tape, Op::mul, a, b); }
Var mask(Var a, Var b) { return binary(a.tape, Op::mask, a, b); }

Var matmul(Var a, Var b) {
  require_same_tape(Op::matmul, a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[1] != bv.shape[0])
    throw ConfigError(std::string("matmul: shapes ") + shape_str(av.shape) + " and " +
                      shape_str(bv.shape) + " do not conform");
  const std::size_t m = av.shape[0], p = av.shape[1], q = bv.shape[1];
  Node n;
  n.op = Op::matmul;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = a.tape->node(a.id).needs_grad || a.tape->node(b.id).needs_grad;
  n.val = Tensor(Shape{m, q});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = av.v[i * p + k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < q; ++j) n.val.v[i * q + j] += aik * bv.v[k * q + j];
    }
  }
  check_finite(n.val, Op::matmul);
  return a.tape->push(std::move(n));
}

Var unary(Op op, Var x) {
  require_attached(op, x);
  const Tensor& xv = x.val();
  Node n;
  n.op = op;
  n.a = x.id;
  n.needs_grad = x.tape->node(x.id).needs_grad;
  n.val = Tensor(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double v = xv.v[i];
    switch (op) {
      case Op::sin_op: n.val.v[i] = std::sin(v); break;
      case Op::sigmoid_op:
        // Two-branch form; never evaluates exp of a large positive number.
        n.val.v[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                              : std::exp(v) / (1.0 + std::exp(v));
        break;
      case Op::tanh_op: n.val.v[i] = std::tanh(v); break;
      case Op::relu_op: n.val.v[i] = v > 0.0 ? v : 0.0; break;
      case Op::exp_op: n.val.v[i] = std::exp(v); break;
      case Op::log_op: n.val.v[i] = std::log(v < kLogFloor ? kLogFloor : v); break;
      case Op::square_op: n.val.v[i] = v * v; break;
      default: throw ConfigError("unary: bad op");
    }
  }
  check_finite(n.val, op);
  return x.tape->push(std::move(n));
}

Var sin(Var x) { return unary(Op::sin_op, x); }
Var sigmoid(Var x) { return unary(Op::sigmoid_op, x); }
Var tanh(Var x) { return unary(Op::tanh_op, x); }
Var relu(Var x) { return unary(Op::relu_op, x); }
Var exp(Var x) { return unary(Op::exp_op, x); }
Var log(Var x) { return unary(Op::log_op, x); }
Var square(Var x) { return unary(Op::square_op, x); }

Var softmax_lastdim(Var x) {
  require_attached(Op::softmax_lastdim_op, x);
  const Tensor& xv = x.val();
  if (xv.shape.empty() || xv.shape.back() == 0)
    throw ConfigError("softmax_lastdim: shape " + shape_str(xv.shape) + " has no last dimension");
  const std::size_t c = xv.shape.back();
  const std::size_t rows = xv.size() / c;
  Node n;
  n.op = Op::softmax_lastdim_op;
  n.a = x.id;
  n.needs_grad = x.tape->node(x.id).needs_grad;
  n.val = Tensor(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.v.data() + r * c;
    double* out = n.val.v.data() + r * c;
    double mx = in[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[j] /= z;
  }
  check_finite(n.val, Op::softmax_lastdim_op);
  return x.tape->push(std::move(n));
}

Var concat_lastdim(Var a, Var b) {
  require_same_tape(Op::concat_lastdim_op, a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.shape.size() != bv.shape.size() || av.shape.empty())
    throw ConfigError(std::string("concat_lastdim: shapes ") + shape_str(av.shape) + " and " +
                      shape_str(bv.shape) + " do not conform");
  for (std::size_t i = 0; i + 1 < av.shape.size(); ++i) {
    if (av.shape[i] != bv.shape[i])
      throw ConfigError(std::string("concat_lastdim: shapes ") + shape_str(av.shape) + " and " +
                        shape_str(bv.shape) + " do not conform");
  }
  const std::size_t ca = av.shape.back(), cb = bv.shape.back();
  const std::size_t rows = av.size() / std::max<std::size_t>(ca, 1);
  Shape out_shape = av.shape;
  out_shape.back() = ca + cb;
  Node n;
  n.op = Op::concat_lastdim_op;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = a.tape->node(a.id).needs_grad || a.tape->node(b.id).needs_grad;
  n.val = Tensor(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::memcpy(n.val.v.data() + r * (ca + cb), av.v.data() + r * ca, ca * sizeof(double));
    std::memcpy(n.val.v.data() + r * (ca + cb) + ca, bv.v.data() + r * cb, cb * sizeof(double));
  }
  check_finite(n.val, Op::concat_lastdim_op);
  return a.tape->push(std::move(n));
}

Var concat_lastdim(const std::vector<Var>& xs) {
  if (xs.empty()) throw ConfigError("concat_lastdim: empty input list");
  Var out = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) out = concat_lastdim(out, xs[i]);
  return out;
}

Var reduce(Op op, Var x) {
  require_attached(op, x);
  const Tensor& xv = x.val();
  if (xv.size() == 0) throw ConfigError(std::string(op_name(op)) + ": empty tensor");
  Node n;
  n.op = op;
  n.a = x.id;
  n.needs_grad = x.tape->node(x.id).needs_grad;
  double acc = 0.0;
  for (double v : xv.v) acc += v;
  if (op == Op::mean_op) acc /= static_cast<double>(xv.size());
  n.val = Tensor::scalar(acc);
  check_finite(n.val, op);
  return x.tape->push(std::move(n));
}

Var sum(Var x) { return reduce(Op::sum_op, x); }
Var mean(Var x) { return reduce(Op::mean_op, x); }

Var reshape(Var x, Shape s) {
  require_attached(Op::reshape_op, x);
  const Tensor& xv = x.val();
  if (numel(s) != xv.size())
    throw ConfigError("reshape: cannot view " + shape_str(xv.shape) + " as " + shape_str(s));
  Node n;
  n.op = Op::reshape_op;
  n.a = x.id;
  n.needs_grad = x.tape->node(x.id).needs_grad;
  n.val = Tensor(std::move(s), xv.v);
  return x.tape->push(std::move(n));
}

Var scale(Var x, double c) { return mul(x, x.tape->constant_scalar(c)); }
Var add_scalar(Var x, double c) { return add(x, x.tape->constant_scalar(c)); }
Var neg(Var x) { return scale(x, -1.0); }
Var absval(Var x) { return add(relu(x), relu(neg(x))); }

void Tape::backward(Var root) {
  if (root.tape == nullptr) throw ConfigError("backward: loss detached from any tape");
  if (root.tape != this) throw ConfigError("backward: loss recorded on a different tape");
  Node& rn = nodes_[static_cast<std::size_t>(root.id)];
  if (rn.val.size() != 1)
    throw ConfigError("backward: loss must be a scalar, got shape " + shape_str(rn.val.shape));

  for (int i = 0; i <= root.id; ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.needs_grad) n.grad.assign(n.val.size(), 0.0);
  }
  if (!rn.needs_grad) rn.grad.assign(1, 0.0);
  rn.grad[0] = 1.0;

  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.empty()) continue;
    Node* a = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)] : nullptr;
    Node* b = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)] : nullptr;
    const bool ga = a != nullptr && a->needs_grad;
    const bool gb = b != nullptr && b->needs_grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add:
      case Op::sub: {
        const double bsign = n.op == Op::sub ? -1.0 : 1.0;
        const std::size_t na = a->val.size(), nb = b->val.size();
        for (std::size_t j = 0; j < n.grad.size(); ++j) {
          if (ga) a->grad[j % na] += n.grad[j];
          if (gb) b->grad[j % nb] += bsign * n.grad[j];
        }
        break;
      }
      case Op::mul:
      case Op::mask: {
        const std::size_t na = a->val.size(), nb = b->val.size();
        for (std::size_t j = 0; j < n.grad.size(); ++j) {
          if (ga) a->grad[j % na] += b->val.v[j % nb] * n.grad[j];
          if (gb) b->grad[j % nb] += a->val.v[j % na] * n.grad[j];
        }
        break;
      }
      case Op::matmul: {
        const std::size_t m = a->val.shape[0], p = a->val.shape[1], q = b->val.shape[1];
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < q; ++j) {
            const double g = n.grad[r * q + j];
            if (g == 0.0) continue;
            for (std::size_t k = 0; k < p; ++k) {
              if (ga) a->grad[r * p + k] += g * b->val.v[k * q + j];
              if (gb) b->grad[k * q + j] += g * a->val.v[r * p + k];
            }
          }
        }
        break;
      }
      case Op::sin_op:
        for (std::size_t j = 0; j < n.grad.size(); ++j)
          a->grad[j] += std::cos(a->val.v[j]) * n.grad[j];
        break;
      case Op::sigmoid_op:
        for (std::size_t j = 0; j < n.grad.size(); ++j) {
          const double y = n.val.v[j];
          a->grad[j] += y * (1.0 - y) * n.grad[j];
        }
        break;
      case Op::tanh_op:
        for (std::size_t j = 0; j < n.grad.size(); ++j) {
          const double y = n.val.v[j];
          a->grad[j] += (1.0 - y * y) * n.grad[j];
        }
        break;
      case Op::relu_op:
        for (std::size_t j = 0; j < n.grad.size(); ++j)
          if (a->val.v[j] > 0.0) a->grad[j] += n.grad[j];
        break;
      case Op::exp_op:
        for (std::size_t j = 0; j < n.grad.size(); ++j) a->grad[j] += n.val.v[j] * n.grad[j];
        break;
      case Op::log_op:
        for (std::size_t j = 0; j < n.grad.size(); ++j) {
          const double x = a->val.v[j];
          a->grad[j] += n.grad[j] / (x < kLogFloor ? kLogFloor : x);
        }
        break;
      case Op::square_op:
        for (std::size_t j = 0; j < n.grad.size(); ++j)
          a->grad[j] += 2.0 * a->val.v[j] * n.grad[j];
        break;
      case Op::softmax_lastdim_op: {
        const std::size_t c = n.val.shape.back();
        const std::size_t rows = n.val.size() / c;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = n.val.v.data() + r * c;
          const double* gy = n.grad.data() + r * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
          for (std::size_t j = 0; j < c; ++j) a->grad[r * c + j] += y[j] * (gy[j] - dot);
        }
        break;
      }
      case Op::concat_lastdim_op: {
        const std::size_t ca = a->val.shape.back(), cb = b->val.shape.back();
        const std::size_t rows = n.val.size() / std::max<std::size_t>(ca + cb, 1);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < ca; ++j)
            if (ga) a->grad[r * ca + j] += n.grad[r * (ca + cb) + j];
          for (std::size_t j = 0; j < cb; ++j)
            if (gb) b->grad[r * cb + j] += n.grad[r * (ca + cb) + ca + j];
        }
        break;
      }
      case Op::sum_op:
        for (std::size_t j = 0; j < a->grad.size(); ++j) a->grad[j] += n.grad[0];
        break;
      case Op::mean_op: {
        const double g = n.grad[0] / static_cast<double>(a->val.size());
        for (std::size_t j = 0; j < a->grad.size(); ++j) a->grad[j] += g;
        break;
      }
      case Op::reshape_op:
        for (std::size_t j = 0; j < a->grad.size(); ++j) a->grad[j] += n.grad[j];
        break;
    }
  }
}

}  // namespace gca::ad
