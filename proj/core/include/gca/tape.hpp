#pragma once

#include <cstddef>
#include <vector>

#include "gca/tensor.hpp"

namespace gca::ad {

// Primitive kinds recorded on the tape. mask is semantically elementwise
// multiply; it gets its own kind so shape errors and op listings name it.
enum class Op {
  leaf,
  add,
  sub,
  mul,
  mask,
  matmul,
  sin_op,
  sigmoid_op,
  tanh_op,
  relu_op,
  exp_op,
  log_op,
  square_op,
  softmax_lastdim_op,
  concat_lastdim_op,
  sum_op,
  mean_op,
  reshape_op,
};

const char* op_name(Op op);

struct Node {
  Op op;
  int a = -1;  // input ids, -1 when unused
  int b = -1;
  Tensor val;
  std::vector<double> grad;  // allocated during backward for needy nodes
  bool needs_grad = false;
};

class Tape;

// Cheap handle into a tape. Copy freely; validity ends with the tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& val() const;
  const Shape& shape() const;
  // Gradient of the last backward() root with respect to this node.
  Tensor grad() const;
};

// Append-only record of one forward computation. Single-threaded by
// construction; run independent tapes on independent threads if needed.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf (a parameter).
  Var leaf(Tensor t);
  // Non-differentiable leaf (data, frozen noise, literals).
  Var constant(Tensor t);
  Var constant_scalar(double x) { return constant(Tensor::scalar(x)); }

  // Seeds d(root)/d(root) = 1 and accumulates adjoints into every
  // grad-needing node reachable backward from root. Multiple consumers sum.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  friend struct Var;
  friend Var binary(Tape* t, Op op, Var a, Var b);
  friend Var unary(Op op, Var x);
  friend Var matmul(Var a, Var b);
  friend Var softmax_lastdim(Var x);
  friend Var concat_lastdim(Var a, Var b);
  friend Var reduce(Op op, Var x);
  friend Var reshape(Var x, Shape s);

  Var push(Node n);
  std::vector<Node> nodes_;
};

// Elementwise binaries. Shapes must match exactly, or the smaller operand
// must be a scalar or a trailing-dims slice of the larger (leading-1 style
// broadcast: flat index of the smaller = i % smaller_size).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var mask(Var a, Var b);

// 2-D contraction: [m,p] x [p,n] -> [m,n].
Var matmul(Var a, Var b);

// Elementwise unaries.
Var sin(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var exp(Var x);
Var log(Var x);  // argument clamped to >= 1e-12
Var square(Var x);

// Softmax over the last dimension; rows are all leading dims flattened.
Var softmax_lastdim(Var x);

// Concatenate along the last dimension; leading dims must match.
Var concat_lastdim(Var a, Var b);
Var concat_lastdim(const std::vector<Var>& xs);

// Full reductions to shape [1].
Var sum(Var x);
Var mean(Var x);

// Same values, new shape (element count preserved). Identity gradient.
Var reshape(Var x, Shape s);

// Conveniences built from the primitives above.
Var scale(Var x, double c);           // x * c
Var add_scalar(Var x, double c);      // x + c
Var neg(Var x);                       // x * -1
Var absval(Var x);                    // relu(x) + relu(-x)

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var x) { return neg(x); }

}  // namespace gca::ad
