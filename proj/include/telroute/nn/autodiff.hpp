#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "telroute/nn/matrix.hpp"

namespace telroute::nn {

// Trainable array with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape;

// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
  double item() const { return value().item(); }
  bool requires_grad() const;
};

// Records operations in creation order; backward() walks that order in
// reverse, which is a valid reverse topological order because every node is
// created after its inputs.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  // Leaf whose gradient is added to p.grad by backward().
  Var param(Parameter& p);
  // Leaf with a readable gradient but no parameter behind it.
  Var input(Matrix value);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad(int id);
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using Backward = std::function<void(Tape&, int self)>;
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Matrix value, std::span<const Var> inputs, Backward backward);
  // Gradient buffer of a node, allocated on first use.
  Matrix& grad_mut(int id);
  const Matrix& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* parameter = nullptr;
  };
  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// Elementwise and shape ops. Binary elementwise ops require equal shapes.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);  // a[n x m] + row[1 x m] broadcast
Var mul_row(Var a, Var row);  // a[n x m] * row[1 x m] broadcast
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var scale_by(Var a, Var s);   // s is 1x1
Var neg(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, int start, int count);
Var leaky_relu(Var a, double slope = 0.01);
Var layer_norm(Var a, double eps = 1e-5);  // per row, no affine
Var softplus(Var a);
Var log(Var a);
Var exp(Var a);
Var square(Var a);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);   // -> 1x1
Var mean(Var a);  // -> 1x1
// out[i] = a[index[i]]; backward scatters with accumulation.
Var gather_rows(Var a, std::span<const int> index);
// Row reductions into num_segments groups; segment[i] names the group of row
// i. Empty groups yield zeros. min/max route the gradient to the first
// extremal row (lowest index).
Var segment_sum(Var a, std::span<const int> segment, int num_segments);
Var segment_mean(Var a, std::span<const int> segment, int num_segments);
Var segment_min(Var a, std::span<const int> segment, int num_segments);
Var segment_max(Var a, std::span<const int> segment, int num_segments);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace telroute::nn
