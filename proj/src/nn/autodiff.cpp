#include "telroute/nn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "telroute/nn/kernels.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace telroute::nn {

namespace {
// Tapes allocate and free many matrices of a few hundred KB. With glibc's
// default thresholds each one is a fresh mmap, and the page faults cost
// about as much as the arithmetic.
[[maybe_unused]] const bool kAllocatorTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  // Large minibatch tapes peak near 1 GB; trimming after each one means
  // faulting it all back in on the next step.
  mallopt(M_TRIM_THRESHOLD, std::numeric_limits<int>::max());
#endif
  return true;
}();
}  // namespace

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, false, nullptr, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back({p.value, {}, grad_enabled_, nullptr, grad_enabled_ ? &p : nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix value) {
  nodes_.push_back({std::move(value), {}, grad_enabled_, nullptr, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool rg = false;
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.tape != this) throw std::invalid_argument("operands live on different tapes");
      rg = rg || requires_grad(v.id);
    }
  }
  nodes_.push_back({std::move(value), {}, rg, rg ? std::move(backward) : nullptr, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_mut(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() != n.value.size() || n.grad.rows != n.value.rows) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

const Matrix& Tape::grad(int id) { return grad_mut(id); }

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: root belongs to another tape");
  if (value(root.id).size() != 1) throw std::invalid_argument("backward: root must be 1x1");
  if (!requires_grad(root.id)) return;
  grad_mut(root.id).data[0] += 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.parameter != nullptr) {
      kernels::axpy(1.0, n.grad.data.data(), n.parameter->grad.data.data(), n.grad.size());
    }
  }
}

namespace {

void require_same(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.value().shape() + " vs " +
                                b.value().shape());
  }
}

// Elementwise unary op with derivative computed from (x, y).
template <class F, class D>
Var unary(Var a, F f, D df) {
  const Matrix& x = a.value();
  Matrix y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  const int ia = a.id;
  return a.tape->push(std::move(y), {a}, [ia, df](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& xv = t.value(ia);
    const Matrix& yv = t.value(self);
    if (!t.requires_grad(ia)) return;
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * df(xv.data[i], yv.data[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols != B.rows) throw std::invalid_argument("matmul: " + A.shape() + " * " + B.shape());
  Matrix C(A.rows, B.cols);
  kernels::gemm_nn(A.data.data(), B.data.data(), C.data.data(), static_cast<std::size_t>(A.rows),
                   static_cast<std::size_t>(A.cols), static_cast<std::size_t>(B.cols));
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(C), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& Av = t.value(ia);
    const Matrix& Bv = t.value(ib);
    const auto n = static_cast<std::size_t>(Av.rows), k = static_cast<std::size_t>(Av.cols),
               m = static_cast<std::size_t>(Bv.cols);
    if (t.requires_grad(ia)) kernels::gemm_nt(g.data.data(), Bv.data.data(), t.grad_mut(ia).data.data(), n, k, m);
    if (t.requires_grad(ib)) kernels::gemm_tn(Av.data.data(), g.data.data(), t.grad_mut(ib).data.data(), n, k, m);
  });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Matrix y = a.value();
  kernels::axpy(1.0, b.value().data.data(), y.data.data(), y.size());
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) kernels::axpy(1.0, g.data.data(), t.grad_mut(ia).data.data(), g.size());
    if (t.requires_grad(ib)) kernels::axpy(1.0, g.data.data(), t.grad_mut(ib).data.data(), g.size());
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Matrix y = a.value();
  kernels::axpy(-1.0, b.value().data.data(), y.data.data(), y.size());
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) kernels::axpy(1.0, g.data.data(), t.grad_mut(ia).data.data(), g.size());
    if (t.requires_grad(ib)) kernels::axpy(-1.0, g.data.data(), t.grad_mut(ib).data.data(), g.size());
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  Matrix y(A.rows, A.cols);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = A.data[i] * B.data[i];
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& Av = t.value(ia);
    const Matrix& Bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad_mut(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * Bv.data[i];
    }
    if (t.requires_grad(ib)) {
      Matrix& gb = t.grad_mut(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * Av.data[i];
    }
  });
}

Var add_row(Var a, Var row) {
  const Matrix& A = a.value();
  const Matrix& R = row.value();
  if (R.rows != 1 || R.cols != A.cols) throw std::invalid_argument("add_row: " + A.shape() + " + " + R.shape());
  Matrix y = A;
  for (int r = 0; r < y.rows; ++r) kernels::axpy(1.0, R.data.data(), y.row(r), static_cast<std::size_t>(y.cols));
  const int ia = a.id, ir = row.id;
  return a.tape->push(std::move(y), {a, row}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) kernels::axpy(1.0, g.data.data(), t.grad_mut(ia).data.data(), g.size());
    if (t.requires_grad(ir)) {
      Matrix& gr = t.grad_mut(ir);
      for (int r = 0; r < g.rows; ++r) kernels::axpy(1.0, g.row(r), gr.data.data(), static_cast<std::size_t>(g.cols));
    }
  });
}

Var mul_row(Var a, Var row) {
  const Matrix& A = a.value();
  const Matrix& R = row.value();
  if (R.rows != 1 || R.cols != A.cols) throw std::invalid_argument("mul_row: " + A.shape() + " * " + R.shape());
  Matrix y = A;
  for (int r = 0; r < y.rows; ++r) {
    double* yr = y.row(r);
    for (int c = 0; c < y.cols; ++c) yr[c] *= R.data[static_cast<std::size_t>(c)];
  }
  const int ia = a.id, ir = row.id;
  return a.tape->push(std::move(y), {a, row}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& Av = t.value(ia);
    const Matrix& Rv = t.value(ir);
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad_mut(ia);
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) ga(r, c) += g(r, c) * Rv.data[static_cast<std::size_t>(c)];
    }
    if (t.requires_grad(ir)) {
      Matrix& gr = t.grad_mut(ir);
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) gr.data[static_cast<std::size_t>(c)] += g(r, c) * Av(r, c);
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale_by(Var a, Var s) {
  const Matrix& S = s.value();
  if (S.size() != 1) throw std::invalid_argument("scale_by: scale must be 1x1, got " + S.shape());
  const double c = S.data[0];
  Matrix y = a.value();
  for (double& v : y.data) v *= c;
  const int ia = a.id, is = s.id;
  return a.tape->push(std::move(y), {a, s}, [ia, is](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const double cv = t.value(is).data[0];
    if (t.requires_grad(ia)) kernels::axpy(cv, g.data.data(), t.grad_mut(ia).data.data(), g.size());
    if (t.requires_grad(is)) {
      t.grad_mut(is).data[0] += kernels::dot(g.data.data(), t.value(ia).data.data(), g.size());
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  int off = 0;
  for (const Var& p : parts) {
    const Matrix& P = p.value();
    for (int r = 0; r < rows; ++r) std::copy(P.row(r), P.row(r) + P.cols, y.row(r) + off);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += P.cols;
  }
  Tape* tape = parts[0].tape;
  return tape->push(std::move(y), parts, [ids, offsets](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Matrix& gp = t.grad_mut(ids[k]);
      for (int r = 0; r < g.rows; ++r) kernels::axpy(1.0, g.row(r) + offsets[k], gp.row(r), static_cast<std::size_t>(gp.cols));
    }
  });
}

Var slice_cols(Var a, int start, int count) {
  const Matrix& A = a.value();
  if (start < 0 || count < 0 || start + count > A.cols) throw std::invalid_argument("slice_cols: out of range");
  Matrix y(A.rows, count);
  for (int r = 0; r < A.rows; ++r) std::copy(A.row(r) + start, A.row(r) + start + count, y.row(r));
  const int ia = a.id;
  return a.tape->push(std::move(y), {a}, [ia, start](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_mut(ia);
    for (int r = 0; r < g.rows; ++r) kernels::axpy(1.0, g.row(r), ga.row(r) + start, static_cast<std::size_t>(g.cols));
  });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var layer_norm(Var a, double eps) {
  const Matrix& X = a.value();
  const int n = X.rows, m = X.cols;
  Matrix y(n, m);
  std::vector<double> inv_std(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    const double* x = X.row(r);
    double mu = 0.0;
    for (int c = 0; c < m; ++c) mu += x[c];
    mu /= m;
    double var = 0.0;
    for (int c = 0; c < m; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= m;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    double* yr = y.row(r);
    for (int c = 0; c < m; ++c) yr[c] = (x[c] - mu) * is;
  }
  const int ia = a.id;
  return a.tape->push(std::move(y), {a}, [ia, inv_std = std::move(inv_std)](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& Y = t.value(self);
    Matrix& ga = t.grad_mut(ia);
    const int cols = g.cols;
    for (int r = 0; r < g.rows; ++r) {
      const double* gr = g.row(r);
      const double* yr = Y.row(r);
      double gmean = 0.0, gy = 0.0;
      for (int c = 0; c < cols; ++c) {
        gmean += gr[c];
        gy += gr[c] * yr[c];
      }
      gmean /= cols;
      gy /= cols;
      const double is = inv_std[static_cast<std::size_t>(r)];
      double* out = ga.row(r);
      for (int c = 0; c < cols; ++c) out[c] += is * (gr[c] - gmean - yr[c] * gy);
    }
  });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

namespace {

// Elementwise pick of a or b; ties pick a.
Var pick(Var a, Var b, bool take_min) {
  require_same(a, b, take_min ? "minimum" : "maximum");
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  Matrix y(A.rows, A.cols);
  std::vector<char> from_a(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) {
    const bool ta = take_min ? A.data[i] <= B.data[i] : A.data[i] >= B.data[i];
    from_a[i] = ta ? 1 : 0;
    y.data[i] = ta ? A.data[i] : B.data[i];
  }
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(y), {a, b}, [ia, ib, from_a = std::move(from_a)](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    const bool ra = t.requires_grad(ia), rb = t.requires_grad(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (from_a[i] && ra) t.grad_mut(ia).data[i] += g.data[i];
      if (!from_a[i] && rb) t.grad_mut(ib).data[i] += g.data[i];
    }
  });
}

}  // namespace

Var minimum(Var a, Var b) { return pick(a, b, true); }
Var maximum(Var a, Var b) { return pick(a, b, false); }

Var sum(Var a) {
  const Matrix& A = a.value();
  double s = 0.0;
  for (double v : A.data) s += v;
  const int ia = a.id;
  return a.tape->push(Matrix::scalar(s), {a}, [ia](Tape& t, int self) {
    const double g = t.grad_of(self).data[0];
    for (double& v : t.grad_mut(ia).data) v += g;
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var gather_rows(Var a, std::span<const int> index) {
  const Matrix& A = a.value();
  Matrix y(static_cast<int>(index.size()), A.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const int r = index[i];
    if (r < 0 || r >= A.rows) throw std::out_of_range("gather_rows: index out of range");
    std::copy(A.row(r), A.row(r) + A.cols, y.row(static_cast<int>(i)));
  }
  const int ia = a.id;
  std::vector<int> idx(index.begin(), index.end());
  return a.tape->push(std::move(y), {a}, [ia, idx = std::move(idx)](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      kernels::axpy(1.0, g.row(static_cast<int>(i)), ga.row(idx[i]), static_cast<std::size_t>(g.cols));
    }
  });
}

namespace {

void check_segments(const Matrix& A, std::span<const int> segment, int num_segments) {
  if (static_cast<int>(segment.size()) != A.rows) throw std::invalid_argument("segment ids must match row count");
  for (int s : segment) {
    if (s < 0 || s >= num_segments) throw std::out_of_range("segment id out of range");
  }
}

Var segment_linear(Var a, std::span<const int> segment, int num_segments, bool average) {
  const Matrix& A = a.value();
  check_segments(A, segment, num_segments);
  Matrix y(num_segments, A.cols);
  std::vector<double> weight(static_cast<std::size_t>(num_segments), 0.0);
  for (int s : segment) weight[static_cast<std::size_t>(s)] += 1.0;
  for (double& w : weight) w = average ? (w > 0 ? 1.0 / w : 0.0) : 1.0;
  for (int r = 0; r < A.rows; ++r) {
    const int s = segment[static_cast<std::size_t>(r)];
    kernels::axpy(weight[static_cast<std::size_t>(s)], A.row(r), y.row(s), static_cast<std::size_t>(A.cols));
  }
  const int ia = a.id;
  std::vector<int> seg(segment.begin(), segment.end());
  return a.tape->push(std::move(y), {a}, [ia, seg = std::move(seg), weight = std::move(weight)](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t r = 0; r < seg.size(); ++r) {
      const int s = seg[r];
      kernels::axpy(weight[static_cast<std::size_t>(s)], g.row(s), ga.row(static_cast<int>(r)), static_cast<std::size_t>(g.cols));
    }
  });
}

Var segment_extreme(Var a, std::span<const int> segment, int num_segments, bool take_min) {
  const Matrix& A = a.value();
  check_segments(A, segment, num_segments);
  const int m = A.cols;
  Matrix y(num_segments, m);
  // Row index that produced each output entry, -1 for empty groups.
  std::vector<int> arg(static_cast<std::size_t>(num_segments) * static_cast<std::size_t>(m), -1);
  for (int r = 0; r < A.rows; ++r) {
    const int s = segment[static_cast<std::size_t>(r)];
    const double* x = A.row(r);
    double* yr = y.row(s);
    int* ar = arg.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(m);
    for (int c = 0; c < m; ++c) {
      const bool better = ar[c] < 0 || (take_min ? x[c] < yr[c] : x[c] > yr[c]);
      if (better) {
        yr[c] = x[c];
        ar[c] = r;
      }
    }
  }
  const int ia = a.id;
  return a.tape->push(std::move(y), {a}, [ia, m, arg = std::move(arg)](Tape& t, int self) {
    const Matrix& g = t.grad_of(self);
    Matrix& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] < 0) continue;
      const int c = static_cast<int>(i % static_cast<std::size_t>(m));
      ga(arg[i], c) += g.data[i];
    }
  });
}

}  // namespace

Var segment_sum(Var a, std::span<const int> segment, int num_segments) {
  return segment_linear(a, segment, num_segments, false);
}
Var segment_mean(Var a, std::span<const int> segment, int num_segments) {
  return segment_linear(a, segment, num_segments, true);
}
Var segment_min(Var a, std::span<const int> segment, int num_segments) {
  return segment_extreme(a, segment, num_segments, true);
}
Var segment_max(Var a, std::span<const int> segment, int num_segments) {
  return segment_extreme(a, segment, num_segments, false);
}

}  // namespace telroute::nn
