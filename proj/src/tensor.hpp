#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// Gradients are recorded on an explicit tape (Wengert list): every primitive
// executed while a Tape is active and touching a requires_grad tensor pushes
// one backward step. backward(loss) replays the list in reverse, visiting
// each recorded step exactly once. Without an active tape the same primitives
// run as plain forward math.
//
// All reductions use a fixed sequential order (ascending index), so identical
// inputs produce bitwise-identical outputs within one build. Each output row
// of every primitive depends only on the corresponding input row(s), which is
// what makes inline multi-query processing bitwise-equal to per-query passes.

namespace tail {

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename S>
struct TensorData {
  Shape shape;
  std::vector<S> values;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), S(0));
  }
};

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto d = std::make_shared<TensorData<S>>();
    d->values.assign(shape_numel(shape), S(0));
    d->shape = std::move(shape);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
  }

  static Tensor full(Shape shape, S value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (S& v : t.values()) v = value;
    return t;
  }

  static Tensor from(Shape shape, std::vector<S> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      fail(ErrorCode::shape_mismatch, "tensor init: " + shape_str(shape) + " vs " +
                                          std::to_string(values.size()) + " values");
    auto d = std::make_shared<TensorData<S>>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
  }

  static Tensor scalar(S value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  size_t size() const { return d_->values.size(); }
  bool requires_grad() const { return d_ && d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  S* data() { return d_->values.data(); }
  const S* data() const { return d_->values.data(); }
  std::vector<S>& values() { return d_->values; }
  const std::vector<S>& values() const { return d_->values; }

  S& at(int i) { return d_->values[static_cast<size_t>(i)]; }
  S at(int i) const { return d_->values[static_cast<size_t>(i)]; }
  S& at(int i, int j) { return d_->values[static_cast<size_t>(i) * dim(1) + j]; }
  S at(int i, int j) const { return d_->values[static_cast<size_t>(i) * dim(1) + j]; }

  bool has_grad() const { return d_ && !d_->grad.empty(); }
  std::vector<S>& grad() {
    d_->ensure_grad();
    return d_->grad;
  }
  const std::vector<S>& grad_view() const { return d_->grad; }
  void zero_grad() {
    if (d_) d_->grad.clear();
  }

  std::shared_ptr<TensorData<S>> node() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData<S>> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData<S>> d_;
};

// Ordered list of recorded primitives; confined to one thread. The most
// recently constructed Tape on this thread is the active one.
class Tape {
 public:
  Tape() : prev_(current_ptr()) { current_ptr() = this; }
  ~Tape() { current_ptr() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_ptr(); }

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
  size_t size() const { return steps_.size(); }

  // Replays every recorded step exactly once, newest first.
  void run_backward() {
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

 private:
  static Tape*& current_ptr() {
    thread_local Tape* current = nullptr;
    return current;
  }

  std::vector<std::function<void()>> steps_;
  Tape* prev_;
};

template <typename S>
bool grad_needed(const Tensor<S>& a) {
  return Tape::current() != nullptr && a.requires_grad();
}

template <typename S>
bool grad_needed(const Tensor<S>& a, const Tensor<S>& b) {
  return Tape::current() != nullptr && (a.requires_grad() || b.requires_grad());
}

// Populates grad on every requires_grad ancestor of `loss`; contributions
// accumulate additively across uses and across backward calls.
template <typename S>
void backward(const Tensor<S>& loss) {
  Tape* tape = Tape::current();
  if (!tape) throw std::logic_error("backward: no active tape");
  if (loss.size() != 1) fail(ErrorCode::not_scalar, "backward: loss has " + std::to_string(loss.size()) + " elements");
  loss.node()->ensure_grad();
  loss.node()->grad[0] += S(1);
  tape->run_backward();
}

namespace detail {

// out[i, :] += a[i, :] @ b. Per-element accumulation runs over k in
// ascending order regardless of the number of rows in a.
template <typename S>
void matmul_acc(const S* a, const S* b, S* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * k;
    S* orow = out + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[i, p] += sum_j a[i, j] * b[p, j]   (a @ b^T)
template <typename S>
void matmul_nt_acc(const S* a, const S* b, S* out, int m, int n, int p_rows) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * n;
    S* orow = out + static_cast<size_t>(i) * p_rows;
    for (int p = 0; p < p_rows; ++p) {
      const S* brow = b + static_cast<size_t>(p) * n;
      S acc = S(0);
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      orow[p] += acc;
    }
  }
}

// out[p, j] += sum_i a[i, p] * b[i, j]   (a^T @ b)
template <typename S>
void matmul_tn_acc(const S* a, const S* b, S* out, int m, int p_cols, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * p_cols;
    const S* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < p_cols; ++p) {
      const S av = arow[p];
      S* orow = out + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

template <typename S>
void check_2d(const Tensor<S>& t, const char* op) {
  if (!t.defined() || t.ndim() != 2) fail(ErrorCode::shape_mismatch, std::string(op) + ": expected a 2-D tensor");
}

}  // namespace detail

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_2d(a, "matmul");
  detail::check_2d(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    fail(ErrorCode::shape_mismatch, "matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros({m, n}, grad_needed(a, b));
  detail::matmul_acc(a.data(), b.data(), out.data(), m, k, n);
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::current()->record([an, bn, on, m, k, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        detail::matmul_nt_acc(on->grad.data(), bn->values.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        detail::matmul_tn_acc(an->values.data(), on->grad.data(), bn->grad.data(), m, k, n);
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  detail::check_2d(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({n, m}, grad_needed(a));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (out.requires_grad()) {
    auto an = a.node(), on = out.node();
    Tape::current()->record([an, on, m, n] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          an->grad[static_cast<size_t>(i) * n + j] += on->grad[static_cast<size_t>(j) * m + i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    fail(ErrorCode::shape_mismatch, "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape(), grad_needed(a, b));
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::current()->record([an, bn, on, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    fail(ErrorCode::shape_mismatch, "mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape(), grad_needed(a, b));
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::current()->record([an, bn, on, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->values[i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  Tensor<S> out = Tensor<S>::zeros(a.shape(), grad_needed(a));
  const size_t n = out.size();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * factor;
  if (out.requires_grad()) {
    auto an = a.node(), on = out.node();
    Tape::current()->record([an, on, n, factor] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * factor;
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, scale(b, S(-1)));
}

// out[i, j] = mat[i, j] + row[j]
template <typename S>
Tensor<S> add_row(const Tensor<S>& mat, const Tensor<S>& row) {
  detail::check_2d(mat, "add_row");
  const int m = mat.dim(0), n = mat.dim(1);
  if (static_cast<int>(row.size()) != n)
    fail(ErrorCode::shape_mismatch, "add_row: row length " + std::to_string(row.size()) + " vs width " + std::to_string(n));
  Tensor<S> out = Tensor<S>::zeros({m, n}, grad_needed(mat, row));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = mat.at(i, j) + row.data()[j];
  if (out.requires_grad()) {
    auto mn = mat.node(), rn = row.node(), on = out.node();
    Tape::current()->record([mn, rn, on, m, n] {
      if (on->grad.empty()) return;
      if (mn->requires_grad) {
        mn->ensure_grad();
        for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) mn->grad[i] += on->grad[i];
      }
      if (rn->requires_grad) {
        rn->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) rn->grad[j] += on->grad[static_cast<size_t>(i) * n + j];
      }
    });
  }
  return out;
}

// count copies of a length-n row vector stacked into a count x n matrix.
template <typename S>
Tensor<S> repeat_row(const Tensor<S>& row, int count) {
  const int n = static_cast<int>(row.size());
  Tensor<S> out = Tensor<S>::zeros({count, n}, grad_needed(row));
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = row.data()[j];
  if (out.requires_grad()) {
    auto rn = row.node(), on = out.node();
    Tape::current()->record([rn, on, count, n] {
      if (on->grad.empty()) return;
      rn->ensure_grad();
      for (int i = 0; i < count; ++i)
        for (int j = 0; j < n; ++j) rn->grad[j] += on->grad[static_cast<size_t>(i) * n + j];
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_2d(a, "concat_rows");
  detail::check_2d(b, "concat_rows");
  if (a.dim(1) != b.dim(1))
    fail(ErrorCode::shape_mismatch, "concat_rows: widths differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int ma = a.dim(0), mb = b.dim(0), n = a.dim(1);
  Tensor<S> out = Tensor<S>::zeros({ma + mb, n}, grad_needed(a, b));
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::current()->record([an, bn, on, ma, mb, n] {
      if (on->grad.empty()) return;
      const size_t asz = static_cast<size_t>(ma) * n;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < asz; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < static_cast<size_t>(mb) * n; ++i) bn->grad[i] += on->grad[asz + i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_2d(a, "concat_cols");
  detail::check_2d(b, "concat_cols");
  if (a.dim(0) != b.dim(0))
    fail(ErrorCode::shape_mismatch, "concat_cols: heights differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.dim(0), na = a.dim(1), nb = b.dim(1);
  Tensor<S> out = Tensor<S>::zeros({m, na + nb}, grad_needed(a, b));
  for (int i = 0; i < m; ++i) {
    std::copy(a.data() + static_cast<size_t>(i) * na, a.data() + static_cast<size_t>(i + 1) * na,
              out.data() + static_cast<size_t>(i) * (na + nb));
    std::copy(b.data() + static_cast<size_t>(i) * nb, b.data() + static_cast<size_t>(i + 1) * nb,
              out.data() + static_cast<size_t>(i) * (na + nb) + na);
  }
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    Tape::current()->record([an, bn, on, m, na, nb] {
      if (on->grad.empty()) return;
      const int w = na + nb;
      if (an->requires_grad) {
        an->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < na; ++j)
            an->grad[static_cast<size_t>(i) * na + j] += on->grad[static_cast<size_t>(i) * w + j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < nb; ++j)
            bn->grad[static_cast<size_t>(i) * nb + j] += on->grad[static_cast<size_t>(i) * w + na + j];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, int first, int count) {
  detail::check_2d(a, "slice_rows");
  const int m = a.dim(0), n = a.dim(1);
  if (first < 0 || count < 0 || first + count > m)
    fail(ErrorCode::shape_mismatch, "slice_rows: range [" + std::to_string(first) + ", " +
                                        std::to_string(first + count) + ") out of " + std::to_string(m));
  Tensor<S> out = Tensor<S>::zeros({count, n}, grad_needed(a));
  std::copy(a.data() + static_cast<size_t>(first) * n, a.data() + static_cast<size_t>(first + count) * n, out.data());
  if (out.requires_grad()) {
    auto an = a.node(), on = out.node();
    Tape::current()->record([an, on, first, count, n] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < static_cast<size_t>(count) * n; ++i)
        an->grad[static_cast<size_t>(first) * n + i] += on->grad[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, int first, int count) {
  detail::check_2d(a, "slice_cols");
  const int m = a.dim(0), n = a.dim(1);
  if (first < 0 || count < 0 || first + count > n)
    fail(ErrorCode::shape_mismatch, "slice_cols: range out of width " + std::to_string(n));
  Tensor<S> out = Tensor<S>::zeros({m, count}, grad_needed(a));
  for (int i = 0; i < m; ++i)
    std::copy(a.data() + static_cast<size_t>(i) * n + first, a.data() + static_cast<size_t>(i) * n + first + count,
              out.data() + static_cast<size_t>(i) * count);
  if (out.requires_grad()) {
    auto an = a.node(), on = out.node();
    Tape::current()->record([an, on, m, n, first, count] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < count; ++j)
          an->grad[static_cast<size_t>(i) * n + first + j] += on->grad[static_cast<size_t>(i) * count + j];
    });
  }
  return out;
}

// out[i, :] = a[indices[i], :]; gradients scatter-add into the source rows.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& a, const std::vector<int>& indices) {
  detail::check_2d(a, "gather_rows");
  const int m = a.dim(0), n = a.dim(1);
  for (int idx : indices)
    if (idx < 0 || idx >= m) fail(ErrorCode::shape_mismatch, "gather_rows: index " + std::to_string(idx) + " out of " + std::to_string(m));
  const int k = static_cast<int>(indices.size());
  Tensor<S> out = Tensor<S>::zeros({k, n}, grad_needed(a));
  for (int i = 0; i < k; ++i)
    std::copy(a.data() + static_cast<size_t>(indices[i]) * n, a.data() + static_cast<size_t>(indices[i] + 1) * n,
              out.data() + static_cast<size_t>(i) * n);
  if (out.requires_grad()) {
    auto an = a.node(), on = out.node();
    Tape::current()->record([an, on, indices, n] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < n; ++j)
          an->grad[static_cast<size_t>(indices[i]) * n + j] += on->grad[i * n + j];
    });
  }
  return out;
}

// Exact-erf Gaussian error linear unit.
template <typename S>
Tensor<S> gelu(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape(), grad_needed(a));
  const size_t n = out.size();
  const S inv_sqrt2 = S(1) / std::sqrt(S(2));
  for (size_t i = 0; i < n; ++i) {
    const S x = a.data()[i];
    out.data()[i] = S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2));
  }
  if (out.requires_grad()) {
    auto an = a.node(), on = out.node();
    Tape::current()->record([an, on, n, inv_sqrt2] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      const S inv_sqrt2pi = S(1) / std::sqrt(S(2) * static_cast<S>(std::numbers::pi));
      for (size_t i = 0; i < n; ++i) {
        const S x = an->values[i];
        const S d = S(0.5) * (S(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(S(-0.5) * x * x);
        an->grad[i] += on->grad[i] * d;
      }
    });
  }
  return out;
}

// Row-wise normalization over the last axis, then affine: gain * xhat + bias.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps) {
  if (x.ndim() < 1) fail(ErrorCode::shape_mismatch, "layer_norm: rank-0 input");
  const int d = x.dim(x.ndim() - 1);
  if (static_cast<int>(gain.size()) != d || static_cast<int>(bias.size()) != d)
    fail(ErrorCode::shape_mismatch, "layer_norm: gain/bias length vs row width " + std::to_string(d));
  const size_t rows = x.size() / static_cast<size_t>(d);
  const bool rg = Tape::current() && (x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  Tensor<S> out = Tensor<S>::zeros(x.shape(), rg);
  std::vector<S> inv_std(rows), means(rows);
  for (size_t r = 0; r < rows; ++r) {
    const S* row = x.data() + r * d;
    S mean = S(0);
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + eps);
    means[r] = mean;
    inv_std[r] = inv;
    S* orow = out.data() + r * d;
    for (int j = 0; j < d; ++j) orow[j] = (row[j] - mean) * inv * gain.data()[j] + bias.data()[j];
  }
  if (rg) {
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    Tape::current()->record([xn, gn, bn, on, rows, d, means, inv_std] {
      if (on->grad.empty()) return;
      for (size_t r = 0; r < rows; ++r) {
        const S* row = xn->values.data() + r * d;
        const S* og = on->grad.data() + r * d;
        const S mean = means[r], inv = inv_std[r];
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (int j = 0; j < d; ++j) gn->grad[j] += og[j] * (row[j] - mean) * inv;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int j = 0; j < d; ++j) bn->grad[j] += og[j];
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          // dL/dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
          S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
          for (int j = 0; j < d; ++j) {
            const S xhat = (row[j] - mean) * inv;
            const S dxhat = og[j] * gn->values[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          const S inv_d = S(1) / static_cast<S>(d);
          for (int j = 0; j < d; ++j) {
            const S xhat = (row[j] - mean) * inv;
            const S dxhat = og[j] * gn->values[j];
            xn->grad[r * d + j] += inv * (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
          }
        }
      }
    });
  }
  return out;
}

// Softmax along the last axis, stabilized by max subtraction.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
  if (x.ndim() < 1 || x.dim(x.ndim() - 1) < 1) fail(ErrorCode::shape_mismatch, "softmax: empty axis");
  const int d = x.dim(x.ndim() - 1);
  const size_t rows = x.size() / static_cast<size_t>(d);
  Tensor<S> out = Tensor<S>::zeros(x.shape(), grad_needed(x));
  for (size_t r = 0; r < rows; ++r) {
    const S* row = x.data() + r * d;
    S* orow = out.data() + r * d;
    S mx = row[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (int j = 0; j < d; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const S inv = S(1) / sum;
    for (int j = 0; j < d; ++j) orow[j] *= inv;
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    Tape::current()->record([xn, on, rows, d] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (size_t r = 0; r < rows; ++r) {
        const S* p = on->values.data() + r * d;
        const S* og = on->grad.data() + r * d;
        S dot = S(0);
        for (int j = 0; j < d; ++j) dot += og[j] * p[j];
        for (int j = 0; j < d; ++j) xn->grad[r * d + j] += p[j] * (og[j] - dot);
      }
    });
  }
  return out;
}

// Row-wise softmax restricted to positions where mask != 0; masked positions
// produce exactly 0 and receive exactly zero gradient. Active positions are
// visited in ascending index order, so a row's result depends only on the
// values at its active positions.
template <typename S>
Tensor<S> masked_softmax_rows(const Tensor<S>& x, const std::vector<uint8_t>& mask) {
  detail::check_2d(x, "masked_softmax_rows");
  const int m = x.dim(0), d = x.dim(1);
  if (mask.size() != x.size()) fail(ErrorCode::shape_mismatch, "masked_softmax_rows: mask size mismatch");
  Tensor<S> out = Tensor<S>::zeros({m, d}, grad_needed(x));
  for (int r = 0; r < m; ++r) {
    const S* row = x.data() + static_cast<size_t>(r) * d;
    const uint8_t* mrow = mask.data() + static_cast<size_t>(r) * d;
    S* orow = out.data() + static_cast<size_t>(r) * d;
    S mx = S(0);
    bool any = false;
    for (int j = 0; j < d; ++j)
      if (mrow[j]) {
        mx = any ? std::max(mx, row[j]) : row[j];
        any = true;
      }
    if (!any) throw std::logic_error("masked_softmax_rows: row with no active positions");
    S sum = S(0);
    for (int j = 0; j < d; ++j)
      if (mrow[j]) {
        orow[j] = std::exp(row[j] - mx);
        sum += orow[j];
      }
    const S inv = S(1) / sum;
    for (int j = 0; j < d; ++j)
      if (mrow[j]) orow[j] *= inv;
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    Tape::current()->record([xn, on, m, d, mask] {
      if (on->grad.empty()) return;
      xn->ensure_grad();
      for (int r = 0; r < m; ++r) {
        const S* p = on->values.data() + static_cast<size_t>(r) * d;
        const S* og = on->grad.data() + static_cast<size_t>(r) * d;
        const uint8_t* mrow = mask.data() + static_cast<size_t>(r) * d;
        S dot = S(0);
        for (int j = 0; j < d; ++j)
          if (mrow[j]) dot += og[j] * p[j];
        for (int j = 0; j < d; ++j)
          if (mrow[j]) xn->grad[static_cast<size_t>(r) * d + j] += p[j] * (og[j] - dot);
      }
    });
  }
  return out;
}

// Negative log-softmax of scores[target] where the softmax runs only over
// positions with active_mask != 0; inactive scores act as -inf and their
// gradient is exactly zero.
template <typename S>
Tensor<S> masked_cross_entropy(const Tensor<S>& scores, int target, const std::vector<uint8_t>& active_mask) {
  const int m = static_cast<int>(scores.size());
  if (static_cast<int>(active_mask.size()) != m)
    fail(ErrorCode::shape_mismatch, "masked_cross_entropy: mask length vs scores length");
  if (target < 0 || target >= m || !active_mask[static_cast<size_t>(target)])
    fail(ErrorCode::inactive_target, "masked_cross_entropy: target " + std::to_string(target) + " is not active");
  const S* s = scores.data();
  S mx = S(0);
  bool any = false;
  for (int j = 0; j < m; ++j)
    if (active_mask[j]) {
      mx = any ? std::max(mx, s[j]) : s[j];
      any = true;
    }
  S sum = S(0);
  for (int j = 0; j < m; ++j)
    if (active_mask[j]) sum += std::exp(s[j] - mx);
  const S loss = std::log(sum) - (s[target] - mx);
  Tensor<S> out = Tensor<S>::from({1}, {loss}, grad_needed(scores));
  if (out.requires_grad()) {
    auto sn = scores.node(), on = out.node();
    Tape::current()->record([sn, on, m, target, active_mask, mx, sum] {
      if (on->grad.empty()) return;
      sn->ensure_grad();
      const S g = on->grad[0];
      for (int j = 0; j < m; ++j)
        if (active_mask[j]) {
          const S p = std::exp(sn->values[j] - mx) / sum;
          sn->grad[j] += g * (p - (j == target ? S(1) : S(0)));
        }
    });
  }
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  S total = S(0);
  const size_t n = a.size();
  for (size_t i = 0; i < n; ++i) total += a.data()[i];
  Tensor<S> out = Tensor<S>::from({1}, {total}, grad_needed(a));
  if (out.requires_grad()) {
    auto an = a.node(), on = out.node();
    Tape::current()->record([an, on, n] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (size_t i = 0; i < n; ++i) an->grad[i] += on->grad[0];
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.size()));
}

template <typename S>
bool all_finite(const Tensor<S>& a) {
  for (size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a.data()[i])) return false;
  return true;
}

// Gaussian init; draws are made in double precision so that a given seed
// produces the same parameter values (up to rounding) in both precisions.
template <typename S>
Tensor<S> randn(Shape shape, Rng& rng, double stddev, bool requires_grad = true) {
  Tensor<S> t = Tensor<S>::zeros(std::move(shape), requires_grad);
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(rng.normal() * stddev);
  return t;
}

}  // namespace tail
