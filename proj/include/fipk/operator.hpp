#pragma once

// Linear operator contract. Every forward map in the library (blur, CT,
// difference operators, projected Schur operators) implements it.
//
// apply() and apply_transpose() are const and keep no mutable state, so a
// single operator may be applied concurrently. Instrumentation lives in the
// Arith context passed to each call.

#include <cstddef>
#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fipk/linalg.hpp"
#include "fipk/lowprec.hpp"

namespace fipk {

class LinearOperator {
 public:
  LinearOperator(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}
  virtual ~LinearOperator() = default;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  virtual bool has_transpose() const { return false; }

  /// y = A x. Under a chopping context the result is rounded to the
  /// context's format (dense operators round every scalar operation).
  void apply(std::span<const double> x, std::span<double> y, const Arith& ctx = Arith::exact()) const {
    if (x.size() != cols_ || y.size() != rows_) throw std::invalid_argument("apply: dimension mismatch");
    ctx.count_apply();
    do_apply(x, y, ctx);
    if (ctx.chopping() && !rounds_natively()) ctx.round_inplace(y);
  }
  Vector apply(std::span<const double> x, const Arith& ctx = Arith::exact()) const {
    Vector y(rows_);
    apply(x, y, ctx);
    return y;
  }

  /// y = A^T x.
  void apply_transpose(std::span<const double> x, std::span<double> y, const Arith& ctx = Arith::exact()) const {
    if (!has_transpose()) throw std::logic_error("apply_transpose: operator has no transpose");
    if (x.size() != rows_ || y.size() != cols_) throw std::invalid_argument("apply_transpose: dimension mismatch");
    ctx.count_transpose_apply();
    do_apply_transpose(x, y, ctx);
    if (ctx.chopping() && !rounds_natively()) ctx.round_inplace(y);
  }
  Vector apply_transpose(std::span<const double> x, const Arith& ctx = Arith::exact()) const {
    Vector y(cols_);
    apply_transpose(x, y, ctx);
    return y;
  }

 protected:
  virtual void do_apply(std::span<const double> x, std::span<double> y, const Arith& ctx) const = 0;
  virtual void do_apply_transpose(std::span<const double>, std::span<double>, const Arith&) const {
    throw std::logic_error("apply_transpose: not implemented");
  }
  /// True if do_apply already rounds every scalar operation through ctx.
  virtual bool rounds_natively() const { return false; }

 private:
  std::size_t rows_, cols_;
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(DenseMatrix m) : LinearOperator(m.rows(), m.cols()), m_(std::move(m)) {}
  bool has_transpose() const override { return true; }
  const DenseMatrix& matrix() const { return m_; }

 protected:
  void do_apply(std::span<const double> x, std::span<double> y, const Arith& ctx) const override {
    if (!ctx.chopping()) {
      for (std::size_t i = 0; i < m_.rows(); ++i) y[i] = dot(m_.row(i), x);
      return;
    }
    for (std::size_t i = 0; i < m_.rows(); ++i) {
      const auto r = m_.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < r.size(); ++j)
        if (r[j] != 0.0 && x[j] != 0.0) acc = ctx.add(acc, ctx.mul(ctx.round(r[j]), x[j]));
      y[i] = acc;
    }
  }
  void do_apply_transpose(std::span<const double> x, std::span<double> y, const Arith& ctx) const override {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < m_.rows(); ++i) {
      const auto r = m_.row(i);
      if (x[i] == 0.0) continue;
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[j] == 0.0) continue;
        y[j] = ctx.chopping() ? ctx.add(y[j], ctx.mul(ctx.round(r[j]), x[i])) : y[j] + r[j] * x[i];
      }
    }
  }
  bool rounds_natively() const override { return true; }

 private:
  DenseMatrix m_;
};

/// Compressed sparse row operator.
class SparseOperator final : public LinearOperator {
 public:
  struct Entry {
    std::size_t col;
    double value;
  };

  SparseOperator(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                 std::vector<std::size_t> col_idx, std::vector<double> values)
      : LinearOperator(rows, cols),
        row_ptr_(std::move(row_ptr)),
        col_idx_(std::move(col_idx)),
        values_(std::move(values)) {
    if (row_ptr_.size() != rows + 1 || col_idx_.size() != values_.size() || row_ptr_.back() != values_.size())
      throw std::invalid_argument("SparseOperator: malformed CSR arrays");
  }

  bool has_transpose() const override { return true; }
  std::size_t nnz() const { return values_.size(); }
  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const std::size_t> col_idx() const { return col_idx_; }
  std::span<const double> values() const { return values_; }

 protected:
  void do_apply(std::span<const double> x, std::span<double> y, const Arith& ctx) const override {
    for (std::size_t i = 0; i < rows(); ++i) {
      double acc = 0.0;
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
        acc = ctx.chopping() ? ctx.add(acc, ctx.mul(ctx.round(values_[p]), x[col_idx_[p]]))
                             : acc + values_[p] * x[col_idx_[p]];
      y[i] = acc;
    }
  }
  void do_apply_transpose(std::span<const double> x, std::span<double> y, const Arith& ctx) const override {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        const std::size_t j = col_idx_[p];
        y[j] = ctx.chopping() ? ctx.add(y[j], ctx.mul(ctx.round(values_[p]), x[i])) : y[j] + values_[p] * x[i];
      }
  }
  bool rounds_natively() const override { return true; }

 private:
  std::vector<std::size_t> row_ptr_, col_idx_;
  std::vector<double> values_;
};

class IdentityOperator final : public LinearOperator {
 public:
  explicit IdentityOperator(std::size_t n) : LinearOperator(n, n) {}
  bool has_transpose() const override { return true; }

 protected:
  void do_apply(std::span<const double> x, std::span<double> y, const Arith&) const override {
    std::copy(x.begin(), x.end(), y.begin());
  }
  void do_apply_transpose(std::span<const double> x, std::span<double> y, const Arith&) const override {
    std::copy(x.begin(), x.end(), y.begin());
  }
};

/// Dense materialization by applying to unit vectors (fp64).
inline DenseMatrix to_dense(const LinearOperator& op) {
  DenseMatrix m(op.rows(), op.cols());
  Vector e(op.cols(), 0.0), col(op.rows());
  for (std::size_t j = 0; j < op.cols(); ++j) {
    e[j] = 1.0;
    op.apply(e, col);
    m.set_column(j, col);
    e[j] = 0.0;
  }
  return m;
}

/// Apply op to every column of m.
inline DenseMatrix apply_columns(const LinearOperator& op, const DenseMatrix& m) {
  DenseMatrix out(op.rows(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) out.set_column(j, op.apply(m.column(j)));
  return out;
}

/// Largest relative adjoint mismatch |<u, A v> - <A^T u, v>| / (|u||Av| + |A^T u||v|)
/// over random trials.
template <class Rng>
double adjoint_mismatch(const LinearOperator& op, Rng& rng, int trials = 20) {
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Vector u(op.rows()), v(op.cols());
    for (double& x : u) x = g(rng);
    for (double& x : v) x = g(rng);
    const Vector av = op.apply(v);
    const Vector atu = op.apply_transpose(u);
    const double lhs = dot(u, av), rhs = dot(atu, v);
    const double scale = norm2(u) * norm2(av) + norm2(atu) * norm2(v);
    if (scale > 0) worst = std::max(worst, std::fabs(lhs - rhs) / scale);
  }
  return worst;
}

}  // namespace fipk
