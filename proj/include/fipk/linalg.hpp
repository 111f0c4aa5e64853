#pragma once

// Dense vectors and matrices plus the small direct solvers used on projected
// problems: partial-pivoting LU, Householder least squares, one-sided Jacobi
// SVD and the SVD-based pseudoinverse.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fipk/lowprec.hpp"

namespace fipk {

using Vector = std::vector<double>;

/// Permutation stored as row indices: row i of the permuted matrix is row perm[i].
using PivotVector = std::vector<std::size_t>;

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw std::invalid_argument("DenseMatrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static DenseMatrix diagonal(std::span<const double> d) {
    DenseMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }
  /// Matrix whose columns are the given vectors (all of length rows).
  static DenseMatrix from_columns(const std::vector<Vector>& cols, std::size_t rows) {
    DenseMatrix m(rows, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j].size() != rows) throw std::invalid_argument("from_columns: length mismatch");
      for (std::size_t i = 0; i < rows; ++i) m(i, j) = cols[j][i];
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Vector column(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }
  void set_column(std::size_t j, std::span<const double> c) {
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = c[i];
  }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  /// Leading block of the given size.
  DenseMatrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    DenseMatrix b(nr, nc);
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = 0; j < nc; ++j) b(i, j) = (*this)(r0 + i, c0 + j);
    return b;
  }

  /// Row-wise concatenation [this; other].
  DenseMatrix stack(const DenseMatrix& other) const {
    if (other.cols_ != cols_ && !(empty() || other.empty()))
      throw std::invalid_argument("stack: column mismatch");
    if (empty()) return other;
    DenseMatrix s(rows_ + other.rows_, cols_);
    std::copy(data_.begin(), data_.end(), s.data_.begin());
    std::copy(other.data_.begin(), other.data_.end(), s.data_.begin() + static_cast<std::ptrdiff_t>(data_.size()));
    return s;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }
  double frobenius() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// fp64 helpers (diagnostics, oracles, generators)

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}
inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }
inline double norm_inf(std::span<const double> x) { return Arith::amax(x); }

inline Vector operator-(const Vector& a, const Vector& b) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}
inline Vector operator+(const Vector& a, const Vector& b) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}
inline Vector operator*(double s, const Vector& a) {
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
  return r;
}

inline Vector matvec(const DenseMatrix& m, std::span<const double> x) {
  Vector y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) y[i] = dot(m.row(i), x);
  return y;
}
inline Vector matvec_transpose(const DenseMatrix& m, std::span<const double> x) {
  Vector y(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

inline DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: dimension mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}
inline DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("sub: dimension mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) -= b(i, j);
  return c;
}
inline DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("add: dimension mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) += b(i, j);
  return c;
}
inline DenseMatrix operator*(double s, const DenseMatrix& a) {
  DenseMatrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

/// Rows of m permuted: result row i = m row perm[i].
inline DenseMatrix permute_rows(const DenseMatrix& m, const PivotVector& perm) {
  DenseMatrix p(perm.size(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) p(i, j) = m(perm[i], j);
  return p;
}

// ---------------------------------------------------------------------------
// LU with partial pivoting

struct LuResult {
  DenseMatrix lower;  // rows x cols, unit lower trapezoidal
  DenseMatrix upper;  // cols x cols, upper triangular
  PivotVector perm;   // permuted M = lower * upper
  std::size_t rank = 0;
  bool rank_deficient = false;
};

/// Partial-pivoting LU of a tall matrix (rows >= cols). A pivot whose
/// magnitude is below 1e-14 * max|M| marks the factorization rank deficient;
/// that column is left uneliminated and its upper-diagonal entry is zero.
inline LuResult lu_partial_pivot(const DenseMatrix& m, const Arith& ctx = Arith::exact()) {
  const std::size_t rows = m.rows(), cols = m.cols();
  if (rows < cols) throw std::invalid_argument("lu_partial_pivot: requires rows >= cols");
  DenseMatrix a = m;
  LuResult out;
  out.perm.resize(rows);
  std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
  const double tol = 1e-14 * m.max_abs();
  std::size_t rank = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    std::size_t piv = j;
    double best = std::fabs(a(j, j));
    for (std::size_t i = j + 1; i < rows; ++i)
      if (std::fabs(a(i, j)) > best) {
        best = std::fabs(a(i, j));
        piv = i;
      }
    if (piv != j) {
      std::swap_ranges(a.row(j).begin(), a.row(j).end(), a.row(piv).begin());
      std::swap(out.perm[j], out.perm[piv]);
    }
    if (best <= tol || best == 0.0) {
      out.rank_deficient = true;
      for (std::size_t i = j + 1; i < rows; ++i) a(i, j) = 0.0;
      a(j, j) = 0.0;
      continue;
    }
    ++rank;
    const double pv = a(j, j);
    for (std::size_t i = j + 1; i < rows; ++i) {
      const double l = ctx.div(a(i, j), pv);
      a(i, j) = l;
      if (l == 0.0) continue;
      for (std::size_t c = j + 1; c < cols; ++c) a(i, c) = ctx.fnms(a(i, c), l, a(j, c));
    }
  }
  out.rank = rank;
  out.lower = DenseMatrix(rows, cols);
  out.upper = DenseMatrix(cols, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (i > j) out.lower(i, j) = a(i, j);
      else if (i == j) out.lower(i, j) = 1.0;
      if (i < cols && j >= i) out.upper(i, j) = a(i, j);
    }
  return out;
}

// ---------------------------------------------------------------------------
// One-sided Jacobi SVD

struct SvdResult {
  DenseMatrix u;  // rows x p, p = min(rows, cols)
  Vector s;       // nonincreasing, nonnegative
  DenseMatrix v;  // cols x p
  bool converged = true;
};

/// Thin SVD M = U diag(s) V^T by Hestenes one-sided Jacobi rotations.
/// Sweeps are capped at 100 * dim; `converged` reports whether the
/// orthogonality test was met.
inline SvdResult svd_jacobi(const DenseMatrix& m) {
  const bool wide = m.rows() < m.cols();
  DenseMatrix a = wide ? m.transpose() : m;  // work on the tall orientation
  const std::size_t rows = a.rows(), cols = a.cols();
  const double eps = std::numeric_limits<double>::epsilon();
  const std::size_t max_sweeps = 100 * std::max<std::size_t>(1, std::max(rows, cols));
  bool converged = cols <= 1;

  // column-major copy for cache-friendly rotations
  std::vector<Vector> colv(cols, Vector(rows));
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) colv[j][i] = a(i, j);
  std::vector<Vector> vv(cols, Vector(cols, 0.0));
  for (std::size_t j = 0; j < cols; ++j) vv[j][j] = 1.0;

  for (std::size_t sweep = 0; sweep < max_sweeps && cols > 1; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p)
      for (std::size_t q = p + 1; q < cols; ++q) {
        const double alpha = dot(colv[p], colv[p]);
        const double beta = dot(colv[q], colv[q]);
        const double gamma = dot(colv[p], colv[q]);
        if (gamma == 0.0 || std::fabs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double xp = colv[p][i], xq = colv[q][i];
          colv[p][i] = c * xp - s * xq;
          colv[q][i] = s * xp + c * xq;
        }
        for (std::size_t i = 0; i < cols; ++i) {
          const double xp = vv[p][i], xq = vv[q][i];
          vv[p][i] = c * xp - s * xq;
          vv[q][i] = s * xp + c * xq;
        }
      }
    if (!rotated) {
      converged = true;
      break;
    }
  }

  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Vector sig(cols);
  for (std::size_t j = 0; j < cols; ++j) sig[j] = norm2(colv[j]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sig[x] > sig[y]; });

  SvdResult r;
  r.converged = converged;
  r.s.resize(cols);
  DenseMatrix u(rows, cols), vout(cols, cols);
  for (std::size_t k = 0; k < cols; ++k) {
    const std::size_t j = order[k];
    r.s[k] = sig[j];
    for (std::size_t i = 0; i < rows; ++i) u(i, k) = sig[j] > 0 ? colv[j][i] / sig[j] : 0.0;
    for (std::size_t i = 0; i < cols; ++i) vout(i, k) = vv[j][i];
  }
  if (wide) {
    r.u = std::move(vout);
    r.v = std::move(u);
  } else {
    r.u = std::move(u);
    r.v = std::move(vout);
  }
  return r;
}

/// Singular values in nonincreasing order.
inline Vector svd_small(const DenseMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return {};
  auto r = svd_jacobi(m);
  if (!r.converged) throw std::runtime_error("svd_small: Jacobi sweeps did not converge");
  return r.s;
}

/// Moore-Penrose pseudoinverse, singular values below
/// max(rows, cols) * eps * sigma_1 treated as zero.
inline DenseMatrix pinv_small(const DenseMatrix& m) {
  DenseMatrix out(m.cols(), m.rows());
  if (m.rows() == 0 || m.cols() == 0) return out;
  const auto r = svd_jacobi(m);
  if (!r.converged) throw std::runtime_error("pinv_small: Jacobi sweeps did not converge");
  const double tol = static_cast<double>(std::max(m.rows(), m.cols())) *
                     std::numeric_limits<double>::epsilon() * (r.s.empty() ? 0.0 : r.s[0]);
  for (std::size_t k = 0; k < r.s.size(); ++k) {
    if (r.s[k] <= tol) continue;
    const double inv = 1.0 / r.s[k];
    for (std::size_t i = 0; i < m.cols(); ++i) {
      const double vik = r.v(i, k) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < m.rows(); ++j) out(i, j) += vik * r.u(j, k);
    }
  }
  return out;
}

/// Numerical rank with the pinv_small tolerance.
inline std::size_t numerical_rank(const DenseMatrix& m) {
  const Vector s = svd_small(m);
  if (s.empty()) return 0;
  const double tol =
      static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon() * s[0];
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](double x) { return x > tol; }));
}

// ---------------------------------------------------------------------------
// Householder QR and least squares

/// Householder QR of a tall matrix, kept in compact form.
class HouseholderQr {
 public:
  explicit HouseholderQr(const DenseMatrix& m, const Arith& ctx = Arith::exact()) : a_(m), ctx_(ctx) {
    const std::size_t rows = a_.rows(), cols = a_.cols();
    if (rows < cols) throw std::invalid_argument("HouseholderQr: requires rows >= cols");
    tau_.assign(cols, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      double ss = 0.0;
      for (std::size_t i = j; i < rows; ++i) ss = ctx_.add(ss, ctx_.mul(a_(i, j), a_(i, j)));
      const double nrm = ctx_.sqrt(ss);
      if (nrm == 0.0) continue;
      const double alpha = a_(j, j) > 0 ? -nrm : nrm;
      const double v0 = ctx_.sub(a_(j, j), alpha);
      // v = [1, a(j+1:,j)/v0], tau = -v0/alpha
      for (std::size_t i = j + 1; i < rows; ++i) a_(i, j) = ctx_.div(a_(i, j), v0);
      tau_[j] = ctx_.div(-v0, alpha);
      a_(j, j) = alpha;
      for (std::size_t c = j + 1; c < cols; ++c) {
        double s = a_(j, c);
        for (std::size_t i = j + 1; i < rows; ++i) s = ctx_.add(s, ctx_.mul(a_(i, j), a_(i, c)));
        s = ctx_.mul(s, tau_[j]);
        a_(j, c) = ctx_.sub(a_(j, c), s);
        for (std::size_t i = j + 1; i < rows; ++i) a_(i, c) = ctx_.fnms(a_(i, c), s, a_(i, j));
      }
    }
  }

  std::size_t rows() const { return a_.rows(); }
  std::size_t cols() const { return a_.cols(); }
  double r(std::size_t i, std::size_t j) const { return j >= i ? a_(i, j) : 0.0; }

  /// Overwrite b with Q^T b.
  void apply_qt(std::span<double> b) const {
    for (std::size_t j = 0; j < cols(); ++j) {
      if (tau_[j] == 0.0) continue;
      double s = b[j];
      for (std::size_t i = j + 1; i < rows(); ++i) s = ctx_.add(s, ctx_.mul(a_(i, j), b[i]));
      s = ctx_.mul(s, tau_[j]);
      b[j] = ctx_.sub(b[j], s);
      for (std::size_t i = j + 1; i < rows(); ++i) b[i] = ctx_.fnms(b[i], s, a_(i, j));
    }
  }
  /// Overwrite b (length rows) with Q b.
  void apply_q(std::span<double> b) const {
    for (std::size_t jj = cols(); jj-- > 0;) {
      if (tau_[jj] == 0.0) continue;
      double s = b[jj];
      for (std::size_t i = jj + 1; i < rows(); ++i) s = ctx_.add(s, ctx_.mul(a_(i, jj), b[i]));
      s = ctx_.mul(s, tau_[jj]);
      b[jj] = ctx_.sub(b[jj], s);
      for (std::size_t i = jj + 1; i < rows(); ++i) b[i] = ctx_.fnms(b[i], s, a_(i, jj));
    }
  }

  /// True when some |R(j,j)| <= max(rows, cols) * eps * max|R(i,i)|.
  bool rank_deficient() const {
    double mx = 0.0;
    for (std::size_t j = 0; j < cols(); ++j) mx = std::max(mx, std::fabs(a_(j, j)));
    const double tol = static_cast<double>(std::max(rows(), cols())) * std::numeric_limits<double>::epsilon() * mx;
    for (std::size_t j = 0; j < cols(); ++j)
      if (std::fabs(a_(j, j)) <= tol) return true;
    return cols() > 0 && mx == 0.0;
  }

  /// Solve R x = c(0:cols).
  Vector back_substitute(std::span<const double> c) const {
    const std::size_t n = cols();
    Vector x(n, 0.0);
    for (std::size_t ii = n; ii-- > 0;) {
      double s = c[ii];
      for (std::size_t j = ii + 1; j < n; ++j) s = ctx_.fnms(s, a_(ii, j), x[j]);
      x[ii] = ctx_.div(s, a_(ii, ii));
    }
    return x;
  }
  /// Solve R^T x = c.
  Vector forward_substitute_transpose(std::span<const double> c) const {
    const std::size_t n = cols();
    Vector x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = c[i];
      for (std::size_t j = 0; j < i; ++j) s = ctx_.fnms(s, a_(j, i), x[j]);
      x[i] = ctx_.div(s, a_(i, i));
    }
    return x;
  }

 private:
  DenseMatrix a_;
  Vector tau_;
  Arith ctx_;
};

struct LeastSquaresResult {
  Vector x;
  bool rank_deficient = false;
};

/// argmin ||M y - rhs||_2 via Householder QR. On rank deficiency the
/// minimum-norm solution is returned from the SVD instead.
inline LeastSquaresResult qr_least_squares(const DenseMatrix& m, std::span<const double> rhs,
                                           const Arith& ctx = Arith::exact()) {
  if (m.rows() < m.cols()) throw std::invalid_argument("qr_least_squares: requires rows >= cols");
  if (rhs.size() != m.rows()) throw std::invalid_argument("qr_least_squares: rhs length mismatch");
  LeastSquaresResult out;
  if (m.cols() == 0) return out;
  HouseholderQr qr(m, ctx);
  if (qr.rank_deficient()) {
    out.rank_deficient = true;
    const DenseMatrix p = pinv_small(m);
    out.x = matvec(p, rhs);
    ctx.round_inplace(out.x);
    return out;
  }
  Vector c(rhs.begin(), rhs.end());
  qr.apply_qt(c);
  out.x = qr.back_substitute(c);
  return out;
}

/// Factorization for repeated minimum-norm solves with a full-row-rank
/// wide matrix B (d x n, d <= n): B^+ s = Q R^{-T} s with B^T = Q R.
/// Falls back to a dense pseudoinverse when B^T is rank deficient.
class MinNormSolver {
 public:
  explicit MinNormSolver(const DenseMatrix& b) : rows_(b.rows()), cols_(b.cols()) {
    if (rows_ > cols_) throw std::invalid_argument("MinNormSolver: requires rows <= cols");
    qr_.emplace_back(b.transpose());
    if (qr_.front().rank_deficient()) {
      qr_.clear();
      pinv_ = pinv_small(b);
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  /// x = B^+ s (length cols).
  Vector solve(std::span<const double> s) const {
    if (qr_.empty()) return matvec(pinv_, s);
    const auto& qr = qr_.front();
    Vector w = qr.forward_substitute_transpose(s);
    Vector x(cols_, 0.0);
    std::copy(w.begin(), w.end(), x.begin());
    qr.apply_q(x);
    return x;
  }
  /// (B^+)^T u (length rows) for u of length cols.
  Vector solve_transpose(std::span<const double> u) const {
    if (qr_.empty()) return matvec_transpose(pinv_, u);
    const auto& qr = qr_.front();
    Vector c(u.begin(), u.end());
    qr.apply_qt(c);
    return qr.back_substitute(std::span<const double>(c).first(rows_));
  }
  DenseMatrix dense() const {
    DenseMatrix p(cols_, rows_);
    Vector e(rows_, 0.0);
    for (std::size_t j = 0; j < rows_; ++j) {
      e.assign(rows_, 0.0);
      e[j] = 1.0;
      p.set_column(j, solve(e));
    }
    return p;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<HouseholderQr> qr_;
  DenseMatrix pinv_;
};

/// Orthonormal basis of the column space (rank-truncated, from the SVD).
inline DenseMatrix orthonormal_basis(const DenseMatrix& m) {
  if (m.cols() == 0 || m.rows() == 0) return DenseMatrix(m.rows(), 0);
  auto r = svd_jacobi(m);
  const double tol = static_cast<double>(std::max(m.rows(), m.cols())) *
                     std::numeric_limits<double>::epsilon() * (r.s.empty() ? 0.0 : r.s[0]);
  std::size_t rank = 0;
  while (rank < r.s.size() && r.s[rank] > tol) ++rank;
  return r.u.block(0, 0, m.rows(), rank);
}

/// Solve a small square system by LU with partial pivoting; throws on
/// exact singularity.
inline Vector solve_square(const DenseMatrix& m, std::span<const double> rhs) {
  if (m.rows() != m.cols()) throw std::invalid_argument("solve_square: matrix not square");
  const auto lu = lu_partial_pivot(m);
  if (lu.rank_deficient) throw std::runtime_error("solve_square: singular matrix");
  const std::size_t n = m.rows();
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[lu.perm[i]];
    for (std::size_t j = 0; j < i; ++j) s -= lu.lower(i, j) * y[j];
    y[i] = s;
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= lu.upper(ii, j) * x[j];
    x[ii] = s / lu.upper(ii, ii);
  }
  return x;
}

}  // namespace fipk
