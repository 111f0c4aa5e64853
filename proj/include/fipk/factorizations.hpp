#pragma once

// Pivoted flexible Hessenberg and generalized Hessenberg processes.
//
//   A Z_k = U_{k+1} H_{k+1,k}            (both processes)
//   A^T U_{k+1} = V_{k+1} T_{k+1}        (generalized process)
//
// Basis vectors are normalized by a pivot entry, so the pivoted rows of U
// and V form unit lower triangular matrices. Elimination coefficients are
// entry reads at pivot positions; no inner product is ever formed.
//
// A step receives P_k and materializes z_k = P_k v_k at its start, so P_k
// may depend on the iterate computed after the previous step.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipk/linalg.hpp"
#include "fipk/lowprec.hpp"
#include "fipk/operator.hpp"
#include "fipk/preconditioning.hpp"

namespace fipk {

enum class Breakdown {
  none,
  h_recurrence,  // candidate for u_{k+1} (or v_{k+1} in the square process) vanished
  t_recurrence,  // candidate for v_{k+1} in the generalized process vanished
  exhausted,     // basis dimension reached the space dimension
  overflow,      // non-finite pivot under reduced precision
};

inline std::string to_string(Breakdown b) {
  switch (b) {
    case Breakdown::none: return "none";
    case Breakdown::h_recurrence: return "breakdown_h";
    case Breakdown::t_recurrence: return "breakdown_t";
    case Breakdown::exhausted: return "exhausted";
    case Breakdown::overflow: return "overflow";
  }
  return "?";
}

struct FactorizationOptions {
  /// Candidates whose unvisited-entry max magnitude is at most this
  /// multiple of |A z_k|_inf are treated as zero.
  double breakdown_tol = 1e-14;
  /// Multiplies every coefficient read; -1 deliberately corrupts the
  /// recurrence (used by the self-test's mutation check).
  double coefficient_sign = 1.0;
};

namespace detail {

/// Entry of largest magnitude among positions perm[from..], first on ties.
/// Returns the index into perm.
inline std::size_t pivot_search(std::span<const double> v, const PivotVector& perm, std::size_t from) {
  std::size_t best = from;
  double bv = -1.0;
  for (std::size_t i = from; i < perm.size(); ++i) {
    const double a = std::fabs(v[perm[i]]);
    if (a > bv) {
      bv = a;
      best = i;
    }
  }
  return best;
}

/// Eliminates v against basis[0..k) using the coefficients v(perm[j]).
/// Coefficients are appended to coef.
inline void eliminate(std::vector<double>& v, const std::vector<Vector>& basis, const PivotVector& perm,
                      std::size_t k, double sign, const Arith& ctx, std::vector<double>& coef) {
  for (std::size_t j = 0; j < k; ++j) {
    const double h = v[perm[j]];
    coef.push_back(sign * h);  // sign != 1 only under mutation testing
    if (h != 0.0) ctx.axpy_neg(h, basis[j], v);
  }
}

/// Outcome of normalizing a candidate: pivot value (0 on breakdown).
struct PivotOutcome {
  double value = 0.0;
  Breakdown kind = Breakdown::none;
};

inline PivotOutcome normalize(std::vector<double>& v, PivotVector& perm, std::size_t k, double scale_ref,
                              double tol, Breakdown zero_kind, const Arith& ctx) {
  if (k >= perm.size()) return {0.0, Breakdown::exhausted};
  const std::size_t i = pivot_search(v, perm, k);
  const double pv = v[perm[i]];
  if (!std::isfinite(pv)) return {0.0, Breakdown::overflow};
  if (pv == 0.0 || std::fabs(pv) <= tol * scale_ref) return {0.0, zero_kind};
  std::swap(perm[k], perm[i]);
  ctx.scale_div(v, pv);
  return {pv, Breakdown::none};
}

}  // namespace detail

/// Flexible Hessenberg process (square effective system; the basis space
/// and the solution space may differ in dimension when P_k is rectangular).
class FlexHessenberg {
 public:
  /// Initializes from r_0 = b (x_0 = 0).
  FlexHessenberg(OperatorPtr A, std::span<const double> b, Arith ctx = Arith::exact(),
                 FactorizationOptions opt = {})
      : A_(std::move(A)), ctx_(ctx), opt_(opt) {
    if (b.size() != A_->rows()) throw std::invalid_argument("FlexHessenberg: rhs length mismatch");
    perm_.resize(A_->rows());
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    Vector r0(b.begin(), b.end());
    ctx_.round_inplace(r0);
    const std::size_t i = detail::pivot_search(r0, perm_, 0);
    beta_ = r0[perm_[i]];
    if (!std::isfinite(beta_)) {
      breakdown_ = Breakdown::overflow;
      return;
    }
    if (beta_ == 0.0) {
      breakdown_ = Breakdown::h_recurrence;
      return;
    }
    std::swap(perm_[0], perm_[i]);
    ctx_.scale_div(r0, beta_);
    basis_.push_back(std::move(r0));
  }

  /// Appends z_k = P v_k, A z_k and column k of H. Returns false if the
  /// process cannot continue (breakdown before or during this step).
  bool step(const FlexPreconditioner& P) {
    if (breakdown_ != Breakdown::none) return false;
    const std::size_t k = z_.size();  // zero-based index of the new column
    if (P.in_dim() != A_->rows() || P.out_dim() != A_->cols())
      throw std::invalid_argument("FlexHessenberg: preconditioner dimensions do not match the operator");
    z_.push_back(P.apply(basis_[k], ctx_));
    Vector v = A_->apply(z_.back(), ctx_);
    last_product_ = v;
    std::vector<double> col;
    detail::eliminate(v, basis_, perm_, k + 1, opt_.coefficient_sign, ctx_, col);
    const auto out = detail::normalize(v, perm_, k + 1, Arith::amax(last_product_), opt_.breakdown_tol,
                                       Breakdown::h_recurrence, ctx_);
    col.push_back(out.value);
    h_.push_back(std::move(col));
    if (out.kind != Breakdown::none) {
      breakdown_ = out.kind;
      return true;
    }
    basis_.push_back(std::move(v));
    return true;
  }

  std::size_t k() const { return z_.size(); }
  double beta() const { return beta_; }
  Breakdown breakdown() const { return breakdown_; }
  bool broken() const { return breakdown_ != Breakdown::none; }
  const PivotVector& pivots() const { return perm_; }
  const std::vector<Vector>& basis() const { return basis_; }
  const std::vector<Vector>& directions() const { return z_; }
  /// A z_k of the latest step, before elimination.
  const Vector& last_product() const { return last_product_; }
  const OperatorPtr& op() const { return A_; }
  const Arith& context() const { return ctx_; }

  DenseMatrix Z() const { return DenseMatrix::from_columns(z_, A_->cols()); }
  DenseMatrix V() const { return DenseMatrix::from_columns(basis_, A_->rows()); }
  DenseMatrix U() const { return V(); }
  /// basis-count x k upper Hessenberg matrix.
  DenseMatrix H() const {
    DenseMatrix h(basis_.size(), k());
    for (std::size_t j = 0; j < h_.size(); ++j)
      for (std::size_t i = 0; i < h_[j].size() && i < h.rows(); ++i) h(i, j) = h_[j][i];
    return h;
  }

 private:
  OperatorPtr A_;
  Arith ctx_;
  FactorizationOptions opt_;
  PivotVector perm_;
  double beta_ = 0.0;
  std::vector<Vector> basis_, z_;
  std::vector<std::vector<double>> h_;
  Vector last_product_;
  Breakdown breakdown_ = Breakdown::none;
};

/// Flexible generalized Hessenberg process for rectangular A with transpose.
class FlexGenHessenberg {
 public:
  FlexGenHessenberg(OperatorPtr A, std::span<const double> b, Arith ctx = Arith::exact(),
                    FactorizationOptions opt = {})
      : A_(std::move(A)), ctx_(ctx), opt_(opt) {
    if (!A_->has_transpose()) throw std::invalid_argument("FlexGenHessenberg: operator needs a transpose");
    if (b.size() != A_->rows()) throw std::invalid_argument("FlexGenHessenberg: rhs length mismatch");
    q_.resize(A_->rows());
    std::iota(q_.begin(), q_.end(), std::size_t{0});
    g_.resize(A_->cols());
    std::iota(g_.begin(), g_.end(), std::size_t{0});

    Vector r0(b.begin(), b.end());
    ctx_.round_inplace(r0);
    const std::size_t i = detail::pivot_search(r0, q_, 0);
    beta_ = r0[q_[i]];
    if (!std::isfinite(beta_)) {
      breakdown_ = Breakdown::overflow;
      return;
    }
    if (beta_ == 0.0) {
      breakdown_ = Breakdown::h_recurrence;
      return;
    }
    std::swap(q_[0], q_[i]);
    ctx_.scale_div(r0, beta_);
    u_.push_back(std::move(r0));

    Vector v = A_->apply_transpose(u_[0], ctx_);
    const double ref = Arith::amax(v);
    const auto out = detail::normalize(v, g_, 0, ref, opt_.breakdown_tol, Breakdown::t_recurrence, ctx_);
    t_.push_back({out.value});
    if (out.kind != Breakdown::none) {
      breakdown_ = out.kind;
      return;
    }
    v_.push_back(std::move(v));
  }

  bool step(const FlexPreconditioner& P) {
    if (breakdown_ != Breakdown::none) return false;
    const std::size_t k = z_.size();
    if (P.in_dim() != A_->cols() || P.out_dim() != A_->cols())
      throw std::invalid_argument("FlexGenHessenberg: preconditioner dimensions do not match the operator");
    z_.push_back(P.apply(v_[k], ctx_));

    Vector u = A_->apply(z_.back(), ctx_);
    last_product_ = u;
    std::vector<double> hcol;
    detail::eliminate(u, u_, q_, k + 1, opt_.coefficient_sign, ctx_, hcol);
    const auto ho = detail::normalize(u, q_, k + 1, Arith::amax(last_product_), opt_.breakdown_tol,
                                      Breakdown::h_recurrence, ctx_);
    hcol.push_back(ho.value);
    h_.push_back(std::move(hcol));
    if (ho.kind != Breakdown::none) {
      breakdown_ = ho.kind;
      return true;
    }
    u_.push_back(std::move(u));

    Vector v = A_->apply_transpose(u_.back(), ctx_);
    const double ref = Arith::amax(v);
    std::vector<double> tcol;
    detail::eliminate(v, v_, g_, k + 1, opt_.coefficient_sign, ctx_, tcol);
    const auto to = detail::normalize(v, g_, k + 1, ref, opt_.breakdown_tol, Breakdown::t_recurrence, ctx_);
    tcol.push_back(to.value);
    t_.push_back(std::move(tcol));
    if (to.kind != Breakdown::none) {
      breakdown_ = to.kind;
      return true;
    }
    v_.push_back(std::move(v));
    return true;
  }

  std::size_t k() const { return z_.size(); }
  double beta() const { return beta_; }
  Breakdown breakdown() const { return breakdown_; }
  bool broken() const { return breakdown_ != Breakdown::none; }
  const PivotVector& pivots_q() const { return q_; }
  const PivotVector& pivots_g() const { return g_; }
  const std::vector<Vector>& basis_u() const { return u_; }
  const std::vector<Vector>& basis_v() const { return v_; }
  const std::vector<Vector>& directions() const { return z_; }
  const Vector& last_product() const { return last_product_; }
  const OperatorPtr& op() const { return A_; }
  const Arith& context() const { return ctx_; }

  DenseMatrix Z() const { return DenseMatrix::from_columns(z_, A_->cols()); }
  DenseMatrix U() const { return DenseMatrix::from_columns(u_, A_->rows()); }
  DenseMatrix V() const { return DenseMatrix::from_columns(v_, A_->cols()); }
  /// |U| x k upper Hessenberg.
  DenseMatrix H() const {
    DenseMatrix h(u_.size(), k());
    for (std::size_t j = 0; j < h_.size(); ++j)
      for (std::size_t i = 0; i < h_[j].size() && i < h.rows(); ++i) h(i, j) = h_[j][i];
    return h;
  }
  /// |V| x |U| upper triangular; column j holds the coefficients of A^T u_j.
  DenseMatrix T() const {
    DenseMatrix t(v_.size(), u_.size());
    for (std::size_t j = 0; j < t_.size() && j < t.cols(); ++j)
      for (std::size_t i = 0; i < t_[j].size() && i < t.rows(); ++i) t(i, j) = t_[j][i];
    return t;
  }

 private:
  OperatorPtr A_;
  Arith ctx_;
  FactorizationOptions opt_;
  PivotVector q_, g_;
  double beta_ = 0.0;
  std::vector<Vector> u_, v_, z_;
  std::vector<std::vector<double>> h_, t_;
  Vector last_product_;
  Breakdown breakdown_ = Breakdown::none;
};

/// Dense snapshot of a factorization.
struct FlexFactorization {
  DenseMatrix Z, U, V, H, T;
  double beta = 0.0;
  PivotVector pivots_q, pivots_g;
  Breakdown breakdown = Breakdown::none;
  std::size_t k = 0;
};

inline FlexFactorization snapshot(const FlexHessenberg& f) {
  return {f.Z(), f.U(), f.V(), f.H(), DenseMatrix(), f.beta(), f.pivots(), f.pivots(), f.breakdown(), f.k()};
}
inline FlexFactorization snapshot(const FlexGenHessenberg& f) {
  return {f.Z(), f.U(), f.V(), f.H(), f.T(), f.beta(), f.pivots_q(), f.pivots_g(), f.breakdown(), f.k()};
}

enum class ProcessKind { hessenberg, generalized };

/// Runs min(k_max, breakdown) steps with P_k drawn from plan. Without a
/// solver in the loop the plan sees x_{k-1} = 0.
inline FlexFactorization run_factorization(OperatorPtr A, std::span<const double> b, std::size_t k_max,
                                           PreconditionerPlan& plan, ProcessKind kind,
                                           const Arith& ctx = Arith::exact(), FactorizationOptions opt = {}) {
  const Vector x0(A->cols(), 0.0);
  if (kind == ProcessKind::hessenberg) {
    FlexHessenberg f(A, b, ctx, opt);
    for (std::size_t k = 1; k <= k_max && !f.broken(); ++k) f.step(*plan.make(k, x0));
    return snapshot(f);
  }
  FlexGenHessenberg f(A, b, ctx, opt);
  for (std::size_t k = 1; k <= k_max && !f.broken(); ++k) f.step(*plan.make(k, x0));
  return snapshot(f);
}

/// Permuted rows perm[0..cols) of M form a unit lower triangular block;
/// returns the largest deviation from that structure.
inline double unit_lower_deviation(const DenseMatrix& M, const PivotVector& perm) {
  double dev = 0.0;
  for (std::size_t j = 0; j < M.cols(); ++j)
    for (std::size_t i = 0; i <= j && i < perm.size(); ++i) {
      const double target = (i == j) ? 1.0 : 0.0;
      dev = std::max(dev, std::fabs(M(perm[i], j) - target));
    }
  return dev;
}

}  // namespace fipk
