#pragma once

// Iteration-dependent right preconditioners built from a variational prior:
// smoothed l_p weights, regularization operators with a null-space basis,
// the A-weighted pseudoinverse and the square Schur-complement system used
// when L is not invertible.
//
// Projections with P and E need products with constant null-space vectors;
// those run in fp64 regardless of the solver's arithmetic context.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipk/linalg.hpp"
#include "fipk/operator.hpp"

namespace fipk {

// ---------------------------------------------------------------------------
// weights

struct WeightRule {
  double p = 1.0;
  double tau = 1e-4;

  void validate() const {
    if (!(tau > 0)) throw std::invalid_argument("WeightRule: tau must be positive");
    if (!(p > 0) || p > 2) throw std::invalid_argument("WeightRule: p must be in (0, 2]");
  }
};

/// Diagonal of W(z): (z_i^2 + tau^2)^((p-2)/4). Strictly positive for tau > 0.
inline Vector weights(const WeightRule& rule, std::span<const double> z) {
  rule.validate();
  const double e = (rule.p - 2.0) / 4.0;
  const double t2 = rule.tau * rule.tau;
  Vector w(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) w[i] = std::pow(z[i] * z[i] + t2, e);
  return w;
}

// ---------------------------------------------------------------------------
// regularization operators

/// (n-1) x n first differences: (D x)_i = x_i - x_{i+1}.
class DifferenceOperator final : public LinearOperator {
 public:
  explicit DifferenceOperator(std::size_t n) : LinearOperator(n - 1, n) {
    if (n < 2) throw std::invalid_argument("DifferenceOperator: n must be >= 2");
  }
  bool has_transpose() const override { return true; }

 protected:
  void do_apply(std::span<const double> x, std::span<double> y, const Arith& ctx) const override {
    for (std::size_t i = 0; i + 1 < x.size(); ++i) y[i] = ctx.sub(x[i], x[i + 1]);
  }
  void do_apply_transpose(std::span<const double> u, std::span<double> y, const Arith& ctx) const override {
    const std::size_t n = y.size();
    y[0] = u[0];
    for (std::size_t i = 1; i + 1 < n; ++i) y[i] = ctx.sub(u[i], u[i - 1]);
    y[n - 1] = -u[n - 2];
  }
  bool rounds_natively() const override { return true; }
};

struct RegOperator {
  enum class Kind { identity, d1, custom };

  Kind kind = Kind::identity;
  OperatorPtr L;       // d x n
  DenseMatrix dense;   // L materialized (desk scale)
  DenseMatrix K;       // n x r, columns span N(L); r may be 0

  std::size_t n() const { return L->cols(); }
  std::size_t d() const { return L->rows(); }
  bool has_nullspace() const { return K.cols() > 0; }

  static RegOperator identity(std::size_t n) {
    RegOperator r;
    r.kind = Kind::identity;
    r.L = std::make_shared<IdentityOperator>(n);
    r.dense = DenseMatrix::identity(n);
    r.K = DenseMatrix(n, 0);
    return r;
  }

  static RegOperator d1(std::size_t n) {
    RegOperator r;
    r.kind = Kind::d1;
    r.L = std::make_shared<DifferenceOperator>(n);
    r.dense = to_dense(*r.L);
    r.K = DenseMatrix(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));
    return r;
  }

  /// Arbitrary L with a caller-supplied null-space basis; rejects K whose
  /// columns are not annihilated by L.
  static RegOperator custom(DenseMatrix L, DenseMatrix K) {
    if (K.rows() != L.cols() && K.cols() > 0) throw std::invalid_argument("RegOperator: K has wrong row count");
    if (K.cols() == 0) K = DenseMatrix(L.cols(), 0);
    if (K.cols() > 0) {
      const double lk = (L * K).frobenius();
      if (lk > 1e-12 * L.frobenius() * K.frobenius())
        throw std::invalid_argument("RegOperator: K does not span a subspace of N(L)");
    }
    if (numerical_rank(L) + K.cols() != L.cols())
      throw std::invalid_argument("RegOperator: K does not span N(L)");
    RegOperator r;
    r.kind = Kind::custom;
    r.dense = L;
    r.L = std::make_shared<DenseOperator>(std::move(L));
    r.K = std::move(K);
    return r;
  }

  /// Rejects A for which N(A) and N(L) intersect nontrivially (AK must have
  /// full column rank).
  void check_compatible(const LinearOperator& A) const {
    if (A.cols() != n()) throw std::invalid_argument("RegOperator: dimension mismatch with A");
    if (!has_nullspace()) return;
    const DenseMatrix AK = apply_columns(A, K);
    // scale of A from a fixed probe vector; AK is judged against it, not
    // against its own largest singular value
    Vector probe(n());
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = std::cos(1.0 + static_cast<double>(i));
    const double a_scale = norm2(A.apply(probe)) / norm2(probe);
    const Vector s = svd_small(AK);
    const double tol = 1e-10 * a_scale;
    if (numerical_rank(AK) != K.cols() || s.empty() || s.back() <= tol)
      throw std::invalid_argument("RegOperator: N(A) and N(L) intersect (AK rank deficient)");
  }
};

inline RegOperator d1_operator(std::size_t n) { return RegOperator::d1(n); }

enum class PinvMode { exact, approx };

inline PinvMode parse_pinv_mode(const std::string& s) {
  if (s == "exact") return PinvMode::exact;
  if (s == "approx") return PinvMode::approx;
  throw std::invalid_argument("unknown pseudoinverse mode '" + s + "'");
}

/// Dense pseudoinverse application for a d x n matrix, via a QR of B^T
/// when d <= n and via the SVD otherwise.
class PseudoInverse {
 public:
  explicit PseudoInverse(const DenseMatrix& b) : rows_(b.rows()), cols_(b.cols()) {
    if (rows_ <= cols_) solver_.emplace(b);
    else pinv_ = pinv_small(b);
  }
  /// B^+ s, length cols.
  Vector apply(std::span<const double> s) const { return solver_ ? solver_->solve(s) : matvec(pinv_, s); }
  /// (B^+)^T u, length rows.
  Vector apply_transpose(std::span<const double> u) const {
    return solver_ ? solver_->solve_transpose(u) : matvec_transpose(pinv_, u);
  }
  DenseMatrix dense() const { return solver_ ? solver_->dense() : pinv_; }

 private:
  std::size_t rows_, cols_;
  std::optional<MinNormSolver> solver_;
  DenseMatrix pinv_;
};

/// E = I - K (AK)^+ A together with the least-squares null-space fit.
class NullSpaceProjector {
 public:
  NullSpaceProjector(OperatorPtr A, const RegOperator& reg) : A_(std::move(A)), K_(reg.K) {
    reg.check_compatible(*A_);
    if (K_.cols() > 0) {
      AK_ = apply_columns(*A_, K_);
      AK_pinv_ = pinv_small(AK_);
    }
  }

  bool trivial() const { return K_.cols() == 0; }
  const DenseMatrix& K() const { return K_; }
  const DenseMatrix& AK() const { return AK_; }

  /// E v.
  Vector apply(std::span<const double> v) const {
    Vector out(v.begin(), v.end());
    if (trivial()) return out;
    const Vector c = matvec(AK_pinv_, A_->apply(v));
    for (std::size_t j = 0; j < K_.cols(); ++j)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= K_(i, j) * c[j];
    return out;
  }

  /// Coefficients s_A = (AK)^+ r.
  Vector fit(std::span<const double> r) const { return trivial() ? Vector{} : matvec(AK_pinv_, r); }

  /// w + K (AK)^+ (b - A w): adds the null-space component that best fits
  /// the residual of w.
  Vector complete(std::span<const double> w, std::span<const double> b) const {
    Vector x(w.begin(), w.end());
    if (trivial()) return x;
    const Vector c = fit(Vector(b.begin(), b.end()) - A_->apply(w));
    for (std::size_t j = 0; j < K_.cols(); ++j)
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += K_(i, j) * c[j];
    return x;
  }

 private:
  OperatorPtr A_;
  DenseMatrix K_, AK_, AK_pinv_;
};

/// (W L)^+_A = E (W L)^+ (exact) or E L^+ W^{-1} (approx).
class AWeightedPinv {
 public:
  AWeightedPinv(std::shared_ptr<const NullSpaceProjector> E, const RegOperator& reg, std::span<const double> w,
                PinvMode mode, std::shared_ptr<const PseudoInverse> L_pinv = nullptr)
      : E_(std::move(E)), mode_(mode), w_(w.begin(), w.end()) {
    if (w_.size() != reg.d()) throw std::invalid_argument("AWeightedPinv: weight length mismatch");
    for (double v : w_)
      if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument("AWeightedPinv: weights must be positive");
    if (mode_ == PinvMode::exact) {
      DenseMatrix B = reg.dense;
      for (std::size_t i = 0; i < B.rows(); ++i)
        for (double& x : B.row(i)) x *= w_[i];
      pinv_ = std::make_shared<PseudoInverse>(B);
    } else {
      pinv_ = L_pinv ? std::move(L_pinv) : std::make_shared<PseudoInverse>(reg.dense);
    }
  }

  std::size_t in_dim() const { return w_.size(); }

  /// The pseudoinverse factor without E: (W L)^+ s or L^+ W^{-1} s.
  Vector unprojected(std::span<const double> s) const {
    if (mode_ == PinvMode::exact) return pinv_->apply(s);
    Vector t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = s[i] / w_[i];
    return pinv_->apply(t);
  }
  Vector apply(std::span<const double> s) const { return E_->apply(unprojected(s)); }

  const NullSpaceProjector& projector() const { return *E_; }

 private:
  std::shared_ptr<const NullSpaceProjector> E_;
  PinvMode mode_;
  Vector w_;
  std::shared_ptr<const PseudoInverse> pinv_;
};

/// One-shot E B^+ s for B = diag(w) L.
inline Vector a_weighted_pinv_apply(const RegOperator& reg, std::span<const double> w, OperatorPtr A,
                                    std::span<const double> s, PinvMode mode) {
  auto E = std::make_shared<NullSpaceProjector>(std::move(A), reg);
  return AWeightedPinv(E, reg, w, mode).apply(s);
}

/// x = (W L)^+_A s + K s_A with s_A the least-squares fit of b - A (W L)^+_A s
/// onto R(AK).
inline Vector recover_solution(const AWeightedPinv& pinv, std::span<const double> s, std::span<const double> b) {
  return pinv.projector().complete(pinv.apply(s), b);
}

// ---------------------------------------------------------------------------
// Schur-complement system for non-invertible L and square A

/// Holds P = I - AK (K^T A K)^{-1} K^T and the pieces of the projected
/// operator (L^+)^T P A.
class SchurSystem {
 public:
  SchurSystem(OperatorPtr A, RegOperator reg) : A_(std::move(A)), reg_(std::move(reg)) {
    if (A_->rows() != A_->cols()) throw std::invalid_argument("SchurSystem: A must be square");
    projector_ = std::make_shared<NullSpaceProjector>(A_, reg_);
    L_pinv_ = std::make_shared<PseudoInverse>(reg_.dense);
    if (reg_.has_nullspace()) {
      const DenseMatrix KtAK = reg_.K.transpose() * projector_->AK();
      const auto lu = lu_partial_pivot(KtAK);
      if (lu.rank_deficient) throw std::invalid_argument("SchurSystem: K^T A K is singular");
      KtAK_inv_ = DenseMatrix(KtAK.rows(), KtAK.cols());
      for (std::size_t j = 0; j < KtAK.cols(); ++j) {
        Vector e(KtAK.rows(), 0.0);
        e[j] = 1.0;
        KtAK_inv_.set_column(j, solve_square(KtAK, e));
      }
    }
  }

  const OperatorPtr& A() const { return A_; }
  const RegOperator& reg() const { return reg_; }
  std::shared_ptr<const NullSpaceProjector> projector() const { return projector_; }
  std::shared_ptr<const PseudoInverse> L_pinv() const { return L_pinv_; }

  /// P w.
  Vector project(std::span<const double> w) const {
    Vector out(w.begin(), w.end());
    if (!reg_.has_nullspace()) return out;
    const Vector c = matvec(KtAK_inv_, matvec_transpose(reg_.K, w));
    const DenseMatrix& AK = projector_->AK();
    for (std::size_t j = 0; j < AK.cols(); ++j)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= AK(i, j) * c[j];
    return out;
  }
  /// P^T w.
  Vector project_transpose(std::span<const double> w) const {
    Vector out(w.begin(), w.end());
    if (!reg_.has_nullspace()) return out;
    const Vector c = matvec(KtAK_inv_.transpose(), matvec_transpose(projector_->AK(), w));
    for (std::size_t j = 0; j < reg_.K.cols(); ++j)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] -= reg_.K(i, j) * c[j];
    return out;
  }

  /// (L^+)^T P b.
  Vector rhs(std::span<const double> b) const { return L_pinv_->apply_transpose(project(b)); }

 private:
  OperatorPtr A_;
  RegOperator reg_;
  std::shared_ptr<NullSpaceProjector> projector_;
  std::shared_ptr<PseudoInverse> L_pinv_;
  DenseMatrix KtAK_inv_;
};

/// d x n operator x -> (L^+)^T P A x. Products with P and L^+ run in fp64;
/// under a chopping context the output is rounded.
class SchurOperator final : public LinearOperator {
 public:
  explicit SchurOperator(std::shared_ptr<const SchurSystem> sys)
      : LinearOperator(sys->reg().d(), sys->reg().n()), sys_(std::move(sys)) {}
  bool has_transpose() const override { return true; }
  const SchurSystem& system() const { return *sys_; }

 protected:
  void do_apply(std::span<const double> x, std::span<double> y, const Arith& ctx) const override {
    // A carries the (possibly chopped) product; the projections do not.
    Vector ax(sys_->A()->rows());
    sys_->A()->apply(x, ax, ctx.with_counters(nullptr));
    const Vector r = sys_->L_pinv()->apply_transpose(sys_->project(ax));
    std::copy(r.begin(), r.end(), y.begin());
  }
  void do_apply_transpose(std::span<const double> u, std::span<double> y, const Arith& ctx) const override {
    const Vector t = sys_->project_transpose(sys_->L_pinv()->apply(u));
    sys_->A()->apply_transpose(t, y, ctx.with_counters(nullptr));
  }

 private:
  std::shared_ptr<const SchurSystem> sys_;
};

/// d x d operator s -> (L^+)^T P A (W L)^+_A s.
class SchurComposite final : public LinearOperator {
 public:
  SchurComposite(std::shared_ptr<const SchurSystem> sys, std::span<const double> w, PinvMode mode)
      : LinearOperator(sys->reg().d(), sys->reg().d()),
        sys_(sys),
        op_(std::make_shared<SchurOperator>(sys)),
        pinv_(sys->projector(), sys->reg(), w, mode, sys->L_pinv()) {}

 protected:
  void do_apply(std::span<const double> s, std::span<double> y, const Arith& ctx) const override {
    op_->apply(pinv_.apply(s), y, ctx.with_counters(nullptr));
  }

 private:
  std::shared_ptr<const SchurSystem> sys_;
  std::shared_ptr<SchurOperator> op_;
  AWeightedPinv pinv_;
};

inline std::shared_ptr<SchurComposite> schur_operator(std::shared_ptr<const SchurSystem> sys,
                                                      std::span<const double> w, PinvMode mode = PinvMode::exact) {
  return std::make_shared<SchurComposite>(std::move(sys), w, mode);
}

// ---------------------------------------------------------------------------
// flexible preconditioners and plans

/// P_k: maps basis vectors (length in_dim) to solution-space directions
/// (length out_dim).
class FlexPreconditioner {
 public:
  FlexPreconditioner(std::size_t in_dim, std::size_t out_dim) : in_(in_dim), out_(out_dim) {}
  virtual ~FlexPreconditioner() = default;
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  virtual Vector apply(std::span<const double> v, const Arith& ctx) const = 0;
  virtual bool is_identity() const { return false; }

 private:
  std::size_t in_, out_;
};

using PreconditionerPtr = std::shared_ptr<const FlexPreconditioner>;

class IdentityPreconditioner final : public FlexPreconditioner {
 public:
  explicit IdentityPreconditioner(std::size_t n) : FlexPreconditioner(n, n) {}
  Vector apply(std::span<const double> v, const Arith&) const override { return Vector(v.begin(), v.end()); }
  bool is_identity() const override { return true; }
};

class DiagonalPreconditioner final : public FlexPreconditioner {
 public:
  explicit DiagonalPreconditioner(Vector d) : FlexPreconditioner(d.size(), d.size()), d_(std::move(d)) {}
  Vector apply(std::span<const double> v, const Arith& ctx) const override {
    Vector z(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) z[i] = ctx.mul(ctx.round(d_[i]), v[i]);
    return z;
  }
  const Vector& diagonal() const { return d_; }

 private:
  Vector d_;
};

/// z = (W L)^+_A v, evaluated in fp64 and rounded to the context format.
class AWeightedPreconditioner final : public FlexPreconditioner {
 public:
  explicit AWeightedPreconditioner(std::shared_ptr<const AWeightedPinv> pinv, std::size_t out_dim)
      : FlexPreconditioner(pinv->in_dim(), out_dim), pinv_(std::move(pinv)) {}
  Vector apply(std::span<const double> v, const Arith& ctx) const override {
    Vector z = pinv_->apply(v);
    ctx.round_inplace(z);
    return z;
  }

 private:
  std::shared_ptr<const AWeightedPinv> pinv_;
};

/// Produces P_k from the previous iterate x_{k-1} (x_0 = 0).
class PreconditionerPlan {
 public:
  virtual ~PreconditionerPlan() = default;
  virtual PreconditionerPtr make(std::size_t k, std::span<const double> x_prev) = 0;
};

class IdentityPlan final : public PreconditionerPlan {
 public:
  explicit IdentityPlan(std::size_t n) : p_(std::make_shared<IdentityPreconditioner>(n)) {}
  PreconditionerPtr make(std::size_t, std::span<const double>) override { return p_; }

 private:
  PreconditionerPtr p_;
};

class FunctionPlan final : public PreconditionerPlan {
 public:
  using Fn = std::function<PreconditionerPtr(std::size_t, std::span<const double>)>;
  explicit FunctionPlan(Fn fn) : fn_(std::move(fn)) {}
  PreconditionerPtr make(std::size_t k, std::span<const double> x_prev) override { return fn_(k, x_prev); }

 private:
  Fn fn_;
};

/// Smoothing-parameter policy: a fixed tau, or 1e-4 at the first iteration
/// and 1e-4 * max(1, |x_1|_inf) from the second on.
struct TauPolicy {
  std::optional<double> fixed;

  double at(std::size_t k, std::span<const double> x_prev, double current) const {
    if (fixed) return *fixed;
    if (k <= 1) return 1e-4;
    if (k == 2) return 1e-4 * std::max(1.0, Arith::amax(x_prev));
    return current;
  }
};

/// P_k = (W_k L)^{-1} for L = I (diagonal), otherwise the A-weighted
/// pseudoinverse of W_k L. The weights fed to the preconditioner are
/// rescaled so that the largest entry of W_k^{-1} is 1; this leaves R(P_k)
/// unchanged and keeps basis vectors in range under reduced precision.
class PriorPlan final : public PreconditionerPlan {
 public:
  PriorPlan(RegOperator reg, double p, TauPolicy tau, PinvMode mode = PinvMode::approx,
            std::shared_ptr<const SchurSystem> schur = nullptr)
      : reg_(std::move(reg)), p_(p), tau_policy_(tau), mode_(mode), schur_(std::move(schur)) {
    if (reg_.kind != RegOperator::Kind::identity && !schur_)
      throw std::invalid_argument("PriorPlan: a non-identity L requires the Schur formulation");
    WeightRule{p_, 1.0}.validate();
  }

  PreconditionerPtr make(std::size_t k, std::span<const double> x_prev) override {
    tau_ = tau_policy_.at(k, x_prev, tau_);
    const Vector z = x_prev.empty() ? Vector(reg_.d(), 0.0) : reg_.L->apply(x_prev);
    w_ = weights(rule(), z);
    if (reg_.kind == RegOperator::Kind::identity) {
      Vector d(w_.size());
      double dmax = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) dmax = std::max(dmax, d[i] = 1.0 / w_[i]);
      for (double& v : d) v /= dmax;
      return std::make_shared<DiagonalPreconditioner>(std::move(d));
    }
    const double wmin = *std::min_element(w_.begin(), w_.end());
    Vector ws(w_.size());
    for (std::size_t i = 0; i < ws.size(); ++i) ws[i] = w_[i] / wmin;
    auto pinv = std::make_shared<AWeightedPinv>(schur_->projector(), reg_, ws, mode_, schur_->L_pinv());
    return std::make_shared<AWeightedPreconditioner>(std::move(pinv), reg_.n());
  }

  /// Rule (with the tau in effect) used by the latest make().
  WeightRule rule() const { return WeightRule{p_, tau_}; }
  /// Unscaled weights W_k from the latest make().
  const Vector& weights_diag() const { return w_; }
  const RegOperator& reg() const { return reg_; }

 private:
  RegOperator reg_;
  double p_;
  TauPolicy tau_policy_;
  PinvMode mode_;
  std::shared_ptr<const SchurSystem> schur_;
  double tau_ = 1e-4;
  Vector w_;
};

}  // namespace fipk
