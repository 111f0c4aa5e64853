#pragma once

// Objective evaluation, tangent-majorant checks and the sufficient
// conditions for monotone decrease of the exact functionals.
//
// Every condition has the form
//
//   (h^(x_{k-1}) - h^(x_k)) / h^(x_k) >= k1/k2 - 1
//
// where h^ is the functional minimized in the current subspace and
// k2 h <= h^ <= k1 h on that subspace for the exact functional h.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

#include "fipk/linalg.hpp"
#include "fipk/operator.hpp"
#include "fipk/preconditioning.hpp"
#include "fipk/sketching.hpp"

namespace fipk {

/// |Ax - b|^2 + lambda * sum_i (z_i^2 + tau^2)^((p-2)/2) z_i^2, z = Lx.
/// L == nullptr means L = I.
inline double eval_objective(std::span<const double> x, const LinearOperator& A, std::span<const double> b,
                             const LinearOperator* L, double lambda, const WeightRule& rule) {
  const Vector r = A.apply(x) - Vector(b.begin(), b.end());
  double f = dot(r, r);
  if (lambda == 0.0) return f;
  const Vector z = L ? L->apply(x) : Vector(x.begin(), x.end());
  const double e = (rule.p - 2.0) / 2.0, t2 = rule.tau * rule.tau;
  double pen = 0.0;
  for (double zi : z) pen += std::pow(zi * zi + t2, e) * zi * zi;
  return f + lambda * pen;
}

/// Smoothed functional whose tangent majorant at xbar is
/// |Ax - b|^2 + lambda |W(L xbar) L x|^2 + c:
/// |Ax - b|^2 + lambda * sum_i (2/p) (z_i^2 + tau^2)^(p/2).
inline double smoothed_objective(std::span<const double> x, const LinearOperator& A, std::span<const double> b,
                                 const LinearOperator* L, double lambda, const WeightRule& rule) {
  const Vector r = A.apply(x) - Vector(b.begin(), b.end());
  double f = dot(r, r);
  if (lambda == 0.0) return f;
  const Vector z = L ? L->apply(x) : Vector(x.begin(), x.end());
  const double t2 = rule.tau * rule.tau;
  double pen = 0.0;
  for (double zi : z) pen += (2.0 / rule.p) * std::pow(zi * zi + t2, rule.p / 2.0);
  return f + lambda * pen;
}

enum class KappaSource { none, u_pinv, sketch, block };

inline std::string to_string(KappaSource s) {
  switch (s) {
    case KappaSource::none: return "none";
    case KappaSource::u_pinv: return "U_pinv";
    case KappaSource::sketch: return "sketch";
    case KappaSource::block: return "block";
  }
  return "?";
}

struct MonotonicityReport {
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double threshold = std::numeric_limits<double>::quiet_NaN();
  bool condition_met = false;
  bool degenerate = false;  // h^(x_k) == 0
  bool binding = true;      // false when lambda changed between iterations
  KappaSource kappa_source = KappaSource::none;
  double exact_before = std::numeric_limits<double>::quiet_NaN();
  double exact_after = std::numeric_limits<double>::quiet_NaN();

  /// Condition met while the exact functional increased beyond slack.
  bool violated(double slack = 1e-12) const {
    if (!condition_met || !binding) return false;
    return exact_after > exact_before + slack * std::max(std::fabs(exact_before), std::fabs(exact_after));
  }
};

/// Lemma check for k1 >= k2 > 0.
inline MonotonicityReport check_lemma1(double h_prev, double h_curr, double k1, double k2) {
  if (!(k2 > 0) || !(k1 >= k2)) throw std::invalid_argument("check_lemma1: need k1 >= k2 > 0");
  if (h_prev < 0 || h_curr < 0) throw std::invalid_argument("check_lemma1: h values must be nonnegative");
  MonotonicityReport r;
  r.threshold = (k1 - k2) / k2;
  if (h_curr == 0.0) {
    r.degenerate = true;
    r.ratio = std::numeric_limits<double>::infinity();
    r.condition_met = true;
    return r;
  }
  r.ratio = (h_prev - h_curr) / h_curr;
  r.condition_met = r.ratio >= r.threshold;
  return r;
}

/// Same test with a precomputed threshold (possibly infinite).
inline MonotonicityReport check_threshold(double h_prev, double h_curr, double threshold) {
  MonotonicityReport r;
  r.threshold = threshold;
  if (h_curr == 0.0) {
    r.degenerate = true;
    r.ratio = std::numeric_limits<double>::infinity();
    r.condition_met = true;
    return r;
  }
  r.ratio = (h_prev - h_curr) / h_curr;
  r.condition_met = std::isfinite(threshold) && r.ratio >= threshold;
  return r;
}

namespace detail {

/// Largest and smallest nonzero-range singular value of M^+ (M has full
/// column rank): sigma_1(M^+) and sigma_cols(M^+).
inline std::pair<double, double> pinv_sigma_extremes(const DenseMatrix& M) {
  if (M.cols() == 0) return {1.0, 1.0};
  const Vector s = svd_small(pinv_small(M));
  const std::size_t r = std::min(M.cols(), s.size());
  return {s.front(), r == 0 ? 0.0 : s[r - 1]};
}

}  // namespace detail

/// kappa(U^+)^2 - 1; infinite when U is rank deficient.
inline double threshold_prop1(const DenseMatrix& U) {
  const auto [hi, lo] = detail::pinv_sigma_extremes(U);
  if (!(lo > 0)) return std::numeric_limits<double>::infinity();
  return (hi * hi) / (lo * lo) - 1.0;
}

/// max(sigma_1(U^+)^2, 1) / min(sigma_last(U^+)^2, 1) - 1.
inline double threshold_prop2(const DenseMatrix& U) {
  const auto [hi, lo] = detail::pinv_sigma_extremes(U);
  if (!(lo > 0)) return std::numeric_limits<double>::infinity();
  return std::max(hi * hi, 1.0) / std::min(lo * lo, 1.0) - 1.0;
}

/// kappa(C)^2 - 1 for C = blockdiag(U^+, B^+), extremes pooled over blocks.
inline double threshold_prop3(const DenseMatrix& U, const DenseMatrix& B) {
  const auto [h1, l1] = detail::pinv_sigma_extremes(U);
  const auto [h2, l2] = detail::pinv_sigma_extremes(B);
  const double hi = std::max(h1, h2), lo = std::min(l1, l2);
  if (!(lo > 0)) return std::numeric_limits<double>::infinity();
  return (hi * hi) / (lo * lo) - 1.0;
}

/// Extremes of the singular values of sk restricted to R(basis).
inline std::pair<double, double> sketch_sigma_extremes(const Sketch& sk, const DenseMatrix& basis) {
  const Vector s = restricted_singular_values(sk, basis);
  if (s.empty()) return {1.0, 1.0};
  return {s.front(), s.back()};
}

/// kappa^2 - 1 of the sketch restricted to R(basis); 0 for an empty basis.
inline double threshold_sketch(const Sketch& sk, const DenseMatrix& basis) {
  const auto [hi, lo] = sketch_sigma_extremes(sk, basis);
  if (!(lo > 0)) return std::numeric_limits<double>::infinity();
  return (hi * hi) / (lo * lo) - 1.0;
}

/// kappa(S)^2 - 1 over the whole source space: infinite unless every row is
/// kept, since S then has a nontrivial null space.
inline double threshold_sketch_unrestricted(const Sketch& sk) {
  if (sk.size() < sk.source_dim) return std::numeric_limits<double>::infinity();
  const auto [mn, mx] = std::minmax_element(sk.scales.begin(), sk.scales.end());
  return (*mx * *mx) / (*mn * *mn) - 1.0;
}

/// Singular values of blockdiag(S1, S2) restricted to R(basis), where basis
/// has S1.source_dim + S2.source_dim rows.
inline Vector restricted_block_singular_values(const Sketch& s1, const Sketch& s2, const DenseMatrix& basis) {
  const DenseMatrix Q = orthonormal_basis(basis);
  if (Q.cols() == 0) return {};
  const DenseMatrix top = s1.apply(Q.block(0, 0, s1.source_dim, Q.cols()));
  const DenseMatrix bot = s2.apply(Q.block(s1.source_dim, 0, s2.source_dim, Q.cols()));
  Vector s = svd_small(top.stack(bot));
  s.resize(Q.cols(), 0.0);
  return s;
}

// ---------------------------------------------------------------------------
// tangent majorant

/// q(x) = |Ax - b|^2 + lambda |W L x|^2 + c with W = W(L anchor) and c chosen
/// so that q(anchor) equals the smoothed functional at the anchor.
struct MajorantModel {
  DenseMatrix A, L;
  Vector b, anchor, W;
  WeightRule rule;
  double lambda = 0.0;
  double c = 0.0;

  double value(std::span<const double> x) const {
    const Vector r = matvec(A, x) - b;
    const Vector z = matvec(L, x);
    double pen = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) pen += W[i] * W[i] * z[i] * z[i];
    return dot(r, r) + lambda * pen + c;
  }
  Vector gradient(std::span<const double> x) const {
    const Vector r = matvec(A, x) - b;
    Vector z = matvec(L, x);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] *= 2.0 * lambda * W[i] * W[i];
    Vector g = matvec_transpose(A, r);
    for (double& v : g) v *= 2.0;
    const Vector lz = matvec_transpose(L, z);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += lz[i];
    return g;
  }
};

inline MajorantModel make_majorant(DenseMatrix A, Vector b, DenseMatrix L, WeightRule rule, double lambda,
                                   Vector anchor) {
  rule.validate();
  MajorantModel m{std::move(A), std::move(L), std::move(b), std::move(anchor), {}, rule, lambda, 0.0};
  const Vector z = matvec(m.L, m.anchor);
  m.W = weights(rule, z);
  const double t2 = rule.tau * rule.tau;
  double c = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    c += (2.0 / rule.p) * std::pow(z[i] * z[i] + t2, rule.p / 2.0) - m.W[i] * m.W[i] * z[i] * z[i];
  m.c = lambda * c;
  return m;
}

/// Smoothed functional matching a majorant model's data.
inline std::function<double(std::span<const double>)> smoothed_functional(const MajorantModel& m) {
  return [A = m.A, L = m.L, b = m.b, rule = m.rule, lambda = m.lambda](std::span<const double> x) {
    const DenseOperator Aop(A), Lop(L);
    return smoothed_objective(x, Aop, b, &Lop, lambda, rule);
  };
}

struct MajorantCheck {
  double anchor_error = 0.0;    // |q(a) - f(a)| / max(1, |f(a)|)
  double gradient_error = 0.0;  // |grad q(a) - fd grad f(a)| / |grad q(a)|
  double worst_domination = 0.0;  // max (f - q) / max(1, |f|) over samples
  bool anchoring_ok = false, gradient_ok = false, domination_ok = false;

  bool passed() const { return anchoring_ok && gradient_ok && domination_ok; }
  explicit operator bool() const { return passed(); }
};

/// Checks q(a) = f(a) (1e-10), grad q(a) against central differences of f
/// (h = 1e-6, 1e-4 relative) and q >= f at random points around a.
inline MajorantCheck verify_majorant(const MajorantModel& model,
                                     const std::function<double(std::span<const double>)>& f_eval,
                                     std::size_t samples, std::uint64_t seed = 0) {
  if (!(model.rule.tau > 0)) throw std::invalid_argument("verify_majorant: tau must be positive");
  MajorantCheck out;
  const Vector& a = model.anchor;
  const double fa = f_eval(a);
  out.anchor_error = std::fabs(model.value(a) - fa) / std::max(1.0, std::fabs(fa));
  out.anchoring_ok = out.anchor_error <= 1e-10;

  const double h = 1e-6;
  const Vector g = model.gradient(a);
  Vector fd(a.size());
  Vector xp = a, xm = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    xp[i] = a[i] + h;
    xm[i] = a[i] - h;
    fd[i] = (f_eval(xp) - f_eval(xm)) / (2 * h);
    xp[i] = xm[i] = a[i];
  }
  const double gn = norm2(g);
  out.gradient_error = norm2(g - fd) / std::max(gn, std::numeric_limits<double>::min());
  out.gradient_ok = out.gradient_error <= 1e-4;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(-3.0, 1.0);
  const double scale = std::max(1.0, norm_inf(a));
  out.worst_domination = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples; ++s) {
    const double step = scale * std::pow(10.0, ud(rng));
    Vector x = a;
    for (double& v : x) v += step * nd(rng);
    const double fx = f_eval(x), qx = model.value(x);
    out.worst_domination = std::max(out.worst_domination, (fx - qx) / std::max(1.0, std::fabs(fx)));
  }
  out.domination_ok = samples == 0 || out.worst_domination <= 1e-12;
  return out;
}

}  // namespace fipk
