#pragma once

// Regularization-parameter rules applied to the projected problem
//
//   y(lambda) = argmin |M y - rhs|^2 + lambda |G y|^2.
//
// All searches run over log10(lambda) in [-12, 4].

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipk/linalg.hpp"
#include "fipk/projected.hpp"

namespace fipk {

inline constexpr double kLogLambdaMin = -12.0;
inline constexpr double kLogLambdaMax = 4.0;
inline constexpr std::size_t kLambdaGridPoints = 200;

/// Closed-form Tikhonov family of a projected problem. The penalty is
/// reduced to standard form through a triangular factor when it has full
/// column rank; otherwise every query solves the normal equations.
class TikhonovFamily {
 public:
  explicit TikhonovFamily(const ProjectedProblem& pp) : M_(pp.M), rhs_(pp.rhs) {
    pp.validate();
    const std::size_t k = M_.cols();
    DenseMatrix G = pp.penalty_kind == PenaltyKind::none ? DenseMatrix::identity(k) : pp.penalty_matrix();
    if (pp.penalty_kind == PenaltyKind::none || pp.penalty_kind == PenaltyKind::identity) {
      standard_ = true;
      build_spectral(M_);
      return;
    }
    if (G.rows() > G.cols()) {
      // |G y| = |R y| with G = QR
      HouseholderQr qr(G);
      DenseMatrix R(k, k);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j) R(i, j) = qr.r(i, j);
      G = R;
    }
    if (G.rows() == k && numerical_rank(G) == k) {
      G_inv_ = pinv_small(G);
      standard_ = false;
      build_spectral(M_ * G_inv_);
      return;
    }
    direct_ = true;
    GtG_ = G.transpose() * G;
    MtM_ = M_.transpose() * M_;
    Mtb_ = matvec_transpose(M_, rhs_);
  }

  std::size_t rows() const { return M_.rows(); }
  std::size_t cols() const { return M_.cols(); }

  Vector solve(double lambda) const {
    if (direct_) return solve_direct(lambda);
    Vector ybar(cols(), 0.0);
    for (std::size_t i = 0; i < s_.size(); ++i) {
      const double d = s_[i] * s_[i] + lambda;
      if (d == 0.0) continue;
      const double c = s_[i] * beta_[i] / d;
      for (std::size_t j = 0; j < cols(); ++j) ybar[j] += c * V_(j, i);
    }
    return standard_ ? ybar : matvec(G_inv_, ybar);
  }

  /// |M y(lambda) - rhs|^2.
  double residual_norm2(double lambda) const {
    if (direct_) {
      const Vector r = matvec(M_, solve_direct(lambda)) - rhs_;
      return dot(r, r);
    }
    double v = perp2_;
    for (std::size_t i = 0; i < s_.size(); ++i) {
      const double d = s_[i] * s_[i] + lambda;
      const double f = d == 0.0 ? 1.0 : lambda / d;
      v += f * f * beta_[i] * beta_[i];
    }
    return v;
  }

  /// trace(M M^+_lambda), with M^+_lambda = (M^T M + lambda G^T G)^{-1} M^T.
  double influence_trace(double lambda) const {
    if (direct_) {
      const DenseMatrix S = normal_matrix(lambda);
      double t = 0.0;
      for (std::size_t j = 0; j < cols(); ++j) {
        const Vector c = solve_square(S, MtM_.column(j));
        t += c[j];
      }
      return t;
    }
    double t = 0.0;
    for (std::size_t i = 0; i < s_.size(); ++i) {
      const double s2 = s_[i] * s_[i];
      if (s2 + lambda > 0) t += s2 / (s2 + lambda);
    }
    return t;
  }

 private:
  void build_spectral(const DenseMatrix& Mbar) {
    const auto svd = svd_jacobi(Mbar);
    s_ = svd.s;
    V_ = svd.v;
    beta_ = matvec_transpose(svd.u, rhs_);
    Vector proj = matvec(svd.u, beta_);
    const Vector perp = rhs_ - proj;
    perp2_ = dot(perp, perp);
  }
  DenseMatrix normal_matrix(double lambda) const {
    DenseMatrix S = MtM_;
    for (std::size_t i = 0; i < S.rows(); ++i)
      for (std::size_t j = 0; j < S.cols(); ++j) S(i, j) += lambda * GtG_(i, j);
    return S;
  }
  Vector solve_direct(double lambda) const { return solve_square(normal_matrix(lambda), Mtb_); }

  DenseMatrix M_;
  Vector rhs_;
  bool standard_ = true;
  bool direct_ = false;
  Vector s_, beta_;
  DenseMatrix V_, G_inv_;
  double perp2_ = 0.0;
  DenseMatrix GtG_, MtM_;
  Vector Mtb_;
};

enum class ParamKind { fixed, discrepancy, gcv, wgcv, optimal };
enum class OmegaKind { one, lslu };

struct ParamRule {
  ParamKind kind = ParamKind::fixed;
  double fixed_value = 0.0;
  double noise_level = 0.0;
  OmegaKind omega = OmegaKind::one;

  void validate() const {
    if (kind == ParamKind::fixed && !(fixed_value >= 0))
      throw std::invalid_argument("ParamRule: fixed lambda must be >= 0");
    if (kind == ParamKind::discrepancy && !(noise_level > 0))
      throw std::invalid_argument("ParamRule: discrepancy needs a positive noise level");
  }
};

/// Parses "fixed:VAL", "dp", "gcv", "wgcv" or "opt".
inline ParamRule parse_param_rule(const std::string& s) {
  ParamRule r;
  if (s.rfind("fixed:", 0) == 0) {
    r.kind = ParamKind::fixed;
    try {
      std::size_t used = 0;
      r.fixed_value = std::stod(s.substr(6), &used);
      if (used != s.size() - 6) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::invalid_argument("lambda: expected fixed:VALUE");
    }
    r.validate();
    return r;
  }
  if (s == "dp") r.kind = ParamKind::discrepancy;
  else if (s == "gcv") r.kind = ParamKind::gcv;
  else if (s == "wgcv") r.kind = ParamKind::wgcv;
  else if (s == "opt") r.kind = ParamKind::optimal;
  else throw std::invalid_argument("unknown lambda rule '" + s + "'");
  return r;
}

inline std::string to_string(ParamKind k) {
  switch (k) {
    case ParamKind::fixed: return "fixed";
    case ParamKind::discrepancy: return "dp";
    case ParamKind::gcv: return "gcv";
    case ParamKind::wgcv: return "wgcv";
    case ParamKind::optimal: return "opt";
  }
  return "?";
}

struct ParamChoice {
  double lambda = 0.0;
  bool flagged = false;
  std::string note;
};

/// omega_k: 1 (GCV) or (k+1)/m.
inline double omega_schedule(OmegaKind kind, std::size_t k, std::size_t m) {
  if (k < 1) throw std::invalid_argument("omega_schedule: k must be >= 1");
  if (kind == OmegaKind::one) return 1.0;
  return static_cast<double>(k + 1) / static_cast<double>(m);
}

inline Vector log_lambda_grid(std::size_t points = kLambdaGridPoints) {
  Vector t(points);
  for (std::size_t i = 0; i < points; ++i)
    t[i] = kLogLambdaMin + (kLogLambdaMax - kLogLambdaMin) * static_cast<double>(i) / static_cast<double>(points - 1);
  return t;
}

/// Minimizes fn(t), t = log10(lambda): grid scan, then golden-section
/// refinement inside the neighbouring grid cells of the best grid point.
inline ParamChoice minimize_log_lambda(const std::function<double(double)>& fn) {
  const Vector t = log_lambda_grid();
  Vector f(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) f[i] = fn(t[i]);
  std::size_t best = 0;
  double fmin = std::numeric_limits<double>::infinity(), fmax = -fmin;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(f[i])) continue;
    if (f[i] < fmin) {
      fmin = f[i];
      best = i;
    }
    fmax = std::max(fmax, f[i]);
  }
  if (!std::isfinite(fmin))
    return {std::pow(10.0, 0.5 * (kLogLambdaMin + kLogLambdaMax)), true, "objective not finite"};
  if (fmax - fmin <= 1e-12 * std::max(std::fabs(fmax), std::numeric_limits<double>::min()))
    return {std::pow(10.0, 0.5 * (kLogLambdaMin + kLogLambdaMax)), true, "flat objective"};

  double a = t[best == 0 ? 0 : best - 1], b = t[std::min(best + 1, t.size() - 1)];
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = fn(c), fd = fn(d);
  for (int it = 0; it < 200 && b - a > 1e-10; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = fn(d);
    }
  }
  double tb = fc <= fd ? c : d, fb = std::min(fc, fd);
  if (!(fb <= fmin)) {
    tb = t[best];
  }
  return {std::pow(10.0, tb), false, {}};
}

/// lambda with |M y - rhs| / b_norm = tau_nl, by bisection in log10(lambda).
/// Unreachable targets return the nearer boundary, flagged.
inline ParamChoice select_discrepancy(const ProjectedProblem& pp, double b_norm, double tau_nl) {
  if (!(tau_nl > 0 && tau_nl < 1)) throw std::invalid_argument("select_discrepancy: tau_nl must be in (0,1)");
  if (!(b_norm > 0)) throw std::invalid_argument("select_discrepancy: b_norm must be positive");
  const TikhonovFamily fam(pp);
  auto ratio = [&](double t) { return std::sqrt(fam.residual_norm2(std::pow(10.0, t))) / b_norm; };
  double lo = kLogLambdaMin, hi = kLogLambdaMax;
  const double rlo = ratio(lo), rhi = ratio(hi);
  if (rlo >= tau_nl) return {std::pow(10.0, lo), rlo > tau_nl, rlo > tau_nl ? "target below reachable residual" : ""};
  if (rhi < tau_nl) return {std::pow(10.0, hi), true, "target above reachable residual"};
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ratio(mid) < tau_nl) lo = mid;
    else hi = mid;
  }
  return {std::pow(10.0, 0.5 * (lo + hi)), false, {}};
}

/// k |(M M^+_lambda - I) rhs|^2 / trace(I - omega M M^+_lambda)^2.
inline double wgcv_function(const TikhonovFamily& fam, double lambda, double omega) {
  const double num = static_cast<double>(fam.cols()) * fam.residual_norm2(lambda);
  const double den = static_cast<double>(fam.rows()) - omega * fam.influence_trace(lambda);
  return num / (den * den);
}

inline ParamChoice select_wgcv(const ProjectedProblem& pp, double omega) {
  if (!(omega > 0 && omega <= 1)) throw std::invalid_argument("select_wgcv: omega must be in (0,1]");
  const TikhonovFamily fam(pp);
  return minimize_log_lambda([&](double t) { return wgcv_function(fam, std::pow(10.0, t), omega); });
}

/// Generalized cross validation, k |r|^2 / (rows - trace)^2.
inline ParamChoice select_gcv(const ProjectedProblem& pp) {
  const TikhonovFamily fam(pp);
  return minimize_log_lambda([&](double t) {
    const double lambda = std::pow(10.0, t);
    const double den = static_cast<double>(fam.rows()) - fam.influence_trace(lambda);
    return static_cast<double>(fam.cols()) * fam.residual_norm2(lambda) / (den * den);
  });
}

/// argmin over lambda of |x(lambda) - x_true|.
/// lambda = 0 is a candidate besides the log grid, so the choice is never
/// worse than the unregularized projected solution.
inline ParamChoice select_optimal(const std::function<Vector(double)>& x_builder, std::span<const double> x_true) {
  auto error = [&](double lambda) {
    const Vector x = x_builder(lambda);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - x_true[i]) * (x[i] - x_true[i]);
    return std::sqrt(s);
  };
  ParamChoice best = minimize_log_lambda([&](double t) { return error(std::pow(10.0, t)); });
  const double e0 = error(0.0);
  if (std::isfinite(e0) && (best.flagged || !(error(best.lambda) < e0))) return {0.0, false, {}};
  return best;
}

}  // namespace fipk
