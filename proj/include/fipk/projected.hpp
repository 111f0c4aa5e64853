#pragma once

// Small per-iteration problems
//
//   min_y |M y - rhs|^2 + lambda |G y|^2
//
// with G absent (quasi-residual), the identity (hybrid), the triangular LU
// factor of W_k L Z_k (reweighted), or a sketched block. All variants are
// solved as one stacked least-squares problem [M; sqrt(lambda) G].

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "fipk/linalg.hpp"
#include "fipk/lowprec.hpp"

namespace fipk {

enum class Variant { plain, hybrid, irw };

inline Variant parse_variant(const std::string& s) {
  if (s == "plain") return Variant::plain;
  if (s == "hybrid") return Variant::hybrid;
  if (s == "irw") return Variant::irw;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::hybrid: return "hybrid";
    case Variant::irw: return "irw";
  }
  return "?";
}

enum class PenaltyKind { none, identity, matrix };

struct ProjectedProblem {
  DenseMatrix M;
  Vector rhs;
  PenaltyKind penalty_kind = PenaltyKind::none;
  DenseMatrix penalty;  // used when penalty_kind == matrix; cols == M.cols()
  double lambda = 0.0;

  void validate() const {
    if (rhs.size() != M.rows()) throw std::invalid_argument("ProjectedProblem: rhs length mismatch");
    if (!(lambda >= 0)) throw std::invalid_argument("ProjectedProblem: lambda must be >= 0");
    if (penalty_kind == PenaltyKind::matrix && penalty.cols() != M.cols())
      throw std::invalid_argument("ProjectedProblem: penalty column count mismatch");
  }

  /// The penalty as a dense matrix (k x k identity for the hybrid form).
  DenseMatrix penalty_matrix() const {
    switch (penalty_kind) {
      case PenaltyKind::none: return DenseMatrix(0, M.cols());
      case PenaltyKind::identity: return DenseMatrix::identity(M.cols());
      case PenaltyKind::matrix: return penalty;
    }
    return {};
  }

  ProjectedProblem with_lambda(double l) const {
    ProjectedProblem p = *this;
    p.lambda = l;
    return p;
  }
};

struct ProjectedSolution {
  Vector y;
  bool rank_deficient = false;
};

/// Stacked least squares on [M; sqrt(lambda) G] y ~ [rhs; 0].
inline ProjectedSolution solve_projected(const ProjectedProblem& pp, const Arith& ctx = Arith::exact()) {
  pp.validate();
  const std::size_t k = pp.M.cols();
  DenseMatrix S = pp.M;
  Vector rhs = pp.rhs;
  if (pp.penalty_kind != PenaltyKind::none && pp.lambda > 0) {
    const double sl = ctx.sqrt(pp.lambda);
    DenseMatrix G = pp.penalty_matrix();
    for (std::size_t i = 0; i < G.rows(); ++i)
      for (double& v : G.row(i)) v = ctx.mul(sl, v);
    S = S.stack(G);
    rhs.resize(S.rows(), 0.0);
  }
  ProjectedSolution out;
  if (k == 0) return out;
  if (S.rows() < k) {
    out.rank_deficient = true;
    out.y = matvec(pinv_small(S), rhs);
    ctx.round_inplace(out.y);
    return out;
  }
  auto r = qr_least_squares(S, rhs, ctx);
  out.y = std::move(r.x);
  out.rank_deficient = r.rank_deficient;
  return out;
}

inline Vector solve_plain(const ProjectedProblem& pp, const Arith& ctx = Arith::exact()) {
  ProjectedProblem p = pp;
  p.penalty_kind = PenaltyKind::none;
  p.lambda = 0.0;
  return solve_projected(p, ctx).y;
}

/// (M^T M + lambda I)^{-1} M^T rhs; lambda = 0 reduces to solve_plain.
inline Vector solve_hybrid(const ProjectedProblem& pp, const Arith& ctx = Arith::exact()) {
  if (pp.lambda == 0.0) return solve_plain(pp, ctx);
  ProjectedProblem p = pp;
  p.penalty_kind = PenaltyKind::identity;
  return solve_projected(p, ctx).y;
}

/// Triangular factor of the pivoted LU of W_k L Z_k and its unit lower
/// trapezoidal companion, so that Pi * WLZ = lower * upper.
struct IrwPenalty {
  DenseMatrix upper;
  DenseMatrix lower;
  bool rank_deficient = false;
};

inline IrwPenalty irw_penalty(const DenseMatrix& WLZ, const Arith& ctx = Arith::exact()) {
  auto lu = lu_partial_pivot(WLZ, ctx);
  return {std::move(lu.upper), std::move(lu.lower), lu.rank_deficient};
}

/// argmin |M y - rhs|^2 + lambda |U_lu y|^2. Uses pp.penalty when present,
/// otherwise factors WLZ.
inline Vector solve_irw(const ProjectedProblem& pp, const DenseMatrix& WLZ, const Arith& ctx = Arith::exact()) {
  ProjectedProblem p = pp;
  if (p.penalty_kind != PenaltyKind::matrix) {
    p.penalty = irw_penalty(WLZ, ctx).upper;
    p.penalty_kind = PenaltyKind::matrix;
  }
  if (p.lambda == 0.0) return solve_plain(p, ctx);
  return solve_projected(p, ctx).y;
}

/// Sketched counterparts: pp.M = S1 A Z_k, pp.rhs = S1 b and, for irw,
/// pp.penalty = S2 W_k L Z_k.
inline Vector solve_sketched(const ProjectedProblem& pp, Variant variant, const Arith& ctx = Arith::exact()) {
  switch (variant) {
    case Variant::plain: return solve_plain(pp, ctx);
    case Variant::hybrid: return solve_hybrid(pp, ctx);
    case Variant::irw: {
      if (pp.penalty_kind != PenaltyKind::matrix)
        throw std::invalid_argument("solve_sketched: irw needs the sketched penalty block");
      if (pp.lambda == 0.0) return solve_plain(pp, ctx);
      return solve_projected(pp, ctx).y;
    }
  }
  return {};
}

/// |M y - rhs|^2 + lambda |G y|^2 in fp64.
inline double projected_objective(const ProjectedProblem& pp, std::span<const double> y) {
  const Vector r = matvec(pp.M, y) - pp.rhs;
  double v = dot(r, r);
  if (pp.penalty_kind != PenaltyKind::none && pp.lambda > 0) {
    const Vector g = matvec(pp.penalty_matrix(), y);
    v += pp.lambda * dot(g, g);
  }
  return v;
}

}  // namespace fipk
