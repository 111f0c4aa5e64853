#pragma once

// Iteration drivers. The flexible drivers combine one factorization step,
// the projected solve, the parameter rule and the monotonicity diagnostics
// per iteration; GMRES, LSQR and the non-flexible CMRH/LSLU recurrences are
// the baselines.
//
// Everything except the basis construction, the projected solve and the
// assembly of x_k runs in an uninstrumented fp64 context, so the kernel
// counters see exactly the work the method itself performs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipk/diagnostics.hpp"
#include "fipk/factorizations.hpp"
#include "fipk/linalg.hpp"
#include "fipk/lowprec.hpp"
#include "fipk/operator.hpp"
#include "fipk/preconditioning.hpp"
#include "fipk/problems.hpp"
#include "fipk/projected.hpp"
#include "fipk/regparam.hpp"
#include "fipk/sketching.hpp"

namespace fipk {

/// Invalid method/variant/prior combination (maps to a usage error).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Method { fcmrh, flslu, gmres, lsqr, cmrh, lslu };

inline Method parse_method(const std::string& s) {
  if (s == "fcmrh") return Method::fcmrh;
  if (s == "flslu") return Method::flslu;
  if (s == "gmres") return Method::gmres;
  if (s == "lsqr") return Method::lsqr;
  if (s == "cmrh") return Method::cmrh;
  if (s == "lslu") return Method::lslu;
  throw ConfigError("unknown method '" + s + "'");
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::fcmrh: return "fcmrh";
    case Method::flslu: return "flslu";
    case Method::gmres: return "gmres";
    case Method::lsqr: return "lsqr";
    case Method::cmrh: return "cmrh";
    case Method::lslu: return "lslu";
  }
  return "?";
}

struct PriorConfig {
  enum class Kind { none, lp, tv1d };
  Kind kind = Kind::none;
  double p = 1.0;
  std::optional<double> tau;  // fixed smoothing parameter; adaptive when empty
  PinvMode pinv = PinvMode::approx;
};

/// "none", "l1", "lp:P" or "tv1d".
inline PriorConfig parse_prior(const std::string& s) {
  PriorConfig c;
  if (s == "none") return c;
  if (s == "l1") {
    c.kind = PriorConfig::Kind::lp;
    return c;
  }
  if (s == "tv1d" || s == "tv") {
    c.kind = PriorConfig::Kind::tv1d;
    return c;
  }
  if (s.rfind("lp:", 0) == 0) {
    c.kind = PriorConfig::Kind::lp;
    try {
      std::size_t used = 0;
      c.p = std::stod(s.substr(3), &used);
      if (used != s.size() - 3) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("prior: expected lp:P");
    }
    if (!(c.p > 0) || c.p > 2) throw ConfigError("prior: p must be in (0, 2]");
    return c;
  }
  throw ConfigError("unknown prior '" + s + "'");
}

inline std::string to_string(const PriorConfig& c) {
  switch (c.kind) {
    case PriorConfig::Kind::none: return "none";
    case PriorConfig::Kind::lp: return c.p == 1.0 ? "l1" : "lp:" + std::to_string(c.p);
    case PriorConfig::Kind::tv1d: return "tv1d";
  }
  return "?";
}

struct SketchConfig {
  bool enabled = false;
  std::size_t size = 0;  // 0 selects 4 * kmax
  std::uint64_t seed = 1;
  std::size_t redraw_every = 5;
};

struct SolverConfig {
  Method method = Method::fcmrh;
  Variant variant = Variant::plain;
  PriorConfig prior;
  ParamRule param;  // ignored by the plain variant
  std::size_t kmax = 20;
  SketchConfig sketch;
  std::optional<ChopFormat> precision;
  bool stagnation_stop = true;  // fp64 runs only
  bool store_iterates = true;
  FactorizationOptions factorization;
  /// Replaces the prior-derived plan (flexible methods, non-Schur mode).
  std::shared_ptr<PreconditionerPlan> plan;
};

struct IterationRecord {
  std::size_t iter = 0;
  double res_norm = 0.0;
  double objective = 0.0;
  double lambda = 0.0;
  double rel_error = std::numeric_limits<double>::quiet_NaN();
  bool has_report = false;
  MonotonicityReport report;
  bool rank_warning = false;
  bool lambda_flagged = false;
  // kernel calls made while extending the basis at this iteration
  std::uint64_t step_applies = 0, step_transpose_applies = 0, step_dots = 0;
  Vector x;  // empty in norms-only mode
};

struct SolverTrace {
  std::string method;
  std::vector<IterationRecord> records;
  std::string halt_reason = "kmax";
  std::size_t halt_iteration = 0;
  std::uint64_t applies = 0, transpose_applies = 0, dots = 0;

  std::size_t iterations() const { return records.empty() ? 0 : records.size() - 1; }
  const IterationRecord& last() const { return records.back(); }

  /// Smallest relative error over iterations >= 1 and its iteration (NaN, 0
  /// without x_true or iterations).
  std::pair<double, std::size_t> min_rel_error() const {
    double best = std::numeric_limits<double>::quiet_NaN();
    std::size_t at = 0;
    for (const auto& r : records) {
      if (r.iter == 0 || std::isnan(r.rel_error)) continue;
      if (std::isnan(best) || r.rel_error < best) {
        best = r.rel_error;
        at = r.iter;
      }
    }
    return {best, at};
  }
};

/// |x_k - x_true| / |x_true| per stored iterate.
inline Vector relative_error_history(const SolverTrace& trace, std::span<const double> x_true) {
  if (x_true.empty()) throw std::invalid_argument("relative_error_history: x_true required");
  const double nt = norm2(x_true);
  Vector out;
  out.reserve(trace.records.size());
  for (const auto& r : trace.records) {
    if (r.x.empty()) {
      out.push_back(r.rel_error);
      continue;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x_true.size(); ++i) s += (r.x[i] - x_true[i]) * (r.x[i] - x_true[i]);
    out.push_back(std::sqrt(s) / nt);
  }
  return out;
}

namespace detail {

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// |M y - rhs|^2 with y zero-padded to M.cols().
inline double quasi_residual2(const DenseMatrix& M, std::span<const double> rhs, std::span<const double> y) {
  Vector yy(M.cols(), 0.0);
  std::copy(y.begin(), y.end(), yy.begin());
  const Vector r = matvec(M, yy) - Vector(rhs.begin(), rhs.end());
  return dot(r, r);
}

inline Vector pad(std::span<const double> y, std::size_t n) {
  Vector out(n, 0.0);
  std::copy(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(std::min(n, y.size())), out.begin());
  return out;
}

/// sum_j y_j z_j accumulated in the method's arithmetic.
inline Vector combine(const std::vector<Vector>& z, std::span<const double> y, std::size_t n, const Arith& ctx) {
  Vector x(n, 0.0);
  for (std::size_t j = 0; j < y.size(); ++j) ctx.axpy(y[j], z[j], x);
  return x;
}

/// Fills the fields shared by every driver. L == nullptr means L = I.
struct Evaluator {
  const TestProblem* problem = nullptr;
  const LinearOperator* L = nullptr;
  WeightRule rule{2.0, 1.0};
  bool store_x = true;

  IterationRecord make(std::size_t iter, const Vector& x, double lambda) const {
    IterationRecord r;
    r.iter = iter;
    r.lambda = lambda;
    const Vector res = problem->A->apply(x) - problem->b;
    r.res_norm = norm2(res);
    r.objective = eval_objective(x, *problem->A, problem->b, L, lambda, rule);
    if (!problem->x_true.empty()) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - problem->x_true[i]) * (x[i] - problem->x_true[i]);
      r.rel_error = std::sqrt(s) / norm2(problem->x_true);
    }
    if (store_x) r.x = x;
    return r;
  }
};

/// Stops after five consecutive relative residual changes below 1e-12.
struct StagnationMonitor {
  bool enabled = true;
  int streak = 0;
  bool update(double prev, double curr) {
    if (!enabled) return false;
    const double change = std::fabs(curr - prev) / std::max(prev, std::numeric_limits<double>::min());
    streak = change < 1e-12 ? streak + 1 : 0;
    return streak >= 5;
  }
};

struct CounterSnapshot {
  std::uint64_t applies, transpose_applies, dots;
  static CounterSnapshot of(const KernelCounters& c) { return {c.applies.load(), c.transpose_applies.load(), c.dots.load()}; }
};

inline void finish(SolverTrace& t, const KernelCounters& c) {
  t.applies = c.applies;
  t.transpose_applies = c.transpose_applies;
  t.dots = c.dots;
  if (t.halt_iteration == 0) t.halt_iteration = t.iterations();
}

/// Prop. 1 report for the plain quasi-residual problem.
inline MonotonicityReport plain_report(const DenseMatrix& H, double beta, const DenseMatrix& U,
                                       std::span<const double> y_prev, std::span<const double> y,
                                       double exact_before, double exact_after) {
  Vector rhs(H.rows(), 0.0);
  rhs[0] = beta;
  MonotonicityReport rep =
      check_threshold(quasi_residual2(H, rhs, y_prev), quasi_residual2(H, rhs, y), threshold_prop1(U));
  rep.kappa_source = KappaSource::u_pinv;
  rep.exact_before = exact_before;
  rep.exact_after = exact_after;
  return rep;
}

inline IterationRecord iteration_zero(const Evaluator& ev, std::size_t n) {
  return ev.make(0, Vector(n, 0.0), 0.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// configuration checks

inline void validate_config(const SolverConfig& cfg, const TestProblem& problem) {
  const auto& A = *problem.A;
  const bool flexible_family = cfg.method == Method::fcmrh || cfg.method == Method::cmrh ||
                               cfg.method == Method::flslu || cfg.method == Method::lslu;
  if (cfg.kmax == 0) throw ConfigError("kmax must be >= 1");
  if ((cfg.method == Method::gmres || cfg.method == Method::lsqr) &&
      (cfg.variant != Variant::plain || cfg.sketch.enabled || cfg.prior.kind != PriorConfig::Kind::none))
    throw ConfigError(to_string(cfg.method) + " supports only the plain variant without a prior or sketch");
  if ((cfg.method == Method::gmres || cfg.method == Method::fcmrh || cfg.method == Method::cmrh) &&
      A.rows() != A.cols())
    throw ConfigError(to_string(cfg.method) + " requires a square operator");
  if ((cfg.method == Method::flslu || cfg.method == Method::lslu || cfg.method == Method::lsqr) &&
      !A.has_transpose())
    throw ConfigError(to_string(cfg.method) + " requires an operator with a transpose");
  if ((cfg.method == Method::cmrh || cfg.method == Method::lslu) && cfg.prior.kind != PriorConfig::Kind::none)
    throw ConfigError(to_string(cfg.method) + " does not take a prior; use the flexible method");
  if (cfg.prior.kind == PriorConfig::Kind::tv1d) {
    if (cfg.method != Method::fcmrh) throw ConfigError("tv1d prior requires fcmrh (Schur formulation)");
    if (cfg.variant != Variant::plain || cfg.sketch.enabled)
      throw ConfigError("tv1d prior runs the plain variant without sketching");
    if (cfg.plan) throw ConfigError("tv1d prior cannot take a custom plan");
  }
  if (cfg.prior.kind == PriorConfig::Kind::lp) WeightRule{cfg.prior.p, cfg.prior.tau.value_or(1.0)}.validate();
  if (cfg.variant != Variant::plain) {
    ParamRule r = cfg.param;
    if (!(r.noise_level > 0)) r.noise_level = problem.noise_level;
    r.validate();
  }
  if (cfg.variant != Variant::plain && cfg.param.kind == ParamKind::optimal && problem.x_true.empty())
    throw ConfigError("optimal lambda needs x_true");
  if (cfg.sketch.enabled && !flexible_family) throw ConfigError("sketching applies to the Hessenberg-type methods");
  if (cfg.sketch.redraw_every == 0) throw ConfigError("sketch redraw interval must be >= 1");
}

// ---------------------------------------------------------------------------
// flexible drivers

namespace detail {

/// One run of FCMRH (Hessenberg) or FLSLU (generalized Hessenberg) with
/// all variants.
template <class Process>
SolverTrace run_flexible(const SolverConfig& cfg, const TestProblem& problem, const std::string& name) {
  validate_config(cfg, problem);
  SolverTrace trace;
  trace.method = name;
  KernelCounters counters;
  const Arith ctx(cfg.precision, &counters);
  const std::size_t n = problem.A->cols(), m = problem.A->rows();
  const bool schur = cfg.prior.kind == PriorConfig::Kind::tv1d;

  // effective system and plan
  OperatorPtr Aeff = problem.A;
  Vector beff = problem.b;
  std::shared_ptr<const SchurSystem> sys;
  std::shared_ptr<PreconditionerPlan> plan = cfg.plan;
  PriorPlan* prior_plan = nullptr;
  std::shared_ptr<const LinearOperator> L_eval;  // nullptr: L = I
  if (schur) {
    sys = std::make_shared<SchurSystem>(problem.A, RegOperator::d1(n));
    Aeff = std::make_shared<SchurOperator>(sys);
    beff = sys->rhs(problem.b);
    auto pp = std::make_shared<PriorPlan>(RegOperator::d1(n), cfg.prior.p, TauPolicy{cfg.prior.tau}, cfg.prior.pinv, sys);
    prior_plan = pp.get();
    plan = pp;
    L_eval = sys->reg().L;
  } else if (!plan) {
    if (cfg.prior.kind == PriorConfig::Kind::lp) {
      auto pp = std::make_shared<PriorPlan>(RegOperator::identity(n), cfg.prior.p, TauPolicy{cfg.prior.tau});
      prior_plan = pp.get();
      plan = pp;
    } else {
      plan = std::make_shared<IdentityPlan>(n);
    }
  }

  Evaluator ev{&problem, L_eval.get(), WeightRule{2.0, 1.0}, cfg.store_iterates};
  auto current_rule = [&] { return prior_plan ? prior_plan->rule() : WeightRule{2.0, 1.0}; };
  if (prior_plan) ev.rule = WeightRule{cfg.prior.p, cfg.prior.tau.value_or(1e-4)};

  trace.records.push_back(iteration_zero(ev, n));
  Process f(Aeff, beff, ctx, cfg.factorization);
  if (f.broken()) {
    trace.halt_reason = to_string(f.breakdown());
    trace.halt_iteration = 1;
    finish(trace, counters);
    return trace;
  }

  const double noise = cfg.param.noise_level > 0 ? cfg.param.noise_level : problem.noise_level;
  const std::size_t sketch_size = std::min(m, cfg.sketch.size > 0 ? cfg.sketch.size : 4 * cfg.kmax);
  StagnationMonitor stag{cfg.stagnation_stop && !cfg.precision};

  std::vector<Vector> az;  // A z_j (non-Schur), for the sketched problems
  std::optional<Sketch> s1, s2;
  std::size_t redraws = 0;
  Vector x_prev(n, 0.0), w_prev(n, 0.0), y_prev;
  double lambda_prev = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t k = 1; k <= cfg.kmax; ++k) {
    const PreconditionerPtr P = plan->make(k, x_prev);
    if (prior_plan) ev.rule = current_rule();
    const auto before = CounterSnapshot::of(counters);
    f.step(*P);
    const auto after = CounterSnapshot::of(counters);
    if (!schur) az.push_back(f.last_product());

    const DenseMatrix H = f.H();
    const DenseMatrix U = f.U();
    const std::vector<Vector>& Z = f.directions();
    const double beta = f.beta();

    // projected problem
    ProjectedProblem pp;
    IrwPenalty irw;
    DenseMatrix WLZ;
    DenseMatrix AZb;
    Vector w_diag;
    if (cfg.variant == Variant::irw) {
      w_diag = prior_plan ? prior_plan->weights_diag() : Vector(n, 1.0);
      WLZ = DenseMatrix(n, k);
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n; ++i) WLZ(i, j) = ctx.round(w_diag[i] * Z[j][i]);
    }
    if (cfg.sketch.enabled) {
      {
        std::vector<Vector> cols = az;
        cols.push_back(problem.b);
        AZb = DenseMatrix::from_columns(cols, m);
      }
      if ((k - 1) % cfg.sketch.redraw_every == 0) {
        auto mixed = [](Vector lev) {
          double total = 0.0;
          for (double v : lev) total += v;
          const double u = 1.0 / static_cast<double>(lev.size());
          for (double& v : lev) v = 0.9 * (total > 0 ? v / total : u) + 0.1 * u;
          return lev;
        };
        s1 = build_subsampling_sketch(m, sketch_size, mixed(approximate_leverage_scores(AZb)),
                                      cfg.sketch.seed + 7919 * redraws);
        if (cfg.variant == Variant::irw)
          s2 = build_subsampling_sketch(n, std::min(n, sketch_size), mixed(approximate_leverage_scores(WLZ)),
                                        cfg.sketch.seed + 7919 * redraws + 1);
        ++redraws;
      }
      pp.M = s1->apply(DenseMatrix::from_columns(az, m));
      pp.rhs = s1->apply(problem.b);
      ctx.round_inplace(pp.rhs);
      if (cfg.variant == Variant::hybrid) pp.penalty_kind = PenaltyKind::identity;
      if (cfg.variant == Variant::irw) {
        pp.penalty_kind = PenaltyKind::matrix;
        pp.penalty = s2->apply(WLZ);
      }
    } else {
      pp.M = H;
      pp.rhs = Vector(H.rows(), 0.0);
      pp.rhs[0] = beta;
      if (cfg.variant == Variant::hybrid) pp.penalty_kind = PenaltyKind::identity;
      if (cfg.variant == Variant::irw) {
        irw = irw_penalty(WLZ, ctx);
        pp.penalty_kind = PenaltyKind::matrix;
        pp.penalty = irw.upper;
      }
    }

    // regularization parameter
    double lambda = 0.0;
    bool flagged = false;
    if (cfg.variant != Variant::plain) {
      ParamChoice choice;
      switch (cfg.param.kind) {
        case ParamKind::fixed: choice.lambda = cfg.param.fixed_value; break;
        case ParamKind::discrepancy: choice = select_discrepancy(pp, norm2(pp.rhs), noise); break;
        case ParamKind::gcv: choice = select_gcv(pp); break;
        case ParamKind::wgcv: choice = select_wgcv(pp, omega_schedule(cfg.param.omega, k, m)); break;
        case ParamKind::optimal: {
          const TikhonovFamily fam(pp);
          choice = select_optimal([&](double l) { return combine(Z, fam.solve(l), n, Arith::exact()); },
                                  problem.x_true);
          break;
        }
      }
      lambda = choice.lambda;
      flagged = choice.flagged;
    }
    pp.lambda = lambda;

    const ProjectedSolution sol = solve_projected(pp, ctx);
    const Vector& y = sol.y;
    Vector w = combine(Z, y, n, ctx);
    if (!all_finite(y) || !all_finite(w)) {
      trace.halt_reason = "overflow";
      trace.halt_iteration = k;
      break;
    }
    const Vector x = schur ? sys->projector()->complete(w, problem.b) : w;

    IterationRecord rec = ev.make(k, x, lambda);
    rec.rank_warning = sol.rank_deficient || irw.rank_deficient;
    rec.lambda_flagged = flagged;
    rec.step_applies = after.applies - before.applies;
    rec.step_transpose_applies = after.transpose_applies - before.transpose_applies;
    rec.step_dots = after.dots - before.dots;

    // monotonicity diagnostics
    const Vector yp = pad(y_prev, k);
    const bool binding = cfg.variant == Variant::plain || cfg.param.kind == ParamKind::fixed;
    auto residual2 = [&](const Vector& xx) {
      const Vector r = problem.A->apply(xx) - problem.b;
      return dot(r, r);
    };
    MonotonicityReport rep;
    const Vector rhs_full = [&] {
      Vector r(H.rows(), 0.0);
      r[0] = beta;
      return r;
    }();
    auto hhat = [&](const Vector& yy) {
      double v = cfg.sketch.enabled ? quasi_residual2(pp.M, pp.rhs, yy) : quasi_residual2(H, rhs_full, yy);
      if (cfg.variant == Variant::hybrid) v += lambda * dot(yy, yy);
      if (cfg.variant == Variant::irw) {
        const Vector g = matvec(pp.penalty, yy);
        v += lambda * dot(g, g);
      }
      return v;
    };
    double threshold = 0.0;
    KappaSource source = KappaSource::u_pinv;
    if (!cfg.sketch.enabled) {
      if (cfg.variant == Variant::plain) threshold = threshold_prop1(U);
      else if (cfg.variant == Variant::hybrid) threshold = threshold_prop2(U);
      else threshold = threshold_prop3(U, irw.lower);
    } else if (cfg.variant != Variant::irw) {
      source = KappaSource::sketch;
      const auto [hi, lo] = sketch_sigma_extremes(*s1, AZb);
      double k1 = hi * hi, k2 = lo * lo;
      if (cfg.variant == Variant::hybrid) {
        k1 = std::max(k1, 1.0);
        k2 = std::min(k2, 1.0);
      }
      threshold = k2 > 0 ? k1 / k2 - 1.0 : std::numeric_limits<double>::infinity();
    } else {
      source = KappaSource::block;
      DenseMatrix bottom(n, k + 1);
      const double sl = std::sqrt(lambda);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) bottom(i, j) = sl * WLZ(i, j);
      const Vector s = restricted_block_singular_values(*s1, *s2, AZb.stack(bottom));
      const double hi = s.empty() ? 1.0 : s.front(), lo = s.empty() ? 1.0 : s.back();
      threshold = lo > 0 ? (hi * hi) / (lo * lo) - 1.0 : std::numeric_limits<double>::infinity();
    }
    rep = check_threshold(hhat(yp), hhat(detail::pad(y, k)), threshold);
    rep.kappa_source = source;
    if (cfg.variant == Variant::plain) {
      if (schur) {
        const Vector gb = Aeff->apply(w_prev) - beff, ga = Aeff->apply(w) - beff;
        rep.exact_before = dot(gb, gb);
        rep.exact_after = dot(ga, ga);
      } else {
        rep.exact_before = residual2(x_prev);
        rep.exact_after = residual2(x);
      }
    } else if (cfg.variant == Variant::hybrid) {
      rep.exact_before = residual2(x_prev) + lambda * dot(yp, yp);
      rep.exact_after = residual2(x) + lambda * dot(y, y);
    } else {
      const WeightRule r = current_rule();
      rep.exact_before = smoothed_objective(x_prev, *problem.A, problem.b, nullptr, lambda, r);
      rep.exact_after = smoothed_objective(x, *problem.A, problem.b, nullptr, lambda, r);
    }
    rep.binding = binding && (k == 1 || cfg.variant == Variant::plain || lambda == lambda_prev);
    rec.has_report = true;
    rec.report = rep;
    trace.records.push_back(std::move(rec));

    const double prev_res = trace.records[trace.records.size() - 2].res_norm;
    x_prev = x;
    w_prev = w;
    y_prev = y;
    lambda_prev = lambda;
    if (f.broken()) {
      trace.halt_reason = to_string(f.breakdown());
      trace.halt_iteration = k;
      break;
    }
    if (stag.update(prev_res, trace.records.back().res_norm)) {
      trace.halt_reason = "stagnation";
      trace.halt_iteration = k;
      break;
    }
  }
  finish(trace, counters);
  return trace;
}

}  // namespace detail

inline SolverTrace run_fcmrh(const SolverConfig& cfg, const TestProblem& problem) {
  return detail::run_flexible<FlexHessenberg>(cfg, problem, "fcmrh");
}

inline SolverTrace run_flslu(const SolverConfig& cfg, const TestProblem& problem) {
  return detail::run_flexible<FlexGenHessenberg>(cfg, problem, "flslu");
}

// ---------------------------------------------------------------------------
// non-flexible pivoted baselines (plain variant)

/// CMRH: pivoted Hessenberg process on K_k(A, b) with the quasi-residual
/// projected problem. Other variants run through run_fcmrh's identity plan.
inline SolverTrace run_cmrh(const SolverConfig& cfg, const TestProblem& problem) {
  if (cfg.variant != Variant::plain || cfg.sketch.enabled) {
    SolverConfig c = cfg;
    c.method = Method::fcmrh;
    c.plan = std::make_shared<IdentityPlan>(problem.A->cols());
    SolverTrace t = run_fcmrh(c, problem);
    t.method = "cmrh";
    return t;
  }
  validate_config(cfg, problem);
  SolverTrace trace;
  trace.method = "cmrh";
  KernelCounters counters;
  const Arith ctx(cfg.precision, &counters);
  const auto& A = *problem.A;
  const std::size_t n = A.cols();
  const detail::Evaluator ev{&problem, nullptr, WeightRule{2.0, 1.0}, cfg.store_iterates};
  trace.records.push_back(detail::iteration_zero(ev, n));

  PivotVector perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Vector r0 = problem.b;
  ctx.round_inplace(r0);
  std::size_t i0 = detail::pivot_search(r0, perm, 0);
  const double beta = r0[perm[i0]];
  if (!std::isfinite(beta) || beta == 0.0) {
    trace.halt_reason = std::isfinite(beta) ? "breakdown_h" : "overflow";
    trace.halt_iteration = 1;
    detail::finish(trace, counters);
    return trace;
  }
  std::swap(perm[0], perm[i0]);
  ctx.scale_div(r0, beta);
  std::vector<Vector> v{r0};
  std::vector<std::vector<double>> hcols;
  std::string stop;
  detail::StagnationMonitor stag{cfg.stagnation_stop && !cfg.precision};
  Vector x_prev(n, 0.0), y_prev;

  for (std::size_t k = 1; k <= cfg.kmax; ++k) {
    const auto before = detail::CounterSnapshot::of(counters);
    Vector u = A.apply(v[k - 1], ctx);
    const double ref = Arith::amax(u);
    std::vector<double> col;
    for (std::size_t j = 0; j < k; ++j) {
      const double h = cfg.factorization.coefficient_sign * u[perm[j]];
      col.push_back(h);
      if (h != 0.0) ctx.axpy_neg(h, v[j], u);
    }
    bool broke = false;
    if (k >= n) {
      stop = "exhausted";
      broke = true;
      col.push_back(0.0);
    } else {
      const std::size_t i = detail::pivot_search(u, perm, k);
      const double pv = u[perm[i]];
      if (!std::isfinite(pv)) {
        stop = "overflow";
        broke = true;
        col.push_back(0.0);
      } else if (pv == 0.0 || std::fabs(pv) <= cfg.factorization.breakdown_tol * ref) {
        stop = "breakdown_h";
        broke = true;
        col.push_back(0.0);
      } else {
        std::swap(perm[k], perm[i]);
        ctx.scale_div(u, pv);
        col.push_back(pv);
        v.push_back(std::move(u));
      }
    }
    hcols.push_back(std::move(col));
    const auto after = detail::CounterSnapshot::of(counters);

    DenseMatrix H(v.size(), k);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < hcols[j].size() && i < H.rows(); ++i) H(i, j) = hcols[j][i];
    ProjectedProblem pp{H, Vector(H.rows(), 0.0), PenaltyKind::none, {}, 0.0};
    pp.rhs[0] = beta;
    const ProjectedSolution sol = solve_projected(pp, ctx);
    const std::vector<Vector> Z(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
    const Vector x = detail::combine(Z, sol.y, n, ctx);
    if (!detail::all_finite(sol.y) || !detail::all_finite(x)) {
      trace.halt_reason = "overflow";
      trace.halt_iteration = k;
      break;
    }
    IterationRecord rec = ev.make(k, x, 0.0);
    rec.rank_warning = sol.rank_deficient;
    rec.step_applies = after.applies - before.applies;
    rec.step_transpose_applies = after.transpose_applies - before.transpose_applies;
    rec.step_dots = after.dots - before.dots;
    auto res2 = [&](const Vector& xx) {
      const Vector r = A.apply(xx) - problem.b;
      return dot(r, r);
    };
    rec.report = detail::plain_report(H, beta, DenseMatrix::from_columns(v, n), y_prev, sol.y, res2(x_prev), res2(x));
    rec.has_report = true;
    trace.records.push_back(std::move(rec));
    const double prev_res = trace.records[trace.records.size() - 2].res_norm;
    x_prev = x;
    y_prev = sol.y;
    if (broke) {
      trace.halt_reason = stop;
      trace.halt_iteration = k;
      break;
    }
    if (stag.update(prev_res, trace.records.back().res_norm)) {
      trace.halt_reason = "stagnation";
      trace.halt_iteration = k;
      break;
    }
  }
  detail::finish(trace, counters);
  return trace;
}

/// LSLU: pivoted generalized Hessenberg process on A and A^T with the
/// quasi-residual projected problem.
inline SolverTrace run_lslu(const SolverConfig& cfg, const TestProblem& problem) {
  if (cfg.variant != Variant::plain || cfg.sketch.enabled) {
    SolverConfig c = cfg;
    c.method = Method::flslu;
    c.plan = std::make_shared<IdentityPlan>(problem.A->cols());
    SolverTrace t = run_flslu(c, problem);
    t.method = "lslu";
    return t;
  }
  validate_config(cfg, problem);
  SolverTrace trace;
  trace.method = "lslu";
  KernelCounters counters;
  const Arith ctx(cfg.precision, &counters);
  const auto& A = *problem.A;
  const std::size_t m = A.rows(), n = A.cols();
  const double sign = cfg.factorization.coefficient_sign, tol = cfg.factorization.breakdown_tol;
  const detail::Evaluator ev{&problem, nullptr, WeightRule{2.0, 1.0}, cfg.store_iterates};
  trace.records.push_back(detail::iteration_zero(ev, n));

  PivotVector q(m), g(n);
  std::iota(q.begin(), q.end(), std::size_t{0});
  std::iota(g.begin(), g.end(), std::size_t{0});
  auto halt_now = [&](const std::string& why) {
    trace.halt_reason = why;
    trace.halt_iteration = 1;
    detail::finish(trace, counters);
    return trace;
  };

  Vector r0 = problem.b;
  ctx.round_inplace(r0);
  const std::size_t i0 = detail::pivot_search(r0, q, 0);
  const double beta = r0[q[i0]];
  if (!std::isfinite(beta)) return halt_now("overflow");
  if (beta == 0.0) return halt_now("breakdown_h");
  std::swap(q[0], q[i0]);
  ctx.scale_div(r0, beta);
  std::vector<Vector> u{r0}, v;
  {
    Vector t = A.apply_transpose(u[0], ctx);
    const double ref = Arith::amax(t);
    const std::size_t i = detail::pivot_search(t, g, 0);
    const double pv = t[g[i]];
    if (!std::isfinite(pv)) return halt_now("overflow");
    if (pv == 0.0 || std::fabs(pv) <= tol * ref) return halt_now("breakdown_t");
    std::swap(g[0], g[i]);
    ctx.scale_div(t, pv);
    v.push_back(std::move(t));
  }

  std::vector<std::vector<double>> hcols;
  std::string stop;
  detail::StagnationMonitor stag{cfg.stagnation_stop && !cfg.precision};
  Vector x_prev(n, 0.0), y_prev;

  // Eliminates c against basis at pivots perm[0..k) and normalizes at
  // position k; returns the pivot (0 on breakdown) and the halt reason.
  auto extend = [&](Vector& c, const std::vector<Vector>& basis, PivotVector& perm, std::size_t k, double ref,
                    const char* zero_kind, std::vector<double>* coef) -> std::pair<double, std::string> {
    for (std::size_t j = 0; j < k; ++j) {
      const double h = sign * c[perm[j]];
      if (coef) coef->push_back(h);
      if (h != 0.0) ctx.axpy_neg(h, basis[j], c);
    }
    if (k >= perm.size()) return {0.0, "exhausted"};
    const std::size_t i = detail::pivot_search(c, perm, k);
    const double pv = c[perm[i]];
    if (!std::isfinite(pv)) return {0.0, "overflow"};
    if (pv == 0.0 || std::fabs(pv) <= tol * ref) return {0.0, zero_kind};
    std::swap(perm[k], perm[i]);
    ctx.scale_div(c, pv);
    return {pv, ""};
  };

  for (std::size_t k = 1; k <= cfg.kmax; ++k) {
    const auto before = detail::CounterSnapshot::of(counters);
    Vector c = A.apply(v[k - 1], ctx);
    std::vector<double> col;
    auto [hv, why] = extend(c, u, q, k, Arith::amax(c), "breakdown_h", &col);
    col.push_back(hv);
    hcols.push_back(std::move(col));
    bool broke = !why.empty();
    if (!broke) {
      u.push_back(std::move(c));
      Vector t = A.apply_transpose(u.back(), ctx);
      auto [tpv, twhy] = extend(t, v, g, k, Arith::amax(t), "breakdown_t", nullptr);
      if (!twhy.empty()) {
        broke = true;
        why = twhy;
      } else {
        v.push_back(std::move(t));
      }
    }
    const auto after = detail::CounterSnapshot::of(counters);

    DenseMatrix H(u.size(), k);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < hcols[j].size() && i < H.rows(); ++i) H(i, j) = hcols[j][i];
    ProjectedProblem pp{H, Vector(H.rows(), 0.0), PenaltyKind::none, {}, 0.0};
    pp.rhs[0] = beta;
    const ProjectedSolution sol = solve_projected(pp, ctx);
    const std::vector<Vector> Z(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
    const Vector x = detail::combine(Z, sol.y, n, ctx);
    if (!detail::all_finite(sol.y) || !detail::all_finite(x)) {
      trace.halt_reason = "overflow";
      trace.halt_iteration = k;
      break;
    }
    IterationRecord rec = ev.make(k, x, 0.0);
    rec.rank_warning = sol.rank_deficient;
    rec.step_applies = after.applies - before.applies;
    rec.step_transpose_applies = after.transpose_applies - before.transpose_applies;
    rec.step_dots = after.dots - before.dots;
    auto res2 = [&](const Vector& xx) {
      const Vector r = A.apply(xx) - problem.b;
      return dot(r, r);
    };
    rec.report = detail::plain_report(H, beta, DenseMatrix::from_columns(u, m), y_prev, sol.y, res2(x_prev), res2(x));
    rec.has_report = true;
    trace.records.push_back(std::move(rec));
    const double prev_res = trace.records[trace.records.size() - 2].res_norm;
    x_prev = x;
    y_prev = sol.y;
    if (broke) {
      trace.halt_reason = why;
      trace.halt_iteration = k;
      break;
    }
    if (stag.update(prev_res, trace.records.back().res_norm)) {
      trace.halt_reason = "stagnation";
      trace.halt_iteration = k;
      break;
    }
  }
  detail::finish(trace, counters);
  return trace;
}

// ---------------------------------------------------------------------------
// inner-product baselines

/// GMRES with modified Gram-Schmidt Arnoldi. Every norm and inner product
/// runs in the method's arithmetic, so reduced formats can overflow.
inline SolverTrace run_gmres(const SolverConfig& cfg, const TestProblem& problem) {
  validate_config(cfg, problem);
  SolverTrace trace;
  trace.method = "gmres";
  KernelCounters counters;
  const Arith ctx(cfg.precision, &counters);
  const auto& A = *problem.A;
  const std::size_t n = A.cols();
  const detail::Evaluator ev{&problem, nullptr, WeightRule{2.0, 1.0}, cfg.store_iterates};
  trace.records.push_back(detail::iteration_zero(ev, n));

  Vector r0 = problem.b;
  ctx.round_inplace(r0);
  const double beta = ctx.norm2(r0);
  if (!std::isfinite(beta) || beta == 0.0) {
    trace.halt_reason = std::isfinite(beta) ? "breakdown_h" : "overflow";
    trace.halt_iteration = 1;
    detail::finish(trace, counters);
    return trace;
  }
  ctx.scale_div(r0, beta);
  std::vector<Vector> v{r0};
  std::vector<std::vector<double>> hcols;
  detail::StagnationMonitor stag{cfg.stagnation_stop && !cfg.precision};

  for (std::size_t k = 1; k <= cfg.kmax; ++k) {
    const auto before = detail::CounterSnapshot::of(counters);
    Vector w = A.apply(v[k - 1], ctx);
    const double ref = ctx.norm2(w);
    std::vector<double> col;
    for (std::size_t j = 0; j < k; ++j) {
      const double h = ctx.dot(w, v[j]);
      col.push_back(h);
      ctx.axpy_neg(h, v[j], w);
    }
    const double hn = ctx.norm2(w);
    std::string stop;
    if (!std::isfinite(hn) || !std::isfinite(ref) || !detail::all_finite(col)) stop = "overflow";
    else if (k >= n) stop = "exhausted";
    else if (hn == 0.0 || hn <= cfg.factorization.breakdown_tol * ref) stop = "breakdown_h";
    if (stop == "overflow") {
      trace.halt_reason = stop;
      trace.halt_iteration = k;
      break;
    }
    col.push_back(stop.empty() ? hn : 0.0);
    hcols.push_back(std::move(col));
    if (stop.empty()) {
      ctx.scale_div(w, hn);
      v.push_back(std::move(w));
    }
    const auto after = detail::CounterSnapshot::of(counters);

    DenseMatrix H(v.size(), k);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < hcols[j].size() && i < H.rows(); ++i) H(i, j) = hcols[j][i];
    Vector rhs(H.rows(), 0.0);
    rhs[0] = beta;
    const auto ls = qr_least_squares(H, rhs, ctx);
    const std::vector<Vector> V(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
    const Vector x = detail::combine(V, ls.x, n, ctx);
    if (!detail::all_finite(ls.x) || !detail::all_finite(x)) {
      trace.halt_reason = "overflow";
      trace.halt_iteration = k;
      break;
    }
    IterationRecord rec = ev.make(k, x, 0.0);
    rec.rank_warning = ls.rank_deficient;
    rec.step_applies = after.applies - before.applies;
    rec.step_transpose_applies = after.transpose_applies - before.transpose_applies;
    rec.step_dots = after.dots - before.dots;
    trace.records.push_back(std::move(rec));
    const double prev_res = trace.records[trace.records.size() - 2].res_norm;
    if (!stop.empty()) {
      trace.halt_reason = stop;
      trace.halt_iteration = k;
      break;
    }
    if (stag.update(prev_res, trace.records.back().res_norm)) {
      trace.halt_reason = "stagnation";
      trace.halt_iteration = k;
      break;
    }
  }
  detail::finish(trace, counters);
  return trace;
}

/// LSQR (Golub-Kahan bidiagonalization with Givens updates).
inline SolverTrace run_lsqr(const SolverConfig& cfg, const TestProblem& problem) {
  validate_config(cfg, problem);
  SolverTrace trace;
  trace.method = "lsqr";
  KernelCounters counters;
  const Arith ctx(cfg.precision, &counters);
  const auto& A = *problem.A;
  const std::size_t n = A.cols();
  const detail::Evaluator ev{&problem, nullptr, WeightRule{2.0, 1.0}, cfg.store_iterates};
  trace.records.push_back(detail::iteration_zero(ev, n));
  auto halt_at = [&](std::size_t k, const std::string& why) {
    trace.halt_reason = why;
    trace.halt_iteration = k;
  };

  Vector u = problem.b;
  ctx.round_inplace(u);
  double beta = ctx.norm2(u);
  if (!std::isfinite(beta) || beta == 0.0) {
    halt_at(1, std::isfinite(beta) ? "breakdown_h" : "overflow");
    detail::finish(trace, counters);
    return trace;
  }
  ctx.scale_div(u, beta);
  Vector v = A.apply_transpose(u, ctx);
  double alpha = ctx.norm2(v);
  if (!std::isfinite(alpha) || alpha == 0.0) {
    halt_at(1, std::isfinite(alpha) ? "breakdown_t" : "overflow");
    detail::finish(trace, counters);
    return trace;
  }
  ctx.scale_div(v, alpha);
  Vector w = v, x(n, 0.0);
  double phibar = beta, rhobar = alpha;
  detail::StagnationMonitor stag{cfg.stagnation_stop && !cfg.precision};

  for (std::size_t k = 1; k <= cfg.kmax; ++k) {
    const auto before = detail::CounterSnapshot::of(counters);
    Vector au = A.apply(v, ctx);
    ctx.axpy_neg(alpha, u, au);
    u = std::move(au);
    beta = ctx.norm2(u);
    std::string stop;
    if (!std::isfinite(beta)) {
      halt_at(k, "overflow");
      break;
    }
    if (beta > 0) {
      ctx.scale_div(u, beta);
      Vector atv = A.apply_transpose(u, ctx);
      ctx.axpy_neg(beta, v, atv);
      alpha = ctx.norm2(atv);
      if (!std::isfinite(alpha)) {
        halt_at(k, "overflow");
        break;
      }
      if (alpha > 0) ctx.scale_div(atv, alpha);
      else stop = "breakdown_t";
      v = std::move(atv);
    } else {
      stop = "breakdown_h";
    }
    const auto after = detail::CounterSnapshot::of(counters);

    const double rho = ctx.sqrt(ctx.add(ctx.mul(rhobar, rhobar), ctx.mul(beta, beta)));
    const double c = ctx.div(rhobar, rho), s = ctx.div(beta, rho);
    const double theta = ctx.mul(s, alpha);
    rhobar = -ctx.mul(c, alpha);
    const double phi = ctx.mul(c, phibar);
    phibar = ctx.mul(s, phibar);
    ctx.axpy(ctx.div(phi, rho), w, x);
    const double tr = ctx.div(theta, rho);
    for (std::size_t i = 0; i < n; ++i) w[i] = ctx.fnms(v[i], tr, w[i]);
    if (!detail::all_finite(x)) {
      halt_at(k, "overflow");
      break;
    }
    IterationRecord rec = ev.make(k, x, 0.0);
    rec.step_applies = after.applies - before.applies;
    rec.step_transpose_applies = after.transpose_applies - before.transpose_applies;
    rec.step_dots = after.dots - before.dots;
    trace.records.push_back(std::move(rec));
    const double prev_res = trace.records[trace.records.size() - 2].res_norm;
    if (!stop.empty()) {
      halt_at(k, stop);
      break;
    }
    if (stag.update(prev_res, trace.records.back().res_norm)) {
      halt_at(k, "stagnation");
      break;
    }
  }
  detail::finish(trace, counters);
  return trace;
}

inline SolverTrace run_solver(const SolverConfig& cfg, const TestProblem& problem) {
  switch (cfg.method) {
    case Method::fcmrh: return run_fcmrh(cfg, problem);
    case Method::flslu: return run_flslu(cfg, problem);
    case Method::cmrh: return run_cmrh(cfg, problem);
    case Method::lslu: return run_lslu(cfg, problem);
    case Method::gmres: return run_gmres(cfg, problem);
    case Method::lsqr: return run_lsqr(cfg, problem);
  }
  throw ConfigError("unknown method");
}

}  // namespace fipk
