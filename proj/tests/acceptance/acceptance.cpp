// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Oracles here are written independently of the library paths
// they check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "../gen.hpp"
#include "fipk/diagnostics.hpp"
#include "fipk/factorizations.hpp"
#include "fipk/projected.hpp"
#include "fipk/regparam.hpp"
#include "fipk/selftest.hpp"
#include "fipk/sketching.hpp"
#include "fipk/solvers.hpp"

using namespace fipk;
using fipk::testing::gaussian_matrix;
using fipk::testing::gaussian_vector;
using fipk::testing::max_abs_diff;
using fipk::testing::oracle_inverse;
using fipk::testing::oracle_normal_equations;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream note;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) note << "first failure: " << what << "; ";
      pass = false;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Diagonal plan with entries in [0.5, 2], independent of the library helper.
struct DiagonalPlanOracle : PreconditionerPlan {
  std::mt19937_64 rng;
  std::size_t n;
  DiagonalPlanOracle(std::size_t n_, std::uint64_t seed) : rng(seed), n(n_) {}
  PreconditionerPtr make(std::size_t, std::span<const double>) override {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    Vector d(n);
    for (double& v : d) v = u(rng);
    return std::make_shared<DiagonalPreconditioner>(std::move(d));
  }
};

DenseMatrix columns_to_matrix(const std::vector<Vector>& cols, std::size_t rows, std::size_t count) {
  DenseMatrix m(rows, count);
  for (std::size_t j = 0; j < count; ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = cols[j][i];
  return m;
}

// Frobenius norm of X*Y - W*C computed entry by entry.
double residual_frobenius(const DenseMatrix& X, const DenseMatrix& Y, const DenseMatrix& W, const DenseMatrix& C) {
  double s = 0.0;
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < Y.cols(); ++j) {
      double a = 0.0, b = 0.0;
      for (std::size_t l = 0; l < X.cols(); ++l) a += X(i, l) * Y(l, j);
      for (std::size_t l = 0; l < W.cols(); ++l) b += W(i, l) * C(l, j);
      s += (a - b) * (a - b);
    }
  return std::sqrt(s);
}

// max over leading rows of |(Pi M)(i, j) - delta_ij| for i <= j.
double pivoted_unit_lower_gap(const std::vector<Vector>& cols, const PivotVector& perm) {
  double gap = 0.0;
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i <= j && i < perm.size(); ++i)
      gap = std::max(gap, std::fabs(cols[j][perm[i]] - (i == j ? 1.0 : 0.0)));
  return gap;
}

// ---------------------------------------------------------------------------

bool criteria_1_2(Outcome& c1, Outcome& c2) {
  double worst_id = 0.0, worst_lower = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    {
      const DenseMatrix A = gaussian_matrix(40, 40, 1000 + s);
      const Vector b = gaussian_vector(40, 2000 + s);
      DiagonalPlanOracle plan(40, 3000 + s);
      FlexHessenberg f(std::make_shared<DenseOperator>(A), b);
      for (std::size_t k = 1; k <= 20 && !f.broken(); ++k) {
        f.step(*plan.make(k, Vector(40, 0.0)));
        const std::size_t kk = f.k(), nb = f.basis().size();
        const DenseMatrix Z = columns_to_matrix(f.directions(), 40, kk);
        const DenseMatrix U = columns_to_matrix(f.basis(), 40, nb);
        const double scale = A.frobenius() * std::max({1.0, Z.max_abs(), U.max_abs()});
        const double e = residual_frobenius(A, Z, U, f.H()) / scale;
        worst_id = std::max(worst_id, e);
        c1.require(e <= 1e-10, "hessenberg seed " + std::to_string(s) + " k " + std::to_string(k));
        const double g = pivoted_unit_lower_gap(f.basis(), f.pivots());
        worst_lower = std::max(worst_lower, g);
        c2.require(g <= 1e-12, "hessenberg pivots seed " + std::to_string(s));
      }
    }
    {
      const DenseMatrix A = gaussian_matrix(40, 25, 4000 + s);
      const Vector b = gaussian_vector(40, 5000 + s);
      DiagonalPlanOracle plan(25, 6000 + s);
      FlexGenHessenberg f(std::make_shared<DenseOperator>(A), b);
      const DenseMatrix At = A.transpose();
      for (std::size_t k = 1; k <= 20 && !f.broken(); ++k) {
        f.step(*plan.make(k, Vector(25, 0.0)));
        const std::size_t kk = f.k(), nu = f.basis_u().size(), nv = f.basis_v().size();
        const DenseMatrix Z = columns_to_matrix(f.directions(), 25, kk);
        const DenseMatrix U = columns_to_matrix(f.basis_u(), 40, nu);
        const DenseMatrix V = columns_to_matrix(f.basis_v(), 25, nv);
        const double scale = A.frobenius() * std::max({1.0, Z.max_abs(), U.max_abs(), V.max_abs()});
        const double e1 = residual_frobenius(A, Z, U, f.H()) / scale;
        const DenseMatrix T = f.T();
        const std::size_t nt = std::min(nu, T.cols());
        const double e2 =
            residual_frobenius(At, U.block(0, 0, 40, nt), V, T.block(0, 0, nv, nt)) / scale;
        worst_id = std::max({worst_id, e1, e2});
        c1.require(e1 <= 1e-10 && e2 <= 1e-10, "generalized seed " + std::to_string(s) + " k " + std::to_string(k));
        const double g = std::max(pivoted_unit_lower_gap(f.basis_u(), f.pivots_q()),
                                  pivoted_unit_lower_gap(f.basis_v(), f.pivots_g()));
        worst_lower = std::max(worst_lower, g);
        c2.require(g <= 1e-12, "generalized pivots seed " + std::to_string(s));
      }
    }
  }
  c1.note << "worst scaled identity error " << worst_id;
  c2.note << "worst unit-lower deviation " << worst_lower;
  return c1.pass && c2.pass;
}

TestProblem spectra_256() {
  ProblemOptions o;
  o.size = 256;
  return make_problem(ProblemKind::spectra, o);
}

TestProblem ct_32() {
  ProblemOptions o;
  o.size = 32;
  o.n_rays = 45;
  o.n_angles = 18;
  return make_problem(ProblemKind::ct, o);
}

bool bitwise_same(const SolverTrace& a, const SolverTrace& b) {
  if (a.records.size() != b.records.size() || a.halt_reason != b.halt_reason) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& x = a.records[i];
    const auto& y = b.records[i];
    if (x.res_norm != y.res_norm || x.x.size() != y.x.size()) return false;
    for (std::size_t j = 0; j < x.x.size(); ++j)
      if (std::memcmp(&x.x[j], &y.x[j], sizeof(double)) != 0) return false;
  }
  return true;
}

void criterion_3(Outcome& out) {
  const TestProblem sp = spectra_256(), ct = ct_32();
  SolverConfig c;
  c.kmax = 20;
  c.method = Method::cmrh;
  const SolverTrace cm = run_cmrh(c, sp);
  c.method = Method::fcmrh;
  c.plan = std::make_shared<IdentityPlan>(sp.A->cols());
  const SolverTrace fc = run_fcmrh(c, sp);
  out.require(cm.iterations() == 20, "cmrh ran " + std::to_string(cm.iterations()) + " iterations");
  out.require(bitwise_same(cm, fc), "fcmrh vs cmrh on spectra");
  c = SolverConfig{};
  c.kmax = 20;
  c.method = Method::lslu;
  const SolverTrace ls = run_lslu(c, ct);
  c.method = Method::flslu;
  c.plan = std::make_shared<IdentityPlan>(ct.A->cols());
  const SolverTrace fl = run_flslu(c, ct);
  out.require(ls.iterations() == 20, "lslu ran " + std::to_string(ls.iterations()) + " iterations");
  out.require(bitwise_same(ls, fl), "flslu vs lslu on ct");
  out.note << "spectra " << cm.iterations() << " and ct " << ls.iterations() << " iterations compared";
}

std::vector<std::pair<std::string, SolverConfig>> flexible_runs(bool fixed_lambda) {
  std::vector<std::pair<std::string, SolverConfig>> out;
  for (Method m : {Method::fcmrh, Method::flslu, Method::cmrh, Method::lslu})
    for (Variant v : {Variant::plain, Variant::hybrid, Variant::irw})
      for (bool sketch : {false, true}) {
        const bool flex = m == Method::fcmrh || m == Method::flslu;
        if (!flex && (v != Variant::plain || sketch)) continue;
        SolverConfig c;
        c.method = m;
        c.variant = v;
        c.kmax = 20;
        c.sketch.enabled = sketch;
        if (flex) c.prior = parse_prior("l1");
        c.param = parse_param_rule(fixed_lambda ? "fixed:0.01" : "gcv");
        out.emplace_back(to_string(m) + "/" + to_string(v) + (sketch ? "/sketch" : ""), c);
      }
  return out;
}

const TestProblem& problem_for(Method m, const TestProblem& sq, const TestProblem& rect) {
  return (m == Method::flslu || m == Method::lslu) ? rect : sq;
}

void criterion_4(Outcome& out) {
  const TestProblem sp = spectra_256(), ct = ct_32();
  std::size_t steps = 0;
  for (const auto& [name, c] : flexible_runs(false)) {
    const SolverTrace t = run_solver(c, problem_for(c.method, sp, ct));
    const bool gen = c.method == Method::flslu || c.method == Method::lslu;
    for (const auto& r : t.records) {
      if (r.iter == 0) continue;
      ++steps;
      out.require(r.step_dots == 0, name + " dots at iteration " + std::to_string(r.iter));
      out.require(r.step_applies == 1, name + " applies at iteration " + std::to_string(r.iter));
      out.require(r.step_transpose_applies == (gen ? 1u : 0u),
                  name + " transpose applies at iteration " + std::to_string(r.iter));
    }
  }
  out.note << steps << " basis extensions checked";
}

void criterion_5(Outcome& out) {
  const TestProblem sp = spectra_256(), ct = ct_32();
  ProblemOptions po;
  po.size = 256;
  const TestProblem pw = make_problem(ProblemKind::piecewise, po);
  std::size_t reports = 0, met = 0, violations = 0;
  auto tally = [&](const std::string& name, const SolverTrace& t) {
    for (const auto& r : t.records) {
      if (!r.has_report) continue;
      ++reports;
      met += r.report.condition_met;
      if (r.report.violated()) {
        ++violations;
        out.require(false, name + " iteration " + std::to_string(r.iter));
      }
    }
  };
  for (const auto& [name, c] : flexible_runs(true)) tally(name, run_solver(c, problem_for(c.method, sp, ct)));
  SolverConfig tv;
  tv.method = Method::fcmrh;
  tv.kmax = 20;
  tv.prior = parse_prior("tv1d");
  tally("fcmrh/tv1d", run_solver(tv, pw));
  out.require(reports > 0, "no monotonicity reports recorded");
  out.note << reports << " reports, " << met << " with condition met, " << violations << " violations";
}

void criterion_6(Outcome& out) {
  std::size_t runs = 0;
  double worst_grad = 0.0;
  for (double p : {0.5, 1.0})
    for (double tau : {1e-2, 1e-4})
      for (std::uint64_t s = 0; s < 20; ++s) {
        const std::size_t n = 10;
        const auto m = make_majorant(gaussian_matrix(n, n, 7000 + s), gaussian_vector(n, 7100 + s),
                                     DenseMatrix::identity(n), WeightRule{p, tau}, 0.1,
                                     gaussian_vector(n, 7200 + s));
        const MajorantCheck chk = verify_majorant(m, smoothed_functional(m), 50, 7300 + s);
        ++runs;
        worst_grad = std::max(worst_grad, chk.gradient_error);
        std::ostringstream tag;
        tag << "p " << p << " tau " << tau << " seed " << s << " (anchor " << chk.anchor_error << ", gradient "
            << chk.gradient_error << ", domination " << chk.worst_domination << ")";
        out.require(chk.passed(), tag.str());
      }
  out.note << runs << " instances, worst gradient error " << worst_grad;
}

DenseMatrix upper_hessenberg(std::size_t k, std::uint64_t seed) {
  DenseMatrix h = gaussian_matrix(k + 1, k, seed);
  for (std::size_t i = 0; i < k + 1; ++i)
    for (std::size_t j = 0; j + 1 < i; ++j) h(i, j) = 0.0;
  return h;
}

// Unit lower / upper factors of Pi M by textbook elimination, for the IRW oracle.
DenseMatrix oracle_lu_upper(DenseMatrix a) {
  const std::size_t r = a.rows(), c = a.cols();
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t p = j;
    for (std::size_t i = j + 1; i < r; ++i)
      if (std::fabs(a(i, j)) > std::fabs(a(p, j))) p = i;
    for (std::size_t l = 0; l < c; ++l) std::swap(a(j, l), a(p, l));
    for (std::size_t i = j + 1; i < r; ++i) {
      const double f = a(i, j) / a(j, j);
      for (std::size_t l = j; l < c; ++l) a(i, l) -= f * a(j, l);
    }
  }
  DenseMatrix u(c, c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i; j < c; ++j) u(i, j) = a(i, j);
  return u;
}

void criterion_7(Outcome& out) {
  double worst = 0.0;
  auto check = [&](std::span<const double> got, std::span<const double> want, const std::string& what) {
    double nw = 0.0;
    for (double v : want) nw = std::max(nw, std::fabs(v));
    const double e = max_abs_diff(got, want) / (1.0 + nw);
    worst = std::max(worst, e);
    out.require(e <= 1e-10, what);
  };
  for (std::uint64_t s = 0; s < 100; ++s) {
    const std::size_t k = 1 + s % 8;
    const double lambda = std::pow(10.0, -3.0 + 0.06 * static_cast<double>(s));
    ProjectedProblem pp;
    pp.M = upper_hessenberg(k, 8000 + s);
    pp.rhs = Vector(k + 1, 0.0);
    pp.rhs[0] = 1.0 + static_cast<double>(s % 4);
    pp.lambda = lambda;
    const std::string tag = " instance " + std::to_string(s);
    check(solve_hybrid(pp), oracle_normal_equations(pp.M, pp.rhs, DenseMatrix::identity(k), lambda), "hybrid" + tag);
    const DenseMatrix WLZ = gaussian_matrix(12, k, 8100 + s);
    check(solve_irw(pp, WLZ), oracle_normal_equations(pp.M, pp.rhs, oracle_lu_upper(WLZ), lambda), "irw" + tag);
    // sketched: tall restricted problem S A Z y ~ S b
    const DenseMatrix AZ = gaussian_matrix(30, k, 8200 + s);
    const Vector b = gaussian_vector(30, 8300 + s);
    const Sketch sk = build_subsampling_sketch(30, 3 * k + 4, 8400 + s);
    ProjectedProblem sp;
    sp.M = sk.apply(AZ);
    sp.rhs = sk.apply(b);
    sp.lambda = lambda;
    check(solve_sketched(sp, Variant::plain), oracle_normal_equations(sp.M, sp.rhs, DenseMatrix(), 0.0),
          "sketched plain" + tag);
    check(solve_sketched(sp, Variant::hybrid),
          oracle_normal_equations(sp.M, sp.rhs, DenseMatrix::identity(k), lambda), "sketched hybrid" + tag);
    sp.penalty_kind = PenaltyKind::matrix;
    sp.penalty = gaussian_matrix(k + 2, k, 8500 + s);
    check(solve_sketched(sp, Variant::irw), oracle_normal_equations(sp.M, sp.rhs, sp.penalty, lambda),
          "sketched irw" + tag);
  }
  double worst_full = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const DenseMatrix AZ = gaussian_matrix(40, 5, 8600 + s);
    const Vector b = gaussian_vector(40, 8700 + s);
    const Sketch sk = build_subsampling_sketch(40, 40, 8800 + s);
    ProjectedProblem sp;
    sp.M = sk.apply(AZ);
    sp.rhs = sk.apply(b);
    // restricted least squares through the normal equations
    const Vector want = matvec(oracle_inverse(AZ.transpose() * AZ), matvec_transpose(AZ, b));
    const double e = max_abs_diff(solve_sketched(sp, Variant::plain), want);
    worst_full = std::max(worst_full, e);
    out.require(e <= 1e-12, "full sampling seed " + std::to_string(s));
  }
  out.note << "worst oracle gap " << worst << ", worst full-sampling gap " << worst_full;
}

// Tikhonov quantities of min |M y - rhs|^2 + lambda |y|^2 from the normal equations.
struct TikhonovOracle {
  DenseMatrix M;
  Vector rhs;
  DenseMatrix inv(double l) const {
    DenseMatrix S = M.transpose() * M;
    for (std::size_t i = 0; i < S.rows(); ++i) S(i, i) += l;
    return oracle_inverse(S);
  }
  double residual(double l) const {
    const Vector r = matvec(M, matvec(inv(l), matvec_transpose(M, rhs))) - rhs;
    return std::sqrt(dot(r, r));
  }
  double wgcv(double l, double omega) const {
    const DenseMatrix infl = M * (inv(l) * M.transpose());
    double tr = 0.0;
    for (std::size_t i = 0; i < infl.rows(); ++i) tr += infl(i, i);
    const double den = static_cast<double>(M.rows()) - omega * tr;
    const double r = residual(l);
    return static_cast<double>(M.cols()) * r * r / (den * den);
  }
};

void criterion_8(Outcome& out) {
  constexpr double lo = -12.0, hi = 4.0;
  double worst_cells = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const TikhonovOracle o{gaussian_matrix(6, 4, 9000 + s), gaussian_vector(6, 9100 + s)};
    ProjectedProblem pp;
    pp.M = o.M;
    pp.rhs = o.rhs;
    pp.penalty_kind = PenaltyKind::identity;
    const double bn = norm2(o.rhs);
    // discrepancy target halfway between the reachable residual ratios
    const double tau = 0.5 * (o.residual(0.0) / bn + o.residual(std::pow(10.0, hi)) / bn);
    const ParamChoice dp = select_discrepancy(pp, bn, tau);
    {
      const std::size_t N = 1000000;
      const double cell = (hi - lo) / static_cast<double>(N - 1);
      // the ratio is monotone in lambda: bisect over grid indices
      std::size_t a = 0, b = N - 1;
      auto ratio = [&](std::size_t i) { return o.residual(std::pow(10.0, lo + cell * static_cast<double>(i))) / bn; };
      while (b - a > 1) {
        const std::size_t mid = (a + b) / 2;
        (ratio(mid) < tau ? a : b) = mid;
      }
      const std::size_t best = std::fabs(ratio(a) - tau) <= std::fabs(ratio(b) - tau) ? a : b;
      const double t_star = lo + cell * static_cast<double>(best);
      const double cells = std::fabs(std::log10(dp.lambda) - t_star) / cell;
      worst_cells = std::max(worst_cells, cells);
      out.require(!dp.flagged && cells <= 1.0 + 1e-6, "discrepancy seed " + std::to_string(s));
    }
    for (double omega : {1.0, 0.5, 0.25}) {
      const ParamChoice w = select_wgcv(pp, omega);
      const std::size_t N = 100000;
      const double cell = (hi - lo) / static_cast<double>(N - 1);
      double best = std::numeric_limits<double>::infinity(), t_star = lo;
      for (std::size_t i = 0; i < N; ++i) {
        const double t = lo + cell * static_cast<double>(i);
        const double v = o.wgcv(std::pow(10.0, t), omega);
        if (v < best) {
          best = v;
          t_star = t;
        }
      }
      const double cells = std::fabs(std::log10(w.lambda) - t_star) / cell;
      worst_cells = std::max(worst_cells, cells);
      out.require(cells <= 1.0 + 1e-6, "wgcv omega " + std::to_string(omega) + " seed " + std::to_string(s));
    }
    out.require(select_wgcv(pp, 1.0).lambda == select_gcv(pp).lambda, "wgcv(1) != gcv seed " + std::to_string(s));
  }
  out.note << "worst distance " << worst_cells << " grid cells";
}

void criterion_9(Outcome& out) {
  const TestProblem sp = spectra_256();
  SolverConfig c;
  c.kmax = 20;
  c.precision = ChopFormat::q43();
  c.method = Method::gmres;
  const SolverTrace g = run_gmres(c, sp);
  out.require(g.halt_reason == "overflow" && g.halt_iteration == 1,
              "q43 gmres halted with " + g.halt_reason + " at " + std::to_string(g.halt_iteration));
  c.method = Method::cmrh;
  const SolverTrace cm = run_cmrh(c, sp);
  c.method = Method::fcmrh;
  c.prior = parse_prior("l1");
  const SolverTrace fc = run_fcmrh(c, sp);
  const double ec = cm.min_rel_error().first, ef = fc.min_rel_error().first;
  out.require(cm.iterations() >= 15 && fc.iterations() >= 15, "q43 cmrh/fcmrh iteration counts");
  out.require(ec < 1 && ef < 1, "q43 min relative errors below 1");
  out.require(ef <= ec, "q43 fcmrh not better than cmrh");
  out.note << "q43 cmrh " << cm.iterations() << " it err " << ec << ", fcmrh " << fc.iterations() << " it err " << ef;
  c.precision = ChopFormat::fp16();
  c.prior = PriorConfig{};
  for (Method m : {Method::gmres, Method::cmrh, Method::fcmrh}) {
    c.method = m;
    if (m == Method::fcmrh) c.prior = parse_prior("l1");
    const SolverTrace t = run_solver(c, sp);
    out.require(t.iterations() == 20, "fp16 " + to_string(m) + " ran " + std::to_string(t.iterations()));
  }
}

void criterion_10(Outcome& out) {
  ProblemOptions po;
  po.size = 256;
  const TestProblem pw = make_problem(ProblemKind::piecewise, po);
  SolverConfig c;
  c.kmax = 30;
  c.method = Method::cmrh;
  const double ec = run_cmrh(c, pw).min_rel_error().first;
  c.method = Method::fcmrh;
  c.prior = parse_prior("tv1d");
  c.prior.pinv = PinvMode::approx;
  const double ea = run_fcmrh(c, pw).min_rel_error().first;
  c.prior.pinv = PinvMode::exact;
  const double ee = run_fcmrh(c, pw).min_rel_error().first;
  out.require(ea < ec, "tv fcmrh (approx) not below cmrh");
  out.require(std::fabs(ea - ee) <= 0.2 * std::min(ea, ee), "exact and approx differ by more than 20%");
  char buf[160];
  std::snprintf(buf, sizeof buf, "cmrh %.6g, fcmrh approx %.10g, exact %.10g", ec, ea, ee);
  out.note << buf;
}

void criterion_11(Outcome& out) {
  const TestProblem sp = spectra_256(), ct = ct_32();
  for (Method m : {Method::fcmrh, Method::flslu}) {
    const TestProblem& p = problem_for(m, sp, ct);
    SolverConfig c;
    c.method = m;
    c.kmax = 20;
    c.prior = parse_prior("l1");
    c.param = parse_param_rule("opt");
    double e[3];
    for (Variant v : {Variant::plain, Variant::hybrid, Variant::irw}) {
      c.variant = v;
      e[static_cast<int>(v)] = run_solver(c, p).min_rel_error().first;
    }
    const double plain = e[static_cast<int>(Variant::plain)], hyb = e[static_cast<int>(Variant::hybrid)],
                 irw = e[static_cast<int>(Variant::irw)];
    out.require(irw <= plain + 1e-9, to_string(m) + " irw above plain");
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s plain %.10g hybrid %.10g irw %.10g (irw<=hybrid: %s); ", to_string(m).c_str(),
                  plain, hyb, irw, irw <= hyb ? "yes" : "no");
    out.note << buf;
  }
}

void criterion_12(Outcome& out) {
  const std::size_t rows = 64, s = 16;
  const Vector r = gaussian_vector(rows, 9500);
  const double target = dot(r, r);
  const DenseMatrix M = gaussian_matrix(rows, 4, 9501);
  Vector scores = approximate_leverage_scores(M);
  for (double& v : scores) v = 0.9 * v + 0.1 * 4.0 / static_cast<double>(rows);
  double mean_u = 0.0, mean_l = 0.0;
  const int seeds = 2000;
  for (int k = 0; k < seeds; ++k) {
    const Vector a = build_subsampling_sketch(rows, s, static_cast<std::uint64_t>(k)).apply(r);
    const Vector b = build_subsampling_sketch(rows, s, scores, static_cast<std::uint64_t>(k)).apply(r);
    mean_u += dot(a, a);
    mean_l += dot(b, b);
  }
  mean_u /= seeds * target;
  mean_l /= seeds * target;
  out.require(std::fabs(mean_u - 1.0) <= 0.05, "uniform sketch mean " + std::to_string(mean_u));
  out.require(std::fabs(mean_l - 1.0) <= 0.05, "leverage sketch mean " + std::to_string(mean_l));
  out.note << "E|Sr|^2/|r|^2: uniform " << mean_u << ", leverage " << mean_l;
}

struct Criterion {
  int id;
  std::string title;
  double budget_s;  // 0: no runtime bound
  std::function<void(Outcome&)> run;
};

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& title, Outcome& o, double secs, double budget) {
    if (budget > 0 && secs > budget) o.require(false, "runtime " + std::to_string(secs) + " s over budget");
    if (!o.pass) ++failures;
    std::printf("%s criterion %2d  %-44s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), secs,
                o.note.str().c_str());
    std::fflush(stdout);
  };

  {
    Outcome c1, c2;
    const auto t0 = Clock::now();
    criteria_1_2(c1, c2);
    const double secs = seconds_since(t0);
    report(1, "factorization identities", c1, secs, 10.0);
    report(2, "pivoted unit-lower structure", c2, secs, 10.0);
  }
  const std::vector<Criterion> rest = {
      {3, "degenerate equivalence (bitwise)", 0, criterion_3},
      {4, "inner-product-free, matvec budget", 0, criterion_4},
      {5, "monotonicity certificates", 0, criterion_5},
      {6, "majorant checks", 0, criterion_6},
      {7, "projected-solver oracles", 0, criterion_7},
      {8, "parameter rules vs brute force", 0, criterion_8},
      {9, "low-precision reproduction", 60.0, criterion_9},
      {10, "flexible TV beats plain", 0, criterion_10},
      {11, "sparsity ordering", 0, criterion_11},
      {12, "sketch unbiasedness", 20.0, criterion_12},
  };
  for (const auto& c : rest) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    report(c.id, c.title, o, seconds_since(t0), c.budget_s);
  }
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
