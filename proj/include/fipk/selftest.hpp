#pragma once

// Invariant suites run by the CLI's selftest command: factorization
// identities, degenerate equivalences, majorant checks and monotonicity.
// A coefficient sign of -1 corrupts the recurrences and must make the
// factorization suite fail.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fipk/diagnostics.hpp"
#include "fipk/factorizations.hpp"
#include "fipk/problems.hpp"
#include "fipk/solvers.hpp"

namespace fipk {

/// max of |A Z - U H|_F and, for the generalized process, |A^T U - V T|_F,
/// relative to |A|_F times the largest basis entry.
inline double factorization_identity_error(const DenseMatrix& A, const FlexFactorization& f, ProcessKind kind) {
  const std::size_t k = f.k;
  if (k == 0) return 0.0;
  const double scale = std::max(1.0, A.frobenius() * std::max({f.Z.max_abs(), f.U.max_abs(), 1.0}));
  const DenseMatrix Uk = f.U.block(0, 0, f.U.rows(), f.H.rows());
  double err = (A * f.Z - Uk * f.H).frobenius();
  if (kind == ProcessKind::generalized && f.V.cols() > 0) {
    const std::size_t nu = std::min(f.T.cols(), f.U.cols());
    const DenseMatrix Ut = f.U.block(0, 0, f.U.rows(), nu);
    const DenseMatrix T = f.T.block(0, 0, f.V.cols(), nu);
    err = std::max(err, (A.transpose() * Ut - f.V * T).frobenius());
  }
  return err / scale;
}

/// Plan drawing P_k = diag(d), d_i uniform in [0.5, 2], from a seeded stream.
inline std::shared_ptr<PreconditionerPlan> random_diagonal_plan(std::size_t n, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return std::make_shared<FunctionPlan>([n, rng](std::size_t, std::span<const double>) -> PreconditionerPtr {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    Vector d(n);
    for (double& v : d) v = u(*rng);
    return std::make_shared<DiagonalPreconditioner>(std::move(d));
  });
}

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Vector random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = g(rng);
  return v;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestReport {
  std::vector<CheckResult> checks;
  std::size_t passed() const {
    std::size_t c = 0;
    for (const auto& r : checks) c += r.passed;
    return c;
  }
  std::size_t failed() const { return checks.size() - passed(); }
};

struct SelftestOptions {
  double coefficient_sign = 1.0;
  std::size_t seeds = 10;
};

namespace detail {

inline bool traces_identical(const SolverTrace& a, const SolverTrace& b) {
  if (a.records.size() != b.records.size() || a.halt_reason != b.halt_reason) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& x = a.records[i];
    const auto& y = b.records[i];
    if (x.res_norm != y.res_norm || x.x != y.x) return false;
  }
  return true;
}

}  // namespace detail

inline SelftestReport run_selftest(const SelftestOptions& opt = {}) {
  SelftestReport rep;
  FactorizationOptions fo;
  fo.coefficient_sign = opt.coefficient_sign;
  auto add = [&](std::string name, bool ok, std::string detail = {}) {
    rep.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  // factorization identities and pivot structure
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    for (ProcessKind kind : {ProcessKind::hessenberg, ProcessKind::generalized}) {
      const std::size_t cols = kind == ProcessKind::hessenberg ? 40 : 25;
      const DenseMatrix A = random_matrix(40, cols, 100 + s);
      const Vector b = random_vector(40, 200 + s);
      auto plan = random_diagonal_plan(cols, 300 + s);
      const auto f = run_factorization(std::make_shared<DenseOperator>(A), b, 20, *plan, kind, Arith::exact(), fo);
      const double err = factorization_identity_error(A, f, kind);
      const double dev = unit_lower_deviation(f.U, f.pivots_q);
      const std::string tag = std::string(kind == ProcessKind::hessenberg ? "hessenberg" : "generalized") +
                              " seed " + std::to_string(s);
      add("identity " + tag, err <= 1e-10, "error " + std::to_string(err));
      add("unit lower " + tag, dev <= 1e-12, "deviation " + std::to_string(dev));
    }
  }

  // degenerate equivalences on a small deblurring problem
  {
    ProblemOptions po;
    po.size = 64;
    const TestProblem p = make_problem(ProblemKind::deblur1d, po);
    SolverConfig c;
    c.kmax = 15;
    c.factorization = fo;
    c.method = Method::cmrh;
    const SolverTrace base = run_cmrh(c, p);
    c.method = Method::fcmrh;
    c.plan = std::make_shared<IdentityPlan>(p.A->cols());
    add("fcmrh identity plan equals cmrh", detail::traces_identical(base, run_fcmrh(c, p)));
    c.plan.reset();
    c.method = Method::lslu;
    const SolverTrace lbase = run_lslu(c, p);
    c.method = Method::flslu;
    c.plan = std::make_shared<IdentityPlan>(p.A->cols());
    add("flslu identity plan equals lslu", detail::traces_identical(lbase, run_flslu(c, p)));
    c.plan.reset();
    c.method = Method::fcmrh;
    c.prior = parse_prior("l1");
    const SolverTrace plain = run_fcmrh(c, p);
    c.variant = Variant::hybrid;
    c.param = parse_param_rule("fixed:0");
    add("hybrid with zero lambda equals plain", detail::traces_identical(plain, run_fcmrh(c, p)));
  }

  // tangent majorants
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    for (double p : {0.5, 1.0}) {
      const std::size_t n = 10;
      const MajorantModel m = make_majorant(random_matrix(12, n, 400 + s), random_vector(12, 500 + s),
                                            DenseMatrix::identity(n), WeightRule{p, 1e-2}, 0.5,
                                            random_vector(n, 600 + s));
      const MajorantCheck chk = verify_majorant(m, smoothed_functional(m), 50, 700 + s);
      add("majorant p=" + std::to_string(p) + " seed " + std::to_string(s), chk.passed());
    }
  }

  // monotonicity: a met condition never coincides with an increase
  {
    ProblemOptions po;
    po.size = 128;
    const TestProblem p = make_problem(ProblemKind::spectra, po);
    for (Variant v : {Variant::plain, Variant::hybrid, Variant::irw}) {
      SolverConfig c;
      c.kmax = 20;
      c.factorization = fo;
      c.prior = parse_prior("l1");
      c.variant = v;
      c.param = parse_param_rule("fixed:0.01");
      const SolverTrace t = run_fcmrh(c, p);
      std::size_t violations = 0;
      for (const auto& r : t.records)
        if (r.has_report && r.report.violated()) ++violations;
      add("monotonicity " + to_string(v), violations == 0, std::to_string(violations) + " violations");
    }
  }
  return rep;
}

}  // namespace fipk
