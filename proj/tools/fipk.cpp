// Experiment runner: problem generation, single runs, multi-method
// comparisons and the invariant self-test.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fipk/fipk.hpp"

namespace fs = std::filesystem;
using namespace fipk;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunArgs {
  std::string problem = "spectra";
  std::size_t size = 0;
  double noise = -1;
  std::vector<std::string> methods{"fcmrh"};
  std::string variant = "plain";
  std::string prior = "none";
  double tau = 0;  // 0: adaptive
  std::string lambda = "fixed:0";
  std::size_t kmax = 20;
  bool sketch = false;
  std::size_t sketch_size = 0;
  std::uint64_t sketch_seed = 1;
  std::string precision = "fp64";
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string pinv = "approx";
  bool norms_only = false;
  std::string config;  // consumed by expand_config before parsing
};

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TestProblem build_problem(const RunArgs& a) {
  ProblemOptions po;
  po.size = a.size;
  po.noise = a.noise;
  po.seed = a.seed;
  return make_problem(parse_problem_kind(a.problem), po);
}

/// "wgcv" picks (k+1)/m for the generalized-Hessenberg methods and 1
/// otherwise; "wgcv:one" and "wgcv:lslu" force a schedule.
ParamRule lambda_rule(const std::string& s, Method m) {
  if (s == "wgcv:one" || s == "wgcv:lslu") {
    ParamRule r = parse_param_rule("wgcv");
    r.omega = s == "wgcv:one" ? OmegaKind::one : OmegaKind::lslu;
    return r;
  }
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  if (!s.empty() && end == s.c_str() + s.size()) return parse_param_rule("fixed:" + s);
  ParamRule r = parse_param_rule(s);
  if (r.kind == ParamKind::wgcv) r.omega = (m == Method::flslu || m == Method::lslu) ? OmegaKind::lslu : OmegaKind::one;
  return r;
}

SolverConfig make_config(const RunArgs& a, const std::string& method) {
  SolverConfig c;
  c.method = parse_method(method);
  c.variant = parse_variant(a.variant);
  c.prior = parse_prior(a.prior);
  if (a.tau > 0) c.prior.tau = a.tau;
  c.prior.pinv = parse_pinv_mode(a.pinv);
  c.param = lambda_rule(a.lambda, c.method);
  c.kmax = a.kmax;
  c.sketch.enabled = a.sketch;
  c.sketch.size = a.sketch_size;
  c.sketch.seed = a.sketch_seed;
  c.precision = parse_precision(a.precision);
  c.store_iterates = !a.norms_only;
  return c;
}

void write_trace(const fs::path& path, const SolverTrace& t) {
  std::ofstream os(path);
  os << "iter,res_norm,objective,lambda,ratio,threshold,condition_met,rel_error\n";
  for (const auto& r : t.records) {
    os << r.iter << ',' << num(r.res_norm) << ',' << num(r.objective) << ',' << num(r.lambda) << ',';
    if (r.has_report) {
      os << num(r.report.ratio) << ',' << num(r.report.threshold) << ',' << (r.report.condition_met ? 1 : 0);
    } else {
      os << ",,";
    }
    os << ',' << num(r.rel_error) << '\n';
  }
}

void write_summary(const fs::path& path, const std::vector<SolverTrace>& traces) {
  std::ofstream os(path);
  os << "method,min_rel_error,iter_of_min,final_lambda,halt_reason\n";
  for (const auto& t : traces) {
    const auto [e, k] = t.min_rel_error();
    os << t.method << ',' << num(e) << ',' << k << ',' << num(t.last().lambda) << ',' << t.halt_reason << '\n';
  }
}

/// One column per method; rows past a method's last iteration stay empty.
void write_compare(const fs::path& path, const std::vector<SolverTrace>& traces) {
  std::ofstream os(path);
  std::size_t rows = 0;
  os << "iter";
  for (const auto& t : traces) {
    os << ',' << t.method;
    rows = std::max(rows, t.records.size());
  }
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    os << i;
    for (const auto& t : traces) {
      os << ',';
      if (i < t.records.size()) os << num(t.records[i].rel_error);
    }
    os << '\n';
  }
}

std::vector<SolverTrace> run_all(const RunArgs& a, bool parallel) {
  if (a.methods.empty()) throw UsageError("no methods given");
  const TestProblem problem = build_problem(a);
  std::vector<SolverConfig> cfgs;
  for (const auto& m : a.methods) {
    cfgs.push_back(make_config(a, m));
    validate_config(cfgs.back(), problem);
  }
  std::vector<SolverTrace> traces;
  if (!parallel) {
    for (const auto& c : cfgs) traces.push_back(run_solver(c, problem));
    return traces;
  }
  std::vector<std::future<SolverTrace>> jobs;
  for (const auto& c : cfgs) jobs.push_back(std::async(std::launch::async, [&problem, c] { return run_solver(c, problem); }));
  for (auto& j : jobs) traces.push_back(j.get());
  return traces;
}

std::string label(const SolverConfig& c, const std::string& method) {
  std::string s = method;
  if (c.variant != Variant::plain) s = to_string(c.variant) + "-" + s;
  if (c.sketch.enabled) s = "ss-" + s;
  return s;
}

void add_run_options(CLI::App* app, RunArgs& a) {
  app->add_option("--problem", a.problem, "deblur1d|deblur2d|ct|spectra|piecewise");
  app->add_option("--size", a.size, "signal length or image side (0: default)");
  app->add_option("--noise", a.noise, "relative noise level (negative: default)");
  app->add_option("--variant", a.variant, "plain|hybrid|irw");
  app->add_option("--prior", a.prior, "none|l1|lp:P|tv1d");
  app->add_option("--tau", a.tau, "fixed smoothing parameter (0: adaptive)");
  app->add_option("--lambda", a.lambda, "fixed:V|V|dp|gcv|wgcv|wgcv:one|wgcv:lslu|opt");
  app->add_option("--kmax", a.kmax, "maximum iterations");
  app->add_flag("--sketch", a.sketch, "sketch-and-solve projected problems");
  app->add_option("--sketch-size", a.sketch_size, "sketch rows (0: 4*kmax)");
  app->add_option("--sketch-seed", a.sketch_seed, "sketch seed");
  app->add_option("--precision", a.precision, "fp64|fp16|q43|custom:E,S");
  app->add_option("--seed", a.seed, "problem seed");
  app->add_option("--out", a.out, "output directory");
  app->add_option("--pinv", a.pinv, "exact|approx pseudoinverse for tv1d");
  app->add_flag("--norms-only", a.norms_only, "do not keep iterates");
  app->add_option("--config", a.config, "key=value file; explicit flags take precedence");
}

// Subcommand options are not read from config files by CLI11, so the file
// is spliced into the argument list as --key value pairs. Keys already on
// the command line are skipped.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> in(argv, argv + argc), out;
  std::string path;
  for (std::size_t i = 1; i < in.size(); ++i) {
    if (in[i] == "--config" && i + 1 < in.size()) {
      path = in[++i];
      continue;
    }
    if (in[i].rfind("--config=", 0) == 0) {
      path = in[i].substr(9);
      continue;
    }
    out.push_back(in[i]);
  }
  if (path.empty()) return out;
  std::ifstream is(path);
  if (!is) throw CLI::FileError::Missing(path);
  auto given = [&](const std::string& key) {
    for (const auto& a : out)
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& item : CLI::ConfigINI().from_config(is)) {
    if (item.name.empty() || item.name == "++" || item.name == "--" || given(item.name)) continue;
    if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "false")) {
      if (item.inputs[0] == "true") extra.push_back("--" + item.name);
      continue;
    }
    extra.push_back("--" + item.name);
    for (const auto& v : item.inputs) extra.push_back(v);
  }
  // after the subcommand name, which is the first argument
  out.insert(out.empty() ? out.end() : out.begin() + 1, extra.begin(), extra.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flexible inner-product free Krylov solvers for inverse problems"};
  app.require_subcommand(1);

  RunArgs run_args, cmp_args;
  std::string method = "fcmrh";

  auto* problem_cmd = app.add_subcommand("problem", "write a test problem as text files");
  std::string pkind = "spectra", pout = "problem";
  std::size_t psize = 0;
  double pnoise = -1;
  std::uint64_t pseed = 1;
  problem_cmd->add_option("kind", pkind, "deblur1d|deblur2d|ct|spectra|piecewise")->required();
  problem_cmd->add_option("--size", psize);
  problem_cmd->add_option("--noise", pnoise);
  problem_cmd->add_option("--seed", pseed);
  problem_cmd->add_option("--out", pout);

  auto* run_cmd = app.add_subcommand("run", "run one method and write trace and summary CSVs");
  add_run_options(run_cmd, run_args);
  run_cmd->add_option("--method", method, "fcmrh|flslu|gmres|lsqr|cmrh|lslu");

  auto* cmp_cmd = app.add_subcommand("compare", "run several methods concurrently on one problem");
  add_run_options(cmp_cmd, cmp_args);
  std::string method_list;
  cmp_cmd->add_option("--method,--methods", method_list, "comma-separated methods")->required();

  auto* self_cmd = app.add_subcommand("selftest", "run the invariant suites");
  bool mutate = false;
  std::size_t self_seeds = 10;
  self_cmd->add_flag("--mutate", mutate, "flip the sign of every recurrence coefficient");
  self_cmd->add_option("--seeds", self_seeds);

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*problem_cmd) {
      ProblemOptions po;
      po.size = psize;
      po.noise = pnoise;
      po.seed = pseed;
      const TestProblem p = make_problem(parse_problem_kind(pkind), po);
      fs::create_directories(pout);
      std::ofstream as(fs::path(pout) / "A.txt"), bs(fs::path(pout) / "b.txt"), xs(fs::path(pout) / "x_true.txt");
      write_matrix(as, to_dense(*p.A));
      write_vector(bs, p.b);
      write_vector(xs, p.x_true);
      std::cout << p.name << ": " << p.A->rows() << "x" << p.A->cols() << " written to " << pout << "\n";
      return 0;
    }
    if (*run_cmd) {
      run_args.methods = {method};
      const auto traces = run_all(run_args, false);
      fs::create_directories(run_args.out);
      const SolverConfig c = make_config(run_args, method);
      write_trace(fs::path(run_args.out) / "trace.csv", traces[0]);
      std::vector<SolverTrace> named = traces;
      named[0].method = label(c, method);
      write_summary(fs::path(run_args.out) / "summary.csv", named);
      const auto [e, k] = traces[0].min_rel_error();
      std::cout << named[0].method << ": " << traces[0].iterations() << " iterations, halt " << traces[0].halt_reason
                << ", min rel error " << num(e) << " at " << k << "\n";
      return 0;
    }
    if (*cmp_cmd) {
      std::vector<std::string> methods;
      std::stringstream ss(method_list);
      for (std::string m; std::getline(ss, m, ',');)
        if (!m.empty()) methods.push_back(m);
      if (methods.empty()) throw UsageError("no methods given");
      cmp_args.methods = methods;
      auto traces = run_all(cmp_args, true);
      fs::create_directories(cmp_args.out);
      for (std::size_t i = 0; i < traces.size(); ++i) {
        traces[i].method = label(make_config(cmp_args, methods[i]), methods[i]);
        write_trace(fs::path(cmp_args.out) / ("trace_" + traces[i].method + ".csv"), traces[i]);
      }
      write_compare(fs::path(cmp_args.out) / "compare.csv", traces);
      write_summary(fs::path(cmp_args.out) / "summary.csv", traces);
      for (const auto& t : traces) {
        const auto [e, k] = t.min_rel_error();
        std::cout << t.method << ": " << t.iterations() << " iterations, halt " << t.halt_reason << ", min rel error "
                  << num(e) << " at " << k << "\n";
      }
      return 0;
    }
    if (*self_cmd) {
      SelftestOptions so;
      so.coefficient_sign = mutate ? -1.0 : 1.0;
      so.seeds = self_seeds;
      const SelftestReport r = run_selftest(so);
      for (const auto& c : r.checks)
        if (!c.passed) std::cout << "FAIL " << c.name << (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
      std::cout << r.passed() << " passed, " << r.failed() << " failed\n";
      return r.failed() == 0 ? 0 : 1;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    // parse_* and validate_config reject bad names and combinations
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
