#pragma once

// Synthetic test problems: Gaussian blurs (1D dense, 2D separable), a
// parallel-beam CT projector with exact ray/pixel intersection lengths,
// sparse and piecewise-constant signals, and scaled Gaussian noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fipk/linalg.hpp"
#include "fipk/operator.hpp"

namespace fipk {

/// Normalized Gaussian weights for offsets -r..r with r = floor(4 sigma).
inline Vector gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const int r = static_cast<int>(std::floor(4.0 * sigma));
  Vector k(static_cast<std::size_t>(2 * r + 1));
  double s = 0.0;
  for (int d = -r; d <= r; ++d) {
    const double w = std::exp(-0.5 * d * d / (sigma * sigma));
    k[static_cast<std::size_t>(d + r)] = w;
    s += w;
  }
  for (double& w : k) w /= s;
  return k;
}

/// n x n dense 1D Gaussian blur, zero boundary.
inline std::shared_ptr<DenseOperator> gaussian_blur_1d(std::size_t n, double sigma) {
  if (n < 8) throw std::invalid_argument("gaussian_blur_1d: n must be >= 8");
  const Vector k = gaussian_kernel(sigma);
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::ptrdiff_t d = -r; d <= r; ++d) {
      const auto j = static_cast<std::ptrdiff_t>(i) + d;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
      m(i, static_cast<std::size_t>(j)) = k[static_cast<std::size_t>(d + r)];
    }
  return std::make_shared<DenseOperator>(std::move(m));
}

/// Separable 2D Gaussian blur of a side x side image (row-major), zero
/// boundary. The operator is symmetric.
class GaussianBlur2d final : public LinearOperator {
 public:
  GaussianBlur2d(std::size_t side, double sigma)
      : LinearOperator(side * side, side * side), side_(side), kernel_(gaussian_kernel(sigma)) {}
  bool has_transpose() const override { return true; }
  std::size_t side() const { return side_; }

 protected:
  void do_apply(std::span<const double> x, std::span<double> y, const Arith&) const override { blur(x, y); }
  void do_apply_transpose(std::span<const double> x, std::span<double> y, const Arith&) const override {
    blur(x, y);
  }

 private:
  void blur(std::span<const double> x, std::span<double> y) const {
    const auto n = static_cast<std::ptrdiff_t>(side_);
    const auto r = static_cast<std::ptrdiff_t>(kernel_.size() / 2);
    Vector tmp(x.size(), 0.0);
    for (std::ptrdiff_t i = 0; i < n; ++i)
      for (std::ptrdiff_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::ptrdiff_t d = -r; d <= r; ++d) {
          const auto jj = j + d;
          if (jj >= 0 && jj < n) s += kernel_[static_cast<std::size_t>(d + r)] * x[static_cast<std::size_t>(i * n + jj)];
        }
        tmp[static_cast<std::size_t>(i * n + j)] = s;
      }
    for (std::ptrdiff_t i = 0; i < n; ++i)
      for (std::ptrdiff_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::ptrdiff_t d = -r; d <= r; ++d) {
          const auto ii = i + d;
          if (ii >= 0 && ii < n) s += kernel_[static_cast<std::size_t>(d + r)] * tmp[static_cast<std::size_t>(ii * n + j)];
        }
        y[static_cast<std::size_t>(i * n + j)] = s;
      }
  }

  std::size_t side_;
  Vector kernel_;
};

inline std::shared_ptr<GaussianBlur2d> gaussian_blur_2d(std::size_t side, double sigma) {
  if (side < 2) throw std::invalid_argument("gaussian_blur_2d: side must be >= 2");
  return std::make_shared<GaussianBlur2d>(side, sigma);
}

/// Parallel-beam geometry: angles (degrees) uniformly spaced over [1, 180],
/// detector offsets at unit spacing centred on the origin. The image
/// occupies [-side/2, side/2]^2 with unit pixels, row 0 at the top.
struct CtGeometry {
  std::size_t side = 32;
  std::size_t n_rays = 45;
  std::size_t n_angles = 18;

  double angle_degrees(std::size_t a) const {
    if (n_angles == 1) return 1.0;
    return 1.0 + 179.0 * static_cast<double>(a) / static_cast<double>(n_angles - 1);
  }
  double offset(std::size_t r) const { return static_cast<double>(r) - 0.5 * static_cast<double>(n_rays - 1); }
};

/// Ray/pixel intersection lengths of one ray (Siddon-style traversal).
/// Returns (pixel index, length) pairs.
inline std::vector<std::pair<std::size_t, double>> trace_ray(const CtGeometry& g, double theta_deg, double t) {
  const double th = theta_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(th), dy = std::sin(th);
  const double px = -std::sin(th) * t, py = std::cos(th) * t;  // closest point to the origin
  const double h = 0.5 * static_cast<double>(g.side);
  constexpr double tiny = 1e-12;

  // clip the line p + s d against the square
  double s0 = -std::numeric_limits<double>::infinity(), s1 = std::numeric_limits<double>::infinity();
  auto clip = [&](double p, double d) {
    if (std::fabs(d) < tiny) return std::fabs(p) <= h;
    double a = (-h - p) / d, b = (h - p) / d;
    if (a > b) std::swap(a, b);
    s0 = std::max(s0, a);
    s1 = std::min(s1, b);
    return true;
  };
  if (!clip(px, dx) || !clip(py, dy) || s1 - s0 <= tiny) return {};

  std::vector<double> cuts{s0, s1};
  if (std::fabs(dx) >= tiny)
    for (std::size_t i = 0; i <= g.side; ++i) {
      const double s = (-h + static_cast<double>(i) - px) / dx;
      if (s > s0 && s < s1) cuts.push_back(s);
    }
  if (std::fabs(dy) >= tiny)
    for (std::size_t i = 0; i <= g.side; ++i) {
      const double s = (-h + static_cast<double>(i) - py) / dy;
      if (s > s0 && s < s1) cuts.push_back(s);
    }
  std::sort(cuts.begin(), cuts.end());

  std::vector<std::pair<std::size_t, double>> out;
  const auto n = static_cast<std::ptrdiff_t>(g.side);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double len = cuts[k + 1] - cuts[k];
    if (len <= tiny) continue;
    const double sm = 0.5 * (cuts[k] + cuts[k + 1]);
    const double x = px + sm * dx, y = py + sm * dy;
    const auto col = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(x + h)), 0, n - 1);
    const auto row = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(h - y)), 0, n - 1);
    const auto idx = static_cast<std::size_t>(row * n + col);
    if (!out.empty() && out.back().first == idx) out.back().second += len;
    else out.emplace_back(idx, len);
  }
  return out;
}

/// (n_rays * n_angles) x side^2 projector; row index = angle * n_rays + ray.
inline std::shared_ptr<SparseOperator> parallel_beam_ct(std::size_t side, std::size_t n_rays, std::size_t n_angles) {
  if (side == 0 || n_rays == 0 || n_angles == 0) throw std::invalid_argument("parallel_beam_ct: empty geometry");
  const CtGeometry g{side, n_rays, n_angles};
  std::vector<std::size_t> row_ptr{0}, cols;
  std::vector<double> vals;
  for (std::size_t a = 0; a < n_angles; ++a)
    for (std::size_t r = 0; r < n_rays; ++r) {
      auto seg = trace_ray(g, g.angle_degrees(a), g.offset(r));
      std::sort(seg.begin(), seg.end());
      for (std::size_t k = 0; k < seg.size(); ++k) {
        if (!cols.empty() && row_ptr.back() < cols.size() && cols.back() == seg[k].first) {
          vals.back() += seg[k].second;
          continue;
        }
        cols.push_back(seg[k].first);
        vals.push_back(seg[k].second);
      }
      row_ptr.push_back(cols.size());
    }
  return std::make_shared<SparseOperator>(n_rays * n_angles, side * side, std::move(row_ptr), std::move(cols),
                                          std::move(vals));
}

// ---------------------------------------------------------------------------
// signals

/// Simplified x-ray spectrum: a few narrow Gaussian peaks on an exactly
/// zero background.
inline Vector spectra_signal(std::size_t n, std::uint64_t seed = 7) {
  if (n < 64) throw std::invalid_argument("spectra_signal: n must be >= 64");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t peaks = std::min<std::size_t>(8, std::max<std::size_t>(3, n / 32));
  const std::size_t half = 2;  // support radius of each peak
  Vector x(n, 0.0);
  std::vector<std::size_t> centres;
  const std::size_t lo = n / 10, hi = n - n / 10;
  int guard = 0;
  while (centres.size() < peaks && guard++ < 10000) {
    const auto c = lo + static_cast<std::size_t>(unit(rng) * static_cast<double>(hi - lo));
    bool clash = false;
    for (auto o : centres) clash |= (c > o ? c - o : o - c) < 3 * half + 2;
    if (clash) continue;
    centres.push_back(c);
    const double height = 20.0 + 40.0 * unit(rng);
    const double width = 0.6 + 0.6 * unit(rng);
    for (std::ptrdiff_t d = -static_cast<std::ptrdiff_t>(half); d <= static_cast<std::ptrdiff_t>(half); ++d) {
      const auto i = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(c) + d);
      x[i] = height * std::exp(-0.5 * static_cast<double>(d * d) / (width * width));
    }
  }
  return x;
}

/// Piecewise-constant signal with five plateaus.
inline Vector piecewise_signal(std::size_t n, std::uint64_t seed = 11) {
  if (n < 16) throw std::invalid_argument("piecewise_signal: n must be >= 16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr std::size_t plateaus = 5;
  // breakpoints: equal segments jittered by up to a quarter segment
  std::vector<std::size_t> cuts{0};
  const double seg = static_cast<double>(n) / plateaus;
  for (std::size_t p = 1; p < plateaus; ++p) {
    const double c = seg * (static_cast<double>(p) + 0.5 * (unit(rng) - 0.5));
    cuts.push_back(static_cast<std::size_t>(std::lround(c)));
  }
  cuts.push_back(n);
  Vector levels;
  while (levels.size() < plateaus) {
    const double v = std::round(20.0 * unit(rng)) / 10.0;  // in {0, 0.1, ..., 2}
    if (!levels.empty() && std::fabs(levels.back() - v) < 0.3) continue;
    if (levels.size() == plateaus - 1 && std::fabs(levels.front() - v) < 0.3) continue;
    levels.push_back(v);
  }
  Vector x(n);
  for (std::size_t p = 0; p < plateaus; ++p)
    for (std::size_t i = cuts[p]; i < cuts[p + 1]; ++i) x[i] = levels[p];
  return x;
}

/// Smooth test signal (sum of broad bumps), used by the generic 1D deblur.
inline Vector smooth_signal(std::size_t n) {
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    x[i] = std::exp(-std::pow((t - 0.3) / 0.08, 2)) + 0.6 * std::exp(-std::pow((t - 0.7) / 0.12, 2));
  }
  return x;
}

/// side x side image of point sources ("stars"), at least 95% zeros,
/// values in [0, 1].
inline Vector sparse_image(std::size_t side, std::uint64_t seed = 3) {
  if (side < 16) throw std::invalid_argument("sparse_image: side must be >= 16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = side * side;
  const auto budget = static_cast<std::size_t>(0.045 * static_cast<double>(n));
  Vector x(n, 0.0);
  std::size_t nnz = 0;
  const std::size_t stars = std::max<std::size_t>(2, n / 100);
  for (std::size_t s = 0; s < stars; ++s) {
    const auto r = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(side - 2));
    const auto c = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(side - 2));
    const double v = 0.3 + 0.7 * unit(rng);
    const bool halo = unit(rng) < 0.5;
    const std::size_t need = halo ? 5 : 1;
    if (nnz + need > budget) break;
    auto put = [&](std::size_t rr, std::size_t cc, double val) {
      double& p = x[rr * side + cc];
      if (p == 0.0) ++nnz;
      p = std::max(p, val);
    };
    put(r, c, v);
    if (halo) {
      put(r - 1, c, 0.5 * v);
      put(r + 1, c, 0.5 * v);
      put(r, c - 1, 0.5 * v);
      put(r, c + 1, 0.5 * v);
    }
  }
  return x;
}

/// b = b_exact + e with Gaussian e scaled so that |e| / |b_exact| = level.
inline Vector add_noise(const Vector& b_exact, double level, std::uint64_t seed) {
  if (level < 0) throw std::invalid_argument("add_noise: level must be >= 0");
  if (level == 0) return b_exact;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector e(b_exact.size());
  for (double& v : e) v = g(rng);
  const double scale = level * norm2(b_exact) / norm2(e);
  Vector b(b_exact.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = b_exact[i] + scale * e[i];
  return b;
}

// ---------------------------------------------------------------------------
// problem bundles

enum class ProblemKind { deblur1d, deblur2d, ct, spectra, piecewise };

inline ProblemKind parse_problem_kind(const std::string& s) {
  if (s == "deblur1d") return ProblemKind::deblur1d;
  if (s == "deblur2d") return ProblemKind::deblur2d;
  if (s == "ct") return ProblemKind::ct;
  if (s == "spectra") return ProblemKind::spectra;
  if (s == "piecewise") return ProblemKind::piecewise;
  throw std::invalid_argument("unknown problem '" + s + "'");
}

inline std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::deblur1d: return "deblur1d";
    case ProblemKind::deblur2d: return "deblur2d";
    case ProblemKind::ct: return "ct";
    case ProblemKind::spectra: return "spectra";
    case ProblemKind::piecewise: return "piecewise";
  }
  return "?";
}

struct TestProblem {
  std::string name;
  OperatorPtr A;
  Vector b_exact;
  Vector b;
  Vector x_true;
  double noise_level = 0.0;
};

/// Generator parameters; zero or negative values select per-problem defaults.
struct ProblemOptions {
  std::size_t size = 0;  // n for 1D problems, side for 2D
  double sigma = 0;
  double noise = -1;
  std::size_t n_rays = 0;
  std::size_t n_angles = 0;
  std::uint64_t seed = 1;
};

inline TestProblem make_problem(ProblemKind kind, const ProblemOptions& opt = {}) {
  TestProblem p;
  p.name = to_string(kind);
  auto pick = [](auto v, auto def) { return v > 0 ? v : def; };
  switch (kind) {
    case ProblemKind::spectra: {
      const std::size_t n = pick(opt.size, std::size_t{256});
      p.A = gaussian_blur_1d(n, pick(opt.sigma, 3.0));
      p.x_true = spectra_signal(n, 7 + opt.seed - 1);
      p.noise_level = opt.noise >= 0 ? opt.noise : 0.01;
      break;
    }
    case ProblemKind::piecewise: {
      const std::size_t n = pick(opt.size, std::size_t{256});
      p.A = gaussian_blur_1d(n, pick(opt.sigma, 4.0));
      p.x_true = piecewise_signal(n, 11 + opt.seed - 1);
      p.noise_level = opt.noise >= 0 ? opt.noise : 0.01;
      break;
    }
    case ProblemKind::deblur1d: {
      const std::size_t n = pick(opt.size, std::size_t{128});
      p.A = gaussian_blur_1d(n, pick(opt.sigma, 2.0));
      p.x_true = smooth_signal(n);
      p.noise_level = opt.noise >= 0 ? opt.noise : 0.01;
      break;
    }
    case ProblemKind::deblur2d: {
      const std::size_t side = pick(opt.size, std::size_t{32});
      p.A = gaussian_blur_2d(side, pick(opt.sigma, 1.5));
      p.x_true = sparse_image(side, 3 + opt.seed - 1);
      p.noise_level = opt.noise >= 0 ? opt.noise : 0.01;
      break;
    }
    case ProblemKind::ct: {
      const std::size_t side = pick(opt.size, std::size_t{32});
      p.A = parallel_beam_ct(side, pick(opt.n_rays, std::size_t{45}), pick(opt.n_angles, std::size_t{18}));
      p.x_true = sparse_image(side, 3 + opt.seed - 1);
      p.noise_level = opt.noise >= 0 ? opt.noise : 0.1;
      break;
    }
  }
  p.b_exact = p.A->apply(p.x_true);
  p.b = add_noise(p.b_exact, p.noise_level, 1000 + opt.seed);
  return p;
}

// ---------------------------------------------------------------------------
// text serialization: matrices as "rows cols" then row-major entries,
// vectors one value per line

inline void write_matrix(std::ostream& os, const DenseMatrix& m) {
  os.precision(17);
  os << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
    os << '\n';
  }
}

inline DenseMatrix read_matrix(std::istream& is) {
  std::size_t r = 0, c = 0;
  if (!(is >> r >> c)) throw std::runtime_error("read_matrix: missing header");
  DenseMatrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      if (!(is >> m(i, j))) throw std::runtime_error("read_matrix: truncated data");
  return m;
}

inline void write_vector(std::ostream& os, std::span<const double> v) {
  os.precision(17);
  for (double x : v) os << x << '\n';
}

inline Vector read_vector(std::istream& is) {
  Vector v;
  double x;
  while (is >> x) v.push_back(x);
  if (!is.eof()) throw std::runtime_error("read_vector: malformed value");
  return v;
}

}  // namespace fipk
