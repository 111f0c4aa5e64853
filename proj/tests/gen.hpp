#pragma once

// Hand-rolled generators for property tests. Every generator is a pure
// function of its seed.

#include <cmath>
#include <cstdint>
#include <random>

#include "fipk/linalg.hpp"

namespace fipk::testing {

inline DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Vector gaussian_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = g(rng);
  return v;
}

/// Reals spread over many binades, both signs.
inline double wide_real(std::mt19937_64& rng, double lo_exp = -8, double hi_exp = 8) {
  std::uniform_real_distribution<double> e(lo_exp, hi_exp);
  std::uniform_real_distribution<double> m(1.0, 2.0);
  const double v = m(rng) * std::pow(2.0, e(rng));
  return (rng() & 1) ? v : -v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

/// Independent Gauss-Jordan inverse with full pivoting, for oracles only.
inline DenseMatrix oracle_inverse(DenseMatrix a) {
  const std::size_t n = a.rows();
  DenseMatrix inv = DenseMatrix::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a(r, c)) > std::fabs(a(p, c))) p = r;
    for (std::size_t j = 0; j < n; ++j) {
      std::swap(a(c, j), a(p, j));
      std::swap(inv(c, j), inv(p, j));
    }
    const double d = a(c, c);
    for (std::size_t j = 0; j < n; ++j) {
      a(c, j) /= d;
      inv(c, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(c, j);
        inv(r, j) -= f * inv(c, j);
      }
    }
  }
  return inv;
}

/// Solution of (M^T M + lambda G^T G) y = M^T rhs via the normal equations.
inline Vector oracle_normal_equations(const DenseMatrix& M, std::span<const double> rhs, const DenseMatrix& G,
                                      double lambda) {
  DenseMatrix S = M.transpose() * M;
  if (G.rows() > 0 && lambda > 0) {
    const DenseMatrix GtG = G.transpose() * G;
    for (std::size_t i = 0; i < S.rows(); ++i)
      for (std::size_t j = 0; j < S.cols(); ++j) S(i, j) += lambda * GtG(i, j);
  }
  return matvec(oracle_inverse(S), matvec_transpose(M, rhs));
}

}  // namespace fipk::testing
