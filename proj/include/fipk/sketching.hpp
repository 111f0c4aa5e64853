#pragma once

// Row-subsampling sketches. A sketch keeps s rows of an m-vector, each
// scaled by 1/sqrt(s q_i) where q_i is the row's sampling probability.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "fipk/linalg.hpp"

namespace fipk {

struct Sketch {
  std::size_t source_dim = 0;
  std::vector<std::size_t> indices;
  Vector scales;
  double epsilon_estimate = std::numeric_limits<double>::quiet_NaN();

  std::size_t size() const { return indices.size(); }

  Vector apply(std::span<const double> r) const {
    if (r.size() != source_dim) throw std::invalid_argument("Sketch::apply: length mismatch");
    Vector out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = scales[i] * r[indices[i]];
    return out;
  }
  DenseMatrix apply(const DenseMatrix& m) const {
    if (m.rows() != source_dim) throw std::invalid_argument("Sketch::apply: row count mismatch");
    DenseMatrix out(indices.size(), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = scales[i] * m(indices[i], j);
    return out;
  }
};

/// Samples s of rows indices without replacement, with probability
/// proportional to scores (uniform when empty), using exponential keys.
inline Sketch build_subsampling_sketch(std::size_t rows, std::size_t s, std::span<const double> scores,
                                       std::uint64_t seed) {
  if (s < 1 || s > rows) throw std::invalid_argument("build_subsampling_sketch: need 1 <= s <= rows");
  if (!scores.empty() && scores.size() != rows)
    throw std::invalid_argument("build_subsampling_sketch: score length mismatch");
  Vector q(rows, 1.0 / static_cast<double>(rows));
  if (!scores.empty()) {
    double total = 0.0;
    for (double v : scores) {
      if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument("build_subsampling_sketch: scores must be positive");
      total += v;
    }
    for (std::size_t i = 0; i < rows; ++i) q[i] = scores[i] / total;
  }
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  // smallest E_i / q_i  <=>  largest u_i^(1/q_i)
  std::vector<std::pair<double, std::size_t>> keys(rows);
  for (std::size_t i = 0; i < rows; ++i) keys[i] = {expo(rng) / q[i], i};
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(s), keys.end());

  Sketch sk;
  sk.source_dim = rows;
  sk.indices.resize(s);
  for (std::size_t i = 0; i < s; ++i) sk.indices[i] = keys[i].second;
  std::sort(sk.indices.begin(), sk.indices.end());
  sk.scales.resize(s);
  for (std::size_t i = 0; i < s; ++i) sk.scales[i] = 1.0 / std::sqrt(static_cast<double>(s) * q[sk.indices[i]]);
  return sk;
}

inline Sketch build_subsampling_sketch(std::size_t rows, std::size_t s, std::uint64_t seed) {
  return build_subsampling_sketch(rows, s, std::span<const double>{}, seed);
}

/// Squared row norms of an orthonormal basis of R(M). With partitions > 1
/// each contiguous row block uses its own basis (local scores).
inline Vector approximate_leverage_scores(const DenseMatrix& M, std::size_t partitions = 1) {
  if (M.rows() < M.cols()) throw std::invalid_argument("approximate_leverage_scores: M must be tall");
  if (partitions == 0) throw std::invalid_argument("approximate_leverage_scores: partitions must be >= 1");
  Vector scores(M.rows(), 0.0);
  const std::size_t block = (M.rows() + partitions - 1) / partitions;
  for (std::size_t r0 = 0; r0 < M.rows(); r0 += block) {
    const std::size_t nr = std::min(block, M.rows() - r0);
    const DenseMatrix Q = orthonormal_basis(M.block(r0, 0, nr, M.cols()));
    for (std::size_t i = 0; i < nr; ++i) {
      double s = 0.0;
      for (double v : Q.row(i)) s += v * v;
      scores[r0 + i] = s;
    }
  }
  return scores;
}

/// max |(|S r| / |r|) - 1| over random r in R(basis).
inline double estimate_distortion(const Sketch& sk, const DenseMatrix& basis, std::size_t trials,
                                  std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  Vector c(basis.cols());
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& v : c) v = g(rng);
    const Vector r = matvec(basis, c);
    const double nr = norm2(r);
    if (nr == 0.0) continue;
    worst = std::max(worst, std::fabs(norm2(sk.apply(r)) / nr - 1.0));
  }
  return worst;
}

/// Singular values of S restricted to R(basis): sigma(S Q) with Q an
/// orthonormal basis of R(basis).
inline Vector restricted_singular_values(const Sketch& sk, const DenseMatrix& basis) {
  const DenseMatrix Q = orthonormal_basis(basis);
  if (Q.cols() == 0) return {};
  const DenseMatrix SQ = sk.apply(Q);
  Vector s = svd_small(SQ);
  s.resize(Q.cols(), 0.0);  // rank loss under sampling shows up as zeros
  return s;
}

}  // namespace fipk
