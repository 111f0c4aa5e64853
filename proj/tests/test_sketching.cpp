#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fipk/diagnostics.hpp"
#include "fipk/projected.hpp"
#include "fipk/sketching.hpp"
#include "gen.hpp"

using namespace fipk;
using fipk::testing::gaussian_matrix;
using fipk::testing::gaussian_vector;

TEST(Sketch, FullUniformSamplingIsScaledPermutation) {
  const std::size_t m = 30;
  const Sketch sk = build_subsampling_sketch(m, m, 3);
  std::set<std::size_t> seen(sk.indices.begin(), sk.indices.end());
  EXPECT_EQ(seen.size(), m);
  for (double s : sk.scales) EXPECT_DOUBLE_EQ(s, 1.0);  // 1/sqrt(m * 1/m)
  // sketched least squares equals the unsketched solution
  const DenseMatrix M = gaussian_matrix(m, 4, 4);
  const Vector b = gaussian_vector(m, 5);
  const Vector y = qr_least_squares(M, b).x, ys = qr_least_squares(sk.apply(M), sk.apply(b)).x;
  EXPECT_LE(fipk::testing::max_abs_diff(y, ys), 1e-12);
}

TEST(Sketch, SingleRowSingleSample) {
  const Sketch sk = build_subsampling_sketch(1, 1, 9);
  ASSERT_EQ(sk.size(), 1u);
  EXPECT_EQ(sk.scales[0], 1.0);
  EXPECT_EQ(sk.apply(Vector{2.5})[0], 2.5);
}

TEST(Sketch, RejectsBadSizes) {
  EXPECT_THROW(build_subsampling_sketch(5, 6, 1), std::invalid_argument);
  EXPECT_THROW(build_subsampling_sketch(5, 0, 1), std::invalid_argument);
  EXPECT_THROW(build_subsampling_sketch(3, 2, Vector{1, 0, 1}, 1), std::invalid_argument);
}

TEST(Sketch, IndicesDistinctAndScalesPositive) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Vector scores = gaussian_vector(40, seed);
    for (double& v : scores) v = 0.01 + v * v;
    const Sketch sk = build_subsampling_sketch(40, 1 + seed % 40, scores, seed);
    std::set<std::size_t> seen(sk.indices.begin(), sk.indices.end());
    EXPECT_EQ(seen.size(), sk.size());
    for (std::size_t i : sk.indices) EXPECT_LT(i, 40u);
    for (double s : sk.scales) EXPECT_GT(s, 0.0);
  }
}

TEST(Sketch, UniformSamplingIsUnbiased) {
  const Vector r = gaussian_vector(64, 11);
  const double target = dot(r, r);
  double mean = 0.0;
  const int seeds = 2000;
  for (int s = 0; s < seeds; ++s) {
    const Vector sr = build_subsampling_sketch(64, 16, static_cast<std::uint64_t>(s)).apply(r);
    mean += dot(sr, sr);
  }
  mean /= seeds;
  EXPECT_NEAR(mean / target, 1.0, 0.05);
}

TEST(Sketch, SameSeedSameSketch) {
  const Sketch a = build_subsampling_sketch(50, 10, 123), b = build_subsampling_sketch(50, 10, 123);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_EQ(a.scales, b.scales);
}

TEST(Leverage, OrthonormalMatrixScoresAreRowNorms) {
  const DenseMatrix Q = orthonormal_basis(gaussian_matrix(20, 4, 12));
  const Vector s = approximate_leverage_scores(Q);
  for (std::size_t i = 0; i < 20; ++i) {
    double rn = 0.0;
    for (double v : Q.row(i)) rn += v * v;
    EXPECT_NEAR(s[i], rn, 1e-12);
  }
}

TEST(Leverage, ScoresSumToRank) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DenseMatrix M = gaussian_matrix(30, 5, 20 + seed);
    const Vector full = approximate_leverage_scores(M);
    double sum = 0.0;
    for (double v : full) sum += v;
    EXPECT_NEAR(sum, 5.0, 1e-10);
    // rank-deficient: a repeated column does not add to the rank
    for (std::size_t i = 0; i < 30; ++i) M(i, 4) = M(i, 0);
    sum = 0.0;
    for (double v : approximate_leverage_scores(M)) sum += v;
    EXPECT_NEAR(sum, 4.0, 1e-10);
  }
}

TEST(Leverage, DuplicateRowsShareScores) {
  DenseMatrix M = gaussian_matrix(12, 3, 30);
  for (std::size_t j = 0; j < 3; ++j) M(7, j) = M(2, j);
  const Vector s = approximate_leverage_scores(M);
  EXPECT_NEAR(s[2], s[7], 1e-12);
}

TEST(Distortion, FullSamplingIsZeroAndScaleInvariant) {
  const DenseMatrix B = gaussian_matrix(64, 5, 40);
  const Sketch full = build_subsampling_sketch(64, 64, 41);
  EXPECT_LE(estimate_distortion(full, B, 50, 1), 1e-12);
  const Sketch half = build_subsampling_sketch(64, 32, 42);
  DenseMatrix B3 = B;
  for (double& v : B3.data()) v *= 1e3;
  EXPECT_NEAR(estimate_distortion(half, B, 50, 7), estimate_distortion(half, B3, 50, 7), 1e-12);
}

TEST(Distortion, HalfSamplingUsuallyBelowOne) {
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const DenseMatrix B = gaussian_matrix(64, 5, 100 + seed);
    ok += estimate_distortion(build_subsampling_sketch(64, 32, 200 + seed), B, 50, seed) < 1.0;
  }
  EXPECT_GE(ok, 95u);
}

TEST(Restricted, SingularValuesOfFullSketchAreOne) {
  const DenseMatrix B = gaussian_matrix(30, 4, 50);
  for (double s : restricted_singular_values(build_subsampling_sketch(30, 30, 51), B)) EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_TRUE(restricted_singular_values(build_subsampling_sketch(30, 10, 52), DenseMatrix(30, 0)).empty());
}
