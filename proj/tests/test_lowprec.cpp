#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fipk/lowprec.hpp"
#include "gen.hpp"

using namespace fipk;

namespace {

// Every finite nonnegative value of a small format, by enumeration.
std::vector<double> representable(const ChopFormat& f) {
  std::vector<double> v{0.0};
  const int t = f.significand_bits;
  for (int m = 1; m < (1 << t); ++m) v.push_back(std::ldexp(m, f.emin() - t));  // subnormals
  for (int e = f.emin(); e <= f.emax(); ++e)
    for (int m = 0; m < (1 << t); ++m) v.push_back(std::ldexp(1.0 + std::ldexp(m, -t), e));
  return v;
}

// Nearest representable value, ties to the even significand; beyond the
// rounding boundary above max_value the result is infinite.
double oracle_round(double x, const ChopFormat& f, const std::vector<double>& grid) {
  const double a = std::fabs(x);
  const double top = grid.back();
  const double ulp_top = std::ldexp(1.0, f.emax() - f.significand_bits);
  if (a >= top + 0.5 * ulp_top) return std::copysign(std::numeric_limits<double>::infinity(), x);
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double di = std::fabs(grid[i] - a), db = std::fabs(grid[best] - a);
    if (di < db) best = i;
    else if (di == db) {
      // tie: prefer the even last significand bit
      const double ulp = grid[i] - grid[i - 1];
      const bool i_even = std::fmod(std::round(grid[i] / ulp), 2.0) == 0.0;
      if (i_even) best = i;
    }
  }
  return std::copysign(grid[best], x);
}

}  // namespace

TEST(Chop, HalfIsExactInFp16) { EXPECT_EQ(chop(0.5, ChopFormat::fp16()), 0.5); }

TEST(Chop, LargeValueOverflowsInQ43) {
  EXPECT_EQ(ChopFormat::q43().max_value(), 240.0);
  EXPECT_TRUE(std::isinf(chop(1e6, ChopFormat::q43())));
  EXPECT_GT(chop(1e6, ChopFormat::q43()), 0);
}

TEST(Chop, Fp16MaxMatchesIeee) { EXPECT_EQ(ChopFormat::fp16().max_value(), 65504.0); }

TEST(Chop, MatchesEnumeratedOracleForQ43) {
  const ChopFormat f = ChopFormat::q43();
  const auto grid = representable(f);
  std::mt19937_64 rng(17);
  for (int i = 0; i < 20000; ++i) {
    const double x = fipk::testing::wide_real(rng, -10, 9);
    const double got = chop(x, f), want = oracle_round(x, f, grid);
    ASSERT_EQ(got, want) << "x = " << x;
  }
  // midpoints exercise the tie rule
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double mid = 0.5 * (grid[i - 1] + grid[i]);
    ASSERT_EQ(chop(mid, f), oracle_round(mid, f, grid)) << "mid = " << mid;
  }
}

TEST(Chop, IdempotentOddMonotone) {
  for (const ChopFormat f : {ChopFormat::fp16(), ChopFormat::q43(), ChopFormat::bfloat16()}) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 5000; ++i) {
      const double x = fipk::testing::wide_real(rng, -20, 20), y = fipk::testing::wide_real(rng, -20, 20);
      const double cx = chop(x, f);
      EXPECT_EQ(chop(cx, f), cx);
      EXPECT_EQ(chop(-x, f), -cx);
      if (x <= y) EXPECT_LE(cx, chop(y, f));
      else EXPECT_GE(cx, chop(y, f));
    }
  }
}

TEST(Chop, RepresentableValuesAreFixedPoints) {
  const ChopFormat f = ChopFormat::q43();
  for (double v : representable(f)) {
    EXPECT_EQ(chop(v, f), v);
    EXPECT_EQ(chop(-v, f), -v);
  }
}

TEST(Chop, RejectsInvalidFormats) {
  EXPECT_THROW(ChopFormat({1, 3, true}).validate(), std::invalid_argument);
  EXPECT_THROW(ChopFormat({5, 0, true}).validate(), std::invalid_argument);
  EXPECT_THROW(parse_precision("fp8"), std::invalid_argument);
  EXPECT_FALSE(parse_precision("fp64").has_value());
  EXPECT_EQ(parse_precision("custom:4,3")->significand_bits, 3);
}

TEST(Arith, Q43DotOfOnesOverflows) {
  const Arith ctx(ChopFormat::q43());
  const std::vector<double> ones(1000, 1.0);
  const double d = ctx.dot(ones, ones);
  EXPECT_TRUE(std::isinf(d));
  EXPECT_EQ(Arith::amax(ones), 1.0);
  EXPECT_EQ(Arith::index_amax(ones), 0u);
}

TEST(Arith, PassthroughIsPlainFp64) {
  const Arith ctx;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double a = fipk::testing::wide_real(rng), b = fipk::testing::wide_real(rng);
    EXPECT_EQ(ctx.add(a, b), a + b);
    EXPECT_EQ(ctx.mul(a, b), a * b);
    EXPECT_EQ(ctx.div(a, b), a / b);
  }
}

TEST(Arith, EveryOperationIsRounded) {
  const ChopFormat f = ChopFormat::fp16();
  const Arith ctx(f);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double a = chop(fipk::testing::wide_real(rng), f), b = chop(fipk::testing::wide_real(rng), f);
    EXPECT_EQ(ctx.add(a, b), chop(a + b, f));
    EXPECT_EQ(ctx.mul(a, b), chop(a * b, f));
    EXPECT_EQ(ctx.div(a, b), chop(a / b, f));
    EXPECT_EQ(ctx.sqrt(std::fabs(a)), chop(std::sqrt(std::fabs(a)), f));
  }
}

TEST(Arith, CountsDots) {
  KernelCounters c;
  const Arith ctx(std::nullopt, &c);
  const std::vector<double> x{1, 2, 3};
  EXPECT_EQ(ctx.dot(x, x), 14.0);
  ctx.norm2(x);
  EXPECT_EQ(c.dots.load(), 2u);
}

TEST(Arith, PrecisionNamesRoundTrip) {
  for (const char* n : {"fp64", "fp16", "q43", "fp32", "bf16"}) EXPECT_EQ(precision_name(parse_precision(n)), n);
}
