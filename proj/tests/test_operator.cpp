#include <gtest/gtest.h>

#include <random>

#include "fipk/preconditioning.hpp"
#include "fipk/problems.hpp"
#include "gen.hpp"

using namespace fipk;

namespace {

std::shared_ptr<SparseOperator> random_sparse(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> ptr{0}, idx;
  std::vector<double> val;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j)
      if (u(rng) < 0.3) {
        idx.push_back(j);
        val.push_back(u(rng) - 0.5);
      }
    ptr.push_back(idx.size());
  }
  return std::make_shared<SparseOperator>(rows, cols, ptr, idx, val);
}

}  // namespace

TEST(Operator, AdjointConsistencyOfEveryImplementation) {
  std::mt19937_64 rng(1);
  const std::vector<std::shared_ptr<const LinearOperator>> ops = {
      std::make_shared<DenseOperator>(fipk::testing::gaussian_matrix(7, 11, 2)),
      random_sparse(13, 9, 3),
      std::make_shared<IdentityOperator>(6),
      std::make_shared<DifferenceOperator>(10),
      gaussian_blur_1d(32, 2.0),
      gaussian_blur_2d(8, 1.2),
      parallel_beam_ct(12, 15, 6),
  };
  for (const auto& op : ops) EXPECT_LE(adjoint_mismatch(*op, rng, 20), 1e-12);
}

TEST(Operator, SparseMatchesItsDenseAssembly) {
  const auto sp = random_sparse(9, 6, 4);
  const DenseMatrix d = to_dense(*sp);
  const Vector x = fipk::testing::gaussian_vector(6, 5);
  EXPECT_LE(fipk::testing::max_abs_diff(sp->apply(x), matvec(d, x)), 1e-14);
  const Vector u = fipk::testing::gaussian_vector(9, 6);
  EXPECT_LE(fipk::testing::max_abs_diff(sp->apply_transpose(u), matvec_transpose(d, u)), 1e-14);
}

TEST(Operator, RejectsMismatchedDimensions) {
  const DenseOperator op(DenseMatrix(3, 2));
  EXPECT_THROW(op.apply(Vector(3)), std::invalid_argument);
  EXPECT_THROW(op.apply_transpose(Vector(2)), std::invalid_argument);
  EXPECT_THROW(SparseOperator(2, 2, {0, 1}, {0}, {1.0}), std::invalid_argument);
}

TEST(Operator, CountsAppliesThroughContext) {
  KernelCounters c;
  const Arith ctx(std::nullopt, &c);
  const DenseOperator op(DenseMatrix::identity(4));
  op.apply(Vector(4, 1.0), ctx);
  op.apply(Vector(4, 1.0), ctx);
  op.apply_transpose(Vector(4, 1.0), ctx);
  EXPECT_EQ(c.applies.load(), 2u);
  EXPECT_EQ(c.transpose_applies.load(), 1u);
  EXPECT_EQ(c.dots.load(), 0u);
}

TEST(Operator, ChoppedApplyRoundsOutput) {
  const ChopFormat f = ChopFormat::q43();
  const DenseOperator op(DenseMatrix{{1.3, 0.7}, {2.9, -0.1}});
  const Vector y = op.apply(Vector{1.1, 3.3}, Arith(f));
  for (double v : y) EXPECT_EQ(chop(v, f), v);
}

TEST(Operator, ChoppedSumOfLargeEntriesOverflows) {
  const DenseOperator op(DenseMatrix(1, 64, 10.0));
  const Vector y = op.apply(Vector(64, 1.0), Arith(ChopFormat::q43()));
  EXPECT_TRUE(std::isinf(y[0]));
}
