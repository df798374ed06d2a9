#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "uls/errors.hpp"
#include "uls/linalg.hpp"

using namespace uls;

TEST(Gaussian, RowMajorFillAndDeterminism) {
  Rng a(9), b(9);
  const Matrix m = gaussian_matrix(3, 4, a);
  for (Index r = 0; r < 3; ++r) {
    for (Index c = 0; c < 4; ++c) EXPECT_EQ(m(r, c), b.normal());
  }
}

TEST(RequireFinite, RejectsNanAndInf) {
  Matrix m = Matrix::Zero(2, 2);
  EXPECT_NO_THROW(require_finite(m, "m"));
  m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(require_finite(m, "m"), ConfigInvalid);
  Vector v = Vector::Zero(3);
  v(2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(require_finite(v, "v"), ConfigInvalid);
}

TEST(LeastSquares, ConsistentSystemIsExact) {
  Rng rng(11);
  const Matrix a = gaussian_matrix(30, 6, rng);
  const Vector x = gaussian_vector(6, rng);
  EXPECT_LT((qr_least_squares(a, a * x) - x).norm(), 1e-12);
}

TEST(LeastSquares, MatchesNormalEquations) {
  Rng rng(12);
  const Matrix a = gaussian_matrix(25, 5, rng);
  const Vector b = gaussian_vector(25, rng);
  const Vector ref = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  EXPECT_LT((LeastSquares(a).solve(b) - ref).norm(), 1e-10);
}

TEST(LeastSquares, RankDeficientThrows) {
  Rng rng(13);
  Matrix a = gaussian_matrix(10, 3, rng);
  a.col(2) = 2.0 * a.col(0) - a.col(1);
  EXPECT_THROW(LeastSquares{a}, RankDeficient);
  EXPECT_THROW(OrthoProjectorPair::from_columns(a), RankDeficient);
}

TEST(Projector, MatchesExplicitNormalEquationProjector) {
  Rng rng(14);
  const Matrix a = gaussian_matrix(12, 4, rng);
  const Vector v = gaussian_vector(12, rng);
  const auto proj = OrthoProjectorPair::from_columns(a);
  const Matrix h = oracle::normal_equation_projector(a);
  EXPECT_LT((proj.range(v) - h * v).norm(), 1e-10);
  EXPECT_LT((proj.complement(v) - (v - h * v)).norm(), 1e-10);
  EXPECT_EQ(proj.rank(), 4);
  EXPECT_EQ(proj.dimension(), 12);
}

TEST(Projector, IdempotentAndComplementary) {
  Rng rng(15);
  const Matrix a = gaussian_matrix(20, 7, rng);
  const Vector v = gaussian_vector(20, rng);
  const auto proj = OrthoProjectorPair::from_columns(a);
  const Vector hv = proj.range(v);
  EXPECT_LT((proj.range(hv) - hv).norm(), 1e-12);
  EXPECT_LT((hv + proj.complement(v) - v).norm(), 1e-12);
  EXPECT_LT(std::abs(hv.dot(proj.complement(v))), 1e-12);
  // Columns of A are fixed by H and annihilated by H-perp.
  EXPECT_LT(proj.complement(a.col(3)).norm(), 1e-12);
}

TEST(SingularValues, MatchGramEigenvalues) {
  Rng rng(16);
  for (const auto& shape : {std::pair<Index, Index>{8, 3}, {50, 20}, {6, 6}}) {
    const Matrix a = gaussian_matrix(shape.first, shape.second, rng);
    const Vector s = singular_values(a);
    const Vector ref = oracle::gram_singular_values(a);
    ASSERT_EQ(s.size(), ref.size());
    for (Index i = 0; i < s.size(); ++i) {
      EXPECT_NEAR(s(i), ref(i), 1e-8 * ref(0)) << "index " << i;
    }
    const auto ext = extreme_singular_values(a);
    EXPECT_DOUBLE_EQ(ext.max, s(0));
    EXPECT_DOUBLE_EQ(ext.min, s(s.size() - 1));
  }
}

TEST(SingularValues, DiagonalMatrix) {
  Matrix a = Matrix::Zero(4, 3);
  a(0, 0) = 3;
  a(1, 1) = -5;
  a(2, 2) = 0.5;
  const Vector s = singular_values(a);
  EXPECT_NEAR(s(0), 5, 1e-14);
  EXPECT_NEAR(s(1), 3, 1e-14);
  EXPECT_NEAR(s(2), 0.5, 1e-14);
}

TEST(DumpMatrix, RowMajorText) {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  EXPECT_EQ(dump_matrix(a), "1 2\n3 4\n");
}
