#include <gtest/gtest.h>

#include <random>

#include "hdbekk/linalg.hpp"
#include "oracles.hpp"

using namespace hdbekk;

namespace {

Matrix d3_expected() {
  Matrix d = Matrix::Zero(9, 6);
  const int ones[9] = {0, 1, 2, 1, 3, 4, 2, 4, 5};
  for (int r = 0; r < 9; ++r) d(r, ones[r]) = 1.0;
  return d;
}

Matrix d3_pinv_expected() {
  Matrix e = Matrix::Zero(6, 9);
  e(0, 0) = 1.0;
  e(1, 1) = e(1, 3) = 0.5;
  e(2, 2) = e(2, 6) = 0.5;
  e(3, 4) = 1.0;
  e(4, 5) = e(4, 7) = 0.5;
  e(5, 8) = 1.0;
  return e;
}

}  // namespace

TEST(Vech, StacksLowerTriangleByColumn) {
  Matrix m(3, 3);
  m << 1, 2, 4, 2, 3, 5, 4, 5, 6;
  Vector expected(6);
  expected << 1, 2, 4, 3, 5, 6;
  EXPECT_EQ(vech(m), expected);
  EXPECT_EQ(vech_inv(expected), m);
}

TEST(Vech, RejectsNonTriangularLength) {
  EXPECT_THROW(vech_inv(Vector::Zero(4)), std::invalid_argument);
  EXPECT_THROW(side_from_vech_dim(5), std::invalid_argument);
  EXPECT_EQ(side_from_vech_dim(15), 5);
}

TEST(Vech, IndexMatchesStackingOrder) {
  for (Index n = 1; n <= 6; ++n) {
    Index pos = 0;
    for (Index col = 0; col < n; ++col)
      for (Index row = col; row < n; ++row) EXPECT_EQ(vech_index(row, col, n), pos++);
  }
}

TEST(Duplication, MatchesThreeByThreeTable) {
  EXPECT_EQ(duplication_matrix(3).to_dense(), d3_expected());
  EXPECT_EQ(elimination_matrix(3).to_dense(), d3_pinv_expected());
}

TEST(Duplication, RoundTripsSymmetricMatrices) {
  oracle::Rng rng(11);
  for (Index n = 1; n <= 6; ++n) {
    const auto dn = duplication_matrix(n);
    const auto en = elimination_matrix(n);
    for (int trial = 0; trial < 100; ++trial) {
      const Matrix m = oracle::random_symmetric(n, rng);
      EXPECT_EQ(dn.apply(vech(m)), vec(m));
      EXPECT_EQ(en.apply(vec(m)), vech(m));
    }
  }
}

TEST(Duplication, PseudoInverseIsMoorePenrose) {
  for (Index n = 1; n <= 5; ++n) {
    const Matrix d = duplication_matrix(n).to_dense();
    const Matrix reference = (d.transpose() * d).inverse() * d.transpose();
    EXPECT_LT((elimination_matrix(n).to_dense() - reference).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Duplication, CompressKronMatchesDenseProduct) {
  oracle::Rng rng(3);
  for (Index n = 1; n <= 5; ++n) {
    const Matrix m = oracle::random_matrix(n * n, n * n, rng);
    const Matrix dense = elimination_matrix(n).to_dense() * m * duplication_matrix(n).to_dense();
    EXPECT_LT((compress_kron(m) - dense).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Kron, MatchesEntrywiseDefinition) {
  oracle::Rng rng(5);
  const Matrix a = oracle::random_matrix(2, 3, rng);
  const Matrix b = oracle::random_matrix(4, 2, rng);
  EXPECT_EQ(kron(a, b), oracle::kron_naive(a, b));
}

TEST(Rearrange, KroneckerSquareBecomesOuterProduct) {
  oracle::Rng rng(7);
  for (Index n = 1; n <= 6; ++n) {
    const Matrix a = oracle::random_matrix(n, n, rng);
    const Vector v = vec(a);
    EXPECT_EQ(rearrange(kron(a, a)), v * v.transpose());
  }
}

TEST(Rearrange, TwoByTwoLayout) {
  Matrix a(2, 2);
  a << 1, 2, 3, 5;  // a11=1 a12=2 a21=3 a22=5
  const Matrix r = rearrange(kron(a, a));
  // vec(A) = (a11, a21, a12, a22).
  Vector v(4);
  v << 1, 3, 2, 5;
  EXPECT_EQ(r, v * v.transpose());
}

TEST(Rearrange, InverseUndoesPermutation) {
  oracle::Rng rng(9);
  const Matrix m = oracle::random_matrix(9, 9, rng);
  EXPECT_EQ(rearrange_inverse(rearrange(m)), m);
  EXPECT_EQ(rearrange(rearrange_inverse(m)), m);
  // Permutation: adjoint equals inverse.
  const Matrix g = oracle::random_matrix(9, 9, rng);
  EXPECT_NEAR((rearrange(m).array() * g.array()).sum(), (m.array() * rearrange_inverse(g).array()).sum(), 1e-12);
}

TEST(Rearrange, RejectsNonSquareSide) {
  EXPECT_THROW(rearrange(Matrix::Zero(5, 5)), std::invalid_argument);
  EXPECT_THROW(rearrange(Matrix::Zero(4, 3)), std::invalid_argument);
}

TEST(SymEigen, SortedDescendingWithSignConvention) {
  oracle::Rng rng(13);
  const Matrix m = oracle::random_symmetric(6, rng);
  const SymEigen e = sym_eigen(m);
  for (Index k = 1; k < 6; ++k) EXPECT_GE(e.values(k - 1), e.values(k));
  EXPECT_LT((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - m).norm(), 1e-12);
  for (Index k = 0; k < 6; ++k) {
    Index arg;
    e.vectors.col(k).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(e.vectors(arg, k), 0.0);
  }
}

TEST(SymEigen, AgreesWithSvdOnPsdInput) {
  oracle::Rng rng(17);
  const Matrix m = oracle::random_spd(7, rng);
  const Vector sv = Eigen::JacobiSVD<Matrix>(m).singularValues();
  EXPECT_LT((sym_eigenvalues(m) - sv).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PsdProject, ClipsNegativeEigenvalues) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 1.0;
  EXPECT_LT((psd_project(m, 0.0) - expected).norm(), 1e-15);
  const Matrix floored = psd_project(m, 0.25);
  EXPECT_NEAR(sym_eigenvalues(floored).minCoeff(), 0.25, 1e-14);
}

TEST(PsdProject, LeavesPsdMatricesAlone) {
  oracle::Rng rng(19);
  const Matrix m = oracle::random_spd(5, rng);
  EXPECT_LT((psd_project(m) - m).norm(), 1e-12);
}

TEST(PsdProject, RejectsAsymmetricInput) {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 1) = 1.0;
  EXPECT_THROW(psd_project(m), std::invalid_argument);
}

TEST(SymSqrt, SquaresBack) {
  oracle::Rng rng(23);
  const Matrix m = oracle::random_spd(4, rng);
  const Matrix r = sym_sqrt(m);
  EXPECT_LT((r * r - m).norm(), 1e-12);
  EXPECT_LT((r - r.transpose()).norm(), 1e-14);
}

TEST(SignConvention, LargestMagnitudeBecomesPositive) {
  Matrix a(2, 2);
  a << 0.1, -0.9, 0.2, 0.3;
  apply_sign_convention(a);
  EXPECT_GT(a(0, 1), 0.0);
  EXPECT_LT(a(0, 0), 0.0);
}
