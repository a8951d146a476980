#include <gtest/gtest.h>

#include "hdbekk/design.hpp"
#include "oracles.hpp"

using namespace hdbekk;

TEST(Truncate, ClampsElementwise) {
  Matrix r(2, 2);
  r << 0.5, -3.0, 2.0, -0.1;
  Matrix expected(2, 2);
  expected << 0.5, -1.0, 1.0, -0.1;
  EXPECT_EQ(truncate_returns(r, 1.0), expected);
}

TEST(Truncate, InfinityIsIdentity) {
  oracle::Rng rng(1);
  const Matrix r = oracle::random_matrix(10, 3, rng, 5.0);
  EXPECT_EQ(truncate_returns(r, kInf), r);
}

TEST(Truncate, RejectsNonPositiveLevel) {
  EXPECT_THROW(truncate_returns(Matrix::Ones(2, 2), 0.0), std::invalid_argument);
  EXPECT_THROW(truncate_returns(Matrix::Ones(2, 2), -1.0), std::invalid_argument);
}

TEST(OuterVech, MatchesVechOfOuterProduct) {
  oracle::Rng rng(2);
  const Vector r = oracle::random_matrix(4, 1, rng);
  EXPECT_LT((outer_vech(r) - vech(r * r.transpose())).norm(), 1e-15);
}

TEST(BuildDesign, RowsAndLagsLineUp) {
  oracle::Rng rng(3);
  const Matrix panel = oracle::random_matrix(12, 3, rng);
  const int p = 2;
  const TruncatedDesign d = build_design(panel, p, kInf);
  ASSERT_EQ(d.rows(), 10);
  ASSERT_EQ(d.x.cols(), p * 6 + 1);
  for (Index row = 0; row < d.rows(); ++row) {
    const Index t = row + p;
    EXPECT_EQ(d.x(row, 0), 1.0);
    EXPECT_EQ(d.y.row(row).transpose(), outer_vech(panel.row(t).transpose()));
    EXPECT_EQ(d.x.row(row).segment(1, 6).transpose(), outer_vech(panel.row(t - 1).transpose()));
    EXPECT_EQ(d.x.row(row).segment(7, 6).transpose(), outer_vech(panel.row(t - 2).transpose()));
  }
}

TEST(BuildDesign, TruncatesBeforeSquaring) {
  Matrix panel(3, 1);
  panel << 2.0, -3.0, 0.5;
  const TruncatedDesign d = build_design(panel, 1, 1.0);
  EXPECT_EQ(d.y(0, 0), 1.0);
  EXPECT_EQ(d.y(1, 0), 0.25);
  EXPECT_EQ(d.x(0, 1), 1.0);
}

TEST(BuildDesign, CommonFirstRowAlignsLagOrders) {
  oracle::Rng rng(4);
  const Matrix panel = oracle::random_matrix(20, 2, rng);
  const TruncatedDesign d1 = build_design(panel, 1, kInf, 3);
  const TruncatedDesign d3 = build_design(panel, 3, kInf, 3);
  EXPECT_EQ(d1.rows(), d3.rows());
  EXPECT_EQ(d1.y, d3.y);
}

TEST(BuildDesign, TooShortPanelIsDataError) {
  EXPECT_THROW(build_design(Matrix::Ones(2, 2), 2, kInf), DataError);
  Matrix bad = Matrix::Ones(5, 2);
  bad(1, 1) = std::nan("");
  EXPECT_THROW(build_design(bad, 1, kInf), DataError);
}

TEST(CenterColumns, RemovesMeans) {
  oracle::Rng rng(5);
  const Matrix c = center_columns(oracle::random_matrix(50, 3, rng));
  EXPECT_LT(c.colwise().mean().cwiseAbs().maxCoeff(), 1e-15);
}
