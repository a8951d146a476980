#pragma once

// Truncation of raw returns and construction of the stacked vech regression
// Y(tau) = X(tau) Theta + E.

#include <cmath>
#include <string>

#include "errors.hpp"
#include "linalg.hpp"

namespace hdbekk {

// T x N matrix of returns, rows are time.
using ReturnPanel = Matrix;

inline void check_panel(const ReturnPanel& panel) {
  if (panel.rows() == 0 || panel.cols() == 0) throw DataError("return panel is empty");
  if (!panel.allFinite()) throw DataError("return panel contains non-finite values");
}

// Elementwise sign(r) * min(|r|, tau). tau = kInf is the identity.
inline ReturnPanel truncate_returns(const ReturnPanel& panel, double tau) {
  detail::require(tau > 0.0, "truncation level must be positive");
  if (std::isinf(tau)) return panel;
  return panel.cwiseMax(-tau).cwiseMin(tau);
}

// vech(r r^T) for one return vector.
inline Vector outer_vech(const Eigen::Ref<const Vector>& r) {
  const Index n = r.size();
  Vector out(vech_dim(n));
  Index pos = 0;
  for (Index j = 0; j < n; ++j)
    for (Index l = j; l < n; ++l) out(pos++) = r(l) * r(j);
  return out;
}

// Row t holds vech(r_t r_t^T).
inline Matrix vech_series(const ReturnPanel& panel) {
  Matrix out(panel.rows(), vech_dim(panel.cols()));
  for (Index t = 0; t < panel.rows(); ++t) out.row(t) = outer_vech(panel.row(t).transpose()).transpose();
  return out;
}

// Regressor x = (1, y_{t-1}, ..., y_{t-p}) built from a vech series.
inline Vector lagged_regressor(const Matrix& ys, Index t, int p) {
  detail::require(t >= p && t <= ys.rows(), "lagged_regressor: not enough history");
  const Index d = ys.cols();
  Vector x(p * d + 1);
  x(0) = 1.0;
  for (int i = 1; i <= p; ++i) x.segment(1 + (i - 1) * d, d) = ys.row(t - i).transpose();
  return x;
}

struct TruncatedDesign {
  double tau = kInf;  // return-level clamp
  int p = 1;
  Index first_time = 0;  // panel row of the first response
  Matrix y;              // rows x d
  Matrix x;              // rows x (p d + 1)

  Index rows() const { return y.rows(); }
  Index d() const { return y.cols(); }
};

// Stacked regression at lag order p. Response rows run over panel rows
// first_time .. T-1 where first_time defaults to p (the earliest row with a
// full set of lags); a later first_time aligns designs of different orders on
// a common response sample.
inline TruncatedDesign build_design(const ReturnPanel& panel, int p, double tau, Index first_time = -1) {
  check_panel(panel);
  detail::require(p >= 1, "lag order must be >= 1");
  if (first_time < 0) first_time = p;
  detail::require(first_time >= p, "first response row must leave p lags of history");
  if (panel.rows() <= first_time)
    throw DataError("panel has " + std::to_string(panel.rows()) + " rows; need more than " +
                    std::to_string(first_time) + " for lag order " + std::to_string(p));
  const Matrix ys = vech_series(truncate_returns(panel, tau));
  const Index d = ys.cols();
  const Index rows = panel.rows() - first_time;
  TruncatedDesign out;
  out.tau = tau;
  out.p = p;
  out.first_time = first_time;
  out.y = ys.bottomRows(rows);
  out.x.resize(rows, p * d + 1);
  out.x.col(0).setOnes();
  for (int i = 1; i <= p; ++i) out.x.block(0, 1 + (i - 1) * d, rows, d) = ys.middleRows(first_time - i, rows);
  return out;
}

// Column means removed.
inline ReturnPanel center_columns(const ReturnPanel& panel) {
  return panel.rowwise() - panel.colwise().mean();
}

}  // namespace hdbekk
