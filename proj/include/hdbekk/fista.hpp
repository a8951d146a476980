#pragma once

// l1,1-penalised least squares for the stacked vech regression, solved by
// blockwise FISTA over column blocks of Theta:
//
//   min_Theta  1/(2T) ||Y - X Theta||_F^2 + lambda ||Theta||_{1,1}
//
// The objective separates over columns, so each block of at most B columns is
// an independent problem sharing the precomputed X^T X.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "design.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "parallel.hpp"

namespace hdbekk {

// Theta = (omega, Phi_1, ..., Phi_p)^T, shape (p d + 1) x d.
struct CoefStack {
  int p = 1;
  Index d = 1;
  Matrix values;

  CoefStack() = default;
  CoefStack(int lags, Index vech_side) : p(lags), d(vech_side), values(Matrix::Zero(lags * vech_side + 1, vech_side)) {}
  CoefStack(int lags, Matrix v) : p(lags), d(v.cols()), values(std::move(v)) {
    if (values.rows() != p * d + 1) throw std::invalid_argument("CoefStack: expected (p d + 1) x d values");
  }

  Index n() const { return side_from_vech_dim(d); }
  Vector omega() const { return values.row(0).transpose(); }
  // Phi_i for i in 1..p.
  Matrix phi(int i) const {
    detail::require(i >= 1 && i <= p, "CoefStack::phi: lag out of range");
    return values.middleRows(1 + (i - 1) * d, d).transpose();
  }
  void set_phi(int i, const Matrix& phi_i) {
    detail::require(i >= 1 && i <= p, "CoefStack::set_phi: lag out of range");
    detail::require(phi_i.rows() == d && phi_i.cols() == d, "CoefStack::set_phi: shape mismatch");
    values.middleRows(1 + (i - 1) * d, d) = phi_i.transpose();
  }
  // One-step vech forecast Theta^T x.
  Vector forecast(const Vector& x) const { return values.transpose() * x; }
};

struct FistaConfig {
  double lambda = 0.0;
  double tol = 1e-3;  // relative Frobenius change between iterates
  Index block_size = 256;
  int max_iter = 10000;  // per block
  std::size_t threads = 1;

  void validate(Index d) const {
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
    detail::require(tol > 0.0, "tol must be positive");
    detail::require(block_size >= 1, "block_size must be >= 1");
    detail::require(max_iter >= 1, "max_iter must be >= 1");
    (void)d;
  }
};

// Sufficient statistics of a design: X^T X, X^T Y, column sums of Y^2.
struct GramSystem {
  Matrix xtx;
  Matrix xty;
  Vector yty;
  Index rows = 0;

  static GramSystem from_design(const TruncatedDesign& design) {
    GramSystem g;
    g.xtx = design.x.transpose() * design.x;
    g.xty = design.x.transpose() * design.y;
    g.yty = design.y.colwise().squaredNorm().transpose();
    g.rows = design.rows();
    return g;
  }

  static GramSystem empty(Index cols, Index d) {
    GramSystem g;
    g.xtx = Matrix::Zero(cols, cols);
    g.xty = Matrix::Zero(cols, d);
    g.yty = Vector::Zero(d);
    return g;
  }

  void add_row(const Vector& x, const Vector& y) {
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
    xtx.triangularView<Eigen::StrictlyUpper>() = xtx.transpose();
    xty.noalias() += x * y.transpose();
    yty += y.cwiseAbs2();
    ++rows;
  }
};

inline Matrix soft_threshold(const Matrix& m, double rho) {
  detail::require(rho >= 0.0, "soft_threshold: rho must be non-negative");
  return m.unaryExpr([rho](double v) {
    const double a = std::abs(v) - rho;
    return a > 0.0 ? std::copysign(a, v) : 0.0;
  });
}

// Largest eigenvalue of a PSD Gram matrix by power iteration.
inline double gram_top_eigenvalue(const Matrix& gram, double rel_tol = 1e-9, int max_iter = 100000) {
  const Index n = gram.rows();
  detail::require(n > 0 && gram.cols() == n, "gram_top_eigenvalue: square input required");
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = 1.0 + 1e-3 * double(i % 7);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = gram * v;
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

// eta = 1/L with L = ||X||_op^2 / T.
inline double step_size_from_gram(const Matrix& xtx, Index rows) {
  const double top = gram_top_eigenvalue(xtx);
  if (!(top > 0.0)) throw NumericError("step_size: design is identically zero");
  return double(rows) / top;
}

inline double step_size(const Matrix& x) {
  detail::require(x.size() > 0, "step_size: empty design");
  return step_size_from_gram(x.transpose() * x, x.rows());
}

// Per-column objective 1/(2T)||y_j - X theta_j||^2 + lambda ||theta_j||_1.
inline Vector column_objectives(const GramSystem& g, const Matrix& theta, double lambda) {
  const double t = double(g.rows);
  Vector out(theta.cols());
  const Matrix gt = g.xtx * theta;
  for (Index j = 0; j < theta.cols(); ++j) {
    const double quad = g.yty(j) - 2.0 * theta.col(j).dot(g.xty.col(j)) + theta.col(j).dot(gt.col(j));
    out(j) = std::max(quad, 0.0) / (2.0 * t) + lambda * theta.col(j).lpNorm<1>();
  }
  return out;
}

inline double objective(const GramSystem& g, const Matrix& theta, double lambda) {
  return column_objectives(g, theta, lambda).sum();
}

// Objective evaluated from the residual directly.
inline double objective(const TruncatedDesign& design, const Matrix& theta, double lambda) {
  const double t = double(design.rows());
  return (design.y - design.x * theta).squaredNorm() / (2.0 * t) + lambda * theta.cwiseAbs().sum();
}

// Largest violation of the lasso optimality conditions at theta.
inline double kkt_residual(const GramSystem& g, const Matrix& theta, double lambda) {
  const Matrix grad = (g.xtx * theta - g.xty) / double(g.rows);
  double worst = 0.0;
  for (Index j = 0; j < theta.cols(); ++j)
    for (Index i = 0; i < theta.rows(); ++i) {
      const double th = theta(i, j);
      const double v = th == 0.0 ? std::max(0.0, std::abs(grad(i, j)) - lambda)
                                 : std::abs(grad(i, j) + lambda * (th > 0 ? 1.0 : -1.0));
      worst = std::max(worst, v);
    }
  return worst;
}

struct FistaResult {
  CoefStack theta;
  double step = 0.0;
  long iterations = 0;   // summed over blocks
  bool converged = true; // false if any block hit max_iter
  // Objective after each block completes, in block order. Columns of blocks
  // not yet solved count at their starting value.
  std::vector<double> block_objective;
};

inline FistaResult fit_theta(const GramSystem& g, int p, const FistaConfig& cfg,
                             const std::optional<CoefStack>& warm_start = std::nullopt) {
  const Index cols = g.xtx.rows();
  const Index d = g.xty.cols();
  if (cols != p * d + 1 || g.xty.rows() != cols)
    throw std::invalid_argument("fit_theta: design does not match lag order p");
  detail::require(g.rows > 0, "fit_theta: design has no rows");
  cfg.validate(d);
  if (warm_start && (warm_start->values.rows() != cols || warm_start->values.cols() != d))
    throw std::invalid_argument("fit_theta: warm start has the wrong shape");

  FistaResult out;
  out.theta = CoefStack(p, d);
  out.step = step_size_from_gram(g.xtx, g.rows);
  const double eta = out.step;
  const double inv_t = 1.0 / double(g.rows);
  const double shrink = cfg.lambda * eta;

  const Index block = std::min<Index>(cfg.block_size, d);
  const Index n_blocks = (d + block - 1) / block;
  std::vector<long> iters(static_cast<std::size_t>(n_blocks), 0);
  std::vector<char> conv(static_cast<std::size_t>(n_blocks), 1);

  parallel_for(static_cast<std::size_t>(n_blocks), cfg.threads, [&](std::size_t b) {
    const Index j0 = Index(b) * block;
    const Index width = std::min(block, d - j0);
    const auto xty = g.xty.middleCols(j0, width);
    Matrix theta = warm_start ? Matrix(warm_start->values.middleCols(j0, width)) : Matrix::Zero(cols, width);
    Matrix u = theta;
    double t_n = 1.0;
    bool done = false;
    int n = 0;
    for (; n < cfg.max_iter; ++n) {
      const Matrix grad = inv_t * (g.xtx * u - xty);
      Matrix next = soft_threshold(u - eta * grad, shrink);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_n * t_n));
      const double change = (next - theta).norm();
      const double base = theta.norm();
      u = next + ((t_n - 1.0) / t_next) * (next - theta);
      theta.swap(next);
      t_n = t_next;
      // A zero base makes the ratio undefined; keep iterating unless nothing moved.
      if (change == 0.0 || (base > 1e-12 && change / base < cfg.tol)) {
        done = true;
        ++n;
        break;
      }
    }
    out.theta.values.middleCols(j0, width) = theta;
    iters[b] = n;
    conv[b] = done ? 1 : 0;
  });

  const Matrix start = warm_start ? warm_start->values : Matrix::Zero(cols, d);
  const Vector before = column_objectives(g, start, cfg.lambda);
  const Vector after = column_objectives(g, out.theta.values, cfg.lambda);
  double running = before.sum();
  for (Index b = 0; b < n_blocks; ++b) {
    const Index j0 = b * block;
    const Index width = std::min(block, d - j0);
    running += after.segment(j0, width).sum() - before.segment(j0, width).sum();
    out.block_objective.push_back(running);
    out.iterations += iters[static_cast<std::size_t>(b)];
    out.converged = out.converged && conv[static_cast<std::size_t>(b)];
  }
  return out;
}

inline FistaResult fit_theta(const TruncatedDesign& design, const FistaConfig& cfg,
                             const std::optional<CoefStack>& warm_start = std::nullopt) {
  return fit_theta(GramSystem::from_design(design), design.p, cfg, warm_start);
}

// Smallest lambda for which the all-zero Theta is optimal.
inline double lambda_max(const GramSystem& g) {
  return g.xty.cwiseAbs().maxCoeff() / double(g.rows);
}

}  // namespace hdbekk
