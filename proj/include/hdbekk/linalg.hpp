#pragma once

// Linear-algebra primitives for the vech-VAR form of a BEKK-ARCH model:
// half-vectorisation, duplication/elimination selectors, symmetric
// eigendecomposition with a deterministic sign convention, PSD projection,
// Kronecker products, and the padding/rearrangement operators that map a
// compressed vech coefficient matrix back to a Kronecker sum and then to a
// low-rank matrix whose eigenvectors are vec(A_k).
//
// Index conventions are 0-based throughout. vec() stacks columns, vech()
// stacks the lower triangle column by column.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"

namespace hdbekk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// vech machinery

constexpr Index vech_dim(Index n) { return n * (n + 1) / 2; }
constexpr Index offdiag_dim(Index n) { return n * (n - 1) / 2; }

// Side n with n(n+1)/2 == d. Throws if d is not a triangular number.
inline Index side_from_vech_dim(Index d) {
  detail::require(d >= 1, "vech length must be positive");
  const auto n = static_cast<Index>(std::llround((std::sqrt(8.0 * double(d) + 1.0) - 1.0) / 2.0));
  if (vech_dim(n) != d)
    throw std::invalid_argument("length " + std::to_string(d) + " is not of the form n(n+1)/2");
  return n;
}

inline Index perfect_square_root(Index m) {
  const auto n = static_cast<Index>(std::llround(std::sqrt(double(m))));
  if (n * n != m) throw std::invalid_argument("side " + std::to_string(m) + " is not a perfect square");
  return n;
}

// Position of element (row, col), row >= col, inside vech of an n x n matrix.
constexpr Index vech_index(Index row, Index col, Index n) {
  return col * (2 * n - col + 1) / 2 + (row - col);
}

// Position of the strictly-lower element (v, u), u < v, in the length
// n(n-1)/2 vector of off-diagonal pairs. Indexes rows/columns of the
// auxiliary split matrix W.
constexpr Index offdiag_index(Index u, Index v, Index n) {
  return u * (2 * n - u - 1) / 2 + (v - u - 1);
}

// Row/column of the Kronecker factor pair (u, v) in an n^2 x n^2 matrix
// M = A (x) B, i.e. M[kron_index(i,j), kron_index(k,l)] = A(i,k) B(j,l).
constexpr Index kron_index(Index u, Index v, Index n) { return u * n + v; }

inline Vector vech(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("vech: matrix must be square");
  const Index n = m.rows();
  Vector out(vech_dim(n));
  Index pos = 0;
  for (Index j = 0; j < n; ++j)
    for (Index l = j; l < n; ++l) out(pos++) = m(l, j);
  return out;
}

inline Matrix vech_inv(const Vector& v) {
  const Index n = side_from_vech_dim(v.size());
  Matrix out(n, n);
  Index pos = 0;
  for (Index j = 0; j < n; ++j)
    for (Index l = j; l < n; ++l) {
      out(l, j) = v(pos);
      out(j, l) = v(pos);
      ++pos;
    }
  return out;
}

inline Vector vec(const Matrix& m) { return m.reshaped(); }

inline Matrix vec_inv(const Vector& v, Index rows) {
  detail::require(rows > 0 && v.size() % rows == 0, "vec_inv: length not divisible by rows");
  return v.reshaped(rows, v.size() / rows);
}

// ---------------------------------------------------------------------------
// Duplication / elimination selectors

struct SparseEntry {
  Index row;
  Index col;
  double value;
};

// Triplet-list matrix used for the pure selectors D_N and its pseudo-inverse.
struct SparseSelector {
  Index rows = 0;
  Index cols = 0;
  std::vector<SparseEntry> entries;

  Vector apply(const Vector& x) const {
    detail::require(x.size() == cols, "SparseSelector::apply: dimension mismatch");
    Vector y = Vector::Zero(rows);
    for (const auto& e : entries) y(e.row) += e.value * x(e.col);
    return y;
  }

  Matrix to_dense() const {
    Matrix m = Matrix::Zero(rows, cols);
    for (const auto& e : entries) m(e.row, e.col) += e.value;
    return m;
  }

  // Nonzeros in column c.
  std::size_t column_count(Index c) const {
    std::size_t k = 0;
    for (const auto& e : entries) k += (e.col == c);
    return k;
  }
};

// D_N with D_N vech(M) == vec(M) for symmetric M.
inline SparseSelector duplication_matrix(Index n) {
  detail::require(n >= 1, "duplication_matrix: N must be >= 1");
  SparseSelector s{n * n, vech_dim(n), {}};
  for (Index j = 0; j < n; ++j)
    for (Index l = j; l < n; ++l) {
      const Index f = vech_index(l, j, n);
      s.entries.push_back({l + j * n, f, 1.0});
      if (l > j) s.entries.push_back({j + l * n, f, 1.0});
    }
  return s;
}

// Moore-Penrose inverse of D_N: averages the two copies of each off-diagonal.
inline SparseSelector elimination_matrix(Index n) {
  detail::require(n >= 1, "elimination_matrix: N must be >= 1");
  SparseSelector s{vech_dim(n), n * n, {}};
  for (Index j = 0; j < n; ++j)
    for (Index l = j; l < n; ++l) {
      const Index f = vech_index(l, j, n);
      if (l == j) {
        s.entries.push_back({f, l + j * n, 1.0});
      } else {
        s.entries.push_back({f, l + j * n, 0.5});
        s.entries.push_back({f, j + l * n, 0.5});
      }
    }
  return s;
}

// D_N^+ M D_N for an n^2 x n^2 matrix M, without materialising either selector.
inline Matrix compress_kron(const Matrix& m) {
  const Index n = perfect_square_root(m.rows());
  detail::require(m.cols() == m.rows(), "compress_kron: matrix must be square");
  const Index d = vech_dim(n);
  // Column pass: (M D_N)[:, f(l,j)] = M[:, vec(l,j)] + M[:, vec(j,l)] (once on the diagonal).
  Matrix md(n * n, d);
  for (Index j = 0; j < n; ++j)
    for (Index l = j; l < n; ++l) {
      const Index f = vech_index(l, j, n);
      md.col(f) = m.col(l + j * n);
      if (l > j) md.col(f) += m.col(j + l * n);
    }
  Matrix out(d, d);
  for (Index j = 0; j < n; ++j)
    for (Index l = j; l < n; ++l) {
      const Index f = vech_index(l, j, n);
      if (l == j)
        out.row(f) = md.row(l + j * n);
      else
        out.row(f) = 0.5 * (md.row(l + j * n) + md.row(j + l * n));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

// Flips v so that its largest-magnitude entry (first one on ties) is positive.
inline void apply_sign_convention(Eigen::Ref<Vector> v) {
  if (v.size() == 0) return;
  Index arg = 0;
  double best = -1.0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      arg = i;
    }
  }
  if (v(arg) < 0) v = -v;
}

inline void apply_sign_convention(Matrix& a) {
  Eigen::Map<Vector> flat(a.data(), a.size());
  apply_sign_convention(flat);
}

// Eigenpairs sorted by descending eigenvalue; vectors are columns.
struct SymEigen {
  Vector values;
  Matrix vectors;
};

// Householder tridiagonalisation followed by implicit symmetric QR (Eigen's
// SelfAdjointEigenSolver). Only the lower triangle of m is read.
inline SymEigen sym_eigen(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("sym_eigen: matrix must be square");
  SymEigen out;
  if (m.rows() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success)
    throw NumericError("sym_eigen: eigensolver did not converge");
  const Index n = m.rows();
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index k = 0; k < n; ++k) {
    out.values(k) = solver.eigenvalues()(n - 1 - k);
    out.vectors.col(k) = solver.eigenvectors().col(n - 1 - k);
    apply_sign_convention(out.vectors.col(k));
  }
  return out;
}

inline Vector sym_eigenvalues(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("sym_eigenvalues: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericError("sym_eigenvalues: eigensolver did not converge");
  return solver.eigenvalues().reverse();
}

inline constexpr double kDefaultPsdFloor = 1e-10;

// Nearest (Frobenius) symmetric matrix whose eigenvalues are all >= floor.
inline Matrix psd_project(const Matrix& m, double floor = kDefaultPsdFloor) {
  detail::require(floor >= 0.0, "psd_project: floor must be non-negative");
  if (!is_symmetric(m, 1e-8)) throw std::invalid_argument("psd_project: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success)
    throw NumericError("psd_project: eigensolver did not converge");
  const Vector clipped = solver.eigenvalues().cwiseMax(floor);
  Matrix out = solver.eigenvectors() * clipped.asDiagonal() * solver.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

// Symmetric square root of a PSD matrix. Negative eigenvalues beyond -tol
// signal a broken covariance.
inline Matrix sym_sqrt(const Matrix& m, double tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericError("sym_sqrt: eigensolver did not converge");
  const double scale = std::max(1.0, solver.eigenvalues().cwiseAbs().maxCoeff());
  if (solver.eigenvalues().minCoeff() < -tol * scale)
    throw NumericError("sym_sqrt: matrix is not positive semidefinite");
  const Vector root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * root.asDiagonal() * solver.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Kronecker products and rearrangement

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k)
      out.block(i * b.rows(), k * b.cols(), b.rows(), b.cols()) = a(i, k) * b;
  return out;
}

// R(M)[vec(i,k), vec(j,l)] = M[kron(i,j), kron(k,l)], so that
// R(A (x) A) = vec(A) vec(A)^T with vec() column-major.
inline Matrix rearrange(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("rearrange: matrix must be square");
  const Index n = perfect_square_root(m.rows());
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index k = 0; k < n; ++k)
        for (Index l = 0; l < n; ++l)
          out(i + k * n, j + l * n) = m(kron_index(i, j, n), kron_index(k, l, n));
  return out;
}

// Inverse (and adjoint) of rearrange: both are permutations of entries.
inline Matrix rearrange_inverse(const Matrix& r) {
  if (r.rows() != r.cols()) throw std::invalid_argument("rearrange_inverse: matrix must be square");
  const Index n = perfect_square_root(r.rows());
  Matrix out(r.rows(), r.cols());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index k = 0; k < n; ++k)
        for (Index l = 0; l < n; ++l)
          out(kron_index(i, j, n), kron_index(k, l, n)) = r(i + k * n, j + l * n);
  return out;
}

// ---------------------------------------------------------------------------
// Padding operator H(Phi, W)

// Symbolic description of H(Phi, W): each of the n^2 x n^2 entries is
//   phi_coef * Phi[phi_pos] + w_sign * W[w_pos]
// with either term possibly absent (pos < 0). Positions index the
// column-major storage of Phi (d x d) and W (g x g). H is affine in W, so the
// same table yields both the forward map and its adjoint.
class PadLayout {
 public:
  struct Term {
    Index phi_pos = -1;
    double phi_coef = 0.0;
    Index w_pos = -1;
    double w_sign = 0.0;
  };

  explicit PadLayout(Index n) : n_(n) {
    detail::require(n >= 1, "PadLayout: N must be >= 1");
    build();
  }

  Index n() const { return n_; }
  Index vech_side() const { return vech_dim(n_); }
  Index aux_side() const { return offdiag_dim(n_); }
  Index side() const { return n_ * n_; }
  const std::vector<Term>& terms() const { return terms_; }

  Matrix apply(const Matrix& phi, const Matrix& w) const {
    check(phi, w);
    Matrix h(side(), side());
    double* out = h.data();
    for (std::size_t p = 0; p < terms_.size(); ++p) {
      const Term& t = terms_[p];
      double v = 0.0;
      if (t.phi_pos >= 0) v += t.phi_coef * phi.data()[t.phi_pos];
      if (t.w_pos >= 0) v += t.w_sign * w.data()[t.w_pos];
      out[p] = v;
    }
    return h;
  }

  // Gradient with respect to W of <grad_h, H(Phi, W)>.
  Matrix adjoint_aux(const Matrix& grad_h) const {
    detail::require(grad_h.rows() == side() && grad_h.cols() == side(), "adjoint_aux: dimension mismatch");
    Matrix g = Matrix::Zero(aux_side(), aux_side());
    for (std::size_t p = 0; p < terms_.size(); ++p) {
      const Term& t = terms_[p];
      if (t.w_pos >= 0) g.data()[t.w_pos] += t.w_sign * grad_h.data()[p];
    }
    return g;
  }

  // The W that makes H(Phi, W) reproduce a given Kronecker sum exactly.
  Matrix aux_from_kron_sum(const Matrix& kron_sum) const {
    detail::require(kron_sum.rows() == side() && kron_sum.cols() == side(),
                    "aux_from_kron_sum: dimension mismatch");
    Matrix w = Matrix::Zero(aux_side(), aux_side());
    for (std::size_t p = 0; p < terms_.size(); ++p) {
      const Term& t = terms_[p];
      if (t.w_pos >= 0 && t.w_sign > 0 && t.phi_pos < 0) w.data()[t.w_pos] = kron_sum.data()[p];
    }
    return w;
  }

  // Equal split of every merged coefficient: W[e(j,l), e(k,h)] = Phi[k(k,h), k(j,l)] / 2.
  Matrix half_split(const Matrix& phi) const {
    check(phi, Matrix::Zero(aux_side(), aux_side()));
    Matrix w(aux_side(), aux_side());
    for (Index j = 0; j < n_; ++j)
      for (Index l = j + 1; l < n_; ++l)
        for (Index k = 0; k < n_; ++k)
          for (Index h = k + 1; h < n_; ++h)
            w(offdiag_index(j, l, n_), offdiag_index(k, h, n_)) =
                0.5 * phi(vech_index(h, k, n_), vech_index(l, j, n_));
    return w;
  }

 private:
  void check(const Matrix& phi, const Matrix& w) const {
    if (phi.rows() != vech_side() || phi.cols() != vech_side())
      throw std::invalid_argument("pad: Phi must be " + std::to_string(vech_side()) + " x " +
                                  std::to_string(vech_side()));
    if (w.rows() != aux_side() || w.cols() != aux_side())
      throw std::invalid_argument("pad: W must be " + std::to_string(aux_side()) + " x " +
                                  std::to_string(aux_side()));
  }

  // Two-stage construction: pad columns into a d x n^2 intermediate, then
  // re-index its rows into n^2 rows.
  void build() {
    const Index n = n_;
    const Index d = vech_dim(n);
    const Index nn = n * n;
    auto vp = [n](Index u, Index v) { return vech_index(v, u, n); };  // element (v,u), u <= v
    auto ep = [n](Index u, Index v) { return offdiag_index(u, v, n); };
    auto kp = [n](Index u, Index v) { return kron_index(u, v, n); };
    auto phi_at = [d](Index r, Index c) { return r + c * d; };
    const Index g = offdiag_dim(n);
    auto w_at = [g](Index r, Index c) { return r + c * g; };

    std::vector<Term> mid(static_cast<std::size_t>(d * nn));
    std::vector<char> mid_set(mid.size(), 0);
    auto set_mid = [&](Index r, Index c, Term t) {
      mid[static_cast<std::size_t>(r + c * d)] = t;
      mid_set[static_cast<std::size_t>(r + c * d)] = 1;
    };

    for (Index l = 0; l < n; ++l)
      for (Index r = 0; r < d; ++r) set_mid(r, kp(l, l), {phi_at(r, vp(l, l)), 1.0, -1, 0.0});
    for (Index j = 0; j < n; ++j)
      for (Index l = j + 1; l < n; ++l) {
        for (Index h = 0; h < n; ++h) {
          const Term half{phi_at(vp(h, h), vp(j, l)), 0.5, -1, 0.0};
          set_mid(vp(h, h), kp(j, l), half);
          set_mid(vp(h, h), kp(l, j), half);
        }
        for (Index k = 0; k < n; ++k)
          for (Index h = k + 1; h < n; ++h) {
            const Index wpos = w_at(ep(j, l), ep(k, h));
            set_mid(vp(k, h), kp(j, l), {-1, 0.0, wpos, 1.0});
            set_mid(vp(k, h), kp(l, j), {phi_at(vp(k, h), vp(j, l)), 1.0, wpos, -1.0});
          }
      }

    terms_.assign(static_cast<std::size_t>(nn * nn), Term{});
    std::vector<char> set(terms_.size(), 0);
    auto out = [&](Index r, Index c, Index mr, Index mc) {
      const auto src = static_cast<std::size_t>(mr + mc * d);
      if (!mid_set[src]) throw std::logic_error("PadLayout: intermediate entry left unset");
      terms_[static_cast<std::size_t>(r + c * nn)] = mid[src];
      set[static_cast<std::size_t>(r + c * nn)] = 1;
    };

    for (Index l = 0; l < n; ++l)
      for (Index c = 0; c < nn; ++c) out(kp(l, l), c, vp(l, l), c);
    for (Index j = 0; j < n; ++j)
      for (Index l = j + 1; l < n; ++l) {
        for (Index h = 0; h < n; ++h) {
          out(kp(j, l), kp(h, h), vp(j, l), kp(h, h));
          out(kp(l, j), kp(h, h), vp(j, l), kp(h, h));
        }
        for (Index k = 0; k < n; ++k)
          for (Index h = k + 1; h < n; ++h) {
            out(kp(l, j), kp(k, h), vp(j, l), kp(k, h));
            out(kp(l, j), kp(h, k), vp(j, l), kp(h, k));
            out(kp(j, l), kp(k, h), vp(j, l), kp(h, k));
            out(kp(j, l), kp(h, k), vp(j, l), kp(k, h));
          }
      }
    for (char s : set)
      if (!s) throw std::logic_error("PadLayout: padded entry left unset");
  }

  Index n_;
  std::vector<Term> terms_;
};

// H(Phi, W). Builds the layout on every call; hot loops should hold a PadLayout.
inline Matrix pad(const Matrix& phi, const Matrix& w) {
  if (phi.rows() != phi.cols()) throw std::invalid_argument("pad: Phi must be square");
  const Index n = side_from_vech_dim(phi.rows());
  return PadLayout(n).apply(phi, w);
}

}  // namespace hdbekk
