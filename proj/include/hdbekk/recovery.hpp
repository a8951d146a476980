#pragma once

// Recovery of the BEKK parameters (Omega, {A_ik}) from a fitted CoefStack.
//
// For each lag the compressed coefficient matrix Phi_i is padded back to an
// n^2 x n^2 Kronecker sum H(Phi_i, W) and rearranged into
// R(H(Phi_i, W)) = sum_k vec(A_ik) vec(A_ik)^T. The free split coefficients W
// are chosen to make that matrix low rank (nuclear norm, or the top-eigenvalue
// loss), after which the A_ik are read off its leading eigenpairs.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "fista.hpp"
#include "linalg.hpp"
#include "parallel.hpp"

namespace hdbekk {

struct BekkParams {
  Matrix omega;
  int p = 0;
  std::vector<int> K;                  // K[i-1] components at lag i
  std::vector<std::vector<Matrix>> A;  // A[i-1][k-1]

  Index n() const { return omega.rows(); }
};

// Forward map (Omega, {A_ik}) -> Theta: omega = vech(Omega),
// Phi_i = D^+ (sum_k A_ik (x) A_ik) D.
inline Matrix phi_from_components(const std::vector<Matrix>& comps, Index n) {
  Matrix sum = Matrix::Zero(n * n, n * n);
  for (const auto& a : comps) {
    detail::require(a.rows() == n && a.cols() == n, "phi_from_components: component has wrong shape");
    sum += kron(a, a);
  }
  return compress_kron(sum);
}

inline Matrix kron_sum(const std::vector<Matrix>& comps, Index n) {
  Matrix sum = Matrix::Zero(n * n, n * n);
  for (const auto& a : comps) sum += kron(a, a);
  return sum;
}

inline CoefStack theta_from_bekk(const BekkParams& params) {
  const Index n = params.n();
  detail::require(params.p >= 1 && int(params.A.size()) == params.p, "theta_from_bekk: lag count mismatch");
  CoefStack theta(params.p, vech_dim(n));
  theta.values.row(0) = vech(params.omega).transpose();
  for (int i = 1; i <= params.p; ++i) theta.set_phi(i, phi_from_components(params.A[std::size_t(i - 1)], n));
  return theta;
}

// ---------------------------------------------------------------------------
// Spectral losses

inline double nuclear_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == m.cols() && is_symmetric(m, 1e-12)) return sym_eigenvalues(m).cwiseAbs().sum();
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

// -sum_{j<=K} lambda_j + sum_{j>K} lambda_j^2 over descending eigenvalues.
inline double te_loss(const Matrix& m, int k) {
  detail::require(m.rows() == m.cols(), "te_loss: matrix must be square");
  if (k < 1 || k > m.rows()) throw std::invalid_argument("te_loss: K out of range");
  const Vector ev = sym_eigenvalues(m);
  return -ev.head(k).sum() + ev.tail(ev.size() - k).squaredNorm();
}

struct SpectralLoss {
  enum class Kind { Nuclear, TopEigen };
  Kind kind = Kind::Nuclear;
  int k = 1;  // components kept by the top-eigenvalue loss

  static SpectralLoss nuclear() { return {Kind::Nuclear, 1}; }
  static SpectralLoss top_eigen(int k) { return {Kind::TopEigen, k}; }
};

struct LossValue {
  double value = 0.0;
  Matrix grad;  // (sub)gradient with respect to the symmetric argument
};

// Value and (sub)gradient of the loss at a symmetric matrix.
//   nuclear:  U sign(L) U^T
//   top-eig:  -sum_{j<=K} u_j u_j^T + 2 sum_{j>K} lambda_j u_j u_j^T
inline LossValue spectral_loss(const Matrix& m, const SpectralLoss& loss) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericError("spectral_loss: eigensolver did not converge");
  const Vector& ev = solver.eigenvalues();  // ascending
  const Matrix& u = solver.eigenvectors();
  const Index n = ev.size();
  LossValue out;
  Vector weights(n);
  if (loss.kind == SpectralLoss::Kind::Nuclear) {
    out.value = ev.cwiseAbs().sum();
    for (Index j = 0; j < n; ++j) weights(j) = ev(j) > 0 ? 1.0 : (ev(j) < 0 ? -1.0 : 0.0);
  } else {
    if (loss.k < 1 || loss.k > n) throw std::invalid_argument("spectral_loss: K out of range");
    out.value = 0.0;
    for (Index j = 0; j < n; ++j) {
      const bool top = j >= n - loss.k;
      out.value += top ? -ev(j) : ev(j) * ev(j);
      weights(j) = top ? -1.0 : 2.0 * ev(j);
    }
  }
  out.grad = u * weights.asDiagonal() * u.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  enum class Init { HalfSplit, Zero };
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int iters = 2000;
  // lr decays geometrically to lr * lr_final_ratio over iters; 1 keeps it fixed.
  double lr_final_ratio = 1e-2;
  // Entries of W below this magnitude are zeroed after every step; 0 disables.
  // Unset selects 0 for n <= 20 and 1e-6 ||Phi||_F above that.
  std::optional<double> sparsify_threshold;
  Init init = Init::HalfSplit;

  void validate() const {
    detail::require(lr > 0.0, "adam: lr must be positive");
    detail::require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam: betas must lie in [0, 1)");
    detail::require(eps > 0.0, "adam: eps must be positive");
    detail::require(iters >= 1, "adam: iters must be >= 1");
    detail::require(lr_final_ratio > 0.0 && lr_final_ratio <= 1.0, "adam: lr_final_ratio must lie in (0, 1]");
    detail::require(!sparsify_threshold || *sparsify_threshold >= 0.0, "adam: sparsify threshold must be >= 0");
  }
};

struct AdamState {
  Matrix param;
  Matrix m;
  Matrix v;
  long step = 0;

  explicit AdamState(Matrix init)
      : param(std::move(init)), m(Matrix::Zero(param.rows(), param.cols())), v(Matrix::Zero(param.rows(), param.cols())) {}
};

// Bias-corrected first/second moment update.
inline void adam_step(AdamState& s, const Matrix& grad, const AdamConfig& cfg, double lr) {
  detail::require(grad.rows() == s.param.rows() && grad.cols() == s.param.cols(), "adam_step: shape mismatch");
  ++s.step;
  s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * grad;
  s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, double(s.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(s.step));
  s.param.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + cfg.eps);
}

// ---------------------------------------------------------------------------
inline void adam_step(AdamState& s, const Matrix& grad, const AdamConfig& cfg) { adam_step(s, grad, cfg, cfg.lr); }

// Learning rate at step it of cfg.iters.
inline double adam_lr(const AdamConfig& cfg, int it) {
  return cfg.lr * std::pow(cfg.lr_final_ratio, double(it) / double(cfg.iters));
}

// ---------------------------------------------------------------------------
// Split-coefficient optimisation

// M(W) = R(H(Phi, W)) written as base + sum_w W[w] * (+-1 at four slots).
class RearrangedPadding {
 public:
  RearrangedPadding(const PadLayout& layout, const Matrix& phi) : side_(layout.side()) {
    const Index nn = side_;
    const Index n = layout.n();
    base_ = rearrange(layout.apply(phi, Matrix::Zero(layout.aux_side(), layout.aux_side())));
    // Position of H entry (a, b) after rearrangement.
    const auto& terms = layout.terms();
    for (Index b = 0; b < nn; ++b)
      for (Index a = 0; a < nn; ++a) {
        const auto& t = terms[std::size_t(a + b * nn)];
        if (t.w_pos < 0) continue;
        const Index i = a / n, j = a % n, k = b / n, l = b % n;
        slots_.push_back({t.w_pos, (i + k * n) + (j + l * n) * nn, t.w_sign});
      }
    aux_side_ = layout.aux_side();
  }

  Matrix evaluate(const Matrix& w) const {
    Matrix m = base_;
    for (const auto& s : slots_) m.data()[s.m_pos] += s.sign * w.data()[s.w_pos];
    return m;
  }

  Matrix pullback(const Matrix& grad_m) const {
    Matrix g = Matrix::Zero(aux_side_, aux_side_);
    for (const auto& s : slots_) g.data()[s.w_pos] += s.sign * grad_m.data()[s.m_pos];
    return g;
  }

 private:
  struct Slot {
    Index w_pos;
    Index m_pos;
    double sign;
  };
  Index side_;
  Index aux_side_ = 0;
  Matrix base_;
  std::vector<Slot> slots_;
};

struct AuxSolution {
  Matrix w;
  double loss = 0.0;
  Vector spectrum;  // descending eigenvalues of R(H(Phi, w))
  int best_iteration = 0;
};

inline double resolve_sparsify_threshold(const AdamConfig& cfg, const Matrix& phi) {
  if (cfg.sparsify_threshold) return *cfg.sparsify_threshold;
  const Index n = side_from_vech_dim(phi.rows());
  return n <= 20 ? 0.0 : 1e-6 * phi.norm();
}

// Minimises loss(R(H(phi, W))) over W with Adam; returns the best iterate.
inline AuxSolution solve_aux(const Matrix& phi, const SpectralLoss& loss, const AdamConfig& cfg) {
  cfg.validate();
  if (phi.rows() != phi.cols()) throw std::invalid_argument("solve_aux: Phi must be square");
  const Index n = side_from_vech_dim(phi.rows());
  if (loss.kind == SpectralLoss::Kind::TopEigen && (loss.k < 1 || loss.k > n * n))
    throw std::invalid_argument("solve_aux: K out of range");
  const PadLayout layout(n);
  const RearrangedPadding op(layout, phi);
  const double threshold = resolve_sparsify_threshold(cfg, phi);

  // Adam moves each parameter by about lr per step whatever the gradient
  // scale, so W is optimised as W = s V with s the largest |Phi| entry. The loss
  // itself is untouched; only the step size in W units adapts to the data.
  const double peak = phi.size() ? phi.cwiseAbs().maxCoeff() : 0.0;
  const double s = peak > 0.0 ? peak : 1.0;
  AdamState state(cfg.init == AdamConfig::Init::HalfSplit
                      ? Matrix(layout.half_split(phi) / s)
                      : Matrix(Matrix::Zero(layout.aux_side(), layout.aux_side())));
  AuxSolution best;
  best.w = s * state.param;
  best.loss = kInf;
  for (int it = 0; it <= cfg.iters; ++it) {
    const Matrix w = s * state.param;
    const LossValue lv = spectral_loss(op.evaluate(w), loss);
    if (!std::isfinite(lv.value)) throw NumericError("solve_aux: loss became non-finite");
    if (lv.value < best.loss) {
      best.loss = lv.value;
      best.w = w;
      best.best_iteration = it;
    }
    if (it == cfg.iters || state.param.size() == 0) break;
    adam_step(state, s * op.pullback(lv.grad), cfg, adam_lr(cfg, it));
    if (threshold > 0.0) {
      const double cut = threshold / s;
      state.param = state.param.unaryExpr([cut](double v) { return std::abs(v) < cut ? 0.0 : v; });
    }
  }
  best.spectrum = sym_eigenvalues(op.evaluate(best.w));
  return best;
}

// Top-K components vec^{-1}(sqrt(max(lambda_k, 0)) u_k), sign-fixed and in
// descending Frobenius order.
inline std::vector<Matrix> recover_components(const Matrix& phi, const Matrix& w, int k) {
  if (phi.rows() != phi.cols()) throw std::invalid_argument("recover_components: Phi must be square");
  const Index n = side_from_vech_dim(phi.rows());
  if (k < 1 || k > n * n) throw std::invalid_argument("recover_components: K exceeds matrix side");
  const SymEigen eig = sym_eigen(rearrange(PadLayout(n).apply(phi, w)));
  std::vector<Matrix> out;
  out.reserve(std::size_t(k));
  for (int j = 0; j < k; ++j) {
    const double scale = std::sqrt(std::max(eig.values(j), 0.0));
    Matrix a = vec_inv(scale * eig.vectors.col(j), n);
    apply_sign_convention(a);
    out.push_back(std::move(a));
  }
  // Eigenvalues arrive sorted; only exact norm ties need the lexicographic rule.
  std::stable_sort(out.begin(), out.end(), [](const Matrix& x, const Matrix& y) {
    const double nx = x.squaredNorm(), ny = y.squaredNorm();
    if (nx != ny) return nx > ny;
    return std::lexicographical_compare(x.data(), x.data() + x.size(), y.data(), y.data() + y.size());
  });
  return out;
}

inline Matrix recover_omega(const CoefStack& theta, double floor = kDefaultPsdFloor) {
  return psd_project(vech_inv(theta.omega()), floor);
}

struct BekkRecovery {
  BekkParams params;
  std::vector<AuxSolution> aux;  // per lag
};

// Full recovery for fixed component counts.
inline BekkRecovery recover_bekk(const CoefStack& theta, const std::vector<int>& k, SpectralLoss::Kind kind,
                                 const AdamConfig& cfg, double floor = kDefaultPsdFloor,
                                 std::size_t threads = 1) {
  detail::require(int(k.size()) == theta.p, "recover_bekk: need one component count per lag");
  BekkRecovery out;
  out.params.omega = recover_omega(theta, floor);
  out.params.p = theta.p;
  out.params.K = k;
  out.params.A.resize(std::size_t(theta.p));
  out.aux.resize(std::size_t(theta.p));
  parallel_for(std::size_t(theta.p), threads, [&](std::size_t i) {
    const Matrix phi = theta.phi(int(i) + 1);
    const SpectralLoss loss = kind == SpectralLoss::Kind::Nuclear ? SpectralLoss::nuclear()
                                                                  : SpectralLoss::top_eigen(k[i]);
    out.aux[i] = solve_aux(phi, loss, cfg);
    out.params.A[i] = recover_components(phi, out.aux[i].w, k[i]);
  });
  return out;
}

}  // namespace hdbekk
