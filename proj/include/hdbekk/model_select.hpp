#pragma once

// Lag-order selection by a robust BIC, component-count selection by the
// ridge-type eigenvalue ratio, and joint (lambda, tau) tuning by rolling
// one-step forecast error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "design.hpp"
#include "errors.hpp"
#include "fista.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "recovery.hpp"

namespace hdbekk {

struct SelectConfig {
  int p_max = 5;
  int K_max = 5;
  double epsilon = 0.1;
  double iota_d = 0.05;
  double alpha_c = 1e-3;
  // Candidate grids. tau values are in vech units (products of returns); the
  // return-level clamp is their square root. Empty grids are filled by
  // default_lambda_grid / default_tau_grid.
  std::vector<double> lambda_grid;
  std::vector<double> tau_grid;
  // Rolling validation: origins train_len .. train_len + valid_len - 1.
  // 0 picks valid_len = max(1, round(0.1 T)) and train_len = T - valid_len.
  Index train_len = 0;
  Index valid_len = 0;
  int refit_stride = 1;     // refit every k-th origin, reusing the last fit between
  bool retune_per_p = false;
  FistaConfig fista;        // lambda is overwritten per fit
  std::size_t threads = 1;

  void validate() const {
    detail::require(p_max >= 1, "p_max must be >= 1");
    detail::require(K_max >= 1, "K_max must be >= 1");
    detail::require(epsilon > 0.0, "epsilon must be positive");
    detail::require(iota_d >= 0.0, "iota_d must be >= 0");
    detail::require(alpha_c >= 0.0, "alpha_c must be >= 0");
    detail::require(train_len >= 0 && valid_len >= 0, "train_len and valid_len must be >= 0");
    detail::require(refit_stride >= 1, "refit_stride must be >= 1");
    for (double l : lambda_grid) detail::require(l >= 0.0 && std::isfinite(l), "lambda grid entries must be finite and >= 0");
    for (double t : tau_grid) detail::require(t > 0.0, "tau grid entries must be positive or inf");
    fista.validate(1);
  }
};

// ---------------------------------------------------------------------------
// BIC

inline double effective_sample_size(Index t) {
  detail::require(t >= 2, "effective sample size needs T >= 2");
  const double lt = std::log(double(t));
  return double(t) / (lt * lt);
}

inline double bic_penalty(int p, Index d, Index t, const SelectConfig& cfg) {
  const double e = cfg.epsilon;
  const double base = std::log(double(p * d + 1)) / effective_sample_size(t);
  return cfg.iota_d * std::pow(base, (1.0 + 2.0 * e) / (1.0 + e)) * std::log(double(t));
}

// log L(Theta_p) + penalty with L = ||Y - X Theta||_F^2 / (2T), T = design rows.
inline double bic(int p, const CoefStack& theta, const TruncatedDesign& design, const SelectConfig& cfg) {
  detail::require(theta.p == p && design.p == p, "bic: lag order mismatch");
  const Index t = design.rows();
  const double loss = (design.y - design.x * theta.values).squaredNorm() / (2.0 * double(t));
  if (!(loss > 0.0)) throw NumericError("bic: zero loss (exact fit), log undefined");
  return std::log(loss) + bic_penalty(p, design.d(), t, cfg);
}

struct LagSelection {
  int p = 1;
  std::vector<double> bic;  // index p-1
  std::vector<CoefStack> fits;
};

// Fits every p in 1..p_max on the common response rows p_max .. T-1 and
// returns the BIC minimiser (ties to smaller p). tuning[p-1] holds the
// (lambda, return-level tau) used at lag p.
inline LagSelection select_p(const ReturnPanel& panel, const std::vector<std::pair<double, double>>& tuning,
                             const SelectConfig& cfg) {
  cfg.validate();
  detail::require(tuning.size() == std::size_t(cfg.p_max), "select_p: need one (lambda, tau) per candidate lag");
  LagSelection out;
  out.bic.assign(std::size_t(cfg.p_max), 0.0);
  out.fits.resize(std::size_t(cfg.p_max));
  parallel_for(std::size_t(cfg.p_max), cfg.threads, [&](std::size_t i) {
    const int p = int(i) + 1;
    const TruncatedDesign design = build_design(panel, p, tuning[i].second, cfg.p_max);
    FistaConfig fc = cfg.fista;
    fc.lambda = tuning[i].first;
    fc.threads = 1;
    out.fits[i] = fit_theta(design, fc).theta;
    out.bic[i] = bic(p, out.fits[i], design, cfg);
  });
  out.p = 1;
  for (int p = 2; p <= cfg.p_max; ++p)
    if (out.bic[std::size_t(p - 1)] < out.bic[std::size_t(out.p - 1)]) out.p = p;
  return out;
}

inline LagSelection select_p(const ReturnPanel& panel, double lambda, double tau, const SelectConfig& cfg) {
  return select_p(panel, std::vector<std::pair<double, double>>(std::size_t(std::max(cfg.p_max, 1)), {lambda, tau}), cfg);
}

// ---------------------------------------------------------------------------
// Ridge-type component count

inline double ridge_constant(Index n, Index t, int p, const SelectConfig& cfg) {
  const double e = cfg.epsilon;
  const double inner = double(n) * double(p) * std::log(double(t)) / effective_sample_size(t);
  return cfg.alpha_c * double(n) * std::pow(inner, e / (1.0 + e));
}

// argmin over k of (lambda_{k+1} + c) / (lambda_k + c) given a descending
// spectrum; negative eigenvalues count as 0. Ties go to the smaller k.
inline int ridge_select_K(const Vector& eigenvalues, double c, int k_max) {
  if (eigenvalues.size() == 0) throw std::invalid_argument("ridge_select_K: empty spectrum");
  detail::require(k_max >= 1, "ridge_select_K: K_max must be >= 1");
  const int top = std::min<int>(k_max, int(eigenvalues.size()) - 1);
  if (top < 1) return 1;
  int best = 1;
  double best_ratio = kInf;
  for (int k = 1; k <= top; ++k) {
    const double num = std::max(eigenvalues(k), 0.0) + c;
    const double den = std::max(eigenvalues(k - 1), 0.0) + c;
    const double ratio = den > 0.0 ? num / den : 1.0;
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  return best;
}

inline int ridge_select_K(const Vector& eigenvalues, Index n, Index t, int p, const SelectConfig& cfg) {
  return ridge_select_K(eigenvalues, ridge_constant(n, t, p, cfg), cfg.K_max);
}

struct ComponentSelection {
  std::vector<int> K;
  std::vector<AuxSolution> aux;  // nuclear-norm W per lag
};

// K_i from the spectrum of R(H(Phi_i, W_i)) after the nuclear-norm W step.
inline ComponentSelection select_K(const CoefStack& theta, Index t, const SelectConfig& cfg, const AdamConfig& adam) {
  cfg.validate();
  ComponentSelection out;
  out.K.assign(std::size_t(theta.p), 1);
  out.aux.resize(std::size_t(theta.p));
  const Index n = theta.n();
  parallel_for(std::size_t(theta.p), cfg.threads, [&](std::size_t i) {
    out.aux[i] = solve_aux(theta.phi(int(i) + 1), SpectralLoss::nuclear(), adam);
    out.K[i] = ridge_select_K(out.aux[i].spectrum, n, t, theta.p, cfg);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Rolling validation

struct ValidationSplit {
  Index train_len = 0;
  Index valid_len = 0;
};

inline ValidationSplit resolve_split(Index t, int p, const SelectConfig& cfg) {
  ValidationSplit s;
  s.valid_len = cfg.valid_len > 0 ? cfg.valid_len : std::max<Index>(1, Index(std::llround(0.1 * double(t))));
  s.train_len = cfg.train_len > 0 ? cfg.train_len : t - s.valid_len;
  if (s.train_len + s.valid_len > t)
    throw DataError("validation split needs train_len + valid_len <= T (" + std::to_string(s.train_len) + " + " +
                    std::to_string(s.valid_len) + " > " + std::to_string(t) + ")");
  if (s.train_len <= p) throw DataError("training window must exceed the lag order");
  return s;
}

// Geometric grid from median|y| to max|y| over the vech series of the panel,
// followed by inf (no truncation).
inline std::vector<double> default_tau_grid(const ReturnPanel& panel, int points = 5) {
  check_panel(panel);
  detail::require(points >= 2, "default_tau_grid: need at least two points");
  const Matrix ys = vech_series(panel);
  std::vector<double> mags(ys.data(), ys.data() + ys.size());
  for (double& v : mags) v = std::abs(v);
  const auto mid = mags.begin() + std::ptrdiff_t(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  double lo = *mid;
  if (mags.size() % 2 == 0) lo = 0.5 * (lo + *std::max_element(mags.begin(), mid));
  const double hi = *std::max_element(mags.begin(), mags.end());
  std::vector<double> grid;
  if (lo > 0.0 && hi > lo) {
    for (int i = 0; i < points; ++i) grid.push_back(lo * std::pow(hi / lo, double(i) / double(points - 1)));
  } else if (hi > 0.0) {
    grid.push_back(hi);
  }
  grid.push_back(kInf);
  return grid;
}

// Geometric grid from the smallest lambda that zeroes every lag coefficient
// when the intercept is free (max |centered cross-product| / T) down by ratio.
inline std::vector<double> default_lambda_grid(const ReturnPanel& panel, int p, int points = 6, double ratio = 1e-3) {
  detail::require(points >= 1 && ratio > 0.0 && ratio < 1.0, "default_lambda_grid: bad grid shape");
  const TruncatedDesign design = build_design(panel, p, kInf);
  const Matrix xc = design.x.rightCols(design.x.cols() - 1).rowwise() - design.x.rightCols(design.x.cols() - 1).colwise().mean();
  const Matrix yc = design.y.rowwise() - design.y.colwise().mean();
  const double top = (xc.transpose() * yc).cwiseAbs().maxCoeff() / double(design.rows());
  if (!(top > 0.0)) return {0.0};
  std::vector<double> grid;
  for (int i = 0; i < points; ++i)
    grid.push_back(points == 1 ? top : top * std::pow(ratio, double(i) / double(points - 1)));
  return grid;
}

// Expanding-window one-step forecasts at origins o = train_len ..
// train_len + valid_len - 1 (panel rows). The fit used at origin o sees only
// responses at rows < o; the forecast is Theta^T x_o with x_o built from the
// raw returns, scored against raw vech(r_o r_o^T).
struct RollingPath {
  std::vector<double> msfe;              // per lambda
  std::vector<std::vector<CoefStack>> fits;  // per lambda, per origin (only when kept)
};

inline RollingPath rolling_path(const ReturnPanel& panel, int p, double tau, const std::vector<double>& lambdas,
                                Index train_len, Index valid_len, int stride, const FistaConfig& base,
                                bool keep_fits = false) {
  check_panel(panel);
  detail::require(!lambdas.empty(), "rolling_path: empty lambda grid");
  detail::require(stride >= 1, "rolling_path: stride must be >= 1");
  if (train_len <= p || train_len + valid_len > panel.rows())
    throw DataError("rolling_path: insufficient data for the validation split");
  const Matrix raw = vech_series(panel);
  const Matrix trunc = std::isinf(tau) ? raw : vech_series(truncate_returns(panel, tau));
  const Index d = raw.cols();
  GramSystem g = GramSystem::empty(p * d + 1, d);
  Index next_row = p;  // next response row to absorb into the Gram
  auto absorb_until = [&](Index end) {
    for (; next_row < end; ++next_row) g.add_row(lagged_regressor(trunc, next_row, p), trunc.row(next_row).transpose());
  };

  RollingPath out;
  out.msfe.assign(lambdas.size(), 0.0);
  if (keep_fits) out.fits.assign(lambdas.size(), {});
  std::vector<std::optional<CoefStack>> current(lambdas.size());
  for (Index k = 0; k < valid_len; ++k) {
    const Index o = train_len + k;
    absorb_until(o);
    const bool refit = k % stride == 0;
    const Vector x = lagged_regressor(raw, o, p);
    const Vector y = raw.row(o).transpose();
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      if (refit) {
        FistaConfig fc = base;
        fc.lambda = lambdas[l];
        fc.threads = 1;
        current[l] = fit_theta(g, p, fc, current[l]).theta;
      }
      out.msfe[l] += (y - current[l]->forecast(x)).squaredNorm();
      if (keep_fits) out.fits[l].push_back(*current[l]);
    }
  }
  for (double& m : out.msfe) m /= double(valid_len);
  return out;
}

struct TuneResult {
  double lambda = 0.0;
  double tau = kInf;       // return-level clamp
  double tau_vech = kInf;  // grid value it came from
  std::vector<double> lambda_grid;
  std::vector<double> tau_grid;  // vech units
  Matrix msfe;                   // tau x lambda
};

inline TuneResult tune_lambda_tau(const ReturnPanel& panel, int p, const SelectConfig& cfg) {
  cfg.validate();
  check_panel(panel);
  const ValidationSplit split = resolve_split(panel.rows(), p, cfg);
  TuneResult out;
  out.lambda_grid = cfg.lambda_grid.empty() ? default_lambda_grid(panel.topRows(split.train_len), p) : cfg.lambda_grid;
  out.tau_grid = cfg.tau_grid.empty() ? default_tau_grid(panel.topRows(split.train_len)) : cfg.tau_grid;
  const std::size_t nt = out.tau_grid.size();
  out.msfe.resize(Index(nt), Index(out.lambda_grid.size()));
  parallel_for(nt, cfg.threads, [&](std::size_t i) {
    const double tau_ret = std::sqrt(out.tau_grid[i]);
    const RollingPath path = rolling_path(panel, p, tau_ret, out.lambda_grid, split.train_len, split.valid_len,
                                          cfg.refit_stride, cfg.fista);
    for (std::size_t l = 0; l < out.lambda_grid.size(); ++l) out.msfe(Index(i), Index(l)) = path.msfe[l];
  });
  // Ties: smaller lambda first, then larger tau.
  double best = kInf;
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t l = 0; l < out.lambda_grid.size(); ++l) {
      const double v = out.msfe(Index(i), Index(l));
      if (!std::isfinite(v)) continue;
      const double lam = out.lambda_grid[l], tv = out.tau_grid[i];
      const bool better = v < best || (v == best && (lam < out.lambda || (lam == out.lambda && tv > out.tau_vech)));
      if (better) {
        best = v;
        out.lambda = lam;
        out.tau_vech = tv;
      }
    }
  if (!std::isfinite(best)) throw NumericError("tune_lambda_tau: every grid point produced a non-finite MSFE");
  out.tau = std::sqrt(out.tau_vech);
  return out;
}

// ---------------------------------------------------------------------------
// Full fitting pipeline

struct FitDiagnostics {
  std::size_t objective_trace_length = 0;
  double kkt_residual = 0.0;
  long iterations = 0;
  bool converged = true;
  double wall_seconds = 0.0;
};

struct FitReport {
  int selected_p = 1;
  std::vector<int> selected_K;
  double lambda = 0.0;
  double tau = kInf;
  CoefStack theta;
  std::optional<BekkParams> bekk;
  std::string loss;  // W loss used for the BEKK step, empty when not recovered
  std::vector<double> bic;
  FitDiagnostics diagnostics;
};

// Fit at a given (p, lambda, tau) with diagnostics.
inline FitReport fit_at(const ReturnPanel& panel, int p, double lambda, double tau, const FistaConfig& base) {
  const auto start = std::chrono::steady_clock::now();
  const TruncatedDesign design = build_design(panel, p, tau);
  const GramSystem g = GramSystem::from_design(design);
  FistaConfig fc = base;
  fc.lambda = lambda;
  const FistaResult res = fit_theta(g, p, fc);
  FitReport r;
  r.selected_p = p;
  r.lambda = lambda;
  r.tau = tau;
  r.theta = res.theta;
  r.diagnostics.objective_trace_length = res.block_objective.size();
  r.diagnostics.kkt_residual = kkt_residual(g, res.theta.values, lambda);
  r.diagnostics.iterations = res.iterations;
  r.diagnostics.converged = res.converged;
  r.diagnostics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

struct ModelSelection {
  int p = 1;
  double lambda = 0.0;
  double tau = kInf;  // return level
  std::vector<TuneResult> tuning;  // one entry, or one per p with retune_per_p
  LagSelection lags;
  FitReport fit;                   // refit at the selected p on all rows
  ComponentSelection components;
};

// Tune (lambda, tau) at p_max, select p by BIC, refit at p on every row, then
// pick K_i per lag from the nuclear-norm spectrum.
inline ModelSelection select_model(const ReturnPanel& panel, const SelectConfig& cfg, const AdamConfig& adam) {
  cfg.validate();
  ModelSelection out;
  std::vector<std::pair<double, double>> per_p;
  if (cfg.retune_per_p) {
    for (int p = 1; p <= cfg.p_max; ++p) {
      out.tuning.push_back(tune_lambda_tau(panel, p, cfg));
      per_p.emplace_back(out.tuning.back().lambda, out.tuning.back().tau);
    }
  } else {
    out.tuning.push_back(tune_lambda_tau(panel, cfg.p_max, cfg));
    per_p.assign(std::size_t(cfg.p_max), {out.tuning[0].lambda, out.tuning[0].tau});
  }
  out.lags = select_p(panel, per_p, cfg);
  out.p = out.lags.p;
  out.lambda = per_p[std::size_t(out.p - 1)].first;
  out.tau = per_p[std::size_t(out.p - 1)].second;
  out.fit = fit_at(panel, out.p, out.lambda, out.tau, cfg.fista);
  out.fit.bic = out.lags.bic;
  out.components = select_K(out.fit.theta, panel.rows() - out.p, cfg, adam);
  out.fit.selected_K = out.components.K;
  return out;
}

}  // namespace hdbekk
