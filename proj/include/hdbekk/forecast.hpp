#pragma once

// Conditional covariance forecasts, minimum-variance weights and the
// expanding-window portfolio backtest.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "design.hpp"
#include "errors.hpp"
#include "fista.hpp"
#include "linalg.hpp"
#include "model_select.hpp"
#include "recovery.hpp"

namespace hdbekk {

// P(vech^{-1}(Theta^T x)).
inline Matrix sigma_hat(const CoefStack& theta, const Vector& x, double floor = kDefaultPsdFloor) {
  detail::require(x.size() == theta.values.rows(), "sigma_hat: regressor length mismatch");
  return psd_project(vech_inv(theta.forecast(x)), floor);
}

// Omega + sum_i sum_k A_ik r_{t-i} r_{t-i}^T A_ik^T. lags.row(i-1) = r_{t-i}.
inline Matrix sigma_tilde(const BekkParams& params, const Matrix& lags) {
  const Index n = params.n();
  detail::require(lags.rows() >= params.p && lags.cols() == n, "sigma_tilde: need p lagged return rows");
  Matrix s = params.omega;
  for (int i = 0; i < params.p; ++i) {
    const Vector r = lags.row(i).transpose();
    for (const Matrix& a : params.A[std::size_t(i)]) {
      const Vector ar = a * r;
      s.noalias() += ar * ar.transpose();
    }
  }
  return s;
}

// Rows t-1, ..., t-p of a panel, most recent first.
inline Matrix recent_returns(const ReturnPanel& panel, Index t, int p) {
  detail::require(t >= p && t <= panel.rows(), "recent_returns: not enough history");
  Matrix out(p, panel.cols());
  for (int i = 1; i <= p; ++i) out.row(i - 1) = panel.row(t - i);
  return out;
}

// (1^T S^{-1} 1)^{-1} S^{-1} 1.
inline Vector mv_weights(const Matrix& sigma) {
  detail::require(sigma.rows() == sigma.cols() && sigma.rows() > 0, "mv_weights: square covariance required");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericError("mv_weights: covariance is not positive definite");
  const Vector u = llt.solve(Vector::Ones(sigma.rows()));
  const double total = u.sum();
  if (!std::isfinite(total) || total <= 0.0) throw NumericError("mv_weights: covariance is numerically singular");
  return u / total;
}

enum class CovEstimator { VechDirect, BekkNuclear, BekkTE, VechDirectNoTrunc, BekkNuclearNoTrunc, EqualWeight };

inline std::string to_string(CovEstimator k) {
  switch (k) {
    case CovEstimator::VechDirect: return "vech";
    case CovEstimator::BekkNuclear: return "bekk_nuclear";
    case CovEstimator::BekkTE: return "bekk_te";
    case CovEstimator::VechDirectNoTrunc: return "vech_notrunc";
    case CovEstimator::BekkNuclearNoTrunc: return "bekk_nuclear_notrunc";
    case CovEstimator::EqualWeight: return "equal_weight";
  }
  return "unknown";
}

inline CovEstimator cov_estimator_from_string(const std::string& s) {
  for (auto k : {CovEstimator::VechDirect, CovEstimator::BekkNuclear, CovEstimator::BekkTE,
                 CovEstimator::VechDirectNoTrunc, CovEstimator::BekkNuclearNoTrunc, CovEstimator::EqualWeight})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown estimator '" + s + "'");
}

inline bool truncates(CovEstimator k) {
  return k == CovEstimator::VechDirect || k == CovEstimator::BekkNuclear || k == CovEstimator::BekkTE;
}

inline bool uses_bekk(CovEstimator k) {
  return k == CovEstimator::BekkNuclear || k == CovEstimator::BekkTE || k == CovEstimator::BekkNuclearNoTrunc;
}

struct BacktestConfig {
  CovEstimator estimator = CovEstimator::VechDirect;
  double test_fraction = 0.2;
  int refit_every = 1;
  double floor = 1e-8;  // eigenvalue floor before inverting forecasts
  SelectConfig select;
  AdamConfig adam;
  // Fixed model; anything unset is selected once on the initial window.
  std::optional<int> p;
  std::optional<std::vector<int>> K;
  std::optional<double> lambda;
  std::optional<double> tau;  // return level

  void validate() const {
    detail::require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction must lie in (0, 1)");
    detail::require(refit_every >= 1, "refit_every must be >= 1");
    detail::require(floor > 0.0, "floor must be positive");
    if (p) detail::require(*p >= 1, "p must be >= 1");
    if (K) for (int k : *K) detail::require(k >= 1, "K entries must be >= 1");
    if (lambda) detail::require(*lambda >= 0.0, "lambda must be >= 0");
    if (tau) detail::require(*tau > 0.0, "tau must be positive");
    select.validate();
    adam.validate();
  }
};

struct OriginFailure {
  Index origin = 0;
  std::string message;
};

struct BacktestReport {
  std::string estimator;
  Index train_len = 0;
  std::vector<Index> origins;   // panel rows whose return was realised
  std::vector<double> returns;  // portfolio return at each origin
  std::vector<double> seconds;  // wall time per origin
  std::vector<OriginFailure> failures;
  double av = 0.0;
  double sd = 0.0;
  double ir = std::numeric_limits<double>::quiet_NaN();  // NaN when SD == 0
  int p = 0;
  std::vector<int> K;
  double lambda = 0.0;
  double tau = kInf;
};

// AV = 252 mean, SD = sqrt(252) sample stdev, IR = AV / SD.
inline void annualise(BacktestReport& r) {
  const std::size_t n = r.returns.size();
  if (n == 0) {
    r.av = r.sd = std::numeric_limits<double>::quiet_NaN();
    r.ir = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double mean = 0.0;
  for (double z : r.returns) mean += z;
  mean /= double(n);
  double ss = 0.0;
  for (double z : r.returns) ss += (z - mean) * (z - mean);
  const double sd = n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0;
  r.av = mean * 252.0;
  r.sd = sd * std::sqrt(252.0);
  r.ir = r.sd > 0.0 ? r.av / r.sd : std::numeric_limits<double>::quiet_NaN();
}

inline BacktestReport run_backtest(const ReturnPanel& panel, const BacktestConfig& cfg) {
  cfg.validate();
  check_panel(panel);
  const Index t_total = panel.rows();
  const Index n = panel.cols();
  BacktestReport rep;
  rep.estimator = to_string(cfg.estimator);
  rep.train_len = t_total - Index(std::llround(cfg.test_fraction * double(t_total)));
  if (rep.train_len >= t_total) throw DataError("backtest: test window is empty");

  if (cfg.estimator == CovEstimator::EqualWeight) {
    for (Index t = rep.train_len; t < t_total; ++t) {
      rep.origins.push_back(t);
      rep.returns.push_back(panel.row(t).mean());
      rep.seconds.push_back(0.0);
    }
    annualise(rep);
    return rep;
  }

  // Model choice on the initial window, then held fixed.
  const ReturnPanel initial = panel.topRows(rep.train_len);
  SelectConfig sc = cfg.select;
  if (!truncates(cfg.estimator)) sc.tau_grid = {kInf};
  const bool need_tuning = !cfg.p || !cfg.lambda || (!cfg.tau && truncates(cfg.estimator)) ||
                           (uses_bekk(cfg.estimator) && !cfg.K);
  std::optional<ModelSelection> sel;
  if (need_tuning) sel = select_model(initial, sc, cfg.adam);
  rep.p = cfg.p ? *cfg.p : sel->p;
  rep.lambda = cfg.lambda ? *cfg.lambda : (sel ? sel->lambda : 0.0);
  rep.tau = !truncates(cfg.estimator) ? kInf : (cfg.tau ? *cfg.tau : sel->tau);
  if (uses_bekk(cfg.estimator)) {
    if (cfg.K) {
      rep.K = *cfg.K;
    } else if (sel && sel->p == rep.p) {
      rep.K = sel->components.K;
    } else {
      const FitReport f = fit_at(initial, rep.p, rep.lambda, rep.tau, sc.fista);
      rep.K = select_K(f.theta, rep.train_len - rep.p, sc, cfg.adam).K;
    }
    detail::require(int(rep.K.size()) == rep.p, "backtest: K must list one count per lag");
  }
  const int p = rep.p;
  if (rep.train_len <= p + 1) throw DataError("backtest: initial window too short for the lag order");

  const Matrix raw = vech_series(panel);
  const Matrix trunc = std::isinf(rep.tau) ? raw : vech_series(truncate_returns(panel, rep.tau));
  const Index d = vech_dim(n);
  GramSystem g = GramSystem::empty(p * d + 1, d);
  Index next_row = p;
  std::optional<CoefStack> theta;
  std::optional<BekkParams> bekk;
  FistaConfig fc = sc.fista;
  fc.lambda = rep.lambda;
  const SpectralLoss::Kind loss =
      cfg.estimator == CovEstimator::BekkTE ? SpectralLoss::Kind::TopEigen : SpectralLoss::Kind::Nuclear;

  for (Index t = rep.train_len; t < t_total; ++t) {
    const auto start = std::chrono::steady_clock::now();
    for (; next_row < t; ++next_row) g.add_row(lagged_regressor(trunc, next_row, p), trunc.row(next_row).transpose());
    try {
      if ((t - rep.train_len) % cfg.refit_every == 0 || !theta) {
        theta = fit_theta(g, p, fc, theta).theta;
        if (uses_bekk(cfg.estimator)) bekk = recover_bekk(*theta, rep.K, loss, cfg.adam).params;
      }
      Matrix sigma = uses_bekk(cfg.estimator) ? sigma_tilde(*bekk, recent_returns(panel, t, p))
                                              : sigma_hat(*theta, lagged_regressor(raw, t, p), 0.0);
      sigma = psd_project(0.5 * (sigma + sigma.transpose()), cfg.floor);
      const Vector w = mv_weights(sigma);
      rep.origins.push_back(t);
      rep.returns.push_back(w.dot(panel.row(t).transpose()));
      rep.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    } catch (const std::exception& e) {
      rep.failures.push_back({t, e.what()});
    }
  }
  annualise(rep);
  return rep;
}

}  // namespace hdbekk
