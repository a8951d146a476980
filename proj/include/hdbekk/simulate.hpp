#pragma once

// Sparse BEKK-ARCH data-generating process, innovation families, and the
// Monte Carlo runner with its error / selection / PD-proportion metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "design.hpp"
#include "errors.hpp"
#include "fista.hpp"
#include "forecast.hpp"
#include "linalg.hpp"
#include "model_select.hpp"
#include "parallel.hpp"
#include "recovery.hpp"

namespace hdbekk {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, a, b).
inline Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b + 0x632be59bd9b4e019ULL)));
}

struct Innovation {
  enum class Kind { Gaussian, Laplace, StudentT };
  Kind kind = Kind::Gaussian;
  double df = 4.2;

  static Innovation gaussian() { return {Kind::Gaussian, 0.0}; }
  static Innovation laplace() { return {Kind::Laplace, 0.0}; }
  static Innovation student_t(double df) { return {Kind::StudentT, df}; }

  void validate() const {
    if (kind == Kind::StudentT) detail::require(df > 2.0 && std::isfinite(df), "StudentT innovations need df > 2");
  }
};

inline std::string to_string(const Innovation& inn) {
  switch (inn.kind) {
    case Innovation::Kind::Gaussian: return "gaussian";
    case Innovation::Kind::Laplace: return "laplace";
    case Innovation::Kind::StudentT: return "student_t";
  }
  return "unknown";
}

// Zero mean, identity covariance.
inline Vector draw_innovation(const Innovation& inn, Index n, Rng& rng) {
  inn.validate();
  Vector out(n);
  switch (inn.kind) {
    case Innovation::Kind::Gaussian: {
      std::normal_distribution<double> dist;
      for (Index i = 0; i < n; ++i) out(i) = dist(rng);
      break;
    }
    case Innovation::Kind::Laplace: {
      // Difference of two unit exponentials is standard Laplace (variance 2).
      std::exponential_distribution<double> dist(1.0);
      for (Index i = 0; i < n; ++i) out(i) = (dist(rng) - dist(rng)) / std::sqrt(2.0);
      break;
    }
    case Innovation::Kind::StudentT: {
      std::student_t_distribution<double> dist(inn.df);
      const double scale = std::sqrt((inn.df - 2.0) / inn.df);
      for (Index i = 0; i < n; ++i) out(i) = scale * dist(rng);
      break;
    }
  }
  return out;
}

struct DgpSpec {
  Index n = 5;
  int p = 2;
  int s = 2;  // nonzeros per row of Omega and of each A_ik
  std::vector<int> K{1, 1};
  Innovation innovation;
  std::uint64_t seed = 1;
  int burn_in = 500;
  double max_spectral_radius = 0.98;
  int max_draws = 1000;

  void validate() const {
    detail::require(n >= 1, "N must be >= 1");
    detail::require(p >= 1, "p must be >= 1");
    detail::require(s >= 1 && s <= n, "s must lie in 1..N");
    detail::require(int(K.size()) == p, "K must list one component count per lag");
    for (int k : K) detail::require(k >= 1, "K entries must be >= 1");
    detail::require(burn_in >= 0, "burn_in must be >= 0");
    detail::require(max_spectral_radius > 0.0, "max_spectral_radius must be positive");
    detail::require(max_draws >= 1, "max_draws must be >= 1");
    innovation.validate();
  }
};

// Spectral radius of the companion matrix of y_t = omega + sum_i Phi_i y_{t-i}.
inline double mean_dynamics_radius(const CoefStack& theta) {
  const Index d = theta.d;
  const Index m = theta.p * d;
  Matrix comp = Matrix::Zero(m, m);
  for (int i = 1; i <= theta.p; ++i) comp.block(0, (i - 1) * d, d, d) = theta.phi(i);
  if (theta.p > 1) comp.block(d, 0, m - d, m - d).setIdentity();
  Eigen::EigenSolver<Matrix> es(comp, false);
  if (es.info() != Eigen::Success) throw NumericError("mean_dynamics_radius: eigensolver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

inline Matrix draw_omega(const DgpSpec& spec, Rng& rng) {
  const Index n = spec.n;
  std::uniform_real_distribution<double> diag(1.0, 2.0), off(-0.1, 0.1);
  Matrix omega = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) omega(i, i) = diag(rng);
  // Symmetric pattern with at most s nonzeros per row, diagonal included.
  std::vector<std::pair<Index, Index>> pairs;
  for (Index j = 0; j < n; ++j)
    for (Index i = j + 1; i < n; ++i) pairs.emplace_back(i, j);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  std::vector<int> count(std::size_t(n), 1);
  for (auto [i, j] : pairs) {
    if (count[std::size_t(i)] >= spec.s || count[std::size_t(j)] >= spec.s) continue;
    omega(i, j) = omega(j, i) = off(rng);
    ++count[std::size_t(i)];
    ++count[std::size_t(j)];
  }
  // Project only when needed so the sparsity pattern survives.
  if (sym_eigenvalues(omega).minCoeff() < 1e-6) omega = psd_project(omega, 1e-6);
  return omega;
}

// K components with pairwise disjoint supports, s nonzeros per row each. In
// every row exactly one component owns the diagonal slot.
inline std::vector<Matrix> draw_lag(const DgpSpec& spec, int k, Rng& rng) {
  const Index n = spec.n;
  if (Index(k) * spec.s > n)
    throw std::invalid_argument("infeasible DGP: K * s = " + std::to_string(k * spec.s) + " exceeds N = " +
                                std::to_string(n) + " for disjoint row supports");
  std::uniform_real_distribution<double> diag(0.01, 0.05), off(-0.01, 0.01);
  std::vector<Matrix> comps(std::size_t(k), Matrix::Zero(n, n));
  std::uniform_int_distribution<int> pick(0, k - 1);
  for (Index r = 0; r < n; ++r) {
    std::vector<Index> cols;
    for (Index c = 0; c < n; ++c)
      if (c != r) cols.push_back(c);
    std::shuffle(cols.begin(), cols.end(), rng);
    const int owner = pick(rng);
    std::size_t next = 0;
    for (int m = 0; m < k; ++m) {
      Matrix& a = comps[std::size_t(m)];
      int remaining = spec.s;
      if (m == owner) {
        a(r, r) = diag(rng);
        --remaining;
      }
      for (; remaining > 0; --remaining) a(r, cols[next++]) = off(rng);
    }
  }
  for (Matrix& a : comps) apply_sign_convention(a);
  std::stable_sort(comps.begin(), comps.end(), [](const Matrix& x, const Matrix& y) {
    const double nx = x.squaredNorm(), ny = y.squaredNorm();
    if (nx != ny) return nx > ny;
    return std::lexicographical_compare(x.data(), x.data() + x.size(), y.data(), y.data() + y.size());
  });
  return comps;
}

}  // namespace detail

inline BekkParams gen_bekk_params(const DgpSpec& spec, Rng& rng) {
  spec.validate();
  for (int attempt = 0; attempt < spec.max_draws; ++attempt) {
    BekkParams params;
    params.omega = detail::draw_omega(spec, rng);
    params.p = spec.p;
    params.K = spec.K;
    for (int i = 0; i < spec.p; ++i) params.A.push_back(detail::draw_lag(spec, spec.K[std::size_t(i)], rng));
    if (mean_dynamics_radius(theta_from_bekk(params)) < spec.max_spectral_radius) return params;
  }
  throw NumericError("gen_bekk_params: no stationary draw within max_draws attempts");
}

struct SimPath {
  ReturnPanel returns;        // T x N
  std::vector<Matrix> sigma;  // true Sigma_t for each kept row
};

// r_t = Sigma_t^{1/2} eta_t with zero presample; the first burn_in rows are dropped.
inline SimPath simulate_series(const BekkParams& params, Index t_len, int burn_in, const Innovation& inn, Rng& rng) {
  detail::require(t_len >= 1, "simulate_series: T must be >= 1");
  detail::require(burn_in >= 0, "simulate_series: burn_in must be >= 0");
  inn.validate();
  const Index n = params.n();
  const int p = params.p;
  const Index total = t_len + burn_in;
  Matrix r = Matrix::Zero(total + p, n);  // first p rows are the presample
  SimPath out;
  out.returns.resize(t_len, n);
  out.sigma.reserve(std::size_t(t_len));
  for (Index t = 0; t < total; ++t) {
    const Index row = t + p;
    const Matrix sigma = sigma_tilde(params, recent_returns(r, row, p));
    const Vector eta = draw_innovation(inn, n, rng);
    r.row(row) = (sym_sqrt(sigma) * eta).transpose();
    if (t >= burn_in) {
      out.returns.row(t - burn_in) = r.row(row);
      out.sigma.push_back(sigma);
    }
  }
  return out;
}

// Max over columns of the column l2 norm.
inline double norm_2inf(const Matrix& m) {
  return m.size() ? m.colwise().norm().maxCoeff() : 0.0;
}

// Percentage of rows t = p..T-1 at which vech^{-1}(Theta^T x_t) is positive
// definite before projection, x_t built from raw (untruncated) returns.
inline double pd_proportion(const CoefStack& theta, const ReturnPanel& panel) {
  check_panel(panel);
  const int p = theta.p;
  if (panel.rows() <= p) throw DataError("pd_proportion: panel shorter than the lag order");
  const Matrix raw = vech_series(panel);
  if (raw.cols() != theta.d) throw std::invalid_argument("pd_proportion: panel width does not match Theta");
  Index hits = 0;
  for (Index t = p; t < panel.rows(); ++t) {
    const Matrix s = vech_inv(theta.forecast(lagged_regressor(raw, t, p)));
    // LLT accepts some semidefinite inputs; require strictly positive eigenvalues.
    if (Eigen::LLT<Matrix>(s).info() == Eigen::Success && sym_eigenvalues(s).minCoeff() > 0.0) ++hits;
  }
  return 100.0 * double(hits) / double(panel.rows() - p);
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct McConfig {
  DgpSpec dgp;
  std::vector<Index> t_grid{500};
  int reps = 1;
  SelectConfig select;  // grids / validation split used for tuning
  AdamConfig adam;
  bool tune = true;             // tune (lambda, tau) per replication
  double lambda = 0.0;          // used when tune is false
  double tau = kInf;            // return level, used when tune is false
  bool untruncated = true;      // also fit with tau = inf
  bool recover = true;          // BEKK recovery metrics
  bool selection = false;       // BIC p and ridge K hit rates
  bool pd = false;              // PD-proportion
  std::size_t threads = 1;

  void validate() const {
    dgp.validate();
    detail::require(!t_grid.empty(), "t_grid must be nonempty");
    for (Index t : t_grid) detail::require(t > dgp.p + 1, "every T must exceed p + 1");
    detail::require(reps >= 1, "reps must be >= 1");
    detail::require(lambda >= 0.0, "lambda must be >= 0");
    detail::require(tau > 0.0, "tau must be positive");
    select.validate();
    adam.validate();
  }
};

struct McRow {
  int rep = 0;
  Index t = 0;
  std::string metric;
  double value = 0.0;
};

struct McFailure {
  int rep = 0;
  Index t = 0;
  std::string message;
};

struct McSummaryEntry {
  Index t = 0;
  std::string metric;
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct McResult {
  std::vector<McRow> rows;  // ordered by (T index, rep), then a fixed metric order
  std::vector<McFailure> failures;

  // Values of one metric at one T, in replication order.
  std::vector<double> values(Index t, const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.t == t && r.metric == metric) out.push_back(r.value);
    return out;
  }

  double mean(Index t, const std::string& metric) const {
    const auto v = values(t, metric);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  }

  // Mean / sd per (T, metric), metrics in first-seen order.
  std::vector<McSummaryEntry> summary() const {
    std::vector<McSummaryEntry> out;
    std::map<std::pair<Index, std::string>, std::size_t> slot;
    std::vector<std::vector<double>> vals;
    for (const auto& r : rows) {
      auto key = std::make_pair(r.t, r.metric);
      auto it = slot.find(key);
      if (it == slot.end()) {
        it = slot.emplace(key, out.size()).first;
        out.push_back({r.t, r.metric, 0, 0.0, 0.0});
        vals.emplace_back();
      }
      vals[it->second].push_back(r.value);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& v = vals[i];
      out[i].count = v.size();
      out[i].mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - out[i].mean) * (x - out[i].mean);
      out[i].sd = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
    }
    return out;
  }
};

inline void format_double(std::ostream& os, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

// Long format: rep,T,metric,value.
inline void write_mc_csv(std::ostream& os, const McResult& res) {
  os << "rep,T,metric,value\n";
  for (const auto& r : res.rows) {
    os << r.rep << ',' << r.t << ',' << r.metric << ',';
    format_double(os, r.value);
    os << '\n';
  }
}

namespace detail {

inline void push_metric(std::vector<McRow>& out, int rep, Index t, const std::string& name, double v) {
  out.push_back({rep, t, name, v});
}

// One replication at one T.
inline std::vector<McRow> mc_replication(const McConfig& cfg, int rep, std::size_t t_index) {
  const Index t_len = cfg.t_grid[t_index];
  Rng rng = make_stream(cfg.dgp.seed, std::uint64_t(rep), std::uint64_t(t_index));
  const BekkParams truth = gen_bekk_params(cfg.dgp, rng);
  const CoefStack theta_star = theta_from_bekk(truth);
  const SimPath path = simulate_series(truth, t_len, cfg.dgp.burn_in, cfg.dgp.innovation, rng);
  const ReturnPanel& panel = path.returns;
  const int p = cfg.dgp.p;
  const Index n = cfg.dgp.n;

  SelectConfig sc = cfg.select;
  sc.threads = 1;
  sc.p_max = std::max(sc.p_max, p);
  std::vector<McRow> out;

  double lambda = cfg.lambda, tau = cfg.tau;
  if (cfg.tune) {
    const TuneResult tr = tune_lambda_tau(panel, p, sc);
    lambda = tr.lambda;
    tau = tr.tau;
  }
  push_metric(out, rep, t_len, "lambda", lambda);
  push_metric(out, rep, t_len, "tau", tau);

  const FitReport fit = fit_at(panel, p, lambda, tau, sc.fista);
  const Matrix diff = fit.theta.values - theta_star.values;
  push_metric(out, rep, t_len, "theta_fro", diff.norm());
  push_metric(out, rep, t_len, "theta_2inf", norm_2inf(diff));

  const Matrix raw = vech_series(panel);
  auto mean_sigma_error = [&](auto&& forecast) {
    double acc = 0.0;
    for (Index t = p; t < t_len; ++t) acc += (forecast(t) - path.sigma[std::size_t(t)]).norm();
    return acc / double(t_len - p);
  };
  push_metric(out, rep, t_len, "sigma_hat",
              mean_sigma_error([&](Index t) { return sigma_hat(fit.theta, lagged_regressor(raw, t, p)); }));

  if (cfg.untruncated) {
    double lambda_u = cfg.lambda;
    if (cfg.tune) {
      SelectConfig su = sc;
      su.tau_grid = {kInf};
      lambda_u = tune_lambda_tau(panel, p, su).lambda;
    }
    const FitReport fit_u = fit_at(panel, p, lambda_u, kInf, sc.fista);
    const Matrix du = fit_u.theta.values - theta_star.values;
    push_metric(out, rep, t_len, "theta_fro_notrunc", du.norm());
    push_metric(out, rep, t_len, "theta_2inf_notrunc", norm_2inf(du));
    push_metric(out, rep, t_len, "sigma_check",
                mean_sigma_error([&](Index t) { return sigma_hat(fit_u.theta, lagged_regressor(raw, t, p)); }));
  }

  if (cfg.recover) {
    const BekkRecovery bekk = recover_bekk(fit.theta, truth.K, SpectralLoss::Kind::Nuclear, cfg.adam);
    push_metric(out, rep, t_len, "omega_fro", (bekk.params.omega - truth.omega).norm());
    for (int i = 0; i < p; ++i)
      for (int k = 0; k < truth.K[std::size_t(i)]; ++k)
        push_metric(out, rep, t_len, "A_" + std::to_string(i + 1) + "_" + std::to_string(k + 1),
                    (bekk.params.A[std::size_t(i)][std::size_t(k)] - truth.A[std::size_t(i)][std::size_t(k)]).norm());
    push_metric(out, rep, t_len, "sigma_tilde", mean_sigma_error([&](Index t) {
                  return sigma_tilde(bekk.params, recent_returns(panel, t, p));
                }));
  }

  if (cfg.selection) {
    const TuneResult tr = cfg.tune ? tune_lambda_tau(panel, sc.p_max, sc) : TuneResult{};
    const double lam_sel = cfg.tune ? tr.lambda : lambda;
    const double tau_sel = cfg.tune ? tr.tau : tau;
    const LagSelection lags = select_p(panel, lam_sel, tau_sel, sc);
    push_metric(out, rep, t_len, "p_hat", double(lags.p));
    push_metric(out, rep, t_len, "p_hit", lags.p == p ? 1.0 : 0.0);
    // K is judged on the fit at the true lag order.
    const ComponentSelection comps = select_K(fit.theta, t_len - p, sc, cfg.adam);
    push_metric(out, rep, t_len, "K_hit", comps.K == truth.K ? 1.0 : 0.0);
    for (int i = 0; i < p; ++i)
      push_metric(out, rep, t_len, "K_hat_" + std::to_string(i + 1), double(comps.K[std::size_t(i)]));
  }

  if (cfg.pd) push_metric(out, rep, t_len, "pd_proportion", pd_proportion(fit.theta, panel));
  (void)n;
  return out;
}

}  // namespace detail

inline McResult run_mc(const McConfig& cfg) {
  cfg.validate();
  const std::size_t nt = cfg.t_grid.size();
  const std::size_t tasks = nt * std::size_t(cfg.reps);
  std::vector<std::vector<McRow>> slots(tasks);
  std::vector<std::string> errors(tasks);
  parallel_for(tasks, cfg.threads, [&](std::size_t task) {
    const std::size_t ti = task / std::size_t(cfg.reps);
    const int rep = int(task % std::size_t(cfg.reps));
    try {
      slots[task] = detail::mc_replication(cfg, rep, ti);
    } catch (const std::exception& e) {
      errors[task] = e.what();
      if (errors[task].empty()) errors[task] = "unknown failure";
    }
  });
  McResult res;
  for (std::size_t task = 0; task < tasks; ++task) {
    const std::size_t ti = task / std::size_t(cfg.reps);
    const int rep = int(task % std::size_t(cfg.reps));
    if (!errors[task].empty()) {
      res.failures.push_back({rep, cfg.t_grid[ti], errors[task]});
      continue;
    }
    res.rows.insert(res.rows.end(), slots[task].begin(), slots[task].end());
  }
  return res;
}

}  // namespace hdbekk
