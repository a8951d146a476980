#include <gtest/gtest.h>

#include <cmath>

#include "hdbekk/model_select.hpp"
#include "hdbekk/simulate.hpp"
#include "oracles.hpp"

using namespace hdbekk;

namespace {

// Scalar-diagonal ARCH(1) panel with strong lag-one dynamics.
Matrix arch1_panel(Index n, Index t, double a, std::uint64_t seed) {
  BekkParams params;
  params.omega = Matrix::Identity(n, n);
  params.p = 1;
  params.K = {1};
  params.A = {{a * Matrix::Identity(n, n)}};
  Rng rng(seed);
  return simulate_series(params, t, 200, Innovation::gaussian(), rng).returns;
}

}  // namespace

TEST(Bic, EffectiveSampleSize) {
  const double lt = std::log(1000.0);
  EXPECT_DOUBLE_EQ(effective_sample_size(1000), 1000.0 / (lt * lt));
  EXPECT_THROW(effective_sample_size(1), std::invalid_argument);
}

TEST(Bic, PenaltyHandValue) {
  SelectConfig cfg;
  cfg.epsilon = 0.1;
  cfg.iota_d = 0.05;
  const int p = 2;
  const Index d = 3, t = 100;
  const double teff = 100.0 / std::pow(std::log(100.0), 2);
  const double expected = 0.05 * std::pow(std::log(7.0) / teff, 1.2 / 1.1) * std::log(100.0);
  EXPECT_NEAR(bic_penalty(p, d, t, cfg), expected, 1e-15);
}

TEST(Bic, HandComputedDesign) {
  Matrix panel(4, 1);
  panel << 1.0, 2.0, 1.0, 3.0;
  const TruncatedDesign design = build_design(panel, 1, kInf);
  // y = (4, 1, 9), x lag = (1, 4, 1).
  CoefStack theta(1, 1);
  theta.values << 1.0, 0.5;
  // Residuals 4-1.5, 1-3, 9-1.5 = 2.5, -2, 7.5.
  const double loss = (6.25 + 4.0 + 56.25) / 6.0;
  SelectConfig cfg;
  EXPECT_NEAR(bic(1, theta, design, cfg), std::log(loss) + bic_penalty(1, 1, 3, cfg), 1e-14);
}

TEST(Bic, ExactFitIsNumericError) {
  Matrix panel(3, 1);
  panel << 1.0, 1.0, 1.0;
  const TruncatedDesign design = build_design(panel, 1, kInf);
  CoefStack theta(1, 1);
  theta.values << 1.0, 0.0;
  EXPECT_THROW(bic(1, theta, design, SelectConfig{}), NumericError);
}

TEST(SelectP, FindsLagOneOnStrongArch) {
  const Matrix panel = arch1_panel(2, 3000, 0.6, 5);
  SelectConfig cfg;
  cfg.p_max = 3;
  cfg.fista.tol = 1e-8;
  const LagSelection sel = select_p(panel, 1e-4, kInf, cfg);
  EXPECT_EQ(sel.p, 1);
  ASSERT_EQ(sel.bic.size(), 3u);
  EXPECT_LT(sel.bic[0], sel.bic[1]);
}

TEST(SelectP, CommonRowsAcrossOrders) {
  oracle::Rng rng(1);
  const Matrix panel = oracle::random_matrix(80, 2, rng);
  SelectConfig cfg;
  cfg.p_max = 3;
  const LagSelection sel = select_p(panel, 0.01, kInf, cfg);
  for (int p = 1; p <= 3; ++p) {
    const TruncatedDesign d = build_design(panel, p, kInf, 3);
    EXPECT_EQ(d.rows(), 77);
    EXPECT_NEAR(sel.bic[std::size_t(p - 1)], bic(p, sel.fits[std::size_t(p - 1)], d, cfg), 1e-12);
  }
}

TEST(Ridge, HandExamples) {
  Vector ev(4);
  ev << 10.0, 9.0, 0.1, 0.05;
  EXPECT_EQ(ridge_select_K(ev, 0.0, 5), 2);
  Vector one(4);
  one << 1.0, 1e-6, 5e-7, 4e-7;
  EXPECT_EQ(ridge_select_K(one, 0.0, 5), 1);
  // A large ridge pushes every ratio towards one but keeps their order here.
  EXPECT_EQ(ridge_select_K(ev, 1e6, 5), 2);
}

TEST(Ridge, NegativeEigenvaluesCountAsZero) {
  Vector ev(3);
  ev << 2.0, -0.5, -1.0;
  EXPECT_EQ(ridge_select_K(ev, 0.0, 5), 1);
  Vector ev2(3);
  ev2 << 2.0, 1.0, -3.0;
  // k=2 gives (0 + c)/(1 + c), which beats k=1.
  EXPECT_EQ(ridge_select_K(ev2, 0.01, 5), 2);
}

TEST(Ridge, RangeClampedAndTiesToSmallerK) {
  Vector ev(4);
  ev << 8.0, 4.0, 2.0, 1.0;  // every ratio is 1/2
  EXPECT_EQ(ridge_select_K(ev, 0.0, 5), 1);
  Vector tail(4);
  tail << 8.0, 4.0, 2.0, 0.0;
  EXPECT_EQ(ridge_select_K(tail, 0.0, 2), 1);
  EXPECT_EQ(ridge_select_K(tail, 0.0, 3), 3);
  Vector single(1);
  single << 3.0;
  EXPECT_EQ(ridge_select_K(single, 0.0, 5), 1);
}

TEST(Ridge, ConstantHandValue) {
  SelectConfig cfg;
  const Index n = 5, t = 2000;
  const int p = 2;
  const double teff = 2000.0 / std::pow(std::log(2000.0), 2);
  const double expected = 1e-3 * 5.0 * std::pow(5.0 * 2.0 * std::log(2000.0) / teff, 0.1 / 1.1);
  EXPECT_NEAR(ridge_constant(n, t, p, cfg), expected, 1e-15);
}

TEST(SelectK, ExactThetaGivesTrueCounts) {
  oracle::Rng rng(2);
  BekkParams truth;
  truth.omega = Matrix::Identity(3, 3);
  truth.p = 2;
  truth.K = {2, 1};
  truth.A = {oracle::dense_components(3, 2, rng), oracle::dense_components(3, 1, rng)};
  const ComponentSelection sel = select_K(theta_from_bekk(truth), 2000, SelectConfig{}, AdamConfig{});
  EXPECT_EQ(sel.K, truth.K);
}

TEST(Split, DefaultsAndErrors) {
  SelectConfig cfg;
  const ValidationSplit s = resolve_split(100, 2, cfg);
  EXPECT_EQ(s.valid_len, 10);
  EXPECT_EQ(s.train_len, 90);
  EXPECT_EQ(resolve_split(4, 1, cfg).valid_len, 1);
  cfg.train_len = 95;
  cfg.valid_len = 10;
  EXPECT_THROW(resolve_split(100, 2, cfg), DataError);
  cfg.train_len = 2;
  cfg.valid_len = 5;
  EXPECT_THROW(resolve_split(100, 2, cfg), DataError);
}

TEST(Grids, TauGridSpansMedianToMaxThenInf) {
  oracle::Rng rng(3);
  const Matrix panel = oracle::random_matrix(101, 2, rng);
  const auto grid = default_tau_grid(panel, 5);
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_TRUE(std::isinf(grid.back()));
  const Matrix ys = vech_series(panel);
  std::vector<double> mags(ys.data(), ys.data() + ys.size());
  for (double& v : mags) v = std::abs(v);
  std::sort(mags.begin(), mags.end());
  const double median = mags.size() % 2 ? mags[mags.size() / 2] : 0.5 * (mags[mags.size() / 2 - 1] + mags[mags.size() / 2]);
  EXPECT_NEAR(grid.front(), median, 1e-15);
  EXPECT_NEAR(grid[4], mags.back(), 1e-12 * mags.back());
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GT(grid[i], grid[i - 1]);
}

TEST(Grids, ScaleCovariance) {
  // Scaling returns by c scales vech products by c^2 and centered cross-moments by c^4.
  oracle::Rng rng(4);
  const Matrix panel = oracle::random_matrix(60, 2, rng);
  const double c = 3.0;
  const auto t1 = default_tau_grid(panel), t2 = default_tau_grid(c * panel);
  for (std::size_t i = 0; i + 1 < t1.size(); ++i) EXPECT_NEAR(t2[i], c * c * t1[i], 1e-12 * t2[i]);
  const auto l1 = default_lambda_grid(panel, 2), l2 = default_lambda_grid(c * panel, 2);
  ASSERT_EQ(l1.size(), 6u);
  for (std::size_t i = 0; i < l1.size(); ++i) EXPECT_NEAR(l2[i], std::pow(c, 4) * l1[i], 1e-10 * l2[i]);
  EXPECT_NEAR(l1.back() / l1.front(), 1e-3, 1e-15);
}

TEST(Grids, LambdaMaxZeroesLagCoefficients) {
  oracle::Rng rng(5);
  const Matrix panel = oracle::random_matrix(80, 2, rng);
  const double top = default_lambda_grid(panel, 1).front();
  // With the intercept handled by centering, top is the zero threshold for
  // lag coefficients in the centered problem.
  const TruncatedDesign d = build_design(panel, 1, kInf);
  const Matrix xc = d.x.rightCols(3).rowwise() - d.x.rightCols(3).colwise().mean();
  const Matrix yc = d.y.rowwise() - d.y.colwise().mean();
  EXPECT_NEAR(top, (xc.transpose() * yc).cwiseAbs().maxCoeff() / double(d.rows()), 1e-15);
}

TEST(RollingPath, NoLookahead) {
  oracle::Rng rng(6);
  Matrix panel = oracle::random_matrix(60, 2, rng);
  const std::vector<double> lambdas{0.1, 0.01};
  FistaConfig base;
  const RollingPath clean = rolling_path(panel, 1, 1.5, lambdas, 50, 10, 1, base, true);
  // Corrupt the last row: every fit must be unchanged, and only the final
  // origin's forecast error can move.
  panel.row(59).setConstant(1e6);
  const RollingPath dirty = rolling_path(panel, 1, 1.5, lambdas, 50, 10, 1, base, true);
  ASSERT_EQ(clean.fits.size(), 2u);
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    ASSERT_EQ(clean.fits[l].size(), 10u);
    for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(clean.fits[l][k].values, dirty.fits[l][k].values);
    EXPECT_GT(dirty.msfe[l], clean.msfe[l]);
  }
}

TEST(RollingPath, ForecastErrorMatchesDirectComputation) {
  oracle::Rng rng(7);
  const Matrix panel = oracle::random_matrix(40, 2, rng);
  FistaConfig base;
  const RollingPath path = rolling_path(panel, 1, kInf, {0.05}, 35, 5, 1, base, true);
  const Matrix raw = vech_series(panel);
  double acc = 0.0;
  for (Index k = 0; k < 5; ++k) {
    const Index o = 35 + k;
    acc += (raw.row(o).transpose() - path.fits[0][std::size_t(k)].forecast(lagged_regressor(raw, o, 1))).squaredNorm();
  }
  EXPECT_NEAR(path.msfe[0], acc / 5.0, 1e-12);
}

TEST(RollingPath, StrideReusesFits) {
  oracle::Rng rng(8);
  const Matrix panel = oracle::random_matrix(50, 2, rng);
  const RollingPath path = rolling_path(panel, 1, kInf, {0.05}, 40, 6, 3, FistaConfig{}, true);
  EXPECT_EQ(path.fits[0][0].values, path.fits[0][2].values);
  EXPECT_NE(path.fits[0][2].values, path.fits[0][3].values);
}

TEST(Tune, PicksGridMinimiser) {
  const Matrix panel = arch1_panel(2, 400, 0.5, 9);
  SelectConfig cfg;
  cfg.tau_grid = {1.0, 4.0, kInf};
  const TuneResult tr = tune_lambda_tau(panel, 1, cfg);
  ASSERT_EQ(tr.msfe.rows(), 3);
  ASSERT_EQ(tr.msfe.cols(), 6);
  Index bi, bj;
  tr.msfe.minCoeff(&bi, &bj);
  EXPECT_DOUBLE_EQ(tr.msfe(bi, bj), tr.msfe.minCoeff());
  EXPECT_NEAR(tr.tau, std::sqrt(tr.tau_vech), 0.0);
  double at_choice = kInf;
  for (std::size_t i = 0; i < tr.tau_grid.size(); ++i)
    for (std::size_t l = 0; l < tr.lambda_grid.size(); ++l)
      if (tr.tau_grid[i] == tr.tau_vech && tr.lambda_grid[l] == tr.lambda) at_choice = tr.msfe(Index(i), Index(l));
  EXPECT_EQ(at_choice, tr.msfe.minCoeff());
}

TEST(Tune, TiesPreferSmallerLambdaThenLargerTau) {
  // A constant panel makes every grid point forecast equally well.
  Matrix panel = Matrix::Ones(30, 2);
  panel(0, 0) = 1.0 + 1e-3;
  SelectConfig cfg;
  cfg.lambda_grid = {0.5, 0.2};
  cfg.tau_grid = {4.0, kInf};
  cfg.train_len = 25;
  cfg.valid_len = 5;
  const TuneResult tr = tune_lambda_tau(panel, 1, cfg);
  if (tr.msfe(0, 0) == tr.msfe(1, 0) && tr.msfe(0, 1) == tr.msfe(1, 1)) {
    EXPECT_TRUE(std::isinf(tr.tau_vech));
  }
  if (tr.msfe.minCoeff() == tr.msfe.col(1).minCoeff() && tr.msfe.minCoeff() == tr.msfe.col(0).minCoeff()) {
    EXPECT_EQ(tr.lambda, 0.2);
  }
}

TEST(SelectModel, EndToEndOnArch) {
  const Matrix panel = arch1_panel(2, 1500, 0.6, 10);
  SelectConfig cfg;
  cfg.p_max = 2;
  cfg.refit_stride = 5;
  const ModelSelection sel = select_model(panel, cfg, AdamConfig{});
  EXPECT_EQ(sel.p, 1);
  EXPECT_EQ(sel.fit.selected_p, 1);
  ASSERT_EQ(sel.components.K.size(), 1u);
  ASSERT_EQ(sel.components.aux.size(), 1u);
  // K comes from the ridge rule on the nuclear-step spectrum at the BIC lag.
  EXPECT_EQ(sel.components.K[0], ridge_select_K(sel.components.aux[0].spectrum, 2, 1500 - 1, 1, cfg));
  EXPECT_EQ(sel.fit.bic.size(), 2u);
  EXPECT_GT(sel.fit.diagnostics.objective_trace_length, 0u);
}
