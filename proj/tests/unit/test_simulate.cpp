#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "hdbekk/simulate.hpp"
#include "oracles.hpp"

using namespace hdbekk;

namespace {

struct Moments {
  double mean = 0, var = 0, kurt = 0;
};

Moments moments(const Innovation& inn, int draws, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xs;
  for (int i = 0; i < draws / 4; ++i) {
    const Vector v = draw_innovation(inn, 4, rng);
    xs.insert(xs.end(), v.data(), v.data() + 4);
  }
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= double(xs.size());
  double m4 = 0;
  for (double x : xs) {
    m.var += (x - m.mean) * (x - m.mean);
    m4 += std::pow(x - m.mean, 4);
  }
  m.var /= double(xs.size());
  m.kurt = m4 / double(xs.size()) / (m.var * m.var);
  return m;
}

McConfig small_mc() {
  McConfig mc;
  mc.dgp.n = 3;
  mc.dgp.p = 1;
  mc.dgp.s = 1;
  mc.dgp.K = {1};
  mc.dgp.burn_in = 50;
  mc.dgp.seed = 42;
  mc.t_grid = {120, 200};
  mc.reps = 3;
  mc.tune = false;
  mc.lambda = 1e-3;
  mc.tau = kInf;
  mc.adam.iters = 200;
  return mc;
}

}  // namespace

TEST(Innovation, StandardisedMoments) {
  const int draws = 400000;
  const Moments g = moments(Innovation::gaussian(), draws, 1);
  EXPECT_NEAR(g.mean, 0.0, 0.01);
  EXPECT_NEAR(g.var, 1.0, 0.01);
  EXPECT_NEAR(g.kurt, 3.0, 0.05);
  const Moments l = moments(Innovation::laplace(), draws, 2);
  EXPECT_NEAR(l.mean, 0.0, 0.01);
  EXPECT_NEAR(l.var, 1.0, 0.015);
  EXPECT_NEAR(l.kurt, 6.0, 0.3);
  const Moments t = moments(Innovation::student_t(10.0), draws, 3);
  EXPECT_NEAR(t.mean, 0.0, 0.01);
  EXPECT_NEAR(t.var, 1.0, 0.015);
  EXPECT_NEAR(t.kurt, 4.0, 0.3);
}

TEST(Innovation, HeavyTailVarianceIsOne) {
  const Moments t = moments(Innovation::student_t(4.2), 400000, 4);
  EXPECT_NEAR(t.var, 1.0, 0.05);
  EXPECT_THROW(Innovation::student_t(2.0).validate(), std::invalid_argument);
}

TEST(Streams, DeterministicAndDistinct) {
  Rng a = make_stream(7, 1, 2), b = make_stream(7, 1, 2), c = make_stream(7, 2, 1), d = make_stream(8, 1, 2);
  const auto va = a(), vb = b(), vc = c(), vd = d();
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
  EXPECT_NE(va, vd);
}

TEST(Dgp, StructureOfDrawnParameters) {
  DgpSpec spec;
  spec.n = 6;
  spec.p = 2;
  spec.s = 2;
  spec.K = {2, 1};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng = make_stream(seed, 0);
    const BekkParams params = gen_bekk_params(spec, rng);
    EXPECT_LT(mean_dynamics_radius(theta_from_bekk(params)), spec.max_spectral_radius);
    // Omega: symmetric, PD, at most s nonzeros per row.
    EXPECT_TRUE(is_symmetric(params.omega));
    EXPECT_GT(sym_eigenvalues(params.omega).minCoeff(), 0.0);
    for (Index r = 0; r < 6; ++r) EXPECT_LE((params.omega.row(r).array() != 0.0).count(), spec.s);
    for (int i = 0; i < spec.p; ++i) {
      const auto& comps = params.A[std::size_t(i)];
      ASSERT_EQ(int(comps.size()), spec.K[std::size_t(i)]);
      Matrix owners = Matrix::Zero(6, 6);
      for (const auto& a : comps) {
        for (Index r = 0; r < 6; ++r) EXPECT_EQ((a.row(r).array() != 0.0).count(), spec.s);
        owners.array() += (a.array() != 0.0).cast<double>();
      }
      EXPECT_LE(owners.maxCoeff(), 1.0);  // disjoint supports
      for (Index r = 0; r < 6; ++r) EXPECT_EQ(owners(r, r), 1.0);
      for (std::size_t k = 1; k < comps.size(); ++k) EXPECT_GE(comps[k - 1].norm(), comps[k].norm());
    }
  }
}

TEST(Dgp, InfeasibleSupportIsRejected) {
  DgpSpec spec;
  spec.n = 3;
  spec.p = 1;
  spec.s = 2;
  spec.K = {2};
  Rng rng(1);
  EXPECT_THROW(gen_bekk_params(spec, rng), std::invalid_argument);
}

TEST(Dgp, SameSeedSameDraw) {
  DgpSpec spec;
  Rng a = make_stream(3, 0), b = make_stream(3, 0);
  const BekkParams pa = gen_bekk_params(spec, a), pb = gen_bekk_params(spec, b);
  EXPECT_EQ(pa.omega, pb.omega);
  EXPECT_EQ(pa.A[1][0], pb.A[1][0]);
}

TEST(Simulate, ScalarArchRecursion) {
  BekkParams params;
  params.omega = Matrix::Constant(1, 1, 0.5);
  params.p = 1;
  params.K = {1};
  params.A = {{Matrix::Constant(1, 1, 0.6)}};
  Rng rng(5);
  const SimPath path = simulate_series(params, 200000, 100, Innovation::gaussian(), rng);
  ASSERT_EQ(path.sigma.size(), 200000u);
  for (Index t = 1; t < 50; ++t) {
    const double r = path.returns(t - 1, 0);
    EXPECT_NEAR(path.sigma[std::size_t(t)](0, 0), 0.5 + 0.36 * r * r, 1e-14);
  }
  // Unconditional variance omega / (1 - a^2).
  EXPECT_NEAR(path.returns.col(0).squaredNorm() / 200000.0, 0.5 / (1.0 - 0.36), 0.02);
}

TEST(Simulate, ReturnsFollowSigmaSquareRoot) {
  DgpSpec spec;
  spec.n = 4;
  Rng rng = make_stream(9, 0);
  const BekkParams params = gen_bekk_params(spec, rng);
  Rng a(11), b(11);
  const SimPath path = simulate_series(params, 50, 0, Innovation::gaussian(), a);
  // Zero presample: the first Sigma is Omega.
  EXPECT_LT((path.sigma[0] - params.omega).norm(), 1e-15);
  const Vector eta = draw_innovation(Innovation::gaussian(), 4, b);
  EXPECT_LT((path.returns.row(0).transpose() - sym_sqrt(params.omega) * eta).norm(), 1e-14);
  for (Index t = 2; t < 50; ++t) {
    const Matrix expected = sigma_tilde(params, recent_returns(path.returns, t, 2));
    EXPECT_LT((path.sigma[std::size_t(t)] - expected).norm(), 1e-13);
  }
}

TEST(Norms, TwoInfinityIsLargestColumnNorm) {
  Matrix m(2, 2);
  m << 3, 1, 4, 1;
  EXPECT_DOUBLE_EQ(norm_2inf(m), 5.0);
}

TEST(PdProportion, Extremes) {
  DgpSpec spec;
  spec.n = 3;
  spec.p = 1;
  spec.s = 1;
  spec.K = {1};
  Rng rng = make_stream(2, 0);
  const BekkParams params = gen_bekk_params(spec, rng);
  const Matrix panel = simulate_series(params, 300, 100, Innovation::gaussian(), rng).returns;
  // Model-true covariances are PD at every row.
  EXPECT_EQ(pd_proportion(theta_from_bekk(params), panel), 100.0);
  // The zero matrix is never PD.
  EXPECT_EQ(pd_proportion(CoefStack(1, 6), panel), 0.0);
  // Identity intercept with a negative lag loading fails only on large lagged squares.
  CoefStack theta(1, 6);
  theta.values.row(0) = vech(Matrix(Matrix::Identity(3, 3))).transpose();
  theta.values(1, 0) = -1.0;
  const Matrix raw = vech_series(panel);
  Index expected = 0;
  for (Index t = 1; t < 300; ++t) expected += raw(t - 1, 0) < 1.0;
  EXPECT_DOUBLE_EQ(pd_proportion(theta, panel), 100.0 * double(expected) / 299.0);
  EXPECT_THROW(pd_proportion(CoefStack(1, 3), panel), std::invalid_argument);
}

TEST(MonteCarlo, MetricsPresentAndOrdered) {
  const McConfig mc = small_mc();
  const McResult res = run_mc(mc);
  EXPECT_TRUE(res.failures.empty());
  for (Index t : mc.t_grid)
    for (const char* name : {"lambda", "tau", "theta_fro", "theta_2inf", "sigma_hat", "theta_fro_notrunc",
                             "theta_2inf_notrunc", "sigma_check", "omega_fro", "A_1_1", "sigma_tilde"})
      EXPECT_EQ(res.values(t, name).size(), 3u) << name;
  EXPECT_EQ(res.rows.front().t, 120);
  EXPECT_EQ(res.rows.front().rep, 0);
  EXPECT_EQ(res.rows.back().t, 200);
  EXPECT_EQ(res.rows.back().rep, 2);
  const auto summary = res.summary();
  EXPECT_EQ(summary.front().metric, "lambda");
  EXPECT_EQ(summary.front().count, 3u);
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResults) {
  McConfig mc = small_mc();
  mc.threads = 1;
  std::ostringstream one, many;
  write_mc_csv(one, run_mc(mc));
  mc.threads = 4;
  write_mc_csv(many, run_mc(mc));
  EXPECT_EQ(one.str(), many.str());
  EXPECT_EQ(one.str().rfind("rep,T,metric,value\n", 0), 0u);
}

TEST(MonteCarlo, FailuresAreRecorded) {
  McConfig mc = small_mc();
  mc.dgp.max_spectral_radius = 1e-9;  // no draw can qualify
  mc.dgp.max_draws = 2;
  const McResult res = run_mc(mc);
  EXPECT_TRUE(res.rows.empty());
  EXPECT_EQ(res.failures.size(), 6u);
}

TEST(MonteCarlo, SelectionAndPdMetrics) {
  McConfig mc = small_mc();
  mc.t_grid = {150};
  mc.reps = 1;
  mc.selection = true;
  mc.pd = true;
  mc.select.p_max = 2;
  const McResult res = run_mc(mc);
  ASSERT_TRUE(res.failures.empty()) << res.failures.front().message;
  for (const char* name : {"p_hat", "p_hit", "K_hit", "K_hat_1", "pd_proportion"})
    EXPECT_EQ(res.values(150, name).size(), 1u) << name;
}
