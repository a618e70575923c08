#include <gtest/gtest.h>

#include <random>

#include "regtps/diagnostics.hpp"
#include "regtps/hmc.hpp"

using namespace regtps;

namespace {

Target gaussian_target(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd prec = cov.inverse();
  Target t;
  t.dimension = mean.size();
  t.log_density = [mean, prec](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const Eigen::VectorXd d = x - mean;
    g = -prec * d;
    return -0.5 * d.dot(prec * d);
  };
  t.pointwise_loglik = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.head(1)); };
  return t;
}

Eigen::MatrixXd correlated_cov(int d) {
  Eigen::MatrixXd cov(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) cov(i, j) = std::pow(0.7, std::abs(i - j)) * (1.0 + 0.3 * i) * (1.0 + 0.3 * j);
  }
  return cov;
}

std::vector<Eigen::VectorXd> iid_chains(int m, int n, std::uint64_t seed, double shift_last = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < m; ++c) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = n01(rng) + (c == m - 1 ? shift_last : 0.0);
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST(HmcConfig, Validation) {
  HmcConfig c;
  EXPECT_NO_THROW(c.validate());
  c.chains = 1;
  EXPECT_THROW(c.validate(), InputError);
  c = HmcConfig{};
  c.target_accept = 1.0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(Hmc, StandardNormalMoments) {
  HmcConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 500;
  cfg.draws = 1000;
  cfg.seed = 17;
  const auto draws = run_hmc(gaussian_target(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)), cfg);
  const auto s = summarize_parameter(draws, 0);
  EXPECT_NEAR(s.mean, 0.0, 4.0 * s.sd / std::sqrt(s.ess));
  EXPECT_NEAR(s.sd * s.sd, 1.0, 0.1);
  EXPECT_EQ(draws.divergences(), 0);
  EXPECT_EQ(draws.total_draws(), 2000);
  EXPECT_EQ(draws.pooled_loglik().rows(), 2000);
}

TEST(Hmc, CorrelatedGaussianConvergesAndRecoversMoments) {
  const int d = 10;
  Eigen::VectorXd mean(d);
  for (int i = 0; i < d; ++i) mean[i] = 0.5 * i - 2.0;
  const Eigen::MatrixXd cov = correlated_cov(d);
  HmcConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 1000;
  cfg.draws = 1000;
  cfg.seed = 99;
  const auto draws = run_hmc(gaussian_target(mean, cov), cfg);
  for (int i = 0; i < d; ++i) {
    const auto s = summarize_parameter(draws, i);
    EXPECT_LE(s.rhat, 1.01) << i;
    EXPECT_NEAR(s.mean, mean[i], 4.0 * std::sqrt(cov(i, i) / s.ess)) << i;
    EXPECT_NEAR(s.sd * s.sd, cov(i, i), 0.15 * cov(i, i)) << i;
  }
}

TEST(Hmc, SameSeedSameDrawsRegardlessOfThreads) {
  HmcConfig cfg;
  cfg.chains = 3;
  cfg.warmup = 100;
  cfg.draws = 50;
  cfg.seed = 5;
  const auto t = gaussian_target(Eigen::VectorXd::Ones(3), correlated_cov(3));
  const auto a = run_hmc(t, cfg);
  const auto b = run_hmc(t, cfg);
  cfg.parallel = false;
  const auto c = run_hmc(t, cfg);
  for (std::size_t k = 0; k < a.chains.size(); ++k) {
    EXPECT_TRUE(a.chains[k].draws == b.chains[k].draws);
    EXPECT_TRUE(a.chains[k].draws == c.chains[k].draws);
  }
  EXPECT_FALSE(a.chains[0].draws == a.chains[1].draws);
  cfg.seed = 6;
  EXPECT_FALSE(run_hmc(t, cfg).chains[0].draws == a.chains[0].draws);
}

TEST(Hmc, DivergencesAreRejectedNotFatal) {
  // Standard normal truncated to x > -1 by an infinite wall.
  Target t;
  t.dimension = 1;
  t.log_density = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -x;
    return x[0] > -1.0 ? -0.5 * x.squaredNorm() : -std::numeric_limits<double>::infinity();
  };
  t.initial_point = [](std::mt19937_64&) { return Eigen::VectorXd::Zero(1); };
  HmcConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 200;
  cfg.draws = 500;
  const auto draws = run_hmc(t, cfg);
  EXPECT_GT(draws.divergences(), 0);
  EXPECT_GT(draws.pooled().minCoeff(), -1.0);
}

TEST(Hmc, AllDivergentWarmupThrows) {
  Target t;
  t.dimension = 2;
  t.log_density = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Ones(2);
    return x.isZero(0.0) ? 0.0 : -std::numeric_limits<double>::infinity();
  };
  t.initial_point = [](std::mt19937_64&) { return Eigen::VectorXd::Zero(2); };
  HmcConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 30;
  cfg.draws = 10;
  EXPECT_THROW(run_hmc(t, cfg), SamplingError);
}

TEST(Diagnostics, RhatNearOneForIidAndLargeForShiftedChain) {
  EXPECT_LT(split_rhat(iid_chains(4, 1000, 1)), 1.01);
  EXPECT_GT(split_rhat(iid_chains(4, 1000, 2, 3.0)), 1.2);
  EXPECT_THROW(split_rhat(iid_chains(1, 100, 3)), InputError);
}

TEST(Diagnostics, RhatSeesScaleDifferencesThroughFolding) {
  auto chains = iid_chains(4, 1000, 7);
  chains[3] *= 4.0;
  EXPECT_GT(split_rhat(chains), 1.05);
}

TEST(Diagnostics, EssOfIidAndAutoregressiveChains) {
  const double ess_iid = ess_bulk(iid_chains(4, 1000, 4));
  EXPECT_NEAR(ess_iid, 4000.0, 400.0);
  const double phi = 0.9;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  std::vector<Eigen::VectorXd> chains;
  for (int c = 0; c < 4; ++c) {
    Eigen::VectorXd v(5000);
    double x = n01(rng) / std::sqrt(1 - phi * phi);
    for (int i = 0; i < 5000; ++i) {
      x = phi * x + n01(rng);
      v[i] = x;
    }
    chains.push_back(v);
  }
  const double expected = 20000.0 * (1 - phi) / (1 + phi);
  EXPECT_NEAR(ess_bulk(chains), expected, 0.25 * expected);
}

TEST(Diagnostics, QuantilesAndSummaryOracle) {
  PosteriorDraws d;
  d.names = {"a"};
  for (int c = 0; c < 2; ++c) {
    ChainDraws ch;
    ch.draws.resize(5, 1);
    for (int i = 0; i < 5; ++i) ch.draws(i, 0) = c * 5 + i;
    d.chains.push_back(ch);
  }
  const auto s = summarize_parameter(d, 0);
  EXPECT_DOUBLE_EQ(s.mean, 4.5);
  EXPECT_DOUBLE_EQ(s.median, 4.5);
  EXPECT_NEAR(s.sd, std::sqrt(82.5 / 9.0), 1e-12);
  EXPECT_NEAR(s.q025, 0.225, 1e-12);
  EXPECT_NEAR(s.q975, 8.775, 1e-12);
  EXPECT_EQ(s.name, "a");
}

TEST(Diagnostics, GateReportsFailures) {
  PosteriorDraws d;
  const auto chains = iid_chains(2, 200, 9, 5.0);
  for (const auto& c : chains) {
    ChainDraws ch;
    ch.draws = c;
    d.chains.push_back(ch);
  }
  d.names = {"theta"};
  const auto r = check_convergence(d, {0});
  EXPECT_FALSE(r.passed);
  ASSERT_FALSE(r.failures.empty());
  EXPECT_NE(r.failures.front().find("theta"), std::string::npos);
}
