#include <gtest/gtest.h>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <numbers>
#include <random>

#include "sdpm/survreg.hpp"
#include "support.hpp"

using namespace sdpm;
using testing_support::ks_pvalue;
using testing_support::mcse_batch;
using testing_support::mcse_iid;

namespace {

// Layout with an intercept and `sizes` slab groups.
DesignLayout layout_of(std::vector<int> sizes) {
  DesignLayout d;
  sizes.insert(sizes.begin(), 1);
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    d.group_start.push_back(d.length);
    d.group_size.push_back(sizes[g]);
    d.group_name.push_back(g == 0 ? "(intercept)" : "g" + std::to_string(g));
    d.group_source.push_back(static_cast<int>(g) - 1);
    d.length += sizes[g];
  }
  return d;
}

RegressionState state_for(const Mat& z, const DesignLayout& layout, const Vec& beta, double kappa) {
  RegressionState st;
  st.beta = beta;
  st.delta.assign(layout.groups(), 0);
  st.delta[0] = 1;
  for (int g = 1; g < layout.groups(); ++g)
    st.delta[g] = beta.segment(layout.group_start[g], layout.group_size[g]).cwiseAbs().sum() > 0;
  st.kappa = kappa;
  st.tau2 = 1.0;
  st.eta = z * beta;
  return st;
}

// Y with S(y) = exp(-(lambda y)^kappa) by inversion
double draw_weibull(double lambda, double kappa, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v;
  do v = u(gen);
  while (v <= 0.0);
  return std::pow(-std::log(v), 1.0 / kappa) / lambda;
}

}  // namespace

TEST(LogRisk, Examples) {
  const Vec z4 = Vec::Ones(4);
  EXPECT_EQ(log_risk(z4, Vec::Zero(4)), 0.0);
  EXPECT_EQ(std::exp(log_risk(Vec::Unit(4, 0), (Vec(4) << 2, 0, 0, 0).finished())), std::exp(2.0));
  // intercept 0 with the eight informative coefficients on unit-valued predictors
  const Vec beta = (Vec(9) << 0, 1.0, 0.5, -0.5, 0.2, 1.5, 0.5, -0.5, 0.2).finished();
  EXPECT_NEAR(log_risk(Vec::Ones(9), beta), 2.9, 1e-12);
  EXPECT_THROW(log_risk(Vec::Ones(3), beta), InvalidArgument);
}

TEST(Impute, ClosedFormExponential) {
  const double z = 1.0 - 0.5 * std::exp(-0.2);
  EXPECT_NEAR(z, 0.59063, 1e-5);
  EXPECT_NEAR(impute_censored(0.2, 1.0, 1.0, 0.5), -std::log(1.0 - z), 1e-12);
  EXPECT_NEAR(impute_censored(0.2, 1.0, 1.0, 0.5), 0.8931, 1e-4);
}

TEST(Impute, LeftEndpointLimitAndSupport) {
  // the survivor of the draw is U S(y), so U -> 1 recovers y
  EXPECT_NEAR(impute_censored(0.7, 1.3, 1.8, 1.0 - 1e-12), 0.7, 1e-9);
  for (double u : {1e-300, 1e-9, 0.3, 0.999999}) {
    const double t = impute_censored(0.7, 1.3, 1.8, u);
    EXPECT_GE(t, 0.7);
    EXPECT_TRUE(std::isfinite(t));
  }
  EXPECT_THROW(impute_censored(0.7, 1.3, 1.8, 0.0), InvalidArgument);
  EXPECT_THROW(impute_censored(0.7, 1.3, 1.8, 1.0), InvalidArgument);
}

TEST(Impute, TruncatedWeibullKolmogorovSmirnov) {
  const double y = 0.6, lam = 1.4, kap = 1.7;
  RngStream rng(1);
  std::vector<double> v;
  for (int i = 0; i < 10000; ++i) v.push_back(impute_censored(y, lam, kap, rng.uniform_open()));
  const double sy = std::exp(-std::pow(lam * y, kap));
  auto cdf = [&](double t) { return 1.0 - std::exp(-std::pow(lam * t, kap)) / sy; };
  EXPECT_GT(ks_pvalue(v, cdf), 0.01);
}

TEST(PseudoResponse, DigammaTrigammaIdentities) {
  EXPECT_NEAR(trigamma(1.0), std::numbers::pi * std::numbers::pi / 6.0, 1e-12);
  EXPECT_NEAR(trigamma(1.0), 1.6449, 1e-4);
  EXPECT_NEAR(digamma(1.0), -std::numbers::egamma, 1e-12);
  EXPECT_NEAR(digamma(1.0), -0.57722, 1e-5);
}

TEST(PseudoResponse, MomentsOfTransformedWeibull) {
  std::mt19937_64 gen(2);
  for (const auto [lam, kap] : {std::pair{1.0, 1.0}, std::pair{2.5, 0.7}, std::pair{0.3, 2.2}}) {
    std::vector<double> v;
    v.reserve(1000000);
    for (int i = 0; i < 1000000; ++i) v.push_back(-std::log(draw_weibull(lam, kap, gen)) + digamma(1.0) / kap);
    EXPECT_NEAR(testing_support::mean(v), std::log(lam), 3 * mcse_iid(v));
    EXPECT_NEAR(testing_support::var(v) / (trigamma(1.0) / (kap * kap)), 1.0, 0.01);
  }
}

TEST(PseudoResponse, UnitTimesGiveDigammaMean) {
  // all other coefficients zero, y~ = 1, kappa = 1: the intercept proposal mean is the
  // average pseudo-response digamma(1) (slab effectively flat)
  const int n = 50;
  const Mat z = Mat::Ones(n, 1);
  const auto layout = layout_of({});
  const auto st = state_for(z, layout, Vec::Zero(1), 1.0);
  const auto gp = beta_group_proposal(0, st, z, layout, Vec::Zero(n), 1e8);
  EXPECT_NEAR(gp.mean(0), digamma(1.0), 1e-9);
  // proposal variance sigma~^2 / n
  EXPECT_NEAR(std::exp(-gp.log_det_prec), trigamma(1.0) / n, 1e-9);
}

TEST(BetaGroup, NullMoveLeavesStateUnchanged) {
  const int n = 30;
  std::mt19937 gen(3);
  std::normal_distribution<double> nd;
  Mat z(n, 2);
  for (int i = 0; i < n; ++i) z.row(i) << 1.0, nd(gen);
  const auto layout = layout_of({1});
  auto st = state_for(z, layout, Vec::Zero(2), 1.0);
  RegPriorConfig pc;
  RngStream rng(3);
  int stays = 0;
  for (int t = 0; t < 5000; ++t) {
    auto before = st;
    before.delta[1] = 0;
    before.beta(1) = 0.0;
    before.eta = z * before.beta;
    st = before;
    const bool ok = update_beta_group(1, st, z, layout, Vec::Zero(n), pc, rng);
    if (st.delta[1] == 0) {
      ++stays;
      ASSERT_EQ(st.beta(1), 0.0);
      ASSERT_EQ(st.eta, before.eta);
      if (ok) continue;
    }
    ASSERT_TRUE(ok || st.delta[1] == 0);
  }
  // the spike is kept with probability at least 1 - p01
  EXPECT_GT(stays, 0.65 * 5000);
}

TEST(BetaGroup, SpikeIsBitwiseZeroAndEtaInSync) {
  const int n = 80;
  std::mt19937 gen(4);
  std::normal_distribution<double> nd;
  Mat z(n, 4);
  for (int i = 0; i < n; ++i) z.row(i) << 1.0, nd(gen), nd(gen), nd(gen);
  const auto layout = layout_of({2, 1});
  auto st = state_for(z, layout, Vec::Zero(4), 1.3);
  Vec logy(n);
  std::mt19937_64 g64(4);
  for (int i = 0; i < n; ++i) logy(i) = std::log(draw_weibull(std::exp(0.4 * z(i, 1)), 1.3, g64));
  RegPriorConfig pc;
  RngStream rng(4);
  for (int t = 0; t < 3000; ++t) {
    for (int g = 0; g < layout.groups(); ++g) update_beta_group(g, st, z, layout, logy, pc, rng);
    ASSERT_EQ(st.delta[0], 1);
    for (int g = 1; g < layout.groups(); ++g)
      if (!st.delta[g])
        for (int k = 0; k < layout.group_size[g]; ++k) ASSERT_EQ(st.beta(layout.group_start[g] + k), 0.0);
    ASSERT_LT((st.eta - z * st.beta).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(BetaGroup, InterceptPosteriorMatchesQuadrature) {
  // complete data, kappa fixed: p(b0 | y) ∝ prod Weibull(y_i; exp(b0), kappa) N(b0; 0, 10^2)
  const int n = 40;
  const double kap = 1.5;
  std::mt19937_64 gen(5);
  Vec logy(n);
  for (int i = 0; i < n; ++i) logy(i) = std::log(draw_weibull(std::exp(0.7), kap, gen));
  auto logpost = [&](double b) {
    double l = -0.5 * b * b / 100.0;
    for (int i = 0; i < n; ++i) l += kap * b - std::exp(kap * (b + logy(i)));
    return l;
  };
  double mx = -kInf;
  for (double b = -5; b <= 5; b += 1e-4) mx = std::max(mx, logpost(b));
  double w = 0, wb = 0;
  for (double b = -5; b <= 5; b += 1e-4) {
    const double e = std::exp(logpost(b) - mx);
    w += e;
    wb += e * b;
  }
  const double oracle = wb / w;
  const Mat z = Mat::Ones(n, 1);
  const auto layout = layout_of({});
  auto st = state_for(z, layout, Vec::Zero(1), kap);
  RegPriorConfig pc;
  RngStream rng(5);
  std::vector<double> draws;
  int acc = 0;
  for (int t = 0; t < 40000; ++t) {
    acc += update_beta_group(0, st, z, layout, logy, pc, rng);
    if (t >= 1000) draws.push_back(st.beta(0));
  }
  EXPECT_NEAR(testing_support::mean(draws), oracle, 3 * mcse_batch(draws));
  EXPECT_GT(acc, 0.3 * 40000);
}

TEST(BetaGroup, InclusionProbabilityMatchesQuadrature) {
  // one slab coefficient with tau2 fixed; intercept pinned at 0
  const int n = 50;
  const double kap = 1.0, tau2 = 1.0, rho = 0.5;
  std::mt19937 gen(6);
  std::normal_distribution<double> nd;
  std::mt19937_64 g64(6);
  Mat z(n, 2);
  Vec logy(n);
  for (int i = 0; i < n; ++i) {
    z.row(i) << 1.0, nd(gen);
    logy(i) = std::log(draw_weibull(std::exp(0.25 * z(i, 1)), kap, g64));
  }
  auto loglik = [&](double b) {
    double l = 0.0;
    for (int i = 0; i < n; ++i) l += kap * b * z(i, 1) - std::exp(kap * (b * z(i, 1) + logy(i)));
    return l;
  };
  const double l0 = loglik(0.0);
  double slab = 0.0;
  const double h = 1e-4;
  for (double b = -4; b <= 4; b += h)
    slab += h * std::exp(loglik(b) - l0 - 0.5 * b * b / tau2) / std::sqrt(2 * std::numbers::pi * tau2);
  const double oracle = rho * slab / (rho * slab + (1 - rho));
  ASSERT_GT(oracle, 0.15);
  ASSERT_LT(oracle, 0.85);

  const auto layout = layout_of({1});
  auto st = state_for(z, layout, Vec::Zero(2), kap);
  st.tau2 = tau2;
  RegPriorConfig pc;
  pc.rho = rho;
  RngStream rng(6);
  std::vector<double> inc;
  for (int t = 0; t < 100000; ++t) {
    update_beta_group(1, st, z, layout, logy, pc, rng);
    if (t >= 1000) inc.push_back(st.delta[1]);
  }
  EXPECT_NEAR(testing_support::mean(inc), oracle, 3 * mcse_batch(inc, 50));
}

TEST(Tau2, AllSlotsZeroGivesInverseGammaThreeOne) {
  const auto layout = layout_of({1, 1, 1, 1});
  RegressionState st;
  st.beta = Vec::Zero(5);
  st.delta = {1, 1, 1, 1, 1};
  RegPriorConfig pc;
  RngStream rng(7);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i) {
    v.push_back(update_tau2(st, layout, pc, rng));
    ASSERT_GT(v.back(), 0.0);
  }
  EXPECT_NEAR(testing_support::mean(v), 0.5, 4 * mcse_iid(v));
  const boost::math::gamma_distribution<> g(3.0, 1.0);  // 1/tau2 ~ Gamma(3, rate 1)
  EXPECT_GT(ks_pvalue(v, [&](double x) { return boost::math::cdf(boost::math::complement(g, 1.0 / x)); }), 0.01);
}

TEST(Tau2, LargerCoefficientsGiveLargerVariance) {
  const auto layout = layout_of({1, 1});
  RegressionState small, large;
  small.beta = (Vec(3) << 5.0, 0.1, 0.1).finished();
  large.beta = (Vec(3) << 5.0, 2.0, 2.0).finished();
  small.delta = large.delta = {1, 1, 1};
  RegPriorConfig pc;
  RngStream r1(8), r2(8);
  double ms = 0, ml = 0;
  for (int i = 0; i < 20000; ++i) {
    ms += update_tau2(small, layout, pc, r1);
    ml += update_tau2(large, layout, pc, r2);
  }
  EXPECT_LT(ms, ml);
}

TEST(Kappa, ZeroStepAlwaysAccepted) {
  RegressionState st;
  st.kappa = 1.7;
  st.eta = Vec::Zero(3);
  RegPriorConfig pc;
  pc.step_kappa = 0.0;
  RngStream rng(9);
  const Vec y = Vec::Constant(3, 0.5);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(update_kappa(st, y, {1, 0, 1}, pc, rng));
  EXPECT_EQ(st.kappa, 1.7);
}

TEST(Kappa, LogScaleJacobianLeavesPriorInvariant) {
  // no data: the chain must target Gamma(a, b); dropping the kappa'/kappa factor
  // would instead target Gamma(a - 1, b)
  RegressionState st;
  st.kappa = 1.0;
  st.eta = Vec(0);
  RegPriorConfig pc;
  pc.a_kappa = 3.0;
  pc.b_kappa = 2.0;
  pc.step_kappa = 0.8;
  RngStream rng(10);
  std::vector<double> v;
  for (int i = 0; i < 200000; ++i) {
    update_kappa(st, Vec(0), {}, pc, rng);
    v.push_back(st.kappa);
  }
  EXPECT_NEAR(testing_support::mean(v), 1.5, 3 * mcse_batch(v, 50));
}

TEST(Kappa, LogNormalProposalRatioMatchesNumericDensity) {
  // q(b | a) from a finite difference of P(a e^{sZ} <= b) reproduces q(a|b)/q(b|a) = b/a
  const double s = 0.05, a = 1.3, b = 1.37, h = 1e-6;
  const boost::math::normal nd;
  auto q = [&](double to, double from) {
    return (boost::math::cdf(nd, std::log((to + h) / from) / s) - boost::math::cdf(nd, std::log((to - h) / from) / s)) /
           (2 * h);
  };
  EXPECT_NEAR(q(a, b) / q(b, a), b / a, 1e-6);
}

TEST(Kappa, PosteriorConcentratesNearTruth) {
  const int n = 500;
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> cu(0.5, 3.0);
  Vec y(n);
  std::vector<std::uint8_t> ev(n);
  for (int i = 0; i < n; ++i) {
    const double t = draw_weibull(1.0, 2.0, gen), c = cu(gen);
    y(i) = std::min(t, c);
    ev[i] = t <= c;
  }
  RegressionState st;
  st.kappa = 1.0;
  st.eta = Vec::Zero(n);
  RegPriorConfig pc;
  RngStream rng(11);
  double m = 0.0;
  int acc = 0;
  for (int i = 0; i < 6000; ++i) {
    acc += update_kappa(st, y, ev, pc, rng);
    if (i >= 1000) m += st.kappa / 5000;
  }
  EXPECT_GE(m, 1.7);
  EXPECT_LE(m, 2.3);
  EXPECT_GT(acc, 0.2 * 6000);
}

TEST(Likelihood, UnitExponentialExamples) {
  EXPECT_NEAR(weibull_loglik(Vec::Constant(1, 1.0), {1}, Vec::Zero(1), 1.0), -1.0, 1e-15);
  EXPECT_NEAR(weibull_loglik(Vec::Constant(1, 0.2), {0}, Vec::Zero(1), 1.0), -0.2, 1e-15);
}

TEST(Likelihood, SumOfLogDensities) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution coin(0.6);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 25;
    Vec y(n), eta(n);
    std::vector<std::uint8_t> ev(n);
    const double kap = std::exp(0.5 * nd(gen));
    double expected = 0.0;
    for (int i = 0; i < n; ++i) {
      eta(i) = 0.7 * nd(gen);
      y(i) = std::exp(nd(gen));
      ev[i] = coin(gen);
      expected += ev[i] ? weibull_logpdf(y(i), std::exp(eta(i)), kap) : weibull_logsf(y(i), std::exp(eta(i)), kap);
      EXPECT_NEAR(weibull_loglik_row(y(i), ev[i], eta(i), kap),
                  ev[i] ? weibull_logpdf(y(i), std::exp(eta(i)), kap) : weibull_logsf(y(i), std::exp(eta(i)), kap),
                  1e-12 * (1 + std::abs(expected)));
    }
    EXPECT_NEAR(weibull_loglik(y, ev, eta, kap), expected, 1e-10 * (1 + std::abs(expected)));
  }
}

TEST(Regression, CompleteDataCoverageOfGeneratingCoefficients) {
  // 100 small complete-data replicates: four binary and four continuous predictors with
  // coefficients (1.0, 0.5, -0.5, 0.2) in each block, intercept 0, kappa 1.5.
  // The design is known, so inclusion is pinned to the generating support (all groups in).
  const Vec truth = (Vec(9) << 0, 1.0, 0.5, -0.5, 0.2, 1.5, 0.5, -0.5, 0.2).finished();
  const int n = 200, reps = 100, iters = 10000, burn = 1000;
  const auto layout = layout_of({1, 1, 1, 1, 1, 1, 1, 1});
  std::vector<int> covered(9, 0);
  bool always_in = true;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 gen(1000 + r);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution coin(0.5);
    Mat z(n, 9);
    Vec logy(n);
    for (int i = 0; i < n; ++i) {
      z(i, 0) = 1.0;
      for (int k = 1; k <= 4; ++k) z(i, k) = coin(gen);
      for (int k = 5; k <= 8; ++k) z(i, k) = nd(gen);
      logy(i) = std::log(draw_weibull(std::exp(z.row(i).dot(truth)), 1.5, gen));
    }
    const Vec y = logy.array().exp();
    const std::vector<std::uint8_t> ev(n, 1);
    auto st = state_for(z, layout, Vec::Zero(9), 1.0);
    st.delta.assign(9, 1);
    RegPriorConfig pc;
    pc.rho = pc.p11 = 1.0 - 1e-12;
    RngStream rng(2000 + r);
    std::vector<std::vector<double>> draws(9);
    for (int t = 0; t < iters; ++t) {
      for (int g = 0; g < layout.groups(); ++g) update_beta_group(g, st, z, layout, logy, pc, rng);
      st.tau2 = update_tau2(st, layout, pc, rng);
      update_kappa(st, y, ev, pc, rng);
      always_in = always_in && std::count(st.delta.begin(), st.delta.end(), 1) == 9;
      if (t >= burn)
        for (int k = 0; k < 9; ++k) draws[k].push_back(st.beta(k));
    }
    for (int k = 0; k < 9; ++k) {
      auto& d = draws[k];
      std::sort(d.begin(), d.end());
      const double lo = d[static_cast<std::size_t>(0.025 * (d.size() - 1))];
      const double hi = d[static_cast<std::size_t>(0.975 * (d.size() - 1))];
      covered[k] += lo <= truth(k) && truth(k) <= hi;
    }
  }
  for (int k = 0; k < 9; ++k) EXPECT_GE(covered[k], 90) << "coefficient " << k;
  EXPECT_TRUE(always_in);
}
