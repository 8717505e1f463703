#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <numbers>

#include "sdpm/dist.hpp"
#include "support.hpp"

using namespace sdpm;
using testing_support::ks_pvalue;
using testing_support::mcse_iid;

TEST(RngStream, SameKeySameSequence) {
  RngStream a(42, {1, 2, 3}), b(42, {1, 2, 3}), c(42, {1, 2, 4}), d(43, {1, 2, 3});
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    differs_c = differs_c || x != c();
    differs_d = differs_d || x != d();
  }
  EXPECT_TRUE(differs_c);
  EXPECT_TRUE(differs_d);
}

TEST(RngStream, DistinctStreamsUncorrelated) {
  RngStream a(7, {0}), b(7, {1});
  const int n = 100000;
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.uniform(), y = b.uniform();
    sx += x;
    sy += y;
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  const double cov = sxy / n - sx / n * sy / n;
  const double r = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  EXPECT_LT(std::abs(r), 4.0 / std::sqrt(n));
}

TEST(RngStream, UniformOpenNeverHitsEndpoints) {
  RngStream r(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform_open();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(SampleMvn, MeanOfStandardBivariate) {
  RngStream rng(11);
  const auto cov = SymMatrix::identity(2);
  Vec s = Vec::Zero(2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) s += sample_mvn(Vec::Zero(2), cov, Param::covariance, rng);
  s /= n;
  EXPECT_LT(std::abs(s(0)), 0.02);
  EXPECT_LT(std::abs(s(1)), 0.02);
}

TEST(SampleMvn, ZeroVarianceRejected) {
  EXPECT_THROW(SymMatrix(Mat::Zero(1, 1)), NumericError);
  EXPECT_THROW(SymMatrix(Mat::Constant(1, 1, -1.0)), NumericError);
}

TEST(SampleMvn, PrecisionAndCovarianceAgree) {
  RngStream r1(5), r2(6);
  const int n = 100000;
  std::vector<double> a, b;
  for (int i = 0; i < n; ++i) {
    a.push_back(sample_mvn(Vec::Constant(1, 3.0), SymMatrix::scalar(4.0), Param::precision, r1)(0));
    b.push_back(sample_mvn(Vec::Constant(1, 3.0), SymMatrix::scalar(0.25), Param::covariance, r2)(0));
  }
  const double va = testing_support::var(a), vb = testing_support::var(b);
  EXPECT_NEAR(va / vb, 1.0, 0.02);
  EXPECT_NEAR(va, 0.25, 0.25 * 0.02);
}

TEST(Cholesky, JitterEscalatesThenFails) {
  Mat singular(2, 2);
  singular << 1.0, 1.0, 1.0, 1.0;
  double jitter = -1;
  const Mat l = cholesky_lower(singular, &jitter);
  EXPECT_GT(jitter, 0.0);
  EXPECT_LE(jitter, 1e-4);
  EXPECT_TRUE(l.allFinite());
  Mat indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(cholesky_lower(indefinite), NumericError);
}

TEST(TruncatedNormal, SymmetricIntervalMeanZero) {
  RngStream rng(21);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i) v.push_back(sample_truncated_normal(0, 1, -1.3, 1.3, rng));
  EXPECT_LT(std::abs(testing_support::mean(v)), 3 * mcse_iid(v));
}

TEST(TruncatedNormal, NegativeHalfLineMean) {
  RngStream rng(22);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i) v.push_back(sample_truncated_normal(0, 1, -kInf, 0.0, rng));
  const double expected = -std::sqrt(2.0 / std::numbers::pi);
  EXPECT_LT(std::abs(testing_support::mean(v) - expected), 3 * mcse_iid(v));
}

TEST(TruncatedNormal, FarTailSupport) {
  RngStream rng(23);
  for (int i = 0; i < 10000; ++i) {
    const double x = sample_truncated_normal(0, 1, 8.0, kInf, rng);
    ASSERT_TRUE(std::isfinite(x));
    ASSERT_GE(x, 8.0);
  }
  for (int i = 0; i < 1000; ++i) {
    const double x = sample_truncated_normal(0, 1, -kInf, -30.0, rng);
    ASSERT_TRUE(std::isfinite(x));
    ASSERT_LE(x, -30.0);
  }
}

TEST(TruncatedNormal, InvalidInterval) {
  RngStream rng(1);
  EXPECT_THROW(sample_truncated_normal(0, 1, 1.0, 1.0, rng), InvalidArgument);
  EXPECT_THROW(sample_truncated_normal(0, 1, 2.0, 1.0, rng), InvalidArgument);
  EXPECT_THROW(sample_truncated_normal(0, 0, 0.0, 1.0, rng), InvalidArgument);
}

TEST(TruncatedNormal, KolmogorovSmirnovAgainstAnalyticCdf) {
  const boost::math::normal nd(0.5, 2.0);
  struct Case {
    double lo, hi;
  };
  int k = 0;
  for (const Case c : {Case{-1.0, 3.0}, Case{4.0, kInf}, Case{-kInf, -6.0}, Case{0.4, 0.6}, Case{2.0, 12.0}}) {
    RngStream rng(100 + k++);
    std::vector<double> v;
    for (int i = 0; i < 10000; ++i) v.push_back(sample_truncated_normal(0.5, 2.0, c.lo, c.hi, rng));
    const double flo = std::isfinite(c.lo) ? boost::math::cdf(nd, c.lo) : 0.0;
    const double fhi = std::isfinite(c.hi) ? boost::math::cdf(nd, c.hi) : 1.0;
    const double slo = std::isfinite(c.lo) ? boost::math::cdf(boost::math::complement(nd, c.lo)) : 1.0;
    const double shi = std::isfinite(c.hi) ? boost::math::cdf(boost::math::complement(nd, c.hi)) : 0.0;
    const bool upper_tail = c.lo > 0.5;
    auto cdf = [&](double x) {
      if (upper_tail) return (slo - boost::math::cdf(boost::math::complement(nd, x))) / (slo - shi);
      return (boost::math::cdf(nd, x) - flo) / (fhi - flo);
    };
    // family-wise 0.01 over the five intervals
    EXPECT_GT(ks_pvalue(v, cdf), 0.01 / 5) << "interval " << c.lo << ", " << c.hi;
  }
}

TEST(ScalarSamplers, GammaAndBetaKolmogorovSmirnov) {
  RngStream rng(31);
  std::vector<double> g, b, small;
  for (int i = 0; i < 10000; ++i) {
    g.push_back(sample_gamma(2.5, 1.5, rng));
    b.push_back(sample_beta(1.0, 0.5, rng));
    small.push_back(sample_gamma(0.3, 2.0, rng));
  }
  const boost::math::gamma_distribution<> gd(2.5, 1.0 / 1.5), gs(0.3, 0.5);
  const boost::math::beta_distribution<> bd(1.0, 0.5);
  EXPECT_GT(ks_pvalue(g, [&](double x) { return boost::math::cdf(gd, x); }), 0.01);
  EXPECT_GT(ks_pvalue(b, [&](double x) { return boost::math::cdf(bd, x); }), 0.01);
  EXPECT_GT(ks_pvalue(small, [&](double x) { return boost::math::cdf(gs, x); }), 0.01);
}

TEST(Wishart, ScalarMean) {
  RngStream rng(41);
  const SymMatrix scale = SymMatrix::scalar(2.0);
  double s = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) s += sample_wishart(5.0, scale, rng)(0, 0);
  EXPECT_NEAR(s / n, 10.0, 0.2);
}

TEST(Wishart, ThreeDimensionalMean) {
  RngStream rng(42);
  const SymMatrix scale = SymMatrix::identity(3);
  Mat s = Mat::Zero(3, 3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) s += sample_wishart(10.0, scale, rng).matrix();
  s /= n;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) EXPECT_NEAR(s(i, j), 10.0, 0.3);
      else EXPECT_NEAR(s(i, j), 0.0, 0.3);
    }
}

TEST(Wishart, DegreesOfFreedomPrecondition) {
  RngStream rng(1);
  EXPECT_THROW(sample_wishart(2.0, SymMatrix::identity(3), rng), InvalidArgument);
  EXPECT_NO_THROW(sample_wishart(2.01, SymMatrix::identity(3), rng));
}

TEST(Wishart, LogDensityReducesToGamma) {
  // d = 1: W(df, s) is Gamma(df/2, scale 2s)
  const boost::math::gamma_distribution<> gd(3.5, 2.0 * 1.7);
  for (double x : {0.3, 2.0, 9.0})
    EXPECT_NEAR(wishart_logpdf(SymMatrix::scalar(x), 7.0, SymMatrix::scalar(1.7)),
                std::log(boost::math::pdf(gd, x)), 1e-10);
}

TEST(InverseWishart, ScalarMean) {
  RngStream rng(43);
  const SymMatrix scale = SymMatrix::scalar(8.0);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i) v.push_back(sample_inverse_wishart(6.0, scale, rng)(0, 0));
  EXPECT_NEAR(testing_support::mean(v), 2.0, 0.06);
}

TEST(InverseWishart, AlwaysPositiveDefinite) {
  RngStream rng(44);
  Mat sc(3, 3);
  sc << 2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 0.5;
  const SymMatrix scale(sc);
  for (int i = 0; i < 2000; ++i) {
    const SymMatrix d = sample_inverse_wishart(4.5, scale, rng);
    ASSERT_GT(Eigen::SelfAdjointEigenSolver<Mat>(d.matrix()).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(InverseWishart, InverseIsWishartKolmogorovSmirnov) {
  // 1 / IW(6, 8) ~ W(6, 1/8), so 8 / draw ~ chi-square(6)
  RngStream rng(45);
  std::vector<double> v;
  for (int i = 0; i < 10000; ++i) v.push_back(8.0 / sample_inverse_wishart(6.0, SymMatrix::scalar(8.0), rng)(0, 0));
  const boost::math::chi_squared cs(6.0);
  EXPECT_GT(ks_pvalue(v, [&](double x) { return boost::math::cdf(cs, x); }), 0.01);
}

TEST(InverseWishart, LogDensityMatchesJacobianOfWishart) {
  // d = 1: IW(df, s) at x equals W(df, 1/s) at 1/x times 1/x^2
  for (double x : {0.4, 1.0, 3.0})
    EXPECT_NEAR(inverse_wishart_logpdf(SymMatrix::scalar(x), 5.0, SymMatrix::scalar(2.0)),
                wishart_logpdf(SymMatrix::scalar(1.0 / x), 5.0, SymMatrix::scalar(0.5)) - 2.0 * std::log(x),
                1e-10);
}

TEST(MatrixNormal, IdentityParametersGiveStandardNormals) {
  RngStream rng(51);
  const int n = 50000;
  Mat s = Mat::Zero(2, 3), ss = Mat::Zero(2, 3);
  for (int i = 0; i < n; ++i) {
    const Mat x = sample_matrix_normal(Mat::Zero(2, 3), SymMatrix::identity(2), SymMatrix::identity(3), rng);
    s += x;
    ss += x.cwiseProduct(x);
  }
  s /= n;
  ss /= n;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(s(i, j), 0.0, 0.02);
      EXPECT_NEAR(ss(i, j), 1.0, 0.03);
    }
}

TEST(MatrixNormal, ScalarReduction) {
  RngStream rng(52);
  std::vector<double> v;
  for (int i = 0; i < 100000; ++i)
    v.push_back(sample_matrix_normal(Mat::Constant(1, 1, 1.5), SymMatrix::scalar(4.0), SymMatrix::scalar(2.0), rng)(0, 0));
  EXPECT_NEAR(testing_support::mean(v), 1.5, 4 * mcse_iid(v));
  EXPECT_NEAR(testing_support::var(v), 0.5, 0.5 * 0.02);
}

TEST(MatrixNormal, KroneckerCovariance) {
  RngStream rng(53);
  Mat rp(2, 2), cc(2, 2);
  rp << 2.0, 0.6, 0.6, 1.0;
  cc << 1.0, -0.4, -0.4, 0.8;
  const SymMatrix row_prec(rp), col_cov(cc);
  const int n = 100000;
  Mat acc = Mat::Zero(4, 4);
  for (int i = 0; i < n; ++i) {
    const Mat x = sample_matrix_normal(Mat::Zero(2, 2), row_prec, col_cov, rng);
    const Eigen::Map<const Vec> v(x.data(), 4);  // column-major vec
    acc += v * v.transpose();
  }
  acc /= n;
  const Mat rinv = rp.inverse();
  Mat expected(4, 4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) expected.block(2 * a, 2 * b, 2, 2) = cc(a, b) * rinv;
  const double tol = 0.05 * expected.cwiseAbs().maxCoeff();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(acc(i, j), expected(i, j), tol) << i << "," << j;
}

TEST(MatrixNormal, DimensionMismatch) {
  RngStream rng(1);
  EXPECT_THROW(sample_matrix_normal(Mat::Zero(2, 3), SymMatrix::identity(3), SymMatrix::identity(3), rng),
               InvalidArgument);
}

TEST(MvnCondition, BivariateCorrelation) {
  const double rho = 0.6, v = 1.7;
  Mat cov(2, 2);
  cov << 1.0, rho, rho, 1.0;
  const SymMatrix prec(Mat(cov.inverse()));
  const auto c = mvn_condition(Vec::Zero(2), prec, {1}, Vec::Constant(1, v));
  EXPECT_NEAR(c.mean(0), rho * v, 1e-12);
  EXPECT_NEAR(1.0 / c.precision(0, 0), 1 - rho * rho, 1e-12);
}

TEST(MvnCondition, IndependentComponentsUnchanged) {
  Mat q = Mat::Zero(3, 3);
  q.diagonal() << 2.0, 3.0, 4.0;
  Vec mu(3);
  mu << 1.0, -1.0, 0.5;
  const auto c = mvn_condition(mu, SymMatrix(q), {0, 2}, Vec::Constant(2, 9.0));
  EXPECT_DOUBLE_EQ(c.mean(0), -1.0);
  EXPECT_DOUBLE_EQ(c.precision(0, 0), 3.0);
}

TEST(MvnCondition, MatchesCovarianceFormOracle) {
  std::mt19937 gen(5);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    Mat a(3, 3);
    for (int i = 0; i < 9; ++i) a.data()[i] = nd(gen);
    const Mat q = a * a.transpose() + 0.5 * Mat::Identity(3, 3);
    Vec mu(3), xo(1);
    for (int i = 0; i < 3; ++i) mu(i) = nd(gen);
    xo(0) = nd(gen);
    const auto c = mvn_condition(mu, SymMatrix(q), {1}, xo);
    const Mat s = q.inverse();
    const sdpm::IndexList u{0, 2};
    const Mat suu = submatrix(s, u, u);
    const Mat suo = submatrix(s, u, {1});
    const double soo = s(1, 1);
    const Vec m_oracle = subvector(mu, u) + suo * (xo(0) - mu(1)) / soo;
    const Mat cov_oracle = suu - suo * suo.transpose() / soo;
    EXPECT_LT((c.mean - m_oracle).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((c.precision.inverse() - cov_oracle).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MvnCondition, AllObservedIsAnError) {
  EXPECT_THROW(mvn_condition(Vec::Zero(2), SymMatrix::identity(2), {0, 1}, Vec::Zero(2)), InvalidArgument);
  EXPECT_THROW(mvn_condition(Vec::Zero(2), SymMatrix::identity(2), {0, 0}, Vec::Zero(2)), InvalidArgument);
}

TEST(LogDensities, WeibullExamples) {
  EXPECT_NEAR(weibull_logpdf(1.0, 1.0, 1.0), -1.0, 1e-15);
  EXPECT_NEAR(weibull_logsf(0.2, 1.0, 1.0), -0.2, 1e-15);
  EXPECT_NEAR(weibull_logcdf(0.2, 1.0, 1.0), std::log(1 - std::exp(-0.2)), 1e-14);
  EXPECT_THROW(weibull_logpdf(1.0, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(weibull_logpdf(-1.0, 1.0, 1.0), InvalidArgument);
  EXPECT_THROW(weibull_logsf(1.0, 1.0, std::nan("")), InvalidArgument);
}

TEST(LogDensities, WeibullIntegratesToOne) {
  // trapezoid on a fine grid against the closed-form CDF
  const double lam = 1.7, kap = 2.3;
  double area = 0.0;
  const int m = 200000;
  const double top = 3.0, h = top / m;
  for (int i = 1; i < m; ++i) area += std::exp(weibull_logpdf(i * h, lam, kap)) * h;
  EXPECT_NEAR(area, weibull_cdf(top, lam, kap), 1e-6);
}

TEST(LogDensities, MvnAtMean) {
  EXPECT_NEAR(mvn_logpdf(Vec::Zero(2), Vec::Zero(2), SymMatrix::identity(2), Param::covariance),
              -std::log(2 * std::numbers::pi), 1e-12);
  Mat c(2, 2);
  c << 2.0, 0.3, 0.3, 0.5;
  Vec x(2);
  x << 0.4, -1.0;
  EXPECT_NEAR(mvn_logpdf(x, Vec::Zero(2), SymMatrix(c), Param::covariance),
              mvn_logpdf(x, Vec::Zero(2), SymMatrix(Mat(c.inverse())), Param::precision), 1e-12);
}

TEST(LogDensities, ScalarFamiliesMatchBoost) {
  const boost::math::gamma_distribution<> gd(2.0, 1.0 / 3.0);
  const boost::math::beta_distribution<> bd(2.5, 0.7);
  for (double x : {0.1, 0.5, 0.9}) {
    EXPECT_NEAR(gamma_logpdf(x, 2.0, 3.0), std::log(boost::math::pdf(gd, x)), 1e-12);
    EXPECT_NEAR(beta_logpdf(x, 2.5, 0.7), std::log(boost::math::pdf(bd, x)), 1e-12);
  }
  EXPECT_THROW(gamma_logpdf(1.0, -1.0, 1.0), InvalidArgument);
  EXPECT_THROW(beta_logpdf(0.5, 1.0, 0.0), InvalidArgument);
}

TEST(LogDensities, MatrixNormalMatchesVectorizedGaussian) {
  Mat rp(2, 2), cc(2, 2), x(2, 2), m(2, 2);
  rp << 2.0, 0.6, 0.6, 1.0;
  cc << 1.0, -0.4, -0.4, 0.8;
  x << 0.3, -0.2, 1.1, 0.5;
  m << 0.1, 0.0, -0.3, 0.2;
  const Mat rinv = rp.inverse();
  Mat kron(4, 4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) kron.block(2 * a, 2 * b, 2, 2) = cc(a, b) * rinv;
  const Eigen::Map<const Vec> vx(x.data(), 4), vm(m.data(), 4);
  EXPECT_NEAR(matrix_normal_logpdf(x, m, SymMatrix(rp), SymMatrix(cc)),
              mvn_logpdf(Vec(vx), Vec(vm), SymMatrix(kron), Param::covariance), 1e-10);
}
