#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "sdpm/error.hpp"
#include "sdpm/linalg.hpp"
#include "sdpm/rng.hpp"

namespace sdpm {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

inline double digamma(double x) { return boost::math::digamma(x); }
inline double trigamma(double x) { return boost::math::trigamma(x); }
inline double lgamma_fn(double x) { return boost::math::lgamma(x); }

// log of the multivariate gamma function Gamma_d(a).
inline double lmvgamma(int d, double a) {
  double s = 0.25 * d * (d - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= d; ++j) s += boost::math::lgamma(a + 0.5 * (1 - j));
  return s;
}

// ---------------------------------------------------------------- scalar samplers

inline double std_normal(RngStream& rng) {
  boost::random::normal_distribution<double> nd;
  return nd(rng);
}

inline double sample_normal(double mean, double sd, RngStream& rng) {
  return mean + sd * std_normal(rng);
}

// Gamma with shape/rate parameterization.
inline double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw InvalidArgument("sample_gamma: invalid parameters");
  boost::random::gamma_distribution<double> gd(shape, 1.0 / rate);
  double g = gd(rng);
  // shape << 1 can underflow to 0; keep draws strictly positive
  return g > 0.0 ? g : std::numeric_limits<double>::min();
}

inline double sample_inv_gamma(double shape, double scale, RngStream& rng) {
  return 1.0 / sample_gamma(shape, scale, rng);
}

inline double sample_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("sample_beta: invalid parameters");
  const double x = sample_gamma(a, 1.0, rng);
  const double y = sample_gamma(b, 1.0, rng);
  return x / (x + y);
}

inline double sample_exponential(double rate, RngStream& rng) {
  return -std::log(rng.uniform_open()) / rate;
}

namespace detail {

// Standard normal on [a, b] with 0 <= a < b.
inline double truncnorm_positive(double a, double b, RngStream& rng) {
  const double root = std::sqrt(a * a + 4.0);
  const double lambda = 0.5 * (a + root);
  const double threshold =
      a + 2.0 * std::sqrt(std::numbers::e) / (a + root) * std::exp(0.25 * (a * a - a * root));
  if (b > threshold) {
    for (;;) {
      const double z = a + sample_exponential(lambda, rng);
      if (z > b) continue;
      const double d = z - lambda;
      if (rng.uniform() <= std::exp(-0.5 * d * d)) return z;
    }
  }
  for (;;) {
    const double z = a + (b - a) * rng.uniform();
    if (rng.uniform() <= std::exp(0.5 * (a * a - z * z))) return z;
  }
}

inline double truncnorm_std(double a, double b, RngStream& rng) {
  if (a == -kInf && b == kInf) return std_normal(rng);
  if (a == -kInf) return -truncnorm_std(-b, kInf, rng);
  if (b == kInf) {
    if (a < 0.45) {
      for (;;) {
        const double z = std_normal(rng);
        if (z >= a) return z;
      }
    }
    const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
      const double z = a + sample_exponential(lambda, rng);
      const double d = z - lambda;
      if (rng.uniform() <= std::exp(-0.5 * d * d)) return z;
    }
  }
  if (a >= 0.0) return truncnorm_positive(a, b, rng);
  if (b <= 0.0) return -truncnorm_positive(-b, -a, rng);
  if (b - a > 2.5066282746310002) {
    for (;;) {
      const double z = std_normal(rng);
      if (z >= a && z <= b) return z;
    }
  }
  for (;;) {
    const double z = a + (b - a) * rng.uniform();
    if (rng.uniform() <= std::exp(-0.5 * z * z)) return z;
  }
}

}  // namespace detail

inline double sample_truncated_normal(double mean, double sd, double lower, double upper,
                                      RngStream& rng) {
  if (!(lower < upper)) throw InvalidArgument("sample_truncated_normal: lower >= upper");
  if (!(sd > 0.0) || !std::isfinite(mean)) throw InvalidArgument("sample_truncated_normal: bad sd");
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;
  double x = mean + sd * detail::truncnorm_std(a, b, rng);
  // keep rounding from landing on or past a bound
  if (x <= lower) x = std::nextafter(lower, upper);
  if (x >= upper) x = std::nextafter(upper, lower);
  return x;
}

// Index drawn from unnormalized log weights (log-sum-exp normalization).
inline int sample_categorical_log(const double* logw, int k, RngStream& rng) {
  double mx = -kInf;
  for (int h = 0; h < k; ++h) mx = std::max(mx, logw[h]);
  if (!(mx > -kInf) || !std::isfinite(mx))
    throw NumericError("categorical: all log-weights are -inf or non-finite");
  double total = 0.0;
  for (int h = 0; h < k; ++h) total += std::exp(logw[h] - mx);
  double u = rng.uniform() * total;
  for (int h = 0; h < k; ++h) {
    const double w = std::exp(logw[h] - mx);
    if (u < w) return h;
    u -= w;
  }
  for (int h = k - 1; h >= 0; --h)
    if (logw[h] > -kInf) return h;
  return k - 1;
}

// ---------------------------------------------------------------- multivariate samplers

enum class Param { covariance, precision };

inline Vec std_normal_vec(int d, RngStream& rng) {
  Vec z(d);
  for (int i = 0; i < d; ++i) z(i) = std_normal(rng);
  return z;
}

inline Vec sample_mvn(const Vec& mean, const SymMatrix& m, Param param, RngStream& rng) {
  if (mean.size() != m.dim()) throw InvalidArgument("sample_mvn: dimension mismatch");
  const Vec z = std_normal_vec(m.dim(), rng);
  if (param == Param::covariance) return mean + m.chol() * z;
  return mean + m.chol().transpose().triangularView<Eigen::Upper>().solve(z);
}

// Bartlett decomposition; returns the draw's Cholesky-friendly dense matrix.
inline Mat sample_wishart_dense(double df, const Mat& scale_chol, RngStream& rng) {
  const int d = static_cast<int>(scale_chol.rows());
  if (!(df > d - 1)) throw InvalidArgument("sample_wishart: df must exceed d - 1");
  Mat a = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(2.0 * sample_gamma(0.5 * (df - i), 1.0, rng));
    for (int j = 0; j < i; ++j) a(i, j) = std_normal(rng);
  }
  Mat la = scale_chol * a.triangularView<Eigen::Lower>();
  return symmetrize(la * la.transpose());
}

inline SymMatrix sample_wishart(double df, const SymMatrix& scale, RngStream& rng) {
  return SymMatrix(sample_wishart_dense(df, scale.chol(), rng));
}

inline SymMatrix sample_inverse_wishart(double df, const SymMatrix& scale, RngStream& rng) {
  const SymMatrix inv_scale(scale.inverse());
  const SymMatrix w = sample_wishart(df, inv_scale, rng);
  return SymMatrix(w.inverse());
}

// X = M + A Z B' with A A' = row_precision^{-1}, B B' = col_covariance.
inline Mat sample_matrix_normal(const Mat& mean, const SymMatrix& row_precision,
                                const SymMatrix& col_covariance, RngStream& rng) {
  const int r = static_cast<int>(mean.rows());
  const int c = static_cast<int>(mean.cols());
  if (row_precision.dim() != r || col_covariance.dim() != c)
    throw InvalidArgument("sample_matrix_normal: dimension mismatch");
  Mat z(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) z(i, j) = std_normal(rng);
  Mat left = row_precision.chol().transpose().triangularView<Eigen::Upper>().solve(z);
  return mean + left * col_covariance.chol().transpose();
}

struct Conditional {
  Vec mean;
  SymMatrix precision;
};

// Gaussian of the unobserved block given x_o, in precision form.
inline Conditional mvn_condition(const Vec& mean, const SymMatrix& precision,
                                 const IndexList& observed, const Vec& values) {
  const int d = precision.dim();
  if (static_cast<int>(observed.size()) != values.size())
    throw InvalidArgument("mvn_condition: observed index/value size mismatch");
  std::vector<char> seen(d, 0);
  for (int k : observed) {
    if (k < 0 || k >= d) throw InvalidArgument("mvn_condition: index out of range");
    if (seen[k]) throw InvalidArgument("mvn_condition: duplicate index");
    seen[k] = 1;
  }
  IndexList free;
  for (int k = 0; k < d; ++k)
    if (!seen[k]) free.push_back(k);
  if (free.empty()) throw InvalidArgument("mvn_condition: every index observed");
  const Mat& q = precision.matrix();
  const SymMatrix quu(submatrix(q, free, free));
  const Mat quo = submatrix(q, free, observed);
  const Vec diff = values - subvector(mean, observed);
  Vec m = subvector(mean, free) - quu.solve(Vec(quo * diff));
  return {std::move(m), quu};
}

// ---------------------------------------------------------------- log densities

inline double normal_logpdf(double x, double mean, double sd) {
  if (!(sd > 0.0)) throw InvalidArgument("normal_logpdf: sd must be positive");
  const double z = (x - mean) / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

inline void check_weibull(double y, double lambda, double kappa) {
  if (!(y > 0.0) || !(lambda > 0.0) || !(kappa > 0.0) || !std::isfinite(y) ||
      !std::isfinite(lambda) || !std::isfinite(kappa))
    throw InvalidArgument("weibull: y, lambda, kappa must be positive and finite");
}

// Weibull with survivor S(y) = exp(-(lambda y)^kappa).
inline double weibull_logpdf(double y, double lambda, double kappa) {
  check_weibull(y, lambda, kappa);
  const double ly = std::log(lambda * y);
  return std::log(kappa) + std::log(lambda) + (kappa - 1.0) * ly - std::exp(kappa * ly);
}

inline double weibull_logsf(double y, double lambda, double kappa) {
  check_weibull(y, lambda, kappa);
  return -std::exp(kappa * std::log(lambda * y));
}

inline double weibull_logcdf(double y, double lambda, double kappa) {
  check_weibull(y, lambda, kappa);
  const double h = std::exp(kappa * std::log(lambda * y));
  return std::log(-std::expm1(-h));
}

inline double weibull_cdf(double y, double lambda, double kappa) {
  check_weibull(y, lambda, kappa);
  return -std::expm1(-std::exp(kappa * std::log(lambda * y)));
}

// Quantile expressed through the survivor probability s = 1 - p for tail accuracy.
inline double weibull_quantile_sf(double s, double lambda, double kappa) {
  return std::pow(-std::log(s), 1.0 / kappa) / lambda;
}

inline double gamma_logpdf(double x, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw InvalidArgument("gamma_logpdf: invalid parameters");
  if (!(x > 0.0)) return -kInf;
  return shape * std::log(rate) - lgamma_fn(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double inv_gamma_logpdf(double x, double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw InvalidArgument("inv_gamma_logpdf: invalid parameters");
  if (!(x > 0.0)) return -kInf;
  return shape * std::log(scale) - lgamma_fn(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

inline double beta_logpdf(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("beta_logpdf: invalid parameters");
  if (!(x > 0.0) || !(x < 1.0)) return -kInf;
  return lgamma_fn(a + b) - lgamma_fn(a) - lgamma_fn(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

inline double mvn_logpdf(const Vec& x, const Vec& mean, const SymMatrix& m, Param param) {
  const int d = m.dim();
  if (x.size() != d || mean.size() != d) throw InvalidArgument("mvn_logpdf: dimension mismatch");
  const Vec diff = x - mean;
  double quad;
  double half_logdet;
  if (param == Param::covariance) {
    const Vec t = m.chol().triangularView<Eigen::Lower>().solve(diff);
    quad = t.squaredNorm();
    half_logdet = -0.5 * m.log_det();
  } else {
    const Vec t = m.chol().transpose() * diff;
    quad = t.squaredNorm();
    half_logdet = 0.5 * m.log_det();
  }
  return -0.5 * d * kLog2Pi + half_logdet - 0.5 * quad;
}

inline double wishart_logpdf(const SymMatrix& x, double df, const SymMatrix& scale) {
  const int d = x.dim();
  if (scale.dim() != d) throw InvalidArgument("wishart_logpdf: dimension mismatch");
  if (!(df > d - 1)) throw InvalidArgument("wishart_logpdf: df must exceed d - 1");
  const double tr = scale.solve(x.matrix()).trace();
  return 0.5 * (df - d - 1) * x.log_det() - 0.5 * tr - 0.5 * df * d * std::numbers::ln2 -
         0.5 * df * scale.log_det() - lmvgamma(d, 0.5 * df);
}

inline double inverse_wishart_logpdf(const SymMatrix& x, double df, const SymMatrix& scale) {
  const int d = x.dim();
  if (scale.dim() != d) throw InvalidArgument("inverse_wishart_logpdf: dimension mismatch");
  if (!(df > d - 1)) throw InvalidArgument("inverse_wishart_logpdf: df must exceed d - 1");
  const double tr = x.solve(scale.matrix()).trace();
  return 0.5 * df * scale.log_det() - 0.5 * df * d * std::numbers::ln2 - lmvgamma(d, 0.5 * df) -
         0.5 * (df + d + 1) * x.log_det() - 0.5 * tr;
}

inline double matrix_normal_logpdf(const Mat& x, const Mat& mean, const SymMatrix& row_precision,
                                   const SymMatrix& col_covariance) {
  const int r = static_cast<int>(mean.rows());
  const int c = static_cast<int>(mean.cols());
  if (x.rows() != r || x.cols() != c || row_precision.dim() != r || col_covariance.dim() != c)
    throw InvalidArgument("matrix_normal_logpdf: dimension mismatch");
  const Mat e = x - mean;
  const Mat inner = e.transpose() * row_precision.matrix() * e;
  const double tr = col_covariance.solve(inner).trace();
  return -0.5 * r * c * kLog2Pi + 0.5 * c * row_precision.log_det() -
         0.5 * r * col_covariance.log_det() - 0.5 * tr;
}

}  // namespace sdpm
