#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sdpm/sampler.hpp"

namespace testing_support {

using sdpm::Mat;
using sdpm::Vec;

// Kolmogorov-Smirnov p-value of a sample against a continuous CDF (asymptotic
// distribution with the Stephens small-sample correction).
inline double ks_pvalue(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  const double sn = std::sqrt(n);
  const double lam = (sn + 0.12 + 0.11 / sn) * d;
  if (lam < 0.2) return 1.0;
  double p = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lam * lam);
    p += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

inline double var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

// Monte Carlo standard error of the mean from i.i.d. draws.
inline double mcse_iid(const std::vector<double>& v) { return std::sqrt(var(v) / v.size()); }

// Batch-means standard error for autocorrelated chains.
inline double mcse_batch(const std::vector<double>& v, int batches = 25) {
  const int b = static_cast<int>(v.size()) / batches;
  std::vector<double> means;
  for (int k = 0; k < batches; ++k) {
    double s = 0.0;
    for (int i = k * b; i < (k + 1) * b; ++i) s += v[i];
    means.push_back(s / b);
  }
  return std::sqrt(var(means) / batches);
}

// O(n^2) enumeration of Harrell's C.
inline double concordance_bruteforce(const std::vector<double>& risk, const std::vector<double>& time,
                                     const std::vector<int>& event) {
  double num = 0.0;
  long pairs = 0;
  const int n = static_cast<int>(risk.size());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      if (!(time[a] < time[b]) || !event[a]) continue;
      ++pairs;
      if (risk[a] > risk[b]) num += 1.0;
      else if (risk[a] == risk[b]) num += 0.5;
    }
  return num / pairs;
}

// Unique scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("sdpm_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Chain of D identical draws over a single Gaussian component.
inline sdpm::PosteriorChain toy_chain(const sdpm::DatasetSchema& schema, const Vec& mean, const Mat& precision,
                                      const Vec& beta, int D = 200) {
  sdpm::PosteriorChain ch;
  ch.schema = schema;
  const auto layout = schema.design_layout();
  for (int d = 0; d < D; ++d) {
    sdpm::Draw dr;
    dr.iteration = d + 1;
    dr.tau2 = dr.kappa = dr.concentration = dr.varphi = dr.psi = 1.0;
    dr.eta = schema.latent_dim() + 2.0;
    dr.beta = beta;
    dr.delta.assign(layout.groups(), 0);
    for (int g = 0; g < layout.groups(); ++g)
      dr.delta[g] = g == 0 || beta.segment(layout.group_start[g], layout.group_size[g]).cwiseAbs().sum() > 0.0;
    dr.gamma.assign(schema.p(), 1);
    dr.pi = Vec::Ones(1);
    dr.means.push_back(mean);
    dr.precisions.push_back(precision);
    ch.draws.push_back(dr);
  }
  return ch;
}

}  // namespace testing_support
