#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "sdpm/latent.hpp"
#include "sdpm/mixture.hpp"
#include "sdpm/parallel.hpp"
#include "sdpm/sampler.hpp"

namespace sdpm {

// Linear-interpolation sample quantile (type 7).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

struct RiskSummary {
  double mean = 0, sd = 0, lo = 0, median = 0, hi = 0;  // lo/hi: 2.5% and 97.5%
  bool excludes(double t) const { return lo > t || hi < t; }
};

inline RiskSummary summarize(const Vec& v) {
  RiskSummary s;
  const int n = static_cast<int>(v.size());
  if (n == 0) throw InvalidArgument("summary of an empty sample");
  s.mean = v.mean();
  s.sd = n > 1 ? std::sqrt((v.array() - s.mean).square().sum() / (n - 1)) : 0.0;
  std::vector<double> w(v.data(), v.data() + n);
  s.lo = quantile(w, 0.025);
  s.median = quantile(w, 0.5);
  s.hi = quantile(w, 0.975);
  return s;
}

// Log-risk samples for one observation, ordered by (draw, replicate).
struct RiskDistribution {
  Vec log_risk;
  RowMat x;  // decoded predictor rows behind each sample (working scale), when kept
  RiskSummary summary() const { return summarize(log_risk); }
};

// Posterior draws with factorized components, ready for repeated predictive imputation.
class Predictor {
 public:
  explicit Predictor(const PosteriorChain& ch) : chain_(&ch), builder_(ch.schema), map_(ch.schema) {
    if (ch.draws.empty()) throw InvalidArgument("chain has no draws");
    comps_.resize(ch.draws.size());
    parallel_for(static_cast<int>(ch.draws.size()), [&](int d) {
      const Draw& dr = ch.draws[d];
      for (std::size_t h = 0; h < dr.means.size(); ++h) {
        Component c;
        c.mean = dr.means[h];
        c.precision = dr.precisions[h];
        c.chol = cholesky_lower(c.precision);
        c.log_det = 2.0 * c.chol.diagonal().array().log().sum();
        comps_[d].push_back(std::move(c));
      }
    });
  }

  const PosteriorChain& chain() const { return *chain_; }
  const DatasetSchema& schema() const { return chain_->schema; }
  int draws() const { return static_cast<int>(chain_->draws.size()); }

  // rows: n x p on the working scale of the fitted schema, NaN where missing and
  // indicator columns filled. Each draw runs `reps` independent predictive imputations
  // of m_inner sweeps with no response term.
  std::vector<RiskDistribution> predict(const Mat& rows, int m_inner, std::uint64_t seed, int reps = 1,
                                        bool keep_x = false) const {
    if (m_inner < 1) throw InvalidArgument("m_inner must be at least 1");
    if (reps < 1) throw InvalidArgument("reps must be at least 1");
    const auto& s = schema();
    if (rows.cols() != s.p()) throw InvalidArgument("predict: row width does not match the schema");
    const int n = static_cast<int>(rows.rows());
    const int p = s.p();
    const int D = draws();
    const int S = D * reps;
    std::vector<RiskDistribution> out(n);
    for (auto& o : out) {
      o.log_risk.resize(S);
      if (keep_x) o.x.resize(S, p);
    }
    SurvivalDataset shell_ds;
    shell_ds.schema = s;
    shell_ds.x = rows;
    shell_ds.y = Vec::Constant(n, kMissing);
    shell_ds.event.assign(n, 0);
    const LatentMatrix shell = make_latent_shell(shell_ds);
    std::vector<std::uint8_t> needs_sweep(n, 0);
    for (int i = 0; i < n; ++i) needs_sweep[i] = shell.row_has_free(i) ? 1 : 0;

    parallel_for(n, [&](int i) {
      LatentMatrix lm;
      lm.schema = &shell_ds.schema;
      lm.slot_map = map_;
      lm.values = RowMat::Zero(1, map_.total);
      lm.decoded = RowMat::Zero(1, p);
      lm.observed = shell.observed.row(i);
      lm.status.assign(shell.status.begin() + static_cast<std::ptrdiff_t>(i) * p,
                       shell.status.begin() + static_cast<std::ptrdiff_t>(i + 1) * p);
      Vec z(builder_.length());
      std::vector<double> lw;
      for (int d = 0; d < D; ++d) {
        const Draw& dr = chain_->draws[d];
        const auto& comps = comps_[d];
        const int H = static_cast<int>(comps.size());
        lw.resize(H);
        for (int r = 0; r < reps; ++r) {
          RngStream rng(seed, {static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(r),
                               static_cast<std::uint64_t>(i)});
          RowRef row = lm.row(0);
          initialize_row(row, rng);
          if (needs_sweep[i]) {
            // start the free cells from a component drawn by weight, so separated
            // components are reached without relying on the inner sweeps
            for (int h = 0; h < H; ++h) lw[h] = dr.pi(h) > 0.0 ? std::log(dr.pi(h)) : -kInf;
            const int h0 = sample_categorical_log(lw.data(), H, rng);
            update_row_missing(row, comps[h0].mean, comps[h0].precision, [](const double*) { return 0.0; }, false,
                               rng);
            for (int t = 0; t < m_inner; ++t) {
              for (int h = 0; h < H; ++h)
                lw[h] = dr.pi(h) > 0.0 ? std::log(dr.pi(h)) + component_logpdf(comps[h], row.w) : -kInf;
              const int h = sample_categorical_log(lw.data(), H, rng);
              update_row_observed(row, comps[h].mean, comps[h].precision, rng);
              update_row_missing(row, comps[h].mean, comps[h].precision,
                                 [](const double*) { return 0.0; }, false, rng);
            }
          }
          builder_.fill(row.x, z);
          const int k = d * reps + r;
          out[i].log_risk(k) = z.dot(dr.beta);
          if (keep_x)
            for (int j = 0; j < p; ++j) out[i].x(k, j) = row.x[j];
        }
      }
    });
    return out;
  }

  RiskDistribution predict_one(const Vec& row, int m_inner, std::uint64_t seed, int reps = 1,
                               bool keep_x = false) const {
    Mat m(1, row.size());
    m.row(0) = row.transpose();
    return predict(m, m_inner, seed, reps, keep_x)[0];
  }

 private:
  const PosteriorChain* chain_;
  DesignBuilder builder_;
  SlotMap map_;
  std::vector<std::vector<Component>> comps_;
};

// Maps a user-facing partial row (name -> original-scale value) onto the working scale of
// the fitted schema, filling missingness indicators.
inline Vec prepare_row(const std::map<std::string, double>& values, const DatasetSchema& s) {
  Vec x = Vec::Constant(s.p(), kMissing);
  for (const auto& [name, v] : values) {
    const int j = s.index_of(name);
    if (j < 0 || s.variables[j].is_missingness_indicator) throw InvalidArgument("unknown variable '" + name + "'");
    if (is_missing(v)) continue;
    const auto& meta = s.variables[j];
    if (meta.is_categorical()) {
      if (v != std::floor(v) || v < 0 || v >= meta.levels)
        throw InvalidArgument("level out of range for '" + name + "'");
      x(j) = v;
    } else {
      x(j) = (v - s.standardization[j].center) / s.standardization[j].scale;
    }
  }
  for (int j = 0; j < s.p(); ++j) {
    const auto& meta = s.variables[j];
    if (meta.is_missingness_indicator) x(j) = is_missing(x(s.index_of(meta.indicator_for))) ? 1.0 : 0.0;
  }
  return x;
}

inline RiskDistribution predict_risk(const Vec& x_new, const PosteriorChain& ch, int m_inner,
                                     std::uint64_t seed) {
  return Predictor(ch).predict_one(x_new, m_inner, seed);
}

// ---------------------------------------------------------------- accuracy metrics

// Harrell's C. A pair is comparable when the shorter time is an event; equal times are
// not comparable. Ties in risk count one half.
inline double concordance(const Vec& risk, const Vec& time, const std::vector<std::uint8_t>& event) {
  const int n = static_cast<int>(risk.size());
  if (time.size() != n || static_cast<int>(event.size()) != n)
    throw InvalidArgument("concordance: length mismatch");
  for (int i = 0; i < n; ++i)
    if (!(time(i) > 0.0)) throw InvalidArgument("concordance: times must be positive");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return time(a) < time(b); });
  double num = 0.0;
  long long pairs = 0;
  for (int a = 0; a < n; ++a) {
    const int i = order[a];
    if (!event[i]) continue;
    for (int b = a + 1; b < n; ++b) {
      const int j = order[b];
      if (!(time(j) > time(i))) continue;
      ++pairs;
      if (risk(i) > risk(j)) num += 1.0;
      else if (risk(i) == risk(j)) num += 0.5;
    }
  }
  if (pairs == 0) throw InvalidArgument("concordance: no comparable pairs");
  return num / static_cast<double>(pairs);
}

inline double risk_r2(const Vec& pred, const Vec& truth) {
  const int n = static_cast<int>(pred.size());
  if (truth.size() != n || n < 2) throw InvalidArgument("risk_r2: need two or more paired values");
  const Vec a = pred.array() - pred.mean();
  const Vec b = truth.array() - truth.mean();
  const double sb = b.squaredNorm();
  if (!(sb > 1e-300)) throw InvalidArgument("risk_r2: true log-risk is constant");
  const double sa = a.squaredNorm();
  if (!(sa > 1e-300)) return 0.0;
  const double r = a.dot(b) / std::sqrt(sa * sb);
  return r * r;
}

struct SelectionMetrics {
  double model_size = 0.0;
  double pvc = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> names;  // design groups, intercept excluded
  std::vector<double> inclusion;
};

// truth: names of truly active predictors; PVC is left NaN when truth is null.
inline SelectionMetrics selection_metrics(const PosteriorChain& ch, const std::set<std::string>* truth = nullptr) {
  const DesignLayout layout = ch.schema.design_layout();
  SelectionMetrics m;
  const int G = layout.groups();
  std::vector<double> inc(G, 0.0);
  double size = 0.0;
  for (const auto& d : ch.draws) {
    for (int g = 1; g < G; ++g) {
      inc[g] += d.delta[g];
      size += d.delta[g];
    }
  }
  const double D = static_cast<double>(std::max<std::size_t>(1, ch.draws.size()));
  m.model_size = size / D;
  for (int g = 1; g < G; ++g) {
    m.names.push_back(layout.group_name[g]);
    m.inclusion.push_back(inc[g] / D);
  }
  if (truth) {
    int agree = 0;
    for (std::size_t k = 0; k < m.names.size(); ++k)
      agree += (m.inclusion[k] > 0.5) == (truth->count(m.names[k]) > 0);
    m.pvc = m.names.empty() ? 1.0 : static_cast<double>(agree) / m.names.size();
  }
  return m;
}

// ---------------------------------------------------------------- variance-based indices

namespace detail {

inline double variance(const Vec& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().mean();
}

inline double silverman_bandwidth(const Vec& x) {
  const int n = static_cast<int>(x.size());
  const double sd = std::sqrt(variance(x));
  std::vector<double> w(x.data(), x.data() + n);
  const double iqr = quantile(w, 0.75) - quantile(w, 0.25);
  double a = sd;
  if (iqr > 0.0) a = std::min(sd, iqr / 1.34);
  if (!(a > 0.0)) a = sd;
  return 0.9 * a * std::pow(static_cast<double>(n), -0.2);
}

}  // namespace detail

// Gaussian-kernel local-linear fit of y on x evaluated at every x(i), computed on a
// linearly binned grid.
inline Vec local_linear_smooth(const Vec& x, const Vec& y, int grid = 401) {
  const int n = static_cast<int>(x.size());
  const double lo = x.minCoeff();
  const double hi = x.maxCoeff();
  if (!(hi > lo)) return Vec::Constant(n, y.mean());
  const double h = detail::silverman_bandwidth(x);
  if (!(h > 0.0)) return Vec::Constant(n, y.mean());
  const double step = (hi - lo) / (grid - 1);
  Vec c = Vec::Zero(grid), sy = Vec::Zero(grid);
  for (int i = 0; i < n; ++i) {
    const double u = (x(i) - lo) / step;
    const int k = std::min(grid - 2, static_cast<int>(std::floor(u)));
    const double f = u - k;
    c(k) += 1.0 - f;
    c(k + 1) += f;
    sy(k) += (1.0 - f) * y(i);
    sy(k + 1) += f * y(i);
  }
  const int reach = static_cast<int>(std::ceil(5.0 * h / step));
  Vec m(grid);
  for (int k = 0; k < grid; ++k) {
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (int g = std::max(0, k - reach); g <= std::min(grid - 1, k + reach); ++g) {
      if (c(g) == 0.0) continue;
      const double d = (g - k) * step;
      const double w = std::exp(-0.5 * (d / h) * (d / h));
      s0 += w * c(g);
      s1 += w * c(g) * d;
      s2 += w * c(g) * d * d;
      t0 += w * sy(g);
      t1 += w * sy(g) * d;
    }
    const double den = s0 * s2 - s1 * s1;
    if (s0 <= 0.0) m(k) = std::numeric_limits<double>::quiet_NaN();
    else if (den > 1e-12 * s0 * s2) m(k) = (s2 * t0 - s1 * t1) / den;
    else m(k) = t0 / s0;
  }
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    const double u = (x(i) - lo) / step;
    const int k = std::min(grid - 2, static_cast<int>(std::floor(u)));
    const double f = u - k;
    double a = m(k), b = m(k + 1);
    if (std::isnan(a)) a = b;
    if (std::isnan(b)) b = a;
    out(i) = (1.0 - f) * a + f * b;
  }
  return out;
}

// Group means of y by the integer codes in x.
inline Vec group_mean_smooth(const Vec& x, const Vec& y) {
  std::map<long, std::pair<double, int>> acc;
  for (int i = 0; i < x.size(); ++i) {
    auto& a = acc[std::lround(x(i))];
    a.first += y(i);
    a.second += 1;
  }
  Vec out(x.size());
  for (int i = 0; i < x.size(); ++i) {
    const auto& a = acc[std::lround(x(i))];
    out(i) = a.first / a.second;
  }
  return out;
}

// Var(E[lambda | x_j]) / Var(lambda) with the conditional mean from a smoother.
inline double variance_ratio_smoothed(const Vec& xj, const Vec& lambda, bool categorical) {
  const double v = detail::variance(lambda);
  if (v < 1e-12) return 0.0;
  const Vec m = categorical ? group_mean_smooth(xj, lambda) : local_linear_smooth(xj, lambda);
  return detail::variance(m) / v;
}

// Same ratio from stratified samples: exact levels for categorical x_j, otherwise 20
// equal-count strata with a linear trend inside each stratum. Clipped to [0, 1].
inline double variance_ratio_stratified(const Vec& xj, const Vec& lambda, bool categorical, int bins = 20) {
  const int n = static_cast<int>(xj.size());
  const double v = detail::variance(lambda);
  if (v < 1e-12) return 0.0;
  Vec m(n);
  if (categorical) {
    m = group_mean_smooth(xj, lambda);
  } else {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return xj(a) < xj(b); });
    for (int b = 0; b < bins; ++b) {
      const int lo = static_cast<int>(static_cast<long long>(b) * n / bins);
      const int hi = static_cast<int>(static_cast<long long>(b + 1) * n / bins);
      if (hi <= lo) continue;
      double mx = 0, my = 0;
      for (int k = lo; k < hi; ++k) {
        mx += xj(order[k]);
        my += lambda(order[k]);
      }
      mx /= hi - lo;
      my /= hi - lo;
      double sxx = 0, sxy = 0;
      for (int k = lo; k < hi; ++k) {
        const double dx = xj(order[k]) - mx;
        sxx += dx * dx;
        sxy += dx * (lambda(order[k]) - my);
      }
      const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
      for (int k = lo; k < hi; ++k) m(order[k]) = my + slope * (xj(order[k]) - mx);
    }
  }
  return std::clamp(detail::variance(m) / v, 0.0, 1.0);
}

struct MainEffect {
  double mean = 0.0, lo = 0.0, hi = 0.0;
  std::vector<double> draws;
};

// Completed training rows for every draw: stored imputations when present, otherwise
// predictive imputation under each draw.
inline std::vector<RowMat> completed_rows(const PosteriorChain& ch, const SurvivalDataset& data, int m_inner,
                                          std::uint64_t seed) {
  const int D = static_cast<int>(ch.draws.size());
  std::vector<RowMat> out(D);
  bool stored = D > 0;
  for (const auto& d : ch.draws) stored = stored && d.imputed.rows() == data.n() && d.imputed.cols() == data.p();
  if (stored) {
    for (int d = 0; d < D; ++d) out[d] = ch.draws[d].imputed;
    return out;
  }
  const Predictor pred(ch);
  const auto res = pred.predict(data.x, m_inner, seed, 1, true);
  for (int d = 0; d < D; ++d) {
    out[d].resize(data.n(), data.p());
    for (int i = 0; i < data.n(); ++i) out[d].row(i) = res[i].x.row(d);
  }
  return out;
}

// Main-effect index of every predictor that enters the design. Result indexed by
// predictor (empty MainEffect for indicators).
inline std::vector<MainEffect> main_effect_indices(const PosteriorChain& ch, const std::vector<RowMat>& rows) {
  const auto& s = ch.schema;
  const DesignBuilder builder(s);
  const int D = static_cast<int>(ch.draws.size());
  const int p = s.p();
  std::vector<std::vector<double>> per(p, std::vector<double>(D, 0.0));
  parallel_for(D, [&](int d) {
    const RowMat& x = rows[d];
    const int n = static_cast<int>(x.rows());
    Vec lam(n);
    Vec z(builder.length());
    for (int i = 0; i < n; ++i) {
      builder.fill(x.row(i).data(), z);
      lam(i) = std::exp(z.dot(ch.draws[d].beta));
    }
    for (int j = 0; j < p; ++j) {
      if (s.variables[j].is_missingness_indicator) continue;
      const Vec xj = x.col(j);
      per[j][d] = variance_ratio_smoothed(xj, lam, s.variables[j].is_categorical());
    }
  });
  std::vector<MainEffect> out(p);
  for (int j = 0; j < p; ++j) {
    if (s.variables[j].is_missingness_indicator || D == 0) continue;
    out[j].draws = per[j];
    out[j].mean = std::accumulate(per[j].begin(), per[j].end(), 0.0) / D;
    out[j].lo = quantile(per[j], 0.025);
    out[j].hi = quantile(per[j], 0.975);
  }
  return out;
}

inline MainEffect main_effect_index(const PosteriorChain& ch, const SurvivalDataset& data, int j,
                                    std::uint64_t seed = 1, int m_inner = 10) {
  if (j < 0 || j >= data.p()) throw InvalidArgument("main_effect_index: predictor out of range");
  int observed = 0;
  for (int i = 0; i < data.n(); ++i) observed += !data.missing(i, j);
  if (observed < 20) throw InvalidArgument("main_effect_index: fewer than 20 observed values");
  return main_effect_indices(ch, completed_rows(ch, data, m_inner, seed))[j];
}

// I_j for each listed predictor from one set of predictive samples.
inline std::vector<double> influence_from_samples(const RiskDistribution& dist, const DatasetSchema& s,
                                                  const std::vector<int>& js) {
  if (dist.x.rows() != dist.log_risk.size()) throw InvalidArgument("influence: samples lack imputed rows");
  const Vec lam = dist.log_risk.array().exp();
  std::vector<double> out;
  for (int j : js) out.push_back(variance_ratio_stratified(dist.x.col(j), lam, s.variables[j].is_categorical()));
  return out;
}

// Predictors in the row that are missing and enter the design.
inline std::vector<int> missing_predictors(const Vec& x, const DatasetSchema& s) {
  std::vector<int> js;
  for (int j = 0; j < s.p(); ++j)
    if (!s.variables[j].is_missingness_indicator && is_missing(x(j))) js.push_back(j);
  return js;
}

struct InfluenceOptions {
  int m_inner = 10;
  int min_samples = 4000;  // predictive samples drawn for the stratified estimate
};

inline int reps_for(const Predictor& p, const InfluenceOptions& o) {
  return std::max(1, (o.min_samples + p.draws() - 1) / p.draws());
}

inline double influence_index(const Vec& x_new, const PosteriorChain& ch, int j, std::uint64_t seed,
                              const InfluenceOptions& opt = {}) {
  if (j < 0 || j >= x_new.size() || !is_missing(x_new(j)))
    throw InvalidArgument("influence_index: predictor is not missing");
  const Predictor pred(ch);
  const auto dist = pred.predict_one(x_new, opt.m_inner, seed, reps_for(pred, opt), true);
  return influence_from_samples(dist, ch.schema, {j})[0];
}

struct AcquisitionStep {
  int predictor = -1;
  std::string name;
  double influence = 0.0;
  double value = 0.0;  // acquired value, original scale
  RiskSummary before, after;
};

// Repeatedly obtains the missing predictor with the largest I_j, drawing its value from the
// current posterior predictive, until the 95% interval excludes the threshold.
inline std::vector<AcquisitionStep> greedy_acquire(const Vec& x_new, const PosteriorChain& ch, double threshold,
                                                   std::uint64_t seed, const InfluenceOptions& opt = {}) {
  const Predictor pred(ch);
  const auto& s = ch.schema;
  const int reps = reps_for(pred, opt);
  Vec x = x_new;
  std::vector<AcquisitionStep> trace;
  RiskDistribution dist = pred.predict_one(x, opt.m_inner, mix_key(seed, {0}), reps, true);
  for (int step = 0;; ++step) {
    const RiskSummary cur = dist.summary();
    if (cur.excludes(threshold)) break;
    const auto js = missing_predictors(x, s);
    if (js.empty()) break;
    const auto inf = influence_from_samples(dist, s, js);
    const int best = static_cast<int>(std::max_element(inf.begin(), inf.end()) - inf.begin());
    const int j = js[best];
    RngStream rng(seed, {static_cast<std::uint64_t>(step) + 1, 0xAC});
    const int k = std::min(static_cast<int>(dist.x.rows()) - 1, static_cast<int>(rng.uniform() * dist.x.rows()));
    x(j) = dist.x(k, j);
    AcquisitionStep a;
    a.predictor = j;
    a.name = s.variables[j].name;
    a.influence = inf[best];
    a.value = destandardize(s, j, x(j));
    a.before = cur;
    dist = pred.predict_one(x, opt.m_inner, mix_key(seed, {static_cast<std::uint64_t>(step) + 1}), reps, true);
    a.after = dist.summary();
    trace.push_back(a);
  }
  return trace;
}

struct ImportanceRow {
  std::string name;
  double inclusion = 0.0;
  MainEffect s;
};

struct ImportanceReport {
  std::vector<ImportanceRow> rows;
  // Rows with inclusion > 0.5 and main-effect index > 0.02.
  std::vector<ImportanceRow> filtered(double min_inclusion = 0.5, double min_s = 0.02) const {
    std::vector<ImportanceRow> out;
    for (const auto& r : rows)
      if (r.inclusion > min_inclusion && r.s.mean > min_s) out.push_back(r);
    return out;
  }
};

inline ImportanceReport importance_report(const PosteriorChain& ch, const SurvivalDataset& data,
                                          std::uint64_t seed = 1, int m_inner = 10) {
  const auto sel = selection_metrics(ch);
  const auto me = main_effect_indices(ch, completed_rows(ch, data, m_inner, seed));
  ImportanceReport rep;
  const auto& s = ch.schema;
  for (int k = 0; k < s.p(); ++k) {
    const int j = s.user_order[k];
    if (s.variables[j].is_missingness_indicator) continue;
    ImportanceRow r;
    r.name = s.variables[j].name;
    for (std::size_t g = 0; g < sel.names.size(); ++g)
      if (sel.names[g] == r.name) r.inclusion = sel.inclusion[g];
    r.s = me[j];
    rep.rows.push_back(r);
  }
  std::stable_sort(rep.rows.begin(), rep.rows.end(),
                   [](const ImportanceRow& a, const ImportanceRow& b) { return a.inclusion > b.inclusion; });
  return rep;
}

}  // namespace sdpm
