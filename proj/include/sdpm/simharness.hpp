#pragma once

#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sdpm/dataset.hpp"
#include "sdpm/inference.hpp"
#include "sdpm/mixture.hpp"
#include "sdpm/sampler.hpp"

namespace sdpm {

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct SimCaseConfig {
  int case_id = 1;
  int n = 2500;
  int n_test = 1000;
  int p = 50;
  int n_binary = -1;          // leading binary block; -1 means p / 2
  int signal_per_block = 4;   // leading coefficients of each block taken from the base pattern
  double censor_time = 0.20;
  double rate_primary = 0.5;  // first predictor of each block
  double rate_other = 0.25;
  int mnar_per_block = 3;     // leading predictors of each block under probit masking
  int continuous_signal = -1; // overrides for the continuous block; -1 uses the per-block count
  int continuous_mnar = -1;
  double mnar_slope = 1.0;    // on the standardized scale
  double wishart_df = 55.0;
  double wishart_scale = 0.25;
  double stick = 0.5;
  int gen_H = 40;
  double gen_eta = 55.0, gen_psi = 0.25, gen_varphi = 1.0, gen_rho = 0.5;
  double continuous_sd = 0.5;
  double kappa = 2.0;
  std::string empirical_path;

  int binary() const { return n_binary < 0 ? p / 2 : n_binary; }
  int con_signal() const { return continuous_signal < 0 ? signal_per_block : continuous_signal; }
  int con_mnar() const { return continuous_mnar < 0 ? mnar_per_block : continuous_mnar; }
  bool mnar() const { return case_id % 2 == 0; }
  bool empirical() const { return case_id >= 5; }
  bool drops_predictors() const { return case_id >= 7; }

  void validate() const {
    if (case_id < 1 || case_id > 8) throw ConfigError("case must be between 1 and 8");
    if (n < 2 || n_test < 2) throw ConfigError("n and n_test must be at least 2");
    if (p < 2) throw ConfigError("p must be at least 2");
    if (binary() < 1 || binary() >= p) throw ConfigError("binary block must leave both blocks non-empty");
    for (double r : {rate_primary, rate_other})
      if (!(r > 0.0 && r < 1.0)) throw ConfigError("missing rates must lie in (0,1)");
    if (!(censor_time > 0.0)) throw ConfigError("censor time must be positive");
    if (signal_per_block < 0 || mnar_per_block < 0) throw ConfigError("block counts must be non-negative");
    if (!(wishart_df > p - 1)) throw ConfigError("Wishart df must exceed p - 1");
    if (empirical() && empirical_path.empty()) throw ConfigError("cases 5-8 need an empirical source file");
  }
};

// True coefficients: intercept 0, then the base pattern at the head of each block.
inline Vec true_beta(const SimCaseConfig& c) {
  static const double bin[] = {1.0, 0.5, -0.5, 0.2};
  static const double con[] = {1.5, 0.5, -0.5, 0.2};
  const int nb = c.binary();
  Vec b = Vec::Zero(c.p + 1);
  for (int k = 0; k < std::min({4, c.signal_per_block, nb}); ++k) b(1 + k) = bin[k];
  for (int k = 0; k < std::min({4, c.con_signal(), c.p - nb}); ++k) b(1 + nb + k) = con[k];
  return b;
}

inline std::string sim_name(int j) { return "x" + std::to_string(j + 1); }

// Predictors with missingness driven by their own values in MNAR cases.
inline std::vector<int> mnar_targets(const SimCaseConfig& c) {
  std::vector<int> t;
  const int nb = c.binary();
  for (int k = 0; k < std::min(c.mnar_per_block, nb); ++k) t.push_back(k);
  for (int k = 0; k < std::min(c.con_mnar(), c.p - nb); ++k) t.push_back(nb + k);
  return t;
}

inline std::vector<double> missing_rates(const SimCaseConfig& c) {
  std::vector<double> r(c.p, c.rate_other);
  r[0] = c.rate_primary;
  r[c.binary()] = c.rate_primary;
  return r;
}

// ---------------------------------------------------------------- missingness

// Bernoulli masking; rates indexed by predictor, 0 leaves a column untouched.
inline void apply_mar(SurvivalDataset& ds, const std::vector<double>& rates, RngStream& rng) {
  if (static_cast<int>(rates.size()) != ds.p()) throw InvalidArgument("apply_mar: one rate per predictor");
  for (int j = 0; j < ds.p(); ++j) {
    if (rates[j] <= 0.0) continue;
    for (int i = 0; i < ds.n(); ++i)
      if (rng.uniform() < rates[j]) ds.x(i, j) = kMissing;
  }
  fill_indicators(ds);
}

// Intercept c with mean_i Phi(c + slope * z_i) = rate.
inline double solve_probit_intercept(const Vec& z, double rate, double slope = 1.0) {
  auto f = [&](double c) {
    double s = 0.0;
    for (int i = 0; i < z.size(); ++i) s += std_normal_cdf(c + slope * z(i));
    return s / z.size() - rate;
  };
  double lo = -10.0, hi = 10.0;
  if (f(lo) > 0.0 || f(hi) < 0.0) throw NumericError("probit intercept outside [-10, 10]");
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct MnarInfo {
  std::vector<int> predictors;
  std::vector<double> intercept;
  std::vector<double> center, scale;  // standardization used for each predictor
  double slope = 1.0;
};

// P(missing | x) = Phi(c + slope * (x - mean) / sd) for each target; c is solved so the
// expected rate over the observed values matches the target.
inline MnarInfo apply_mnar(SurvivalDataset& ds, const std::vector<int>& predictors,
                           const std::vector<double>& rates, RngStream& rng, double slope = 1.0,
                           const MnarInfo* reuse = nullptr) {
  if (predictors.size() != rates.size()) throw InvalidArgument("apply_mnar: one rate per predictor");
  MnarInfo info;
  info.predictors = predictors;
  info.slope = slope;
  for (std::size_t t = 0; t < predictors.size(); ++t) {
    const int j = predictors[t];
    std::vector<int> rows;
    for (int i = 0; i < ds.n(); ++i)
      if (!ds.missing(i, j)) rows.push_back(i);
    double c, mean, sd;
    if (reuse) {
      c = reuse->intercept[t];
      mean = reuse->center[t];
      sd = reuse->scale[t];
    } else {
      if (rows.size() < 2) throw InvalidArgument("apply_mnar: too few observed values");
      mean = 0.0;
      for (int i : rows) mean += ds.x(i, j);
      mean /= rows.size();
      double ss = 0.0;
      for (int i : rows) ss += (ds.x(i, j) - mean) * (ds.x(i, j) - mean);
      sd = std::sqrt(ss / (rows.size() - 1));
      if (!(sd > 0.0)) throw InvalidArgument("apply_mnar: constant predictor");
      Vec z(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) z(k) = (ds.x(rows[k], j) - mean) / sd;
      c = solve_probit_intercept(z, rates[t], slope);
    }
    info.intercept.push_back(c);
    info.center.push_back(mean);
    info.scale.push_back(sd);
    for (int i : rows)
      if (rng.uniform() < std_normal_cdf(c + slope * (ds.x(i, j) - mean) / sd)) ds.x(i, j) = kMissing;
  }
  fill_indicators(ds);
  return info;
}

// ---------------------------------------------------------------- generators

struct SimReplicate {
  SurvivalDataset train;  // original scale, user schema
  SurvivalDataset test;
  Vec train_log_risk, test_log_risk;
  std::set<std::string> truth;  // active predictors present in the training schema
  int true_size = 0;
  double censor_fraction = 0.0;
  MnarInfo mnar;
};

namespace detail {

// Mixture law on the latent scale of p binary-then-continuous predictors.
struct LatentLaw {
  Vec pi;
  std::vector<Component> comp;
};

inline LatentLaw mvn_law(const SimCaseConfig& c, const SlotMap& map, RngStream& rng) {
  const int p = c.p;
  const Mat scale_chol = Mat::Identity(p, p) * std::sqrt(c.wishart_scale);
  const Mat qt = sample_wishart_dense(c.wishart_df, scale_chol, rng);
  LatentLaw law;
  law.pi = Vec::Ones(1);
  law.comp.push_back(identify(Vec::Zero(p), symmetrize(qt), map));
  return law;
}

inline LatentLaw sdpm_law(const SimCaseConfig& c, const SlotMap& map, RngStream& rng) {
  MixtureState st;
  st.H = c.gen_H;
  st.concentration = c.stick;
  st.varphi = c.gen_varphi;
  st.eta = c.gen_eta;
  st.psi = c.gen_psi;
  st.gamma.resize(c.p);
  for (auto& g : st.gamma) g = rng.uniform() < c.gen_rho ? 1 : 0;
  st.v.resize(st.H);
  for (int h = 0; h < st.H; ++h) st.v(h) = h == st.H - 1 ? 1.0 : sample_beta(1.0, c.stick, rng);
  st.pi = stick_to_weights(st.v);
  const SuffStats empty = sufficient_stats(RowMat(0, map.total), {}, st.H);
  draw_conjugate(st, empty, map, rng);
  assemble_components(st, map);
  LatentLaw law;
  law.pi = st.pi;
  law.comp = st.comp;
  return law;
}

inline Mat sample_from_law(const LatentLaw& law, int n, int n_binary, RngStream& rng) {
  const int p = static_cast<int>(law.comp.front().mean.size());
  Mat x(n, p);
  std::vector<double> lw(law.pi.size());
  for (int h = 0; h < law.pi.size(); ++h) lw[h] = law.pi(h) > 0.0 ? std::log(law.pi(h)) : -kInf;
  for (int i = 0; i < n; ++i) {
    const int h = sample_categorical_log(lw.data(), static_cast<int>(lw.size()), rng);
    const auto& c = law.comp[h];
    const Vec w = c.mean + c.chol.transpose().triangularView<Eigen::Upper>().solve(std_normal_vec(p, rng));
    for (int j = 0; j < p; ++j) x(i, j) = j < n_binary ? (w(j) > 0.0 ? 1.0 : 0.0) : w(j);
  }
  return x;
}

inline DatasetSchema sim_schema(const std::vector<std::string>& names, const std::vector<bool>& binary) {
  std::vector<VariableMeta> vars;
  for (std::size_t j = 0; j < names.size(); ++j)
    vars.push_back(binary[j] ? VariableMeta::categorical(names[j], 2) : VariableMeta::continuous(names[j]));
  return make_schema(vars);
}

struct EmpiricalSource {
  std::vector<std::string> names;
  std::vector<bool> binary;
  Mat x;  // NaN where missing
};

inline EmpiricalSource read_empirical(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open empirical source '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empirical source is empty");
  EmpiricalSource src;
  src.names = split_csv_line(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != src.names.size()) throw ConfigError("ragged row in empirical source");
    std::vector<double> r(cells.size(), kMissing);
    for (std::size_t k = 0; k < cells.size(); ++k)
      if (!cells[k].empty() && cells[k] != "NA" && !parse_double(cells[k], r[k]))
        throw ConfigError("non-numeric value in empirical source column '" + src.names[k] + "'");
    rows.push_back(r);
  }
  src.x.resize(rows.size(), src.names.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < src.names.size(); ++k) src.x(i, k) = rows[i][k];
  for (std::size_t k = 0; k < src.names.size(); ++k) {
    bool bin = true;
    for (int i = 0; i < src.x.rows() && bin; ++i) {
      const double v = src.x(i, k);
      bin = is_missing(v) || v == 0.0 || v == 1.0;
    }
    src.binary.push_back(bin);
  }
  return src;
}

}  // namespace detail

// Synthetic stand-in for an empirical predictor table: a three-cluster latent mixture with
// binary and skewed continuous columns and scattered missing values.
inline void write_surrogate_source(const std::string& path, int rows, int cols, std::uint64_t seed) {
  RngStream rng(seed, {0x5u});
  const int nb = cols * 22 / 50;
  Mat centers(3, cols);
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < cols; ++j) centers(k, j) = 0.8 * std_normal(rng);
  Mat load(cols, 3);
  for (int j = 0; j < cols; ++j)
    for (int f = 0; f < 3; ++f) load(j, f) = 0.6 * std_normal(rng);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (int j = 0; j < cols; ++j) out << (j ? "," : "") << (j < nb ? "b" : "c") << (j + 1);
  out << '\n';
  for (int i = 0; i < rows; ++i) {
    const double u = rng.uniform();
    const int k = u < 0.5 ? 0 : u < 0.8 ? 1 : 2;
    const Vec f = std_normal_vec(3, rng);
    for (int j = 0; j < cols; ++j) {
      const double w = centers(k, j) + load.row(j).dot(f) + std_normal(rng);
      double v = j < nb ? (w > 0.3 ? 1.0 : 0.0) : (j % 3 == 0 ? std::exp(0.5 * w) : w);
      if (j >= 6 && rng.uniform() < 0.1) v = kMissing;
      out << (j ? "," : "");
      if (!is_missing(v)) out << detail::format_double(v);
    }
    out << '\n';
  }
}

inline SimReplicate generate_case(const SimCaseConfig& c, std::uint64_t seed) {
  c.validate();
  RngStream rng(seed, {static_cast<std::uint64_t>(c.case_id), 0x51u});
  const int N = c.n + c.n_test;
  const int nb = c.binary();
  std::vector<std::string> names;
  std::vector<bool> binary;
  Mat x;
  std::vector<std::uint8_t> informative(c.p, 0);
  const Vec beta = true_beta(c);
  for (int j = 0; j < c.p; ++j) informative[j] = beta(j + 1) != 0.0;

  if (!c.empirical()) {
    for (int j = 0; j < c.p; ++j) {
      names.push_back(sim_name(j));
      binary.push_back(j < nb);
    }
    const DatasetSchema s = detail::sim_schema(names, binary);
    const SlotMap map(s);
    const auto law = c.case_id <= 2 ? detail::mvn_law(c, map, rng) : detail::sdpm_law(c, map, rng);
    x = detail::sample_from_law(law, N, nb, rng);
  } else {
    const auto src = detail::read_empirical(c.empirical_path);
    if (static_cast<int>(src.names.size()) < c.p) throw ConfigError("empirical source has fewer than p columns");
    std::vector<int> cols(src.names.size());
    std::iota(cols.begin(), cols.end(), 0);
    for (int k = static_cast<int>(cols.size()) - 1; k > 0; --k)
      std::swap(cols[k], cols[static_cast<int>(rng.uniform() * (k + 1))]);
    cols.resize(c.p);
    std::stable_sort(cols.begin(), cols.end(), [&](int a, int b) { return src.binary[a] > src.binary[b]; });
    for (int j = 0; j < c.p; ++j) {
      names.push_back(sim_name(j));
      binary.push_back(src.binary[cols[j]]);
    }
    std::vector<int> usable;
    for (int i = 0; i < src.x.rows(); ++i) {
      bool ok = true;
      for (int j = 0; j < c.p; ++j) ok = ok && (!informative[j] || !is_missing(src.x(i, cols[j])));
      if (ok) usable.push_back(i);
    }
    if (usable.empty()) throw ConfigError("no empirical rows observe every informative predictor");
    x.resize(N, c.p);
    for (int i = 0; i < N; ++i) {
      const int r = usable[std::min<int>(usable.size() - 1, static_cast<int>(rng.uniform() * usable.size()))];
      for (int j = 0; j < c.p; ++j) x(i, j) = src.x(r, cols[j]);
    }
  }

  // continuous columns to mean 0, sd 0.5 using the training rows
  for (int j = 0; j < c.p; ++j) {
    if (binary[j]) continue;
    double s = 0, ss = 0;
    int m = 0;
    for (int i = 0; i < c.n; ++i)
      if (!is_missing(x(i, j))) {
        s += x(i, j);
        ++m;
      }
    const double mean = s / m;
    for (int i = 0; i < c.n; ++i)
      if (!is_missing(x(i, j))) ss += (x(i, j) - mean) * (x(i, j) - mean);
    const double sd = std::sqrt(ss / (m - 1));
    for (int i = 0; i < N; ++i)
      if (!is_missing(x(i, j))) x(i, j) = c.continuous_sd * (x(i, j) - mean) / sd;
  }

  Vec lr(N);
  Vec y(N);
  std::vector<std::uint8_t> ev(N);
  for (int i = 0; i < N; ++i) {
    double eta = beta(0);
    for (int j = 0; j < c.p; ++j)
      if (beta(j + 1) != 0.0) eta += beta(j + 1) * x(i, j);
    lr(i) = eta;
    const double t = std::pow(-std::log(rng.uniform_open()), 1.0 / c.kappa) / std::exp(eta);
    ev[i] = t <= c.censor_time ? 1 : 0;
    y(i) = std::min(t, c.censor_time);
  }

  DatasetSchema full = detail::sim_schema(names, binary);
  auto make = [&](int lo, int hi) {
    SurvivalDataset ds;
    ds.schema = full;
    ds.x = x.middleRows(lo, hi - lo);
    ds.y = y.segment(lo, hi - lo);
    ds.event.assign(ev.begin() + lo, ev.begin() + hi);
    ds.has_response = true;
    return ds;
  };
  SimReplicate rep;
  rep.train = make(0, c.n);
  rep.test = make(c.n, N);
  rep.train_log_risk = lr.head(c.n);
  rep.test_log_risk = lr.tail(c.n_test);

  // missingness
  auto rates = missing_rates(c);
  std::vector<int> targets = c.mnar() ? mnar_targets(c) : std::vector<int>{};
  std::vector<double> target_rates;
  for (int j : targets) {
    target_rates.push_back(rates[j]);
    rates[j] = 0.0;
  }
  if (c.empirical())
    for (int j = 0; j < c.p; ++j)
      if (!informative[j]) rates[j] = 0.0;
  RngStream mrng(seed, {static_cast<std::uint64_t>(c.case_id), 0x4Du});
  if (!targets.empty()) {
    rep.mnar = apply_mnar(rep.train, targets, target_rates, mrng, c.mnar_slope);
    apply_mnar(rep.test, targets, target_rates, mrng, c.mnar_slope, &rep.mnar);
  }
  apply_mar(rep.train, rates, mrng);
  apply_mar(rep.test, rates, mrng);

  if (c.drops_predictors()) {
    const std::set<int> drop = {1, nb + 1};
    std::vector<int> keep;
    std::vector<std::string> kn;
    std::vector<bool> kb;
    for (int j = 0; j < c.p; ++j)
      if (!drop.count(j)) {
        keep.push_back(j);
        kn.push_back(names[j]);
        kb.push_back(binary[j]);
      }
    const DatasetSchema reduced = detail::sim_schema(kn, kb);
    for (auto* ds : {&rep.train, &rep.test}) {
      Mat nx(ds->n(), static_cast<int>(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) nx.col(k) = ds->x.col(keep[k]);
      ds->x = nx;
      ds->schema = reduced;
    }
  }
  for (int j = 0; j < c.p; ++j)
    if (informative[j] && rep.train.schema.index_of(names[j]) >= 0) rep.truth.insert(names[j]);
  rep.true_size = static_cast<int>(rep.truth.size());
  double cens = 0.0;
  for (auto e : rep.train.event) cens += e ? 0.0 : 1.0;
  rep.censor_fraction = cens / c.n;
  return rep;
}

// ---------------------------------------------------------------- study

// Working-scale rows of `raw` (original scale, matched by name) for the fitted schema.
inline Mat align_rows(const SurvivalDataset& raw, const DatasetSchema& fitted) {
  Mat out = Mat::Constant(raw.n(), fitted.p(), kMissing);
  for (int j = 0; j < fitted.p(); ++j) {
    const auto& v = fitted.variables[j];
    if (v.is_missingness_indicator) continue;
    const int r = raw.schema.index_of(v.name);
    if (r < 0) throw SchemaError("variable '" + v.name + "' absent from new data");
    for (int i = 0; i < raw.n(); ++i) {
      const double val = destandardize(raw.schema, r, raw.x(i, r));
      if (is_missing(val)) continue;
      out(i, j) = v.is_categorical() ? val : (val - fitted.standardization[j].center) / fitted.standardization[j].scale;
    }
  }
  for (int j = 0; j < fitted.p(); ++j) {
    const auto& v = fitted.variables[j];
    if (!v.is_missingness_indicator) continue;
    const int s = fitted.index_of(v.indicator_for);
    for (int i = 0; i < raw.n(); ++i) out(i, j) = is_missing(out(i, s)) ? 1.0 : 0.0;
  }
  return out;
}

struct MethodResult {
  std::string method;
  int replicate = 0;
  double concordance = 0, r2 = 0, size = 0, pvc = 0;
  double missing_acceptance = 0, min_beta_acceptance = 0;
  double seconds = 0;
};

struct StudyConfig {
  SimCaseConfig sim;
  int replicates = 10;
  std::vector<ModelVariant> methods = {ModelVariant::mvn_mar, ModelVariant::mvn_mnar, ModelVariant::sdpm_mar,
                                       ModelVariant::sdpm_mnar};
  SamplerConfig sampler;
  int m_inner = 5;
  std::uint64_t seed = 1;
};

struct MetricSummary {
  double mean = 0, sd = 0;
  bool best_or_tied = false;  // not significantly different (paired t, 5%) from the best method
};

struct StudyRow {
  std::string method;
  MetricSummary concordance, r2, size, pvc;
};

struct StudyResult {
  std::vector<MethodResult> runs;      // replicate-major, then method order
  std::vector<MethodResult> truth;     // TRUE reference per replicate
  std::vector<StudyRow> table;         // one row per method, TRUE last
  std::vector<double> censor_fraction; // per replicate
};

// Two-sided p-value of the paired t-test on a - b. Identical samples give 1.
inline double paired_t_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
  const int n = static_cast<int>(a.size());
  if (n != static_cast<int>(b.size()) || n < 2) throw InvalidArgument("paired t-test needs two or more pairs");
  double m = 0;
  for (int i = 0; i < n; ++i) m += a[i] - b[i];
  m /= n;
  double ss = 0;
  for (int i = 0; i < n; ++i) ss += (a[i] - b[i] - m) * (a[i] - b[i] - m);
  const double sd = std::sqrt(ss / (n - 1));
  if (!(sd > 0.0)) return m == 0.0 ? 1.0 : 0.0;
  const double t = m / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(n - 1);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline MethodResult evaluate_method(const SimReplicate& rep, ModelVariant method, const StudyConfig& sc, int r) {
  const auto t0 = std::chrono::steady_clock::now();
  SamplerConfig cfg = sc.sampler;
  cfg.variant = method;
  cfg.seed = mix_key(sc.seed, {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(method)});
  const SurvivalDataset fit = prepare_dataset(rep.train, method);
  const PosteriorChain ch = run_chain(fit, cfg, 0);
  const Mat rows = align_rows(rep.test, ch.schema);
  const auto dists = Predictor(ch).predict(rows, sc.m_inner, mix_key(cfg.seed, {0x7E57u}));
  Vec pred(rows.rows());
  for (int i = 0; i < pred.size(); ++i) pred(i) = dists[i].log_risk.mean();
  MethodResult m;
  m.method = to_string(method);
  m.replicate = r;
  m.concordance = concordance(pred, rep.test.y, rep.test.event);
  m.r2 = risk_r2(pred, rep.test_log_risk);
  const auto sel = selection_metrics(ch, &rep.truth);
  m.size = sel.model_size;
  m.pvc = sel.pvc;
  m.missing_acceptance = ch.diagnostics.missing_total().rate();
  m.min_beta_acceptance = 1.0;
  for (std::size_t g = 0; g < ch.diagnostics.beta_group.size(); ++g)
    if (ch.diagnostics.beta_group[g].proposed > 0)
      m.min_beta_acceptance = std::min(m.min_beta_acceptance, ch.diagnostics.beta_group[g].rate());
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

inline StudyResult run_study(const StudyConfig& sc, std::ostream* progress = nullptr) {
  sc.sim.validate();
  if (sc.replicates < 1) throw ConfigError("replicates must be at least 1");
  if (sc.methods.empty()) throw ConfigError("at least one method is required");
  StudyResult res;
  for (int r = 0; r < sc.replicates; ++r) {
    const SimReplicate rep = generate_case(sc.sim, mix_key(sc.seed, {static_cast<std::uint64_t>(r)}));
    res.censor_fraction.push_back(rep.censor_fraction);
    MethodResult t;
    t.method = "TRUE";
    t.replicate = r;
    t.concordance = concordance(rep.test_log_risk, rep.test.y, rep.test.event);
    t.r2 = 1.0;
    t.size = rep.true_size;
    t.pvc = 1.0;
    res.truth.push_back(t);
    for (auto m : sc.methods) {
      res.runs.push_back(evaluate_method(rep, m, sc, r));
      if (progress) {
        const auto& x = res.runs.back();
        *progress << "replicate " << r << " " << x.method << ": C=" << x.concordance << " R2=" << x.r2
                  << " size=" << x.size << " PVC=" << x.pvc << " (" << x.seconds << " s)\n";
      }
    }
  }
  // aggregate
  const int M = static_cast<int>(sc.methods.size());
  auto column = [&](int mi, double MethodResult::*f) {
    std::vector<double> v;
    for (int r = 0; r < sc.replicates; ++r) v.push_back(res.runs[r * M + mi].*f);
    return v;
  };
  auto summarize_metric = [&](double MethodResult::*f, bool bold, std::vector<MetricSummary>& out) {
    std::vector<std::vector<double>> cols;
    for (int mi = 0; mi < M; ++mi) cols.push_back(column(mi, f));
    int best = 0;
    std::vector<double> means(M);
    for (int mi = 0; mi < M; ++mi) {
      means[mi] = std::accumulate(cols[mi].begin(), cols[mi].end(), 0.0) / sc.replicates;
      if (means[mi] > means[best]) best = mi;
    }
    out.resize(M);
    for (int mi = 0; mi < M; ++mi) {
      out[mi].mean = means[mi];
      double ss = 0;
      for (double v : cols[mi]) ss += (v - means[mi]) * (v - means[mi]);
      out[mi].sd = sc.replicates > 1 ? std::sqrt(ss / (sc.replicates - 1)) : 0.0;
      out[mi].best_or_tied = bold && (mi == best || (sc.replicates > 1 && paired_t_pvalue(cols[mi], cols[best]) > 0.05));
    }
  };
  std::vector<MetricSummary> c, r2, sz, pvc;
  summarize_metric(&MethodResult::concordance, true, c);
  summarize_metric(&MethodResult::r2, true, r2);
  summarize_metric(&MethodResult::size, false, sz);
  summarize_metric(&MethodResult::pvc, true, pvc);
  for (int mi = 0; mi < M; ++mi) res.table.push_back({to_string(sc.methods[mi]), c[mi], r2[mi], sz[mi], pvc[mi]});
  StudyRow tr;
  tr.method = "TRUE";
  auto tmean = [&](double MethodResult::*f) {
    MetricSummary s;
    for (const auto& t : res.truth) s.mean += t.*f;
    s.mean /= res.truth.size();
    double ss = 0;
    for (const auto& t : res.truth) ss += (t.*f - s.mean) * (t.*f - s.mean);
    s.sd = res.truth.size() > 1 ? std::sqrt(ss / (res.truth.size() - 1)) : 0.0;
    return s;
  };
  tr.concordance = tmean(&MethodResult::concordance);
  tr.r2 = tmean(&MethodResult::r2);
  tr.size = tmean(&MethodResult::size);
  tr.pvc = tmean(&MethodResult::pvc);
  res.table.push_back(tr);
  return res;
}

// Tab-separated table: method, then mean and sd of each metric; '*' marks best-or-tied.
inline void write_study_table(const StudyResult& r, std::ostream& out) {
  out << "method\tconcordance\tconcordance_sd\trisk_r2\trisk_r2_sd\tsize\tsize_sd\tpvc\tpvc_sd\n";
  auto cell = [&](const MetricSummary& m) {
    return detail::format_double(m.mean) + (m.best_or_tied ? "*" : "") + "\t" + detail::format_double(m.sd);
  };
  for (const auto& row : r.table)
    out << row.method << '\t' << cell(row.concordance) << '\t' << cell(row.r2) << '\t' << cell(row.size) << '\t'
        << cell(row.pvc) << '\n';
}

inline void write_replicate_dump(const StudyResult& r, std::ostream& out) {
  out << "replicate\tmethod\tconcordance\trisk_r2\tsize\tpvc\tmissing_acceptance\tmin_beta_acceptance\tseconds\n";
  auto line = [&](const MethodResult& m) {
    out << m.replicate << '\t' << m.method << '\t' << detail::format_double(m.concordance) << '\t'
        << detail::format_double(m.r2) << '\t' << detail::format_double(m.size) << '\t'
        << detail::format_double(m.pvc) << '\t' << detail::format_double(m.missing_acceptance) << '\t'
        << detail::format_double(m.min_beta_acceptance) << '\t' << detail::format_double(m.seconds) << '\n';
  };
  for (const auto& m : r.truth) line(m);
  for (const auto& m : r.runs) line(m);
}

inline nlohmann::json study_summary_json(const StudyConfig& sc, const StudyResult& r) {
  nlohmann::json j;
  j["case"] = sc.sim.case_id;
  j["n"] = sc.sim.n;
  j["p"] = sc.sim.p;
  j["binary"] = sc.sim.binary();
  j["signal_per_block"] = sc.sim.signal_per_block;
  j["continuous_signal"] = sc.sim.con_signal();
  j["replicates"] = sc.replicates;
  j["seed"] = sc.seed;
  j["mnar_slope"] = sc.sim.mnar_slope;
  j["mnar_scale"] = "standardized";
  j["sampler"] = sampler_to_json(sc.sampler);
  j["m_inner"] = sc.m_inner;
  j["censor_fraction"] = r.censor_fraction;
  for (const auto& row : r.table) {
    auto m = [](const MetricSummary& s) {
      return nlohmann::json{{"mean", s.mean}, {"sd", s.sd}, {"best_or_tied", s.best_or_tied}};
    };
    j["table"][row.method] = {{"concordance", m(row.concordance)}, {"risk_r2", m(row.r2)},
                              {"size", m(row.size)}, {"pvc", m(row.pvc)}};
  }
  return j;
}

}  // namespace sdpm
