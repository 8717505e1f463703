#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sdpm/dataset.hpp"
#include "sdpm/dist.hpp"

namespace sdpm {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Latent column range of every predictor.
struct SlotMap {
  std::vector<int> first;
  std::vector<int> count;
  std::vector<std::uint8_t> categorical;
  int total = 0;

  SlotMap() = default;
  explicit SlotMap(const DatasetSchema& s) {
    for (const auto& v : s.variables) {
      first.push_back(total);
      count.push_back(v.slots());
      categorical.push_back(v.is_categorical() ? 1 : 0);
      total += v.slots();
    }
  }
  int predictors() const { return static_cast<int>(first.size()); }
  // predictor owning latent slot k
  int owner(int k) const {
    for (int j = predictors() - 1; j >= 0; --j)
      if (k >= first[j]) return j;
    return -1;
  }
};

enum class CellStatus : std::uint8_t { fixed, censored_lower, censored_upper, constrained, free };

// Category for categorical slots, clamp for continuous.
inline double decode(const double* w, const VariableMeta& meta) {
  if (meta.is_categorical()) {
    int best = 0;
    double mx = 0.0;
    for (int k = 0; k < meta.levels - 1; ++k)
      if (w[k] > mx) {
        mx = w[k];
        best = k + 1;
      }
    return best;
  }
  return std::min(std::max(w[0], meta.lower), meta.upper);
}

inline double decode(const Vec& w, const VariableMeta& meta) {
  if (w.size() != meta.slots()) throw InvalidArgument("decode: slot length mismatch");
  return decode(w.data(), meta);
}

// Mutable view of one latent row plus its bookkeeping.
struct RowRef {
  const DatasetSchema* schema;
  const SlotMap* map;
  double* w;              // p* latent values
  double* x;              // p decoded predictor values
  const CellStatus* status;  // p
  const double* observed;    // p observed values (NaN when missing)
};

struct LatentMatrix {
  RowMat values;   // n x p*
  RowMat decoded;  // n x p
  RowMat observed; // n x p
  std::vector<CellStatus> status;  // n x p, row-major
  SlotMap slot_map;
  const DatasetSchema* schema = nullptr;

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(decoded.cols()); }
  CellStatus cell(int i, int j) const { return status[static_cast<std::size_t>(i) * p() + j]; }
  RowRef row(int i) {
    return {schema, &slot_map, values.row(i).data(), decoded.row(i).data(),
            status.data() + static_cast<std::size_t>(i) * p(), observed.row(i).data()};
  }
  bool row_has_free(int i) const {
    for (int j = 0; j < p(); ++j)
      if (cell(i, j) == CellStatus::free) return true;
    return false;
  }
};

inline CellStatus classify_cell(const VariableMeta& v, double obs) {
  if (is_missing(obs)) return CellStatus::free;
  if (v.is_categorical()) return CellStatus::constrained;
  const double tol = 1e-12 * std::max(1.0, std::abs(obs));
  if (std::isfinite(v.lower) && std::abs(obs - v.lower) <= tol) return CellStatus::censored_lower;
  if (std::isfinite(v.upper) && std::abs(obs - v.upper) <= tol) return CellStatus::censored_upper;
  return CellStatus::fixed;
}

// Latent values for one row from its observed cells (also used by prediction).
inline void initialize_row(RowRef r, RngStream& rng) {
  const auto& s = *r.schema;
  for (int j = 0; j < s.p(); ++j) {
    const auto& v = s.variables[j];
    double* w = r.w + r.map->first[j];
    const int m = r.map->count[j];
    switch (r.status[j]) {
      case CellStatus::fixed: w[0] = r.observed[j]; break;
      case CellStatus::censored_lower: w[0] = v.lower - 0.1; break;
      case CellStatus::censored_upper: w[0] = v.upper + 0.1; break;
      case CellStatus::free:
        for (int k = 0; k < m; ++k) w[k] = std_normal(rng);
        break;
      case CellStatus::constrained: {
        const int c = static_cast<int>(r.observed[j]);
        bool done = false;
        for (int attempt = 0; attempt < 100 && !done; ++attempt) {
          for (int k = 0; k < m; ++k) w[k] = std_normal(rng);
          done = static_cast<int>(decode(w, v)) == c;
        }
        if (!done) {
          const double z = std::abs(std_normal(rng));
          for (int k = 0; k < m; ++k) w[k] = -z;
          if (c > 0) w[c - 1] = z + 0.1;
          if (c == 0 && z == 0.0)
            for (int k = 0; k < m; ++k) w[k] = -0.1;
        }
        break;
      }
    }
    r.x[j] = decode(w, v);
  }
}

inline LatentMatrix make_latent_shell(const SurvivalDataset& ds) {
  LatentMatrix lm;
  lm.schema = &ds.schema;
  lm.slot_map = SlotMap(ds.schema);
  const int n = ds.n();
  const int p = ds.p();
  lm.values = RowMat::Zero(n, lm.slot_map.total);
  lm.decoded = RowMat::Zero(n, p);
  lm.observed = ds.x;
  lm.status.resize(static_cast<std::size_t>(n) * p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j)
      lm.status[static_cast<std::size_t>(i) * p + j] = classify_cell(ds.schema.variables[j], ds.x(i, j));
  return lm;
}

inline LatentMatrix initialize_latents(const SurvivalDataset& ds, RngStream& rng) {
  LatentMatrix lm = make_latent_shell(ds);
  for (int i = 0; i < ds.n(); ++i) initialize_row(lm.row(i), rng);
  return lm;
}

// q = Q (w - mu) helpers for one slot.
namespace detail {

inline double cond_offset(const double* w, const Vec& mu, const Mat& q, int k) {
  double s = 0.0;
  const int d = static_cast<int>(mu.size());
  for (int l = 0; l < d; ++l)
    if (l != k) s += q(l, k) * (w[l] - mu(l));
  return s;
}

}  // namespace detail

// Gibbs pass over constrained and boundary-censored cells of one row.
inline void update_row_observed(RowRef r, const Vec& mu, const Mat& q, RngStream& rng) {
  const auto& s = *r.schema;
  for (int j = 0; j < s.p(); ++j) {
    const CellStatus st = r.status[j];
    if (st == CellStatus::fixed || st == CellStatus::free) continue;
    const auto& v = s.variables[j];
    const int f = r.map->first[j];
    if (st == CellStatus::censored_lower || st == CellStatus::censored_upper) {
      const double qkk = q(f, f);
      const double m = mu(f) - detail::cond_offset(r.w, mu, q, f) / qkk;
      const double sd = 1.0 / std::sqrt(qkk);
      r.w[f] = st == CellStatus::censored_lower ? sample_truncated_normal(m, sd, -kInf, v.lower, rng)
                                                : sample_truncated_normal(m, sd, v.upper, kInf, rng);
      continue;
    }
    const int c = static_cast<int>(r.observed[j]);
    const int m_slots = v.levels - 1;
    for (int t = 0; t < m_slots; ++t) {
      const int k = f + t;
      const double qkk = q(k, k);
      const double m = mu(k) - detail::cond_offset(r.w, mu, q, k) / qkk;
      const double sd = 1.0 / std::sqrt(qkk);
      double lo = -kInf;
      double hi = kInf;
      if (c == 0) {
        hi = 0.0;
      } else if (c == t + 1) {
        lo = 0.0;
        for (int u = 0; u < m_slots; ++u)
          if (u != t) lo = std::max(lo, r.w[f + u]);
      } else {
        hi = r.w[f + c - 1];
      }
      r.w[k] = sample_truncated_normal(m, sd, lo, hi, rng);
    }
    r.x[j] = decode(r.w + f, v);
  }
}

struct RowMissingStats {
  std::vector<int> proposed;  // per predictor
  std::vector<int> accepted;
};

// MH refresh of each missing predictor: prior-conditional proposal, response-likelihood ratio.
// loglik(x_decoded) returns the response log-likelihood of the row; pass has_response=false
// for predictive mode (every proposal accepted).
template <class LogLik>
void update_row_missing(RowRef r, const Vec& mu, const Mat& q, LogLik&& loglik, bool has_response,
                        RngStream& rng, RowMissingStats* stats = nullptr) {
  const auto& s = *r.schema;
  const int p = s.p();
  double current_ll = 0.0;
  bool have_ll = false;
  std::vector<double> w_old;
  for (int j = 0; j < p; ++j) {
    if (r.status[j] != CellStatus::free) continue;
    const auto& v = s.variables[j];
    const int f = r.map->first[j];
    const int m = r.map->count[j];
    // conditional of block [f, f+m) given the rest
    Mat qbb = q.block(f, f, m, m);
    Vec rhs(m);
    const int d = static_cast<int>(mu.size());
    for (int a = 0; a < m; ++a) {
      double acc = 0.0;
      for (int l = 0; l < d; ++l) {
        if (l >= f && l < f + m) continue;
        acc += q(l, f + a) * (r.w[l] - mu(l));
      }
      rhs(a) = acc;
    }
    Vec prop(m);
    if (m == 1) {
      const double qkk = qbb(0, 0);
      prop(0) = mu(f) - rhs(0) / qkk + std_normal(rng) / std::sqrt(qkk);
    } else {
      const Mat l = cholesky_lower(qbb);
      Vec t = l.triangularView<Eigen::Lower>().solve(rhs);
      Vec cm = mu.segment(f, m) - l.transpose().triangularView<Eigen::Upper>().solve(t);
      Vec z = std_normal_vec(m, rng);
      prop = cm + l.transpose().triangularView<Eigen::Upper>().solve(z);
    }
    const double x_old = r.x[j];
    const double x_new = decode(prop.data(), v);
    bool accept = true;
    if (has_response && x_new != x_old) {
      if (!have_ll) {
        current_ll = loglik(static_cast<const double*>(r.x));
        have_ll = true;
      }
      r.x[j] = x_new;
      const double new_ll = loglik(static_cast<const double*>(r.x));
      r.x[j] = x_old;
      const double log_ratio = new_ll - current_ll;
      accept = log_ratio >= 0.0 || std::log(rng.uniform_open()) < log_ratio;
      if (accept) current_ll = new_ll;
    }
    if (stats) {
      stats->proposed[j] += 1;
      stats->accepted[j] += accept ? 1 : 0;
    }
    if (accept) {
      for (int a = 0; a < m; ++a) r.w[f + a] = prop(a);
      r.x[j] = x_new;
    }
  }
}

// True when every observed cell decodes to its data value and boundary cells sit outside.
inline bool latent_consistent(const LatentMatrix& lm) {
  const auto& s = *lm.schema;
  for (int i = 0; i < lm.n(); ++i) {
    for (int j = 0; j < lm.p(); ++j) {
      const auto& v = s.variables[j];
      const double* w = lm.values.row(i).data() + lm.slot_map.first[j];
      const double dec = decode(w, v);
      if (dec != lm.decoded(i, j)) return false;
      switch (lm.cell(i, j)) {
        case CellStatus::fixed:
          if (w[0] != lm.observed(i, j)) return false;
          break;
        case CellStatus::constrained:
          if (dec != lm.observed(i, j)) return false;
          break;
        case CellStatus::censored_lower:
          if (!(w[0] <= v.lower)) return false;
          break;
        case CellStatus::censored_upper:
          if (!(w[0] >= v.upper)) return false;
          break;
        case CellStatus::free: break;
      }
    }
  }
  return true;
}

}  // namespace sdpm
