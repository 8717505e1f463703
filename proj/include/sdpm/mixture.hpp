#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "sdpm/dist.hpp"
#include "sdpm/latent.hpp"
#include "sdpm/parallel.hpp"

namespace sdpm {

struct PriorConfig {
  double a_conc = 1.0, b_conc = 1.0;
  double a_varphi = 1.0, b_varphi = 1.0;
  double a_eta = 1.0, b_eta = 1.0;
  double a_psi = 1.0, b_psi = 1.0;
  double rho_select = 0.5;
  int H = 40;
  double pi_swap = 0.5;
  double step_varphi = 0.2, step_eta = 0.5, step_psi = 0.5;

  void validate() const {
    for (double v : {a_conc, b_conc, a_varphi, b_varphi, a_eta, b_eta, a_psi, b_psi})
      if (!(v > 0.0)) throw ConfigError("mixture hyperprior parameters must be positive");
    if (!(rho_select > 0.0 && rho_select < 1.0)) throw ConfigError("rho_select must lie in (0,1)");
    if (!(pi_swap >= 0.0 && pi_swap <= 1.0)) throw ConfigError("pi_swap must lie in [0,1]");
    if (H < 1) throw ConfigError("H must be at least 1");
    for (double v : {step_varphi, step_eta, step_psi})
      if (!(v >= 0.0)) throw ConfigError("random-walk steps must be non-negative");
  }
};

// Identified component parameters used by assignments and latent updates.
struct Component {
  Vec mean;
  Mat precision;
  Mat chol;  // lower factor of precision
  double log_det = 0.0;
};

struct MixtureState {
  int H = 1;
  Vec v;
  Vec pi;
  double concentration = 1.0;
  std::vector<std::uint8_t> gamma;  // per predictor: 1 informative
  std::vector<int> assign;          // 0-based component per row
  double varphi = 1.0, eta = 3.0, psi = 1.0;
  // expanded (unidentified) parameters, blocks follow gamma
  std::vector<Vec> mu1;
  std::vector<Mat> sigma11;
  std::vector<Mat> w11;  // inverse of sigma11
  Vec b2;
  Mat q21;
  Mat q22;
  std::vector<Component> comp;
};

struct Blocks {
  IndexList b1;  // informative latent slots
  IndexList b2;  // shared slots
};

inline Blocks block_indices(const std::vector<std::uint8_t>& gamma, const SlotMap& map) {
  Blocks b;
  for (int j = 0; j < map.predictors(); ++j)
    for (int k = 0; k < map.count[j]; ++k) (gamma[j] ? b.b1 : b.b2).push_back(map.first[j] + k);
  return b;
}

// Diagonal of D such that D Q D has unit first-slot precision for every categorical.
inline Vec scaling_diagonal(const Mat& qt, const SlotMap& map) {
  Vec d = Vec::Ones(qt.rows());
  for (int j = 0; j < map.predictors(); ++j) {
    if (!map.categorical[j]) continue;
    const int f = map.first[j];
    const double q = qt(f, f);
    if (!(q > 0.0)) throw NumericError("scaling_matrix: non-positive diagonal");
    d(f) = 1.0 / std::sqrt(q);
  }
  return d;
}

inline Mat scaling_matrix(const Mat& qt, const SlotMap& map) {
  return scaling_diagonal(qt, map).asDiagonal();
}

// Identified parameters from an expanded pair (mu~, Q~).
inline Component identify(const Vec& mut, const Mat& qt, const SlotMap& map) {
  const Vec d = scaling_diagonal(qt, map);
  Component c;
  c.precision = d.asDiagonal() * qt * d.asDiagonal();
  c.precision = symmetrize(c.precision);
  for (int j = 0; j < map.predictors(); ++j)
    if (map.categorical[j]) c.precision(map.first[j], map.first[j]) = 1.0;
  c.mean = mut.cwiseQuotient(d);
  c.chol = cholesky_lower(c.precision);
  c.log_det = 2.0 * c.chol.diagonal().array().log().sum();
  return c;
}

// Rebuilds full expanded parameters per component and rescales them.
inline void assemble_components(MixtureState& st, const SlotMap& map) {
  const Blocks bl = block_indices(st.gamma, map);
  const int p1 = static_cast<int>(bl.b1.size());
  const int p2 = static_cast<int>(bl.b2.size());
  const int d = map.total;
  Mat q12q22inv_q21 = Mat::Zero(p1, p1);
  Mat q22inv_q21;
  Vec q22inv_b2;
  if (p2 > 0) {
    const SymMatrix q22(st.q22);
    if (p1 > 0) {
      q22inv_q21 = q22.solve(st.q21);
      q12q22inv_q21 = symmetrize(st.q21.transpose() * q22inv_q21);
    }
    q22inv_b2 = q22.solve(st.b2);
  }
  st.comp.resize(st.H);
  for (int h = 0; h < st.H; ++h) {
    Mat qt(d, d);
    Vec mut(d);
    if (p1 > 0) {
      const Mat q11 = st.w11[h] + q12q22inv_q21;
      for (int a = 0; a < p1; ++a) {
        mut(bl.b1[a]) = st.mu1[h](a);
        for (int b = 0; b < p1; ++b) qt(bl.b1[a], bl.b1[b]) = q11(a, b);
      }
    }
    if (p2 > 0) {
      Vec mu2 = q22inv_b2;
      if (p1 > 0) mu2 -= q22inv_q21 * st.mu1[h];
      for (int a = 0; a < p2; ++a) {
        mut(bl.b2[a]) = mu2(a);
        for (int b = 0; b < p2; ++b) qt(bl.b2[a], bl.b2[b]) = st.q22(a, b);
        for (int b = 0; b < p1; ++b) {
          qt(bl.b2[a], bl.b1[b]) = st.q21(a, b);
          qt(bl.b1[b], bl.b2[a]) = st.q21(a, b);
        }
      }
    }
    st.comp[h] = identify(mut, qt, map);
  }
}

// ---------------------------------------------------------------- sufficient statistics

struct SuffStats {
  int n = 0;
  Vec sum;
  Mat cross;
  std::vector<int> nh;
  std::vector<Vec> sumh;
  std::vector<Mat> crossh;
};

inline SuffStats sufficient_stats(const RowMat& x, const std::vector<int>& assign, int H) {
  const int d = static_cast<int>(x.cols());
  SuffStats s;
  s.n = static_cast<int>(x.rows());
  s.nh.assign(H, 0);
  s.sumh.assign(H, Vec::Zero(d));
  s.crossh.assign(H, Mat::Zero(d, d));
  std::vector<std::vector<int>> rows(H);
  for (int i = 0; i < s.n; ++i) rows[assign[i]].push_back(i);
  for (int h = 0; h < H; ++h) {
    s.nh[h] = static_cast<int>(rows[h].size());
    if (rows[h].empty()) continue;
    Mat xh(s.nh[h], d);
    for (int r = 0; r < s.nh[h]; ++r) xh.row(r) = x.row(rows[h][r]);
    s.sumh[h] = xh.colwise().sum().transpose();
    s.crossh[h].selfadjointView<Eigen::Lower>().rankUpdate(xh.transpose());
    s.crossh[h] = s.crossh[h].selfadjointView<Eigen::Lower>();
  }
  s.sum = Vec::Zero(d);
  s.cross = Mat::Zero(d, d);
  for (int h = 0; h < H; ++h) {
    s.sum += s.sumh[h];
    s.cross += s.crossh[h];
  }
  return s;
}

// ---------------------------------------------------------------- conjugate algebra

namespace detail {

struct SharedPosterior {
  Mat v11, v21, v22, v21_v11inv, v2g1;
  double n_total = 0;
  Vec s1, s2;
};

inline SharedPosterior shared_posterior(const SuffStats& s, const Blocks& bl, double varphi,
                                        double psi) {
  SharedPosterior sp;
  const Mat v = s.cross - s.sum * s.sum.transpose() / (s.n + varphi) +
                psi * Mat::Identity(s.cross.rows(), s.cross.cols());
  sp.v11 = submatrix(v, bl.b1, bl.b1);
  sp.v21 = submatrix(v, bl.b2, bl.b1);
  sp.v22 = submatrix(v, bl.b2, bl.b2);
  sp.s1 = subvector(s.sum, bl.b1);
  sp.s2 = subvector(s.sum, bl.b2);
  sp.n_total = s.n;
  if (!bl.b1.empty() && !bl.b2.empty()) {
    const SymMatrix v11(sp.v11);
    sp.v21_v11inv = v11.solve(Mat(sp.v21.transpose())).transpose();
    sp.v2g1 = symmetrize(sp.v22 - sp.v21_v11inv * sp.v21.transpose());
  } else {
    sp.v21_v11inv = Mat::Zero(bl.b2.size(), bl.b1.size());
    sp.v2g1 = sp.v22;
  }
  return sp;
}

inline Mat component_v11(const SuffStats& s, int h, const IndexList& b1, double varphi, double psi) {
  const Vec sh = subvector(s.sumh[h], b1);
  Mat v = submatrix(s.crossh[h], b1, b1) - sh * sh.transpose() / (s.nh[h] + varphi);
  v.diagonal().array() += psi;
  return symmetrize(v);
}

}  // namespace detail

// log marginal likelihood of the latent rows under the block structure gamma,
// integrating the expanded component parameters against their prior.
inline double log_marginal(const std::vector<std::uint8_t>& gamma, const SuffStats& s,
                           double varphi, double eta, double psi, const SlotMap& map) {
  const Blocks bl = block_indices(gamma, map);
  const int p1 = static_cast<int>(bl.b1.size());
  const int p2 = static_cast<int>(bl.b2.size());
  const double log_pi = std::log(std::numbers::pi);
  double total = 0.0;
  if (p1 > 0) {
    const double nu0 = eta - p2;
    const double logdet_psi11 = p1 * std::log(psi);
    for (std::size_t h = 0; h < s.nh.size(); ++h) {
      const int nh = s.nh[h];
      if (nh == 0) continue;
      const SymMatrix vh(detail::component_v11(s, static_cast<int>(h), bl.b1, varphi, psi));
      const double nun = nu0 + nh;
      total += -0.5 * nh * p1 * log_pi + 0.5 * p1 * std::log(varphi / (varphi + nh)) +
               lmvgamma(p1, 0.5 * nun) - lmvgamma(p1, 0.5 * nu0) + 0.5 * nu0 * logdet_psi11 -
               0.5 * nun * vh.log_det();
    }
  }
  if (p2 > 0 && s.n > 0) {
    const auto sp = detail::shared_posterior(s, bl, varphi, psi);
    const double n = s.n;
    const double logdet_k0 = std::log(varphi) + p1 * std::log(psi);
    double logdet_kn = std::log(n + varphi);
    if (p1 > 0) logdet_kn += SymMatrix(sp.v11).log_det();
    const SymMatrix sn(sp.v2g1);
    total += -0.5 * n * p2 * log_pi + 0.5 * p2 * (logdet_k0 - logdet_kn) +
             lmvgamma(p2, 0.5 * (eta + n)) - lmvgamma(p2, 0.5 * eta) +
             0.5 * eta * p2 * std::log(psi) - 0.5 * (eta + n) * sn.log_det();
  }
  return total;
}

// Draws every expanded parameter from its conditional given the latents and gamma;
// with empty statistics this is a draw from the prior.
inline void draw_conjugate(MixtureState& st, const SuffStats& s, const SlotMap& map,
                           RngStream& rng) {
  const Blocks bl = block_indices(st.gamma, map);
  const int p1 = static_cast<int>(bl.b1.size());
  const int p2 = static_cast<int>(bl.b2.size());
  st.mu1.assign(st.H, Vec());
  st.sigma11.assign(st.H, Mat());
  st.w11.assign(st.H, Mat());
  for (int h = 0; h < st.H; ++h) {
    if (p1 == 0) {
      st.mu1[h] = Vec(0);
      st.sigma11[h] = Mat(0, 0);
      st.w11[h] = Mat(0, 0);
      continue;
    }
    const SymMatrix vh(detail::component_v11(s, h, bl.b1, st.varphi, st.psi));
    const SymMatrix vh_inv(vh.inverse());
    const double df = s.nh[h] + st.eta - p2;
    const SymMatrix w(sample_wishart_dense(df, vh_inv.chol(), rng));
    st.w11[h] = w.matrix();
    st.sigma11[h] = w.inverse();
    const double kn = s.nh[h] + st.varphi;
    const Vec mean = subvector(s.sumh[h], bl.b1) / kn;
    const Vec z = std_normal_vec(p1, rng);
    // N(mean, Sigma / kn) via the precision factor of W
    st.mu1[h] = mean + w.chol().transpose().triangularView<Eigen::Upper>().solve(z) / std::sqrt(kn);
  }
  if (p2 == 0) {
    st.b2 = Vec(0);
    st.q21 = Mat(0, p1);
    st.q22 = Mat(0, 0);
    return;
  }
  const auto sp = detail::shared_posterior(s, bl, st.varphi, st.psi);
  const SymMatrix v2g1(sp.v2g1);
  const SymMatrix v2g1_inv(v2g1.inverse());
  const SymMatrix q22(sample_wishart_dense(s.n + st.eta, v2g1_inv.chol(), rng));
  st.q22 = q22.matrix();
  Mat bmat(p2, p1);
  if (p1 > 0) {
    const SymMatrix v11(sp.v11);
    const SymMatrix v11_inv(v11.inverse());
    bmat = sample_matrix_normal(sp.v21_v11inv, q22, v11_inv, rng);
    st.q21 = -(st.q22 * bmat);
  } else {
    st.q21 = Mat(p2, 0);
  }
  const double kn = s.n + st.varphi;
  Vec mean = st.q22 * sp.s2;
  if (p1 > 0) mean += st.q21 * sp.s1;
  mean /= kn;
  const Vec z = std_normal_vec(p2, rng);
  // N(mean, Q22 / kn)
  st.b2 = mean + q22.chol() * z / std::sqrt(kn);
}

// Log prior density of the expanded parameters given gamma and the hyperparameters.
inline double log_prior_expanded(const MixtureState& st, const SlotMap& map) {
  const Blocks bl = block_indices(st.gamma, map);
  const int p1 = static_cast<int>(bl.b1.size());
  const int p2 = static_cast<int>(bl.b2.size());
  double lp = 0.0;
  if (p1 > 0) {
    const SymMatrix psi11(st.psi * Mat::Identity(p1, p1));
    for (int h = 0; h < st.H; ++h) {
      const SymMatrix sig(st.sigma11[h]);
      lp += inverse_wishart_logpdf(sig, st.eta - p2, psi11);
      lp += mvn_logpdf(st.mu1[h], Vec::Zero(p1), SymMatrix(st.sigma11[h] / st.varphi),
                       Param::covariance);
    }
  }
  if (p2 > 0) {
    const SymMatrix q22(st.q22);
    lp += wishart_logpdf(q22, st.eta, SymMatrix(Mat::Identity(p2, p2) / st.psi));
    if (p1 > 0) {
      const Mat b = -q22.solve(st.q21);
      lp += matrix_normal_logpdf(b, Mat::Zero(p2, p1), q22,
                                 SymMatrix(Mat::Identity(p1, p1) / st.psi));
    }
    lp += mvn_logpdf(st.b2, Vec::Zero(p2), SymMatrix(st.q22 / st.varphi), Param::covariance);
  }
  return lp;
}

// Log density of the expanded parameters under the conditional used by draw_conjugate.
inline double log_conditional_expanded(const MixtureState& st, const SuffStats& s,
                                       const SlotMap& map) {
  const Blocks bl = block_indices(st.gamma, map);
  const int p1 = static_cast<int>(bl.b1.size());
  const int p2 = static_cast<int>(bl.b2.size());
  double lp = 0.0;
  if (p1 > 0) {
    for (int h = 0; h < st.H; ++h) {
      const SymMatrix vh(detail::component_v11(s, h, bl.b1, st.varphi, st.psi));
      const SymMatrix sig(st.sigma11[h]);
      lp += inverse_wishart_logpdf(sig, s.nh[h] + st.eta - p2, vh);
      const double kn = s.nh[h] + st.varphi;
      lp += mvn_logpdf(st.mu1[h], Vec(subvector(s.sumh[h], bl.b1) / kn),
                       SymMatrix(st.sigma11[h] / kn), Param::covariance);
    }
  }
  if (p2 > 0) {
    const auto sp = detail::shared_posterior(s, bl, st.varphi, st.psi);
    const SymMatrix q22(st.q22);
    lp += wishart_logpdf(q22, s.n + st.eta, SymMatrix(SymMatrix(sp.v2g1).inverse()));
    if (p1 > 0) {
      const Mat b = -q22.solve(st.q21);
      lp += matrix_normal_logpdf(b, sp.v21_v11inv, q22, SymMatrix(SymMatrix(sp.v11).inverse()));
    }
    const double kn = s.n + st.varphi;
    Vec mean = st.q22 * sp.s2;
    if (p1 > 0) mean += st.q21 * sp.s1;
    mean /= kn;
    lp += mvn_logpdf(st.b2, mean, SymMatrix(st.q22 / kn), Param::covariance);
  }
  return lp;
}

// Log likelihood of latent rows given assignments under the expanded parameters.
inline double log_lik_expanded(const MixtureState& st, const RowMat& x, const SlotMap& map) {
  const Blocks bl = block_indices(st.gamma, map);
  const int p1 = static_cast<int>(bl.b1.size());
  const int p2 = static_cast<int>(bl.b2.size());
  double ll = 0.0;
  std::vector<SymMatrix> sig;
  for (int h = 0; h < st.H && p1 > 0; ++h) sig.emplace_back(st.sigma11[h]);
  SymMatrix q22;
  if (p2 > 0) q22 = SymMatrix(st.q22);
  for (int i = 0; i < x.rows(); ++i) {
    const Vec xi = x.row(i).transpose();
    const Vec x1 = subvector(xi, bl.b1);
    const int h = st.assign[i];
    if (p1 > 0) ll += mvn_logpdf(x1, st.mu1[h], sig[h], Param::covariance);
    if (p2 > 0) {
      Vec rhs = st.b2;
      if (p1 > 0) rhs -= st.q21 * x1;
      ll += mvn_logpdf(subvector(xi, bl.b2), q22.solve(rhs), q22, Param::precision);
    }
  }
  return ll;
}

// ---------------------------------------------------------------- reversible-jump selection

inline double log_gamma_prior(const std::vector<std::uint8_t>& g, double rho) {
  double lp = 0.0;
  for (auto v : g) lp += v ? std::log(rho) : std::log1p(-rho);
  return lp;
}

// Log probability that the add/delete/swap recipe moves `from` to `to`.
inline double rj_log_proposal(const std::vector<std::uint8_t>& from,
                              const std::vector<std::uint8_t>& to, double pi_swap) {
  const int p = static_cast<int>(from.size());
  IndexList diff;
  for (int j = 0; j < p; ++j)
    if (from[j] != to[j]) diff.push_back(j);
  auto opposite = [&](int j) {
    int c = 0;
    for (int k = 0; k < p; ++k) c += from[k] != from[j];
    return c;
  };
  if (diff.size() == 1) {
    const int sj = opposite(diff[0]);
    return std::log(1.0 / p) + (sj > 0 ? std::log1p(-pi_swap) : 0.0);
  }
  if (diff.size() == 2 && from[diff[0]] != from[diff[1]]) {
    const double pr = (1.0 / p) * pi_swap / opposite(diff[0]) + (1.0 / p) * pi_swap / opposite(diff[1]);
    return std::log(pr);
  }
  return -kInf;
}

inline std::vector<std::uint8_t> rj_propose(const std::vector<std::uint8_t>& g, double pi_swap,
                                            RngStream& rng) {
  const int p = static_cast<int>(g.size());
  auto gp = g;
  const int j = std::min(p - 1, static_cast<int>(rng.uniform() * p));
  IndexList opp;
  for (int k = 0; k < p; ++k)
    if (g[k] != g[j]) opp.push_back(k);
  gp[j] = 1 - gp[j];
  if (!opp.empty() && rng.uniform() < pi_swap) {
    const int k = opp[std::min<int>(opp.size() - 1, static_cast<int>(rng.uniform() * opp.size()))];
    gp[k] = 1 - gp[k];
  }
  return gp;
}

struct RjResult {
  bool accepted = false;
  double log_ratio = 0.0;
  bool failed = false;  // numerical failure; move rejected
};

// Collapsed move on gamma followed by a fresh conditional draw of the component parameters.
inline RjResult rj_update_selection(MixtureState& st, const SuffStats& s, const PriorConfig& pc,
                                    const SlotMap& map, RngStream& rng) {
  RjResult res;
  if (st.gamma.empty()) return res;
  const auto gp = rj_propose(st.gamma, pc.pi_swap, rng);
  try {
    const double lm_new = log_marginal(gp, s, st.varphi, st.eta, st.psi, map);
    const double lm_old = log_marginal(st.gamma, s, st.varphi, st.eta, st.psi, map);
    res.log_ratio = lm_new - lm_old + log_gamma_prior(gp, pc.rho_select) -
                    log_gamma_prior(st.gamma, pc.rho_select) +
                    rj_log_proposal(gp, st.gamma, pc.pi_swap) -
                    rj_log_proposal(st.gamma, gp, pc.pi_swap);
    if (res.log_ratio >= 0.0 || std::log(rng.uniform_open()) < res.log_ratio) {
      st.gamma = gp;
      res.accepted = true;
    }
  } catch (const NumericError&) {
    res.failed = true;
  }
  draw_conjugate(st, s, map, rng);
  assemble_components(st, map);
  return res;
}

// ---------------------------------------------------------------- sticks and concentration

inline Vec stick_to_weights(const Vec& v) {
  Vec pi(v.size());
  double rest = 1.0;
  for (int h = 0; h < v.size(); ++h) {
    pi(h) = v(h) * rest;
    rest *= 1.0 - v(h);
  }
  return pi;
}

inline void update_stick_weights(MixtureState& st, RngStream& rng) {
  const int H = st.H;
  std::vector<int> counts(H, 0);
  for (int a : st.assign) counts[a]++;
  st.v.resize(H);
  int above = static_cast<int>(st.assign.size());
  for (int h = 0; h < H; ++h) {
    above -= counts[h];
    if (h == H - 1) {
      st.v(h) = 1.0;
      continue;
    }
    // a small concentration can round Beta draws to exactly 0 or 1
    const double v = sample_beta(1.0 + counts[h], st.concentration + above, rng);
    st.v(h) = std::clamp(v, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
  }
  st.pi = stick_to_weights(st.v);
}

inline double update_concentration(const Vec& v, const PriorConfig& pc, RngStream& rng) {
  const int H = static_cast<int>(v.size());
  double s = 0.0;
  for (int h = 0; h < H - 1; ++h) s += std::max(std::log1p(-v(h)), -700.0);
  return sample_gamma(pc.a_conc + H - 1, pc.b_conc - s, rng);
}

// ---------------------------------------------------------------- hyperparameters

struct HyperTerms {
  int H = 0, p1 = 0, p2 = 0, pstar = 0;
  double quad_mu = 0.0;      // sum_h mu_h1' W_h mu_h1
  double quad_b = 0.0;       // b2' Q22^{-1} b2
  double logdet_sigma = 0.0; // sum_h log|Sigma_h11|
  double trace_w = 0.0;      // sum_h tr(W_h)
  double logdet_q22 = 0.0;
  double trace_q22 = 0.0;
  double trace_bqb = 0.0;    // tr(Q21' Q22^{-1} Q21)
};

inline HyperTerms hyper_terms(const MixtureState& st, const SlotMap& map) {
  const Blocks bl = block_indices(st.gamma, map);
  HyperTerms t;
  t.H = st.H;
  t.p1 = static_cast<int>(bl.b1.size());
  t.p2 = static_cast<int>(bl.b2.size());
  t.pstar = map.total;
  if (t.p1 > 0) {
    for (int h = 0; h < st.H; ++h) {
      const SymMatrix w(st.w11[h]);
      t.quad_mu += st.mu1[h].dot(st.w11[h] * st.mu1[h]);
      t.logdet_sigma -= w.log_det();
      t.trace_w += st.w11[h].trace();
    }
  }
  if (t.p2 > 0) {
    const SymMatrix q22(st.q22);
    t.quad_b = st.b2.dot(q22.solve(st.b2));
    t.logdet_q22 = q22.log_det();
    t.trace_q22 = st.q22.trace();
    if (t.p1 > 0) t.trace_bqb = (st.q21.transpose() * q22.solve(st.q21)).trace();
  }
  return t;
}

// Log full-conditional target (up to a constant) of (varphi, eta, psi).
inline double log_hyper_target(double varphi, double eta, double psi, const HyperTerms& t,
                               const PriorConfig& pc) {
  if (!(varphi > 0.0) || !(psi > 0.0) || !(eta > t.pstar + 1)) return -kInf;
  double lp = gamma_logpdf(varphi, pc.a_varphi, pc.b_varphi) +
              gamma_logpdf(eta - (t.pstar + 1), pc.a_eta, pc.b_eta) +
              gamma_logpdf(psi, pc.a_psi, pc.b_psi);
  const double lpsi = std::log(psi);
  // mu_h1 ~ N(0, Sigma/varphi), b2 ~ N(0, Q22/varphi)
  lp += 0.5 * (t.H * t.p1 + t.p2) * std::log(varphi) - 0.5 * varphi * (t.quad_mu + t.quad_b);
  if (t.p1 > 0) {
    const double nu = eta - t.p2;
    lp += t.H * (0.5 * nu * t.p1 * lpsi - 0.5 * nu * t.p1 * std::numbers::ln2 -
                 lmvgamma(t.p1, 0.5 * nu)) -
          0.5 * (nu + t.p1 + 1) * t.logdet_sigma - 0.5 * psi * t.trace_w;
  }
  if (t.p2 > 0) {
    lp += 0.5 * (eta - t.p2 - 1) * t.logdet_q22 - 0.5 * psi * t.trace_q22 -
          0.5 * eta * t.p2 * std::numbers::ln2 + 0.5 * eta * t.p2 * lpsi - lmvgamma(t.p2, 0.5 * eta);
    if (t.p1 > 0) lp += 0.5 * t.p1 * t.p2 * lpsi - 0.5 * psi * t.trace_bqb;
  }
  return lp;
}

enum class Hyper { varphi, eta, psi };

// Log-scale Gaussian random walk on one hyperparameter; returns the accept flag.
inline bool update_hyper(MixtureState& st, Hyper which, double step, const PriorConfig& pc,
                         const HyperTerms& t, RngStream& rng) {
  double* target = which == Hyper::varphi ? &st.varphi : which == Hyper::eta ? &st.eta : &st.psi;
  const double cur = *target;
  const double prop = cur * std::exp(step * std_normal(rng));
  const double lu = std::log(rng.uniform_open());
  if (prop == cur) return true;
  double vp = st.varphi, ep = st.eta, pp = st.psi;
  (which == Hyper::varphi ? vp : which == Hyper::eta ? ep : pp) = prop;
  const double ln = log_hyper_target(vp, ep, pp, t, pc);
  if (ln == -kInf) return false;
  const double lo = log_hyper_target(st.varphi, st.eta, st.psi, t, pc);
  const double log_ratio = ln - lo + std::log(prop) - std::log(cur);
  if (log_ratio >= 0.0 || lu < log_ratio) {
    *target = prop;
    return true;
  }
  return false;
}

inline bool update_hyper_varphi(MixtureState& st, const PriorConfig& pc, const SlotMap& map,
                                RngStream& rng) {
  return update_hyper(st, Hyper::varphi, pc.step_varphi, pc, hyper_terms(st, map), rng);
}
inline bool update_hyper_eta(MixtureState& st, const PriorConfig& pc, const SlotMap& map,
                             RngStream& rng) {
  return update_hyper(st, Hyper::eta, pc.step_eta, pc, hyper_terms(st, map), rng);
}
inline bool update_hyper_psi(MixtureState& st, const PriorConfig& pc, const SlotMap& map,
                             RngStream& rng) {
  return update_hyper(st, Hyper::psi, pc.step_psi, pc, hyper_terms(st, map), rng);
}

// ---------------------------------------------------------------- assignments

// log pi_h + log N(x_i; mu_h, Q_h^{-1}) for every row and component.
inline Mat assignment_log_weights(const RowMat& x, const MixtureState& st) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  Mat lw(n, st.H);
  for (int h = 0; h < st.H; ++h) {
    if (!(st.pi(h) > 0.0)) {
      lw.col(h).setConstant(-kInf);
      continue;
    }
    const auto& c = st.comp[h];
    RowMat diff = x.rowwise() - c.mean.transpose();
    const Mat t = diff * c.chol.triangularView<Eigen::Lower>();
    const double base = std::log(st.pi(h)) + 0.5 * c.log_det - 0.5 * d * kLog2Pi;
    lw.col(h) = (base - 0.5 * t.rowwise().squaredNorm().array()).matrix();
  }
  return lw;
}

// Row streams come from make_rng(i) so the draw is schedule-independent.
template <class MakeRng>
void update_assignments(const RowMat& x, MixtureState& st, MakeRng&& make_rng) {
  const Mat lw = assignment_log_weights(x, st);
  const int n = static_cast<int>(x.rows());
  st.assign.resize(n);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> lwr = lw;
  parallel_for(n, [&](int i) {
    RngStream rng = make_rng(i);
    st.assign[i] = sample_categorical_log(lwr.row(i).data(), st.H, rng);
  });
}

inline double component_logpdf(const Component& c, const double* x) {
  const int d = static_cast<int>(c.mean.size());
  Eigen::Map<const Vec> xv(x, d);
  const Vec t = c.chol.transpose() * (xv - c.mean);
  return 0.5 * c.log_det - 0.5 * d * kLog2Pi - 0.5 * t.squaredNorm();
}

// ---------------------------------------------------------------- checks

inline double max_identifiability_error(const MixtureState& st, const SlotMap& map) {
  double e = 0.0;
  for (const auto& c : st.comp)
    for (int j = 0; j < map.predictors(); ++j)
      if (map.categorical[j]) e = std::max(e, std::abs(c.precision(map.first[j], map.first[j]) - 1.0));
  return e;
}

}  // namespace sdpm
