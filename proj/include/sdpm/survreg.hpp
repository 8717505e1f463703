#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sdpm/dataset.hpp"
#include "sdpm/dist.hpp"

namespace sdpm {

struct RegPriorConfig {
  double rho = 0.5;              // prior inclusion probability of every non-intercept group
  std::vector<double> rho_group; // optional per-group override (index 0 ignored)
  double a_tau = 1.0, b_tau = 1.0;
  double a_kappa = 1.0, b_kappa = 1.0;
  double intercept_sd = 10.0;
  double p01 = 0.3, p11 = 0.7;
  double step_kappa = 0.05;

  double rho_for(int g) const {
    if (g == 0) return 1.0;
    if (g < static_cast<int>(rho_group.size())) return rho_group[g];
    return rho;
  }

  void validate() const {
    auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in01(rho) || !in01(p01) || !in01(p11)) throw ConfigError("probabilities must lie in (0,1)");
    for (std::size_t g = 1; g < rho_group.size(); ++g)
      if (!in01(rho_group[g])) throw ConfigError("group inclusion probabilities must lie in (0,1)");
    for (double v : {a_tau, b_tau, a_kappa, b_kappa, intercept_sd})
      if (!(v > 0.0)) throw ConfigError("regression prior parameters must be positive");
    if (!(step_kappa >= 0.0)) throw ConfigError("kappa step must be non-negative");
  }
};

struct RegressionState {
  Vec beta;
  std::vector<std::uint8_t> delta;  // per design group; delta[0] == 1
  double tau2 = 1.0;
  double kappa = 1.0;
  Vec ytilde;
  Vec eta;  // Z beta, kept in sync with beta
};

inline double log_risk(const Vec& z, const Vec& beta) {
  if (z.size() != beta.size()) throw InvalidArgument("log_risk: length mismatch");
  return z.dot(beta);
}

// Draw from the Weibull truncated to (y, inf) through the uniform u.
inline double impute_censored(double y, double lambda, double kappa, double u) {
  check_weibull(y, lambda, kappa);
  if (!(u > 0.0 && u < 1.0)) throw InvalidArgument("impute_censored: u must lie in (0,1)");
  // z = 1 - u (1 - F(y)); survivor of the result is u S(y)
  const double h = std::exp(kappa * std::log(lambda * y));  // -log S(y)
  const double t = h - std::log(u);                          // -log(u S(y))
  return std::max(y, std::pow(t, 1.0 / kappa) / lambda);
}

inline double weibull_loglik(const Vec& y, const std::vector<std::uint8_t>& event, const Vec& eta,
                             double kappa) {
  double ll = 0.0;
  const double lk = std::log(kappa);
  for (int i = 0; i < y.size(); ++i) {
    const double ly = std::log(y(i));
    const double h = std::exp(kappa * (eta(i) + ly));
    if (event[i]) ll += lk + kappa * eta(i) + (kappa - 1.0) * ly - h;
    else ll -= h;
  }
  return ll;
}

// Row-level version used by the missing-latent MH step.
inline double weibull_loglik_row(double y, bool event, double eta, double kappa) {
  const double ly = std::log(y);
  const double h = std::exp(kappa * (eta + ly));
  return event ? std::log(kappa) + kappa * eta + (kappa - 1.0) * ly - h : -h;
}

// Complete-data (all uncensored) log-likelihood terms that depend on eta.
inline double complete_loglik_eta(const Vec& log_ytilde, const Vec& eta, double kappa) {
  double ll = 0.0;
  for (int i = 0; i < eta.size(); ++i) ll += kappa * eta(i) - std::exp(kappa * (eta(i) + log_ytilde(i)));
  return ll;
}

inline double group_log_prior(const Vec& b, bool included, double rho, double sd) {
  if (!included) return std::log1p(-rho);
  double lp = rho < 1.0 ? std::log(rho) : 0.0;
  for (int k = 0; k < b.size(); ++k) lp += normal_logpdf(b(k), 0.0, sd);
  return lp;
}

struct GroupProposal {
  Vec mean;
  Mat prec_chol;  // lower factor of the proposal precision
  double log_det_prec = 0.0;
};

// Conjugate Gaussian proposal for group g from the log-transformed augmented response.
inline GroupProposal beta_group_proposal(int g, const RegressionState& st, const Mat& z,
                                         const DesignLayout& layout, const Vec& log_ytilde,
                                         double slab_sd) {
  const int s0 = layout.group_start[g];
  const int m = layout.group_size[g];
  const auto zg = z.middleCols(s0, m);
  const double sig2 = trigamma(1.0) / (st.kappa * st.kappa);
  const double d1 = digamma(1.0) / st.kappa;
  const Vec own = zg * st.beta.segment(s0, m);
  const Vec r = (-log_ytilde).array() + d1 - (st.eta - own).array();
  Mat a = zg.transpose() * zg;
  a.diagonal().array() += sig2 / (slab_sd * slab_sd);
  const Mat la = cholesky_lower(a);
  const Vec rhs = zg.transpose() * r;
  GroupProposal gp;
  const Vec t = la.triangularView<Eigen::Lower>().solve(rhs);
  gp.mean = la.transpose().triangularView<Eigen::Upper>().solve(t);
  // precision = A / sig2
  gp.prec_chol = la / std::sqrt(sig2);
  gp.log_det_prec = 2.0 * gp.prec_chol.diagonal().array().log().sum();
  return gp;
}

inline double group_proposal_logpdf(const GroupProposal& gp, const Vec& b) {
  const Vec t = gp.prec_chol.transpose() * (b - gp.mean);
  return -0.5 * b.size() * kLog2Pi + 0.5 * gp.log_det_prec - 0.5 * t.squaredNorm();
}

// Spike-and-slab MH for one design group. Returns the accept flag.
inline bool update_beta_group(int g, RegressionState& st, const Mat& z, const DesignLayout& layout,
                              const Vec& log_ytilde, const RegPriorConfig& pc, RngStream& rng) {
  const int s0 = layout.group_start[g];
  const int m = layout.group_size[g];
  const double rho = pc.rho_for(g);
  const bool intercept = g == 0;
  const bool cur = st.delta[g] != 0;
  bool prop;
  if (intercept) prop = true;
  else prop = rng.uniform() < (cur ? pc.p11 : pc.p01);
  if (!cur && !prop) return true;

  const double slab_sd = intercept ? pc.intercept_sd : std::sqrt(st.tau2);
  const GroupProposal gp = beta_group_proposal(g, st, z, layout, log_ytilde, slab_sd);
  const Vec b_old = st.beta.segment(s0, m);
  Vec b_new = Vec::Zero(m);
  if (prop) {
    const Vec zz = std_normal_vec(m, rng);
    b_new = gp.mean + gp.prec_chol.transpose().triangularView<Eigen::Upper>().solve(zz);
  }
  const Vec eta_new = st.eta + z.middleCols(s0, m) * (b_new - b_old);
  auto log_q = [&](bool from, bool to, const Vec& b) {
    if (intercept) return group_proposal_logpdf(gp, b);
    const double pt = from ? pc.p11 : pc.p01;
    double lq = to ? std::log(pt) : std::log1p(-pt);
    if (to) lq += group_proposal_logpdf(gp, b);
    return lq;
  };
  const double log_ratio = complete_loglik_eta(log_ytilde, eta_new, st.kappa) -
                           complete_loglik_eta(log_ytilde, st.eta, st.kappa) +
                           group_log_prior(b_new, prop, rho, slab_sd) -
                           group_log_prior(b_old, cur, rho, slab_sd) + log_q(prop, cur, b_old) -
                           log_q(cur, prop, b_new);
  if (log_ratio >= 0.0 || std::log(rng.uniform_open()) < log_ratio) {
    st.beta.segment(s0, m) = b_new;
    st.delta[g] = prop ? 1 : 0;
    st.eta = eta_new;
    return true;
  }
  return false;
}

// Number of slab coefficients currently active (intercept excluded).
inline int active_slots(const RegressionState& st, const DesignLayout& layout) {
  int j = 0;
  for (int g = 1; g < layout.groups(); ++g)
    if (st.delta[g]) j += layout.group_size[g];
  return j;
}

inline double update_tau2(const RegressionState& st, const DesignLayout& layout,
                          const RegPriorConfig& pc, RngStream& rng) {
  double ss = 0.0;
  for (int g = 1; g < layout.groups(); ++g)
    if (st.delta[g]) ss += st.beta.segment(layout.group_start[g], layout.group_size[g]).squaredNorm();
  return sample_inv_gamma(pc.a_tau + 0.5 * active_slots(st, layout), pc.b_tau + 0.5 * ss, rng);
}

// Log-scale random walk on kappa against the censored-data likelihood; returns accept flag.
inline bool update_kappa(RegressionState& st, const Vec& y, const std::vector<std::uint8_t>& event,
                         const RegPriorConfig& pc, RngStream& rng) {
  const double cur = st.kappa;
  const double prop = cur * std::exp(pc.step_kappa * std_normal(rng));
  const double lu = std::log(rng.uniform_open());
  if (prop == cur) return true;
  const double log_ratio = weibull_loglik(y, event, st.eta, prop) -
                           weibull_loglik(y, event, st.eta, cur) +
                           gamma_logpdf(prop, pc.a_kappa, pc.b_kappa) -
                           gamma_logpdf(cur, pc.a_kappa, pc.b_kappa) + std::log(prop) - std::log(cur);
  if (log_ratio >= 0.0 || lu < log_ratio) {
    st.kappa = prop;
    return true;
  }
  return false;
}

// Log prior of (beta, delta, tau2, kappa).
inline double regression_log_prior(const RegressionState& st, const DesignLayout& layout,
                                   const RegPriorConfig& pc) {
  double lp = inv_gamma_logpdf(st.tau2, pc.a_tau, pc.b_tau) +
              gamma_logpdf(st.kappa, pc.a_kappa, pc.b_kappa);
  for (int g = 0; g < layout.groups(); ++g) {
    const Vec b = st.beta.segment(layout.group_start[g], layout.group_size[g]);
    lp += group_log_prior(b, st.delta[g] != 0, pc.rho_for(g), g == 0 ? pc.intercept_sd : std::sqrt(st.tau2));
  }
  return lp;
}

}  // namespace sdpm
