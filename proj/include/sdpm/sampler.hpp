#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "sdpm/dataset.hpp"
#include "sdpm/latent.hpp"
#include "sdpm/mixture.hpp"
#include "sdpm/parallel.hpp"
#include "sdpm/survreg.hpp"

namespace sdpm {

enum class ModelVariant { mvn_mar, mvn_mnar, sdpm_mar, sdpm_mnar };

inline bool is_mnar(ModelVariant v) { return v == ModelVariant::mvn_mnar || v == ModelVariant::sdpm_mnar; }
inline bool is_sdpm(ModelVariant v) { return v == ModelVariant::sdpm_mar || v == ModelVariant::sdpm_mnar; }

inline std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::mvn_mar: return "MVN-MAR";
    case ModelVariant::mvn_mnar: return "MVN-MNAR";
    case ModelVariant::sdpm_mar: return "sDPM-MAR";
    case ModelVariant::sdpm_mnar: return "sDPM-MNAR";
  }
  return "?";
}

inline ModelVariant parse_variant(const std::string& s) {
  for (auto v : {ModelVariant::mvn_mar, ModelVariant::mvn_mnar, ModelVariant::sdpm_mar,
                 ModelVariant::sdpm_mnar})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown model variant '" + s + "'");
}

struct SamplerConfig {
  int n_iter = 2000;
  int burn_in = 500;
  int thin = 5;
  int n_chains = 1;
  std::uint64_t seed = 1;
  ModelVariant variant = ModelVariant::sdpm_mnar;
  PriorConfig mixture;
  RegPriorConfig regression;
  bool store_imputed = false;
  int init_components = 10;
  bool fix_hyper = false;  // hold varphi, eta, psi at their initial values
  bool quiet = true;       // progress lines on stderr when false

  int effective_H() const { return is_sdpm(variant) ? mixture.H : 1; }
  int saved_draws() const { return (n_iter - burn_in) / thin; }

  void validate() const {
    if (n_iter < 1) throw ConfigError("n_iter must be positive");
    if (burn_in < 0 || burn_in >= n_iter) throw ConfigError("burn_in must satisfy 0 <= burn_in < n_iter");
    if (thin < 1) throw ConfigError("thin must be at least 1");
    if (n_chains < 1) throw ConfigError("n_chains must be at least 1");
    if (init_components < 1) throw ConfigError("init_components must be at least 1");
    mixture.validate();
    if (is_sdpm(variant) && mixture.H < 2) throw ConfigError("sDPM variants need H >= 2");
    regression.validate();
  }
};

// ---------------------------------------------------------------- config JSON

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

inline nlohmann::json mixture_to_json(const PriorConfig& m) {
  return {{"H", m.H},           {"a_conc", m.a_conc},       {"b_conc", m.b_conc},
          {"a_varphi", m.a_varphi}, {"b_varphi", m.b_varphi}, {"a_eta", m.a_eta},
          {"b_eta", m.b_eta},   {"a_psi", m.a_psi},         {"b_psi", m.b_psi},
          {"rho_select", m.rho_select}, {"pi_swap", m.pi_swap}, {"step_varphi", m.step_varphi},
          {"step_eta", m.step_eta}, {"step_psi", m.step_psi}};
}

inline nlohmann::json regression_to_json(const RegPriorConfig& r) {
  return {{"rho", r.rho},         {"a_tau", r.a_tau},     {"b_tau", r.b_tau},
          {"a_kappa", r.a_kappa}, {"b_kappa", r.b_kappa}, {"intercept_sd", r.intercept_sd},
          {"p01", r.p01},         {"p11", r.p11},         {"step_kappa", r.step_kappa}};
}

inline void mixture_from_json(const nlohmann::json& j, PriorConfig& m) {
  detail::check_keys(j, {"H", "a_conc", "b_conc", "a_varphi", "b_varphi", "a_eta", "b_eta", "a_psi",
                         "b_psi", "rho_select", "pi_swap", "step_varphi", "step_eta", "step_psi"},
                     "mixture");
  detail::read_opt(j, "H", m.H);
  detail::read_opt(j, "a_conc", m.a_conc);
  detail::read_opt(j, "b_conc", m.b_conc);
  detail::read_opt(j, "a_varphi", m.a_varphi);
  detail::read_opt(j, "b_varphi", m.b_varphi);
  detail::read_opt(j, "a_eta", m.a_eta);
  detail::read_opt(j, "b_eta", m.b_eta);
  detail::read_opt(j, "a_psi", m.a_psi);
  detail::read_opt(j, "b_psi", m.b_psi);
  detail::read_opt(j, "rho_select", m.rho_select);
  detail::read_opt(j, "pi_swap", m.pi_swap);
  detail::read_opt(j, "step_varphi", m.step_varphi);
  detail::read_opt(j, "step_eta", m.step_eta);
  detail::read_opt(j, "step_psi", m.step_psi);
}

inline void regression_from_json(const nlohmann::json& j, RegPriorConfig& r) {
  detail::check_keys(j, {"rho", "a_tau", "b_tau", "a_kappa", "b_kappa", "intercept_sd", "p01", "p11",
                         "step_kappa"},
                     "regression");
  detail::read_opt(j, "rho", r.rho);
  detail::read_opt(j, "a_tau", r.a_tau);
  detail::read_opt(j, "b_tau", r.b_tau);
  detail::read_opt(j, "a_kappa", r.a_kappa);
  detail::read_opt(j, "b_kappa", r.b_kappa);
  detail::read_opt(j, "intercept_sd", r.intercept_sd);
  detail::read_opt(j, "p01", r.p01);
  detail::read_opt(j, "p11", r.p11);
  detail::read_opt(j, "step_kappa", r.step_kappa);
}

inline nlohmann::json sampler_to_json(const SamplerConfig& c) {
  return {{"n_iter", c.n_iter},
          {"burn_in", c.burn_in},
          {"thin", c.thin},
          {"n_chains", c.n_chains},
          {"seed", c.seed},
          {"variant", to_string(c.variant)},
          {"store_imputed", c.store_imputed},
          {"init_components", c.init_components},
          {"fix_hyper", c.fix_hyper},
          {"mixture", mixture_to_json(c.mixture)},
          {"regression", regression_to_json(c.regression)}};
}

// Reads sampler keys; other top-level keys listed in `extra` are tolerated.
inline SamplerConfig sampler_from_json(const nlohmann::json& j,
                                       std::initializer_list<const char*> extra = {}) {
  std::vector<const char*> allowed = {"n_iter", "burn_in", "thin", "n_chains", "seed", "variant",
                                      "store_imputed", "init_components", "fix_hyper", "mixture",
                                      "regression"};
  allowed.insert(allowed.end(), extra.begin(), extra.end());
  if (!j.is_object()) throw ConfigError("config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "'");
  }
  SamplerConfig c;
  try {
    detail::read_opt(j, "n_iter", c.n_iter);
    detail::read_opt(j, "burn_in", c.burn_in);
    detail::read_opt(j, "thin", c.thin);
    detail::read_opt(j, "n_chains", c.n_chains);
    detail::read_opt(j, "seed", c.seed);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    detail::read_opt(j, "store_imputed", c.store_imputed);
    detail::read_opt(j, "init_components", c.init_components);
    detail::read_opt(j, "fix_hyper", c.fix_hyper);
    if (j.contains("mixture")) mixture_from_json(j.at("mixture"), c.mixture);
    if (j.contains("regression")) regression_from_json(j.at("regression"), c.regression);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- state

struct Counter {
  long proposed = 0;
  long accepted = 0;
  void add(bool ok) {
    ++proposed;
    accepted += ok ? 1 : 0;
  }
  double rate() const { return proposed ? static_cast<double>(accepted) / proposed : 0.0; }
};

struct Diagnostics {
  std::vector<Counter> beta_group;
  Counter kappa, varphi, eta, psi, selection;
  std::vector<Counter> missing_latent;  // per predictor
  long selection_failures = 0;
  bool truncation_warning = false;
  std::string truncation_message;

  Counter missing_total() const {
    Counter c;
    for (const auto& m : missing_latent) {
      c.proposed += m.proposed;
      c.accepted += m.accepted;
    }
    return c;
  }
};

inline nlohmann::json diagnostics_to_json(const Diagnostics& d, const DesignLayout& layout,
                                          const DatasetSchema& schema) {
  auto cj = [](const Counter& c) {
    return nlohmann::json{{"proposed", c.proposed}, {"accepted", c.accepted}, {"rate", c.rate()}};
  };
  nlohmann::json j;
  j["beta_group"] = nlohmann::json::object();
  for (int g = 0; g < static_cast<int>(d.beta_group.size()); ++g)
    j["beta_group"][layout.group_name[g]] = cj(d.beta_group[g]);
  j["kappa"] = cj(d.kappa);
  j["varphi"] = cj(d.varphi);
  j["eta"] = cj(d.eta);
  j["psi"] = cj(d.psi);
  j["selection"] = cj(d.selection);
  j["selection_failures"] = d.selection_failures;
  j["missing_latent"] = nlohmann::json::object();
  for (int v = 0; v < static_cast<int>(d.missing_latent.size()); ++v)
    if (d.missing_latent[v].proposed > 0) j["missing_latent"][schema.variables[v].name] = cj(d.missing_latent[v]);
  j["missing_latent_total"] = cj(d.missing_total());
  j["truncation_warning"] = d.truncation_warning;
  j["truncation_message"] = d.truncation_message;
  return j;
}

struct ModelState {
  RegressionState reg;
  MixtureState mix;
  LatentMatrix latent;
  Mat z;  // design, n x J
  Vec log_ytilde;
};

// Per-draw snapshot persisted to the chain.
struct Draw {
  std::uint64_t iteration = 0;
  double tau2 = 0, kappa = 0, concentration = 0, varphi = 0, eta = 0, psi = 0, log_joint = 0;
  Vec beta;
  std::vector<std::uint8_t> delta;
  std::vector<std::uint8_t> gamma;
  Vec pi;
  std::vector<Vec> means;
  std::vector<Mat> precisions;
  RowMat imputed;  // n x p decoded predictors (empty unless stored)
};

// Standardizes and, for MNAR variants, appends missingness indicators.
inline SurvivalDataset prepare_dataset(const SurvivalDataset& raw, ModelVariant variant) {
  SurvivalDataset ds = standardize(raw);
  if (is_mnar(variant)) ds = augment_missingness_indicators(ds);
  return ds;
}

namespace detail {

inline void refresh_design_row(ModelState& s, const DesignBuilder& b, int i) {
  b.fill(s.latent.decoded.row(i).data(), s.z.row(i));
  s.reg.eta(i) = s.z.row(i).dot(s.reg.beta);
}

}  // namespace detail

inline void rebuild_design(ModelState& s, const DesignBuilder& b) {
  const int n = s.latent.n();
  s.z.resize(n, b.length());
  s.reg.eta.resize(n);
  for (int i = 0; i < n; ++i) detail::refresh_design_row(s, b, i);
}

inline Diagnostics make_diagnostics(const DatasetSchema& schema) {
  Diagnostics d;
  d.beta_group.resize(schema.design_layout().groups());
  d.missing_latent.resize(schema.p());
  return d;
}

// Starting state: latents from data, components from a conditional draw given
// random initial assignments, regression at the null model.
inline ModelState initialize_state(const SurvivalDataset& data, const SamplerConfig& cfg,
                                   std::uint64_t chain) {
  ModelState s;
  RngStream rng = stream(cfg.seed, chain, 0, Step::init);
  s.latent = initialize_latents(data, rng);
  const SlotMap& map = s.latent.slot_map;
  auto& m = s.mix;
  m.H = cfg.effective_H();
  m.gamma.assign(data.p(), 1);
  m.varphi = 1.0;
  m.eta = map.total + 2.0;
  m.psi = 1.0;
  m.concentration = 1.0;
  const int k0 = std::min(m.H, cfg.init_components);
  m.assign.resize(data.n());
  for (int i = 0; i < data.n(); ++i) m.assign[i] = std::min(k0 - 1, static_cast<int>(rng.uniform() * k0));
  update_stick_weights(m, rng);
  const SuffStats suff = sufficient_stats(s.latent.values, m.assign, m.H);
  draw_conjugate(m, suff, map, rng);
  assemble_components(m, map);

  const DesignLayout layout = data.schema.design_layout();
  s.reg.beta = Vec::Zero(layout.length);
  s.reg.delta.assign(layout.groups(), 0);
  s.reg.delta[0] = 1;
  s.reg.tau2 = 1.0;
  s.reg.kappa = 1.0;
  if (data.has_response && data.n() > 0) {
    double events = 0.0;
    for (auto e : data.event) events += e;
    if (events > 0) s.reg.beta(0) = std::log(events / data.y.sum());
  }
  const DesignBuilder builder(data.schema);
  rebuild_design(s, builder);
  s.reg.ytilde = data.y;
  s.log_ytilde = data.y.array().log();
  return s;
}

// One full sweep in the fixed update order.
inline void sweep(ModelState& s, const SurvivalDataset& data, const SamplerConfig& cfg,
                  std::uint64_t chain, std::uint64_t iter, Diagnostics* diag,
                  const DesignBuilder& builder) {
  const int n = data.n();
  const SlotMap& map = s.latent.slot_map;
  const DesignLayout& layout = builder.layout;
  auto& reg = s.reg;
  auto& mix = s.mix;
  const std::uint64_t seed = cfg.seed;

  // (1) augmented response
  parallel_for(n, [&](int i) {
    if (data.event[i]) {
      reg.ytilde(i) = data.y(i);
    } else {
      RngStream r = stream(seed, chain, iter, Step::censor, i);
      reg.ytilde(i) = impute_censored(data.y(i), std::exp(reg.eta(i)), reg.kappa, r.uniform_open());
    }
    s.log_ytilde(i) = std::log(reg.ytilde(i));
  });

  // (2) coefficient groups
  for (int g = 0; g < layout.groups(); ++g) {
    RngStream r = stream(seed, chain, iter, Step::beta, g);
    const bool ok = update_beta_group(g, reg, s.z, layout, s.log_ytilde, cfg.regression, r);
    if (diag) diag->beta_group[g].add(ok);
  }

  // (3) slab variance
  {
    RngStream r = stream(seed, chain, iter, Step::tau2);
    reg.tau2 = update_tau2(reg, layout, cfg.regression, r);
  }

  // (4) Weibull shape
  {
    RngStream r = stream(seed, chain, iter, Step::kappa);
    const bool ok = update_kappa(reg, data.y, data.event, cfg.regression, r);
    if (diag) diag->kappa.add(ok);
  }

  // (5) sticks, (6) concentration
  {
    RngStream r = stream(seed, chain, iter, Step::sticks);
    if (mix.H > 1) {
      update_stick_weights(mix, r);
      RngStream rc = stream(seed, chain, iter, Step::concentration);
      mix.concentration = update_concentration(mix.v, cfg.mixture, rc);
    } else {
      mix.v = Vec::Ones(1);
      mix.pi = Vec::Ones(1);
    }
  }

  // (7) selection move (sDPM) and conditional redraw of component parameters
  {
    RngStream r = stream(seed, chain, iter, Step::selection);
    const SuffStats suff = sufficient_stats(s.latent.values, mix.assign, mix.H);
    if (is_sdpm(cfg.variant)) {
      const RjResult res = rj_update_selection(mix, suff, cfg.mixture, map, r);
      if (diag) {
        diag->selection.add(res.accepted);
        diag->selection_failures += res.failed ? 1 : 0;
      }
    } else {
      draw_conjugate(mix, suff, map, r);
      assemble_components(mix, map);
    }
  }

  // (8) hyperparameters
  if (!cfg.fix_hyper) {
    RngStream r = stream(seed, chain, iter, Step::hyper);
    const HyperTerms t = hyper_terms(mix, map);
    const bool a1 = update_hyper(mix, Hyper::varphi, cfg.mixture.step_varphi, cfg.mixture, t, r);
    const bool a2 = update_hyper(mix, Hyper::eta, cfg.mixture.step_eta, cfg.mixture, t, r);
    const bool a3 = update_hyper(mix, Hyper::psi, cfg.mixture.step_psi, cfg.mixture, t, r);
    if (diag) {
      diag->varphi.add(a1);
      diag->eta.add(a2);
      diag->psi.add(a3);
    }
  }

  // (9) assignments
  if (mix.H > 1) {
    update_assignments(s.latent.values, mix,
                       [&](int i) { return stream(seed, chain, iter, Step::assign, i); });
  } else {
    mix.assign.assign(n, 0);
  }

  // (10) latent rows
  const int p = data.p();
  std::vector<int> prop(static_cast<std::size_t>(n) * p, 0);
  std::vector<int> acc(static_cast<std::size_t>(n) * p, 0);
  parallel_for(n, [&](int i) {
    RngStream r = stream(seed, chain, iter, Step::latent, i);
    RowRef row = s.latent.row(i);
    const Component& c = mix.comp[mix.assign[i]];
    update_row_observed(row, c.mean, c.precision, r);
    bool has_free = false;
    for (int j = 0; j < p; ++j) has_free = has_free || row.status[j] == CellStatus::free;
    if (has_free) {
      Vec zrow(builder.length());
      auto loglik = [&](const double* x) {
        builder.fill(x, zrow);
        return weibull_loglik_row(data.y(i), data.event[i] != 0, zrow.dot(reg.beta), reg.kappa);
      };
      RowMissingStats st;
      st.proposed.assign(p, 0);
      st.accepted.assign(p, 0);
      update_row_missing(row, c.mean, c.precision, loglik, data.has_response, r, &st);
      for (int j = 0; j < p; ++j) {
        prop[static_cast<std::size_t>(i) * p + j] = st.proposed[j];
        acc[static_cast<std::size_t>(i) * p + j] = st.accepted[j];
      }
    }
    detail::refresh_design_row(s, builder, i);
  });
  if (diag) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) {
        diag->missing_latent[j].proposed += prop[static_cast<std::size_t>(i) * p + j];
        diag->missing_latent[j].accepted += acc[static_cast<std::size_t>(i) * p + j];
      }
  }
}

// Log joint density of the observed response, latents and parameters (up to constants
// shared by all draws).
inline double log_joint(const ModelState& s, const SurvivalDataset& data, const SamplerConfig& cfg) {
  const DesignLayout layout = data.schema.design_layout();
  double lj = 0.0;
  if (data.has_response && data.n() > 0) lj += weibull_loglik(data.y, data.event, s.reg.eta, s.reg.kappa);
  lj += regression_log_prior(s.reg, layout, cfg.regression);
  const auto& m = s.mix;
  for (int i = 0; i < data.n(); ++i) {
    const int h = m.assign[i];
    lj += std::log(m.pi(h)) + component_logpdf(m.comp[h], s.latent.values.row(i).data());
  }
  if (m.H > 1) {
    for (int h = 0; h < m.H - 1; ++h) lj += beta_logpdf(m.v(h), 1.0, m.concentration);
    lj += gamma_logpdf(m.concentration, cfg.mixture.a_conc, cfg.mixture.b_conc);
  }
  const HyperTerms t = hyper_terms(m, s.latent.slot_map);
  lj += log_hyper_target(m.varphi, m.eta, m.psi, t, cfg.mixture);
  return lj;
}

inline Draw snapshot(const ModelState& s, const SurvivalDataset& data, const SamplerConfig& cfg,
                     std::uint64_t iter) {
  Draw d;
  d.iteration = iter;
  d.tau2 = s.reg.tau2;
  d.kappa = s.reg.kappa;
  d.concentration = s.mix.concentration;
  d.varphi = s.mix.varphi;
  d.eta = s.mix.eta;
  d.psi = s.mix.psi;
  d.beta = s.reg.beta;
  d.delta = s.reg.delta;
  d.gamma = s.mix.gamma;
  d.pi = s.mix.pi;
  for (const auto& c : s.mix.comp) {
    d.means.push_back(c.mean);
    d.precisions.push_back(c.precision);
  }
  if (cfg.store_imputed) d.imputed = s.latent.decoded;
  d.log_joint = log_joint(s, data, cfg);
  if (!std::isfinite(d.log_joint)) throw NumericError("non-finite log joint density at iteration " + std::to_string(iter));
  return d;
}

struct PosteriorChain {
  nlohmann::json header;  // config echo, schema, dimensions
  DatasetSchema schema;   // fitted (standardized, possibly augmented) schema
  std::vector<Draw> draws;
  Diagnostics diagnostics;
  bool truncated = false;  // set by readers when the file ended mid-record
};

// First component with posterior-mean weight below 0.01 should leave about half of
// the H weights negligible; otherwise H may be too small.
inline void truncation_check(PosteriorChain& ch, int H) {
  if (H <= 1 || ch.draws.empty()) return;
  Vec mean_pi = Vec::Zero(H);
  for (const auto& d : ch.draws) mean_pi += d.pi;
  mean_pi /= static_cast<double>(ch.draws.size());
  int first = H;
  for (int h = 0; h < H; ++h)
    if (mean_pi(h) < 0.01) {
      first = h;
      break;
    }
  if (first > H / 2) {
    ch.diagnostics.truncation_warning = true;
    ch.diagnostics.truncation_message = "component weights are not negligible past index " +
                                        std::to_string(first) + " of H=" + std::to_string(H) +
                                        "; consider a larger truncation level";
  }
}

// Receives draws as they are produced (used for incremental persistence).
struct DrawSink {
  virtual ~DrawSink() = default;
  virtual void begin(const PosteriorChain& header_only) = 0;
  virtual void draw(const Draw& d) = 0;
  virtual void finish(const PosteriorChain& chain) = 0;
};

inline nlohmann::json chain_header(const SurvivalDataset& data, const SamplerConfig& cfg,
                                   std::uint64_t chain) {
  const DesignLayout layout = data.schema.design_layout();
  nlohmann::json h;
  h["config"] = sampler_to_json(cfg);
  h["schema"] = schema_to_json(data.schema, true);
  h["schema_structure_hash"] = hex64(schema_structure_hash(data.schema));
  h["chain"] = chain;
  h["n"] = data.n();
  h["p"] = data.p();
  h["latent_dim"] = data.schema.latent_dim();
  h["design_length"] = layout.length;
  h["groups"] = layout.group_name;
  h["H"] = cfg.effective_H();
  h["store_imputed"] = cfg.store_imputed;
  h["config_hash"] = hex64(fnv1a(h["config"].dump() + h["schema"].dump()));
  return h;
}

inline PosteriorChain run_chain(const SurvivalDataset& data, const SamplerConfig& cfg,
                                std::uint64_t chain, DrawSink* sink = nullptr,
                                std::function<void(ModelState&)> on_init = {}) {
  cfg.validate();
  PosteriorChain out;
  out.header = chain_header(data, cfg, chain);
  out.schema = data.schema;
  out.diagnostics = make_diagnostics(data.schema);
  if (sink) sink->begin(out);
  ModelState s = initialize_state(data, cfg, chain);
  if (on_init) on_init(s);
  const DesignBuilder builder(data.schema);
  for (int t = 1; t <= cfg.n_iter; ++t) {
    const bool post = t > cfg.burn_in;
    sweep(s, data, cfg, chain, static_cast<std::uint64_t>(t), post ? &out.diagnostics : nullptr, builder);
    if (post && (t - cfg.burn_in) % cfg.thin == 0) {
      out.draws.push_back(snapshot(s, data, cfg, t));
      if (sink) sink->draw(out.draws.back());
    }
    if (!cfg.quiet && (t % 100 == 0 || t == cfg.n_iter))
      std::cerr << "chain " << chain << ": iteration " << t << "/" << cfg.n_iter << '\n';
  }
  truncation_check(out, cfg.effective_H());
  if (sink) sink->finish(out);
  return out;
}

// Runs all chains concurrently; sinks[c] may be null.
inline std::vector<PosteriorChain> run(const SurvivalDataset& data, const SamplerConfig& cfg,
                                       const std::vector<DrawSink*>& sinks = {}) {
  cfg.validate();
  std::vector<PosteriorChain> chains(cfg.n_chains);
  std::vector<std::exception_ptr> errors(cfg.n_chains);
  auto body = [&](int c) {
    try {
      DrawSink* sink = c < static_cast<int>(sinks.size()) ? sinks[c] : nullptr;
      chains[c] = run_chain(data, cfg, static_cast<std::uint64_t>(c), sink);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (cfg.n_chains == 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    for (int c = 0; c < cfg.n_chains; ++c) pool.emplace_back(body, c);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return chains;
}

}  // namespace sdpm
