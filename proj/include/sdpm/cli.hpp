#pragma once

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdpm/chainio.hpp"
#include "sdpm/dataset.hpp"
#include "sdpm/inference.hpp"
#include "sdpm/sampler.hpp"
#include "sdpm/simharness.hpp"

namespace sdpm::cli {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kCompat = 3, kNumeric = 4 };

namespace detail {

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed JSON in '") + path + "': " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::string fmt(double v) { return sdpm::detail::format_double(v); }

// Loads one or more chain files and pools their draws.
inline PosteriorChain load_chains(const std::vector<std::string>& paths, std::ostream& err) {
  if (paths.empty()) throw ConfigError("at least one --chain is required");
  PosteriorChain pooled = read_chain(paths.front());
  if (pooled.truncated) err << "warning: " << paths.front() << " ends with an incomplete record\n";
  for (std::size_t k = 1; k < paths.size(); ++k) {
    PosteriorChain c = read_chain(paths[k]);
    if (c.truncated) err << "warning: " << paths[k] << " ends with an incomplete record\n";
    if (chain_config_hash(c) != chain_config_hash(pooled))
      throw CompatibilityError("chains '" + paths.front() + "' and '" + paths[k] + "' come from different fits");
    for (auto& d : c.draws) pooled.draws.push_back(std::move(d));
  }
  if (pooled.draws.empty()) throw CompatibilityError("chain files contain no draws");
  return pooled;
}

inline void check_schema_file(const std::string& schema_path, const PosteriorChain& ch) {
  if (schema_path.empty()) return;
  const DatasetSchema user = load_schema(schema_path);
  const std::string want = ch.header.value("schema_structure_hash", std::string());
  const std::string got = hex64(schema_structure_hash(user));
  if (want != got)
    throw CompatibilityError("schema hash " + got + " does not match the chain's " + want);
}

// Parses "n=300,p=10" style overrides.
inline std::map<std::string, std::string> parse_pairs(const std::string& s) {
  std::map<std::string, std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value in '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

inline int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  }
}

}  // namespace detail

// ---------------------------------------------------------------- fit

struct FitOptions {
  std::string config, data, schema, out;
  std::optional<std::string> variant;
  std::optional<int> n_iter, burn_in, thin, n_chains, H;
  std::optional<std::uint64_t> seed;
  bool store_imputed = false;
  bool verbose = false;
};

inline int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) j = detail::read_json_file(o.config);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::string data = j.value("data", std::string());
  std::string schema = j.value("schema", std::string());
  std::string out_dir = j.value("output_dir", std::string("."));
  if (!o.config.empty()) {
    // paths in a config file are relative to the file itself
    const auto base = std::filesystem::path(o.config).parent_path();
    auto rebase = [&](std::string& f) {
      if (!f.empty() && std::filesystem::path(f).is_relative()) f = (base / f).string();
    };
    rebase(data);
    rebase(schema);
  }
  j.erase("data");
  j.erase("schema");
  j.erase("output_dir");
  if (!o.data.empty()) data = o.data;
  if (!o.schema.empty()) schema = o.schema;
  if (!o.out.empty()) out_dir = o.out;
  if (o.variant) j["variant"] = *o.variant;
  if (o.n_iter) j["n_iter"] = *o.n_iter;
  if (o.burn_in) j["burn_in"] = *o.burn_in;
  if (o.thin) j["thin"] = *o.thin;
  if (o.n_chains) j["n_chains"] = *o.n_chains;
  if (o.seed) j["seed"] = *o.seed;
  if (o.H) j["mixture"]["H"] = *o.H;
  if (o.store_imputed) j["store_imputed"] = true;
  SamplerConfig cfg = sampler_from_json(j);
  cfg.quiet = !o.verbose;
  if (data.empty()) throw ConfigError("no data file given");
  if (schema.empty()) throw ConfigError("no schema file given");

  const DatasetSchema user = load_schema(schema);
  const SurvivalDataset raw = load_csv(data, user);
  const SurvivalDataset ds = prepare_dataset(raw, cfg.variant);
  std::filesystem::create_directories(out_dir);

  std::vector<std::unique_ptr<ChainFileWriter>> writers;
  std::vector<DrawSink*> sinks;
  for (int c = 0; c < cfg.n_chains; ++c) {
    writers.push_back(std::make_unique<ChainFileWriter>(out_dir + "/chain_" + std::to_string(c) + ".bin"));
    sinks.push_back(writers.back().get());
  }
  const auto chains = run(ds, cfg, sinks);

  const DesignLayout layout = ds.schema.design_layout();
  nlohmann::json diag = nlohmann::json::array();
  for (const auto& ch : chains) {
    diag.push_back(diagnostics_to_json(ch.diagnostics, layout, ds.schema));
    if (ch.diagnostics.truncation_warning) err << "warning: " << ch.diagnostics.truncation_message << '\n';
  }
  nlohmann::json diag_doc = {{"config_hash", chains.front().header["config_hash"]}, {"chains", diag}};
  detail::write_text(out_dir + "/diagnostics.json", diag_doc.dump(2) + "\n");

  PosteriorChain pooled = chains.front();
  for (std::size_t c = 1; c < chains.size(); ++c)
    pooled.draws.insert(pooled.draws.end(), chains[c].draws.begin(), chains[c].draws.end());
  const auto sel = selection_metrics(pooled);
  std::ostringstream tab;
  tab << "# config_hash " << chains.front().header["config_hash"].get<std::string>() << '\n';
  tab << "# mean model size " << detail::fmt(sel.model_size) << '\n';
  tab << "term\tinclusion_probability\n";
  for (std::size_t k = 0; k < sel.names.size(); ++k) tab << sel.names[k] << '\t' << detail::fmt(sel.inclusion[k]) << '\n';
  detail::write_text(out_dir + "/inclusion.tsv", tab.str());

  out << "fit: " << to_string(cfg.variant) << ", n=" << ds.n() << ", p=" << ds.p() << ", " << cfg.n_chains
      << " chain(s) x " << cfg.saved_draws() << " draws -> " << out_dir << '\n';
  out << tab.str();
  return kOk;
}

// ---------------------------------------------------------------- predict

struct PredictOptions {
  std::vector<std::string> chains;
  std::string data, schema, out;
  int m_inner = 10;
  std::uint64_t seed = 1;
  std::optional<double> threshold;
  bool acquire = false;
  int min_samples = 4000;
};

inline int cmd_predict(const PredictOptions& o, std::ostream& out, std::ostream& err) {
  if (o.acquire && !o.threshold) throw ConfigError("--acquire needs --threshold");
  if (o.m_inner < 1) throw ConfigError("--m-inner must be at least 1");
  const PosteriorChain ch = detail::load_chains(o.chains, err);
  detail::check_schema_file(o.schema, ch);
  if (o.data.empty()) throw ConfigError("--data is required");
  const SurvivalDataset nd = load_csv(o.data, ch.schema, LoadOptions{false});
  const Predictor pred(ch);
  const auto dists = pred.predict(nd.x, o.m_inner, o.seed);
  std::ostringstream s;
  s << "# config_hash " << chain_config_hash(ch) << '\n';
  s << "# draws " << ch.draws.size() << ", m_inner " << o.m_inner << ", seed " << o.seed << '\n';
  s << "row\tmean_log_risk\tsd\tlower95\tupper95";
  if (o.threshold) s << "\texcludes_threshold";
  s << '\n';
  std::vector<int> flagged;
  for (int i = 0; i < nd.n(); ++i) {
    const auto r = dists[i].summary();
    s << i + 1 << '\t' << detail::fmt(r.mean) << '\t' << detail::fmt(r.sd) << '\t' << detail::fmt(r.lo) << '\t'
      << detail::fmt(r.hi);
    if (o.threshold) {
      s << '\t' << (r.excludes(*o.threshold) ? 1 : 0);
      if (!r.excludes(*o.threshold)) flagged.push_back(i);
    }
    s << '\n';
  }
  if (o.acquire) {
    s << "# acquisition trace, threshold " << detail::fmt(*o.threshold) << '\n';
    s << "row\tstep\tpredictor\tinfluence\tvalue\tlower_before\tupper_before\tlower_after\tupper_after\n";
    InfluenceOptions io;
    io.m_inner = o.m_inner;
    io.min_samples = o.min_samples;
    for (int i : flagged) {
      const Vec x = nd.x.row(i).transpose();
      const auto trace = greedy_acquire(x, ch, *o.threshold, mix_key(o.seed, {static_cast<std::uint64_t>(i)}), io);
      for (std::size_t k = 0; k < trace.size(); ++k) {
        const auto& a = trace[k];
        s << i + 1 << '\t' << k + 1 << '\t' << a.name << '\t' << detail::fmt(a.influence) << '\t'
          << detail::fmt(a.value) << '\t' << detail::fmt(a.before.lo) << '\t' << detail::fmt(a.before.hi) << '\t'
          << detail::fmt(a.after.lo) << '\t' << detail::fmt(a.after.hi) << '\n';
      }
    }
  }
  if (o.out.empty()) out << s.str();
  else detail::write_text(o.out, s.str());
  return kOk;
}

// ---------------------------------------------------------------- importance

struct ImportanceOptions {
  std::vector<std::string> chains;
  std::string data, out;
  int m_inner = 10;
  std::uint64_t seed = 1;
};

inline std::string format_importance(const ImportanceReport& rep, const std::string& hash) {
  std::ostringstream s;
  auto table = [&](const std::vector<ImportanceRow>& rows) {
    s << "predictor\tinclusion_probability\tmain_effect\tlower95\tupper95\n";
    for (const auto& r : rows)
      s << r.name << '\t' << detail::fmt(r.inclusion) << '\t' << detail::fmt(r.s.mean) << '\t'
        << detail::fmt(r.s.lo) << '\t' << detail::fmt(r.s.hi) << '\n';
  };
  s << "# config_hash " << hash << '\n';
  s << "# all predictors\n";
  table(rep.rows);
  s << "# filtered: inclusion_probability > 0.5 and main_effect > 0.02\n";
  table(rep.filtered());
  return s.str();
}

inline int cmd_importance(const ImportanceOptions& o, std::ostream& out, std::ostream& err) {
  const PosteriorChain ch = detail::load_chains(o.chains, err);
  if (o.data.empty()) throw ConfigError("--data is required");
  const SurvivalDataset ds = load_csv(o.data, ch.schema, LoadOptions{false});
  const auto rep = importance_report(ch, ds, o.seed, o.m_inner);
  const std::string text = format_importance(rep, chain_config_hash(ch));
  if (o.out.empty()) out << text;
  else detail::write_text(o.out, text);
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
  std::vector<std::string> chains;
  std::string data, truth;
  int m_inner = 10;
  std::uint64_t seed = 1;
};

// Concordance on held-out data with responses; risk R^2 when a file of true log-risks is given.
inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
  const PosteriorChain ch = detail::load_chains(o.chains, err);
  if (o.data.empty()) throw ConfigError("--data is required");
  const SurvivalDataset ds = load_csv(o.data, ch.schema);
  const auto dists = Predictor(ch).predict(ds.x, o.m_inner, o.seed);
  Vec pred(ds.n());
  for (int i = 0; i < ds.n(); ++i) pred(i) = dists[i].log_risk.mean();
  out << "# config_hash " << chain_config_hash(ch) << '\n';
  out << "metric\tvalue\n";
  out << "n\t" << ds.n() << '\n';
  out << "concordance\t" << detail::fmt(concordance(pred, ds.y, ds.event)) << '\n';
  if (!o.truth.empty()) {
    std::ifstream in(o.truth);
    if (!in) throw ConfigError("cannot open '" + o.truth + "'");
    std::vector<double> t;
    std::string line;
    while (std::getline(in, line)) {
      line = sdpm::detail::trim(line);
      if (line.empty() || line[0] == '#') continue;
      double v;
      if (!sdpm::detail::parse_double(line, v)) throw ConfigError("bad value in truth file: '" + line + "'");
      t.push_back(v);
    }
    if (static_cast<int>(t.size()) != ds.n()) throw ConfigError("truth file length does not match the data");
    out << "risk_r2\t" << detail::fmt(risk_r2(pred, Eigen::Map<Vec>(t.data(), ds.n()))) << '\n';
  }
  const auto sel = selection_metrics(ch);
  out << "model_size\t" << detail::fmt(sel.model_size) << '\n';
  return kOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  int case_id = 0;
  int replicates = 2;
  std::string methods = "MVN-MAR,MVN-MNAR,sDPM-MAR,sDPM-MNAR";
  std::string scale;
  std::string source, out, write_source;
  std::optional<int> n_iter, burn_in, thin, H;
  int m_inner = 5;
  std::uint64_t seed = 1;
};

inline int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  if (!o.write_source.empty()) {
    write_surrogate_source(o.write_source, 3000, 50, o.seed);
    out << "wrote " << o.write_source << '\n';
    return kOk;
  }
  StudyConfig sc;
  sc.sim.case_id = o.case_id;
  for (const auto& [k, v] : detail::parse_pairs(o.scale)) {
    if (k == "n") sc.sim.n = detail::to_int(k, v);
    else if (k == "p") sc.sim.p = detail::to_int(k, v);
    else if (k == "n_test") sc.sim.n_test = detail::to_int(k, v);
    else if (k == "signal") sc.sim.signal_per_block = detail::to_int(k, v);
    else if (k == "mnar") sc.sim.mnar_per_block = detail::to_int(k, v);
    else if (k == "binary") sc.sim.n_binary = detail::to_int(k, v);
    else if (k == "continuous_signal") sc.sim.continuous_signal = detail::to_int(k, v);
    else if (k == "continuous_mnar") sc.sim.continuous_mnar = detail::to_int(k, v);
    else throw ConfigError("unknown scale key '" + k + "'");
  }
  sc.sim.empirical_path = o.source;
  sc.replicates = o.replicates;
  sc.seed = o.seed;
  sc.m_inner = o.m_inner;
  sc.methods.clear();
  std::stringstream ms(o.methods);
  std::string m;
  while (std::getline(ms, m, ','))
    if (!m.empty()) sc.methods.push_back(parse_variant(m));
  sc.sampler.n_iter = o.n_iter.value_or(2000);
  sc.sampler.burn_in = o.burn_in.value_or(sc.sampler.n_iter / 4);
  sc.sampler.thin = o.thin.value_or(10);
  if (o.H) sc.sampler.mixture.H = *o.H;
  sc.sampler.validate();
  sc.sim.validate();
  const StudyResult r = run_study(sc, &err);
  std::ostringstream tab;
  tab << "# case " << sc.sim.case_id << ", n=" << sc.sim.n << ", p=" << sc.sim.p << ", replicates " << sc.replicates
      << ", seed " << sc.seed << '\n';
  write_study_table(r, tab);
  out << tab.str();
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    detail::write_text(o.out + "/table.tsv", tab.str());
    std::ostringstream dump;
    write_replicate_dump(r, dump);
    detail::write_text(o.out + "/replicates.tsv", dump.str());
    detail::write_text(o.out + "/summary.json", study_summary_json(sc, r).dump(2) + "\n");
  }
  return kOk;
}

// ---------------------------------------------------------------- entry point

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CompatibilityError*>(&e)) return kCompat;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const ParseError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const InvalidArgument*>(&e))
    return kConfig;
  return kFailure;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian Weibull survival regression with missing mixed predictors", "sdpm"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: SDPM_THREADS or all cores)");

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "run the sampler and write chain files");
  fit->add_option("config,--config", fo.config, "JSON run configuration");
  fit->add_option("--data", fo.data, "training CSV");
  fit->add_option("--schema", fo.schema, "schema JSON");
  fit->add_option("--out", fo.out, "output directory");
  fit->add_option("--variant", fo.variant, "MVN-MAR, MVN-MNAR, sDPM-MAR or sDPM-MNAR");
  fit->add_option("--iter", fo.n_iter, "iterations");
  fit->add_option("--burn-in", fo.burn_in, "burn-in iterations");
  fit->add_option("--thin", fo.thin, "thinning interval");
  fit->add_option("--chains", fo.n_chains, "number of chains");
  fit->add_option("--H", fo.H, "mixture truncation level");
  fit->add_option("--seed", fo.seed, "random seed");
  fit->add_flag("--store-imputed", fo.store_imputed, "store imputed predictors with every draw");
  fit->add_flag("-v,--verbose", fo.verbose, "progress on stderr");

  PredictOptions po;
  auto* predict = app.add_subcommand("predict", "risk distributions for new rows");
  predict->add_option("--chain", po.chains, "chain file (repeatable)")->required();
  predict->add_option("--data", po.data, "CSV of new rows")->required();
  predict->add_option("--schema", po.schema, "schema JSON to check against the chain");
  predict->add_option("--out", po.out, "output file (default stdout)");
  predict->add_option("--m-inner", po.m_inner, "imputation sweeps per draw");
  predict->add_option("--seed", po.seed, "random seed");
  predict->add_option("--threshold", po.threshold, "log-risk decision threshold");
  predict->add_flag("--acquire", po.acquire, "greedy acquisition for rows whose interval covers the threshold");
  predict->add_option("--min-samples", po.min_samples, "predictive samples used for influence indices");

  ImportanceOptions io;
  auto* importance = app.add_subcommand("importance", "inclusion probabilities and main-effect indices");
  importance->add_option("--chain", io.chains, "chain file (repeatable)")->required();
  importance->add_option("--data", io.data, "training CSV")->required();
  importance->add_option("--out", io.out, "output file (default stdout)");
  importance->add_option("--m-inner", io.m_inner, "imputation sweeps per draw");
  importance->add_option("--seed", io.seed, "random seed");

  EvaluateOptions eo;
  auto* evaluate = app.add_subcommand("evaluate", "accuracy on held-out data");
  evaluate->add_option("--chain", eo.chains, "chain file (repeatable)")->required();
  evaluate->add_option("--data", eo.data, "CSV with responses")->required();
  evaluate->add_option("--truth", eo.truth, "file of true log-risks, one per row");
  evaluate->add_option("--m-inner", eo.m_inner, "imputation sweeps per draw");
  evaluate->add_option("--seed", eo.seed, "random seed");

  SimulateOptions so;
  auto* simulate = app.add_subcommand("simulate", "simulation study");
  auto* case_opt = simulate->add_option("--case", so.case_id, "simulation case 1-8")->check(CLI::Range(1, 8));
  simulate->add_option("--replicates", so.replicates, "replicate data sets")->check(CLI::PositiveNumber);
  simulate->add_option("--methods", so.methods, "comma-separated model variants");
  simulate->add_option("--scale", so.scale, "overrides such as n=300,p=10");
  simulate->add_option("--source", so.source, "empirical predictor CSV for cases 5-8");
  simulate->add_option("--out", so.out, "output directory");
  simulate->add_option("--iter", so.n_iter, "iterations per fit");
  simulate->add_option("--burn-in", so.burn_in, "burn-in per fit");
  simulate->add_option("--thin", so.thin, "thinning interval");
  simulate->add_option("--H", so.H, "mixture truncation level");
  simulate->add_option("--m-inner", so.m_inner, "imputation sweeps per draw for prediction");
  simulate->add_option("--seed", so.seed, "random seed");
  simulate->add_option("--write-source", so.write_source, "write a synthetic empirical source CSV and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }
  if (threads > 0) setenv("SDPM_THREADS", std::to_string(threads).c_str(), 1);
  try {
    if (fit->parsed()) return cmd_fit(fo, out, err);
    if (predict->parsed()) return cmd_predict(po, out, err);
    if (importance->parsed()) return cmd_importance(io, out, err);
    if (evaluate->parsed()) return cmd_evaluate(eo, out, err);
    if (simulate->parsed()) {
      if (so.write_source.empty() && case_opt->count() == 0) throw ConfigError("--case is required");
      return cmd_simulate(so, out, err);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    if (!dynamic_cast<const Error*>(&e)) msg = "error: " + msg;
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    err << msg << '\n';
    return exit_code_for(e);
  }
  return kFailure;
}

}  // namespace sdpm::cli
