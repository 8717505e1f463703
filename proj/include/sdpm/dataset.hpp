#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sdpm/error.hpp"
#include "sdpm/linalg.hpp"

namespace sdpm {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

enum class VarKind { categorical, continuous };

struct VariableMeta {
  std::string name;
  VarKind kind = VarKind::continuous;
  int levels = 0;
  // Bounds on the working (possibly standardized) scale.
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool is_missingness_indicator = false;
  bool include_square_term = false;
  std::string indicator_for;  // source predictor of a missingness indicator

  static VariableMeta categorical(std::string name, int levels) {
    VariableMeta v;
    v.name = std::move(name);
    v.kind = VarKind::categorical;
    v.levels = levels;
    return v;
  }
  static VariableMeta continuous(std::string name,
                                 double lower = -std::numeric_limits<double>::infinity(),
                                 double upper = std::numeric_limits<double>::infinity(),
                                 bool square = false) {
    VariableMeta v;
    v.name = std::move(name);
    v.kind = VarKind::continuous;
    v.lower = lower;
    v.upper = upper;
    v.include_square_term = square;
    return v;
  }

  bool is_categorical() const { return kind == VarKind::categorical; }
  int slots() const { return is_categorical() ? levels - 1 : 1; }

  void validate() const {
    if (name.empty()) throw SchemaError("variable with empty name");
    if (is_categorical()) {
      if (levels < 2) throw SchemaError("categorical '" + name + "' needs at least 2 levels");
      if (include_square_term) throw SchemaError("square term on categorical '" + name + "'");
    } else if (!(lower < upper)) {
      throw SchemaError("continuous '" + name + "' needs lower < upper");
    }
    if (is_missingness_indicator && !(is_categorical() && levels == 2))
      throw SchemaError("missingness indicator '" + name + "' must be binary categorical");
  }
};

enum class InteractionKind { product, ratio, square };

inline std::string to_string(InteractionKind k) {
  switch (k) {
    case InteractionKind::product: return "product";
    case InteractionKind::ratio: return "ratio";
    case InteractionKind::square: return "square";
  }
  return "?";
}

struct InteractionSpec {
  InteractionKind kind = InteractionKind::product;
  std::vector<std::string> operands;
  std::string output_name;
};

struct Standardization {
  double center = 0.0;
  double scale = 1.0;
};

// Column layout of the regression design (groups are the spike-and-slab units).
struct DesignLayout {
  int length = 0;
  std::vector<int> group_start;
  std::vector<int> group_size;
  std::vector<std::string> group_name;
  // internal variable index for main-effect groups; -1 intercept; -2 - k for interaction k
  std::vector<int> group_source;
  int groups() const { return static_cast<int>(group_start.size()); }
};

struct DatasetSchema {
  std::vector<VariableMeta> variables;  // categoricals first
  std::vector<InteractionSpec> interactions;
  std::string response_name = "time";
  std::string event_name = "event";
  // user_order[k] = internal index of the k-th variable in user-facing order
  std::vector<int> user_order;
  std::vector<Standardization> standardization;  // per internal variable

  int p() const { return static_cast<int>(variables.size()); }
  int num_categorical() const {
    return static_cast<int>(std::count_if(variables.begin(), variables.end(),
                                          [](const VariableMeta& v) { return v.is_categorical(); }));
  }
  int index_of(const std::string& name) const {
    for (int j = 0; j < p(); ++j)
      if (variables[j].name == name) return j;
    return -1;
  }
  int latent_dim() const {
    int s = 0;
    for (const auto& v : variables) s += v.slots();
    return s;
  }
  bool has_indicators() const {
    return std::any_of(variables.begin(), variables.end(),
                       [](const VariableMeta& v) { return v.is_missingness_indicator; });
  }

  // Moves categoricals ahead of continuous variables and records user order.
  void canonicalize() {
    const int n = p();
    if (standardization.size() != variables.size()) standardization.assign(n, Standardization{});
    std::vector<std::string> user_names;
    if (user_order.size() == variables.size()) {
      for (int k = 0; k < n; ++k) user_names.push_back(variables[user_order[k]].name);
    } else {
      for (const auto& v : variables) user_names.push_back(v.name);
    }
    std::vector<int> idx(n);
    for (int j = 0; j < n; ++j) idx[j] = j;
    std::stable_partition(idx.begin(), idx.end(),
                          [&](int j) { return variables[j].is_categorical(); });
    std::vector<VariableMeta> vars;
    std::vector<Standardization> st;
    for (int j : idx) {
      vars.push_back(variables[j]);
      st.push_back(standardization[j]);
    }
    variables = std::move(vars);
    standardization = std::move(st);
    user_order.assign(n, -1);
    for (int k = 0; k < n; ++k) user_order[k] = index_of(user_names[k]);
  }

  void validate() const {
    std::set<std::string> names;
    bool seen_continuous = false;
    for (const auto& v : variables) {
      v.validate();
      if (!names.insert(v.name).second) throw SchemaError("duplicate variable '" + v.name + "'");
      if (v.is_categorical() && seen_continuous)
        throw SchemaError("categorical '" + v.name + "' after a continuous variable");
      if (!v.is_categorical()) seen_continuous = true;
      if (v.is_missingness_indicator) {
        const int s = index_of(v.indicator_for);
        if (s < 0 || variables[s].is_missingness_indicator)
          throw SchemaError("indicator '" + v.name + "' has no source predictor");
      }
    }
    if (response_name.empty() || event_name.empty() || response_name == event_name)
      throw SchemaError("response and event column names must be distinct and non-empty");
    if (names.count(response_name) || names.count(event_name))
      throw SchemaError("response/event name collides with a predictor");
    for (const auto& it : interactions) {
      if (it.output_name.empty()) throw SchemaError("interaction with empty name");
      if (!names.insert(it.output_name).second)
        throw SchemaError("duplicate name '" + it.output_name + "'");
      if (it.operands.empty() || it.operands.size() > 3)
        throw SchemaError("interaction '" + it.output_name + "' needs 1-3 operands");
      for (const auto& op : it.operands) {
        const int j = index_of(op);
        if (j < 0) throw SchemaError("interaction '" + it.output_name + "' references unknown '" + op + "'");
        const auto& v = variables[j];
        if (v.is_missingness_indicator)
          throw SchemaError("interaction '" + it.output_name + "' uses a missingness indicator");
        if (v.is_categorical() && v.levels != 2)
          throw SchemaError("interaction '" + it.output_name + "' operand '" + op +
                            "' must be continuous or binary");
      }
      switch (it.kind) {
        case InteractionKind::square:
          if (it.operands.size() != 1 || variables[index_of(it.operands[0])].is_categorical())
            throw SchemaError("square '" + it.output_name + "' applies to one continuous variable");
          break;
        case InteractionKind::ratio:
          if (it.operands.size() != 2)
            throw SchemaError("ratio '" + it.output_name + "' needs two operands");
          if (variables[index_of(it.operands[1])].is_categorical())
            throw SchemaError("ratio '" + it.output_name + "' denominator must be continuous");
          break;
        case InteractionKind::product:
          if (it.operands.size() < 2)
            throw SchemaError("product '" + it.output_name + "' needs at least two operands");
          break;
      }
    }
    if (user_order.size() != variables.size())
      throw SchemaError("user order does not cover every variable");
    if (standardization.size() != variables.size())
      throw SchemaError("standardization does not cover every variable");
  }

  DesignLayout design_layout() const {
    DesignLayout d;
    auto add = [&](int size, std::string name, int src) {
      d.group_start.push_back(d.length);
      d.group_size.push_back(size);
      d.group_name.push_back(std::move(name));
      d.group_source.push_back(src);
      d.length += size;
    };
    add(1, "(intercept)", -1);
    for (int j = 0; j < p(); ++j) {
      const auto& v = variables[j];
      if (v.is_missingness_indicator) continue;
      add(v.slots(), v.name, j);
    }
    for (int k = 0; k < static_cast<int>(interactions.size()); ++k)
      add(1, interactions[k].output_name, -2 - k);
    return d;
  }
};

// Adds one square interaction per continuous variable flagged include_square_term.
inline void expand_square_terms(DatasetSchema& s) {
  for (const auto& v : s.variables) {
    if (v.is_categorical() || !v.include_square_term) continue;
    const std::string name = v.name + "^2";
    bool present = false;
    for (const auto& it : s.interactions)
      if (it.kind == InteractionKind::square && it.operands.size() == 1 && it.operands[0] == v.name)
        present = true;
    if (!present) s.interactions.push_back({InteractionKind::square, {v.name}, name});
  }
}

// ---------------------------------------------------------------- schema JSON

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw SchemaError("unknown key '" + it.key() + "' in " + where);
  }
}

inline double bound_from_json(const nlohmann::json& j, const char* key, double dflt) {
  if (!j.contains(key) || j.at(key).is_null()) return dflt;
  if (!j.at(key).is_number()) throw SchemaError(std::string("bound '") + key + "' must be a number or null");
  return j.at(key).get<double>();
}

}  // namespace detail

// Variables in the file are listed in user order; bounds are on the original scale.
inline DatasetSchema schema_from_json(const nlohmann::json& j) {
  using detail::reject_unknown;
  reject_unknown(j, {"response", "event", "variables", "interactions"}, "schema");
  DatasetSchema s;
  try {
    if (j.contains("response")) s.response_name = j.at("response").get<std::string>();
    if (j.contains("event")) s.event_name = j.at("event").get<std::string>();
    if (!j.contains("variables") || !j.at("variables").is_array())
      throw SchemaError("'variables' array required");
    for (const auto& jv : j.at("variables")) {
      reject_unknown(jv, {"name", "kind", "levels", "lower", "upper", "square", "indicator_for",
                          "center", "scale"},
                     "variable");
      VariableMeta v;
      v.name = jv.at("name").get<std::string>();
      const std::string kind = jv.at("kind").get<std::string>();
      Standardization st;
      if (kind == "categorical") {
        v.kind = VarKind::categorical;
        if (!jv.contains("levels")) throw SchemaError("categorical '" + v.name + "' needs 'levels'");
        v.levels = jv.at("levels").get<int>();
        for (const char* k : {"lower", "upper", "square", "center", "scale"})
          if (jv.contains(k))
            throw SchemaError(std::string("key '") + k + "' not allowed on categorical '" + v.name + "'");
        if (jv.contains("indicator_for")) {
          v.is_missingness_indicator = true;
          v.indicator_for = jv.at("indicator_for").get<std::string>();
        }
      } else if (kind == "continuous") {
        v.kind = VarKind::continuous;
        if (jv.contains("levels") || jv.contains("indicator_for"))
          throw SchemaError("continuous '" + v.name + "' has categorical-only keys");
        if (jv.contains("square")) v.include_square_term = jv.at("square").get<bool>();
        if (jv.contains("center")) st.center = jv.at("center").get<double>();
        if (jv.contains("scale")) st.scale = jv.at("scale").get<double>();
        if (!(st.scale > 0.0)) throw SchemaError("scale of '" + v.name + "' must be positive");
        const double lo = detail::bound_from_json(jv, "lower", -std::numeric_limits<double>::infinity());
        const double hi = detail::bound_from_json(jv, "upper", std::numeric_limits<double>::infinity());
        v.lower = (lo - st.center) / st.scale;
        v.upper = (hi - st.center) / st.scale;
      } else {
        throw SchemaError("variable '" + v.name + "' has unknown kind '" + kind + "'");
      }
      s.variables.push_back(v);
      s.standardization.push_back(st);
    }
    if (j.contains("interactions")) {
      for (const auto& ji : j.at("interactions")) {
        reject_unknown(ji, {"kind", "operands", "name"}, "interaction");
        InteractionSpec it;
        const std::string kind = ji.at("kind").get<std::string>();
        if (kind == "product") it.kind = InteractionKind::product;
        else if (kind == "ratio") it.kind = InteractionKind::ratio;
        else if (kind == "square") it.kind = InteractionKind::square;
        else throw SchemaError("unknown interaction kind '" + kind + "'");
        it.operands = ji.at("operands").get<std::vector<std::string>>();
        it.output_name = ji.at("name").get<std::string>();
        s.interactions.push_back(it);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(e.what());
  }
  s.user_order.clear();
  s.canonicalize();
  expand_square_terms(s);
  s.validate();
  return s;
}

inline nlohmann::json schema_to_json(const DatasetSchema& s, bool include_internal = true) {
  nlohmann::json j;
  j["response"] = s.response_name;
  j["event"] = s.event_name;
  j["variables"] = nlohmann::json::array();
  for (int k = 0; k < s.p(); ++k) {
    const int idx = s.user_order[k];
    const auto& v = s.variables[idx];
    if (!include_internal && v.is_missingness_indicator) continue;
    nlohmann::json jv;
    jv["name"] = v.name;
    if (v.is_categorical()) {
      jv["kind"] = "categorical";
      jv["levels"] = v.levels;
      if (v.is_missingness_indicator) jv["indicator_for"] = v.indicator_for;
    } else {
      const auto& st = s.standardization[idx];
      jv["kind"] = "continuous";
      if (std::isfinite(v.lower)) jv["lower"] = v.lower * st.scale + st.center;
      if (std::isfinite(v.upper)) jv["upper"] = v.upper * st.scale + st.center;
      if (v.include_square_term) jv["square"] = true;
      if (include_internal) {
        jv["center"] = st.center;
        jv["scale"] = st.scale;
      }
    }
    j["variables"].push_back(jv);
  }
  j["interactions"] = nlohmann::json::array();
  for (const auto& it : s.interactions) {
    bool auto_square = false;
    if (it.kind == InteractionKind::square) {
      const int idx = s.index_of(it.operands[0]);
      auto_square = idx >= 0 && s.variables[idx].include_square_term &&
                    it.output_name == it.operands[0] + "^2";
    }
    if (auto_square) continue;
    j["interactions"].push_back(
        {{"kind", to_string(it.kind)}, {"operands", it.operands}, {"name", it.output_name}});
  }
  return j;
}

inline DatasetSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  return schema_from_json(j);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hash of the user-facing structure (no standardization, no derived indicators).
inline std::uint64_t schema_structure_hash(const DatasetSchema& s) {
  DatasetSchema plain = s;
  for (auto& v : plain.variables) {
    if (v.is_categorical()) continue;
    const auto& st = plain.standardization[plain.index_of(v.name)];
    // rounded so the hash survives the standardize round trip
    auto round12 = [](double b) {
      if (!std::isfinite(b) || b == 0.0) return b;
      const double m = std::pow(10.0, 11 - static_cast<int>(std::floor(std::log10(std::abs(b)))));
      return std::round(b * m) / m;
    };
    v.lower = round12(v.lower * st.scale + st.center);
    v.upper = round12(v.upper * st.scale + st.center);
  }
  for (auto& st : plain.standardization) st = Standardization{};
  return fnv1a(schema_to_json(plain, false).dump());
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- dataset

struct SurvivalDataset {
  DatasetSchema schema;
  Mat x;  // n x p, internal variable order, NaN marks missing
  Vec y;
  std::vector<std::uint8_t> event;
  bool has_response = true;

  int n() const { return static_cast<int>(x.rows()); }
  int p() const { return static_cast<int>(x.cols()); }
  bool missing(int i, int j) const { return is_missing(x(i, j)); }
  long count_missing() const {
    long c = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) c += is_missing(x.data()[i]);
    return c;
  }
  const std::vector<Standardization>& standardization() const { return schema.standardization; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

inline std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

// Recomputes indicator columns from the missingness of their source predictors.
inline void fill_indicators(SurvivalDataset& ds) {
  for (int j = 0; j < ds.p(); ++j) {
    const auto& v = ds.schema.variables[j];
    if (!v.is_missingness_indicator) continue;
    const int s = ds.schema.index_of(v.indicator_for);
    for (int i = 0; i < ds.n(); ++i) ds.x(i, j) = ds.missing(i, s) ? 1.0 : 0.0;
  }
}

struct LoadOptions {
  bool require_response = true;
};

// Values are read on the original scale and mapped through the schema's stored
// standardization (identity for a freshly loaded user schema).
inline SurvivalDataset load_csv(const std::string& path, const DatasetSchema& schema,
                                LoadOptions opt = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", -1, "");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", -1, "");
  const auto header = detail::split_csv_line(line);
  std::vector<int> col_var(header.size(), -1);
  int col_y = -1;
  int col_e = -1;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (!seen.insert(h).second) throw ParseError("duplicate column", -1, h);
    if (h == schema.response_name) {
      col_y = static_cast<int>(c);
    } else if (h == schema.event_name) {
      col_e = static_cast<int>(c);
    } else {
      const int j = schema.index_of(h);
      if (j < 0 || schema.variables[j].is_missingness_indicator)
        throw ParseError("unknown column", -1, h);
      col_var[c] = j;
    }
  }
  for (const auto& v : schema.variables)
    if (!v.is_missingness_indicator && !seen.count(v.name))
      throw ParseError("missing column", -1, v.name);
  const bool has_response = col_y >= 0 && col_e >= 0;
  if (opt.require_response && col_y < 0) throw ParseError("missing column", -1, schema.response_name);
  if (opt.require_response && col_e < 0) throw ParseError("missing column", -1, schema.event_name);

  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  std::vector<std::uint8_t> evs;
  long row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw ParseError("wrong number of fields", row, "");
    std::vector<double> xr(schema.p(), kMissing);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      const bool empty = cell.empty() || cell == "NA";
      if (static_cast<int>(c) == col_y || static_cast<int>(c) == col_e) {
        if (!has_response) continue;
        if (empty) throw ParseError("missing response", row, header[c]);
        double v;
        if (!detail::parse_double(cell, v)) throw ParseError("not a number", row, header[c]);
        if (static_cast<int>(c) == col_y) {
          if (!(v > 0.0)) throw ParseError("non-positive time", row, header[c]);
          ys.push_back(v);
        } else {
          if (v != 0.0 && v != 1.0) throw ParseError("event flag must be 0 or 1", row, header[c]);
          evs.push_back(static_cast<std::uint8_t>(v));
        }
        continue;
      }
      const int j = col_var[c];
      if (empty) continue;
      double v;
      if (!detail::parse_double(cell, v)) throw ParseError("not a number", row, header[c]);
      const auto& meta = schema.variables[j];
      if (meta.is_categorical()) {
        if (v != std::floor(v)) throw ParseError("level code not an integer", row, header[c]);
        if (v < 0 || v >= meta.levels) throw ParseError("level out of range", row, header[c]);
        xr[j] = v;
      } else {
        const auto& st = schema.standardization[j];
        xr[j] = (v - st.center) / st.scale;
      }
    }
    rows.push_back(std::move(xr));
  }
  SurvivalDataset ds;
  ds.schema = schema;
  ds.has_response = has_response;
  const int n = static_cast<int>(rows.size());
  ds.x.resize(n, schema.p());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < schema.p(); ++j) ds.x(i, j) = rows[i][j];
  if (has_response) {
    ds.y = Eigen::Map<Vec>(ys.data(), n);
    ds.event = evs;
  } else {
    ds.y = Vec::Constant(n, kMissing);
    ds.event.assign(n, 0);
  }
  fill_indicators(ds);
  return ds;
}

// Writes values on the original scale in user order; indicators are derived and omitted.
inline void write_csv(const SurvivalDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  const auto& s = ds.schema;
  std::vector<int> cols;
  for (int k = 0; k < s.p(); ++k)
    if (!s.variables[s.user_order[k]].is_missingness_indicator) cols.push_back(s.user_order[k]);
  for (int j : cols) out << s.variables[j].name << ',';
  out << s.response_name << ',' << s.event_name << '\n';
  for (int i = 0; i < ds.n(); ++i) {
    for (int j : cols) {
      const double v = ds.x(i, j);
      if (!is_missing(v)) {
        if (s.variables[j].is_categorical()) {
          out << static_cast<int>(v);
        } else {
          const auto& st = s.standardization[j];
          out << detail::format_double(st.scale == 1.0 && st.center == 0.0 ? v
                                                                            : v * st.scale + st.center);
        }
      }
      out << ',';
    }
    if (ds.has_response) out << detail::format_double(ds.y(i)) << ',' << int(ds.event[i]);
    else out << ',';
    out << '\n';
  }
}

// Centers and scales each continuous column on its observed values (sample sd).
inline SurvivalDataset standardize(const SurvivalDataset& in) {
  SurvivalDataset ds = in;
  auto& s = ds.schema;
  for (int j = 0; j < ds.p(); ++j) {
    auto& v = s.variables[j];
    if (v.is_categorical()) continue;
    double sum = 0.0;
    int m = 0;
    for (int i = 0; i < ds.n(); ++i)
      if (!ds.missing(i, j)) {
        sum += ds.x(i, j);
        ++m;
      }
    if (m < 2) throw InvalidArgument("standardize: '" + v.name + "' has fewer than 2 observed values");
    const double mean = sum / m;
    double ss = 0.0;
    for (int i = 0; i < ds.n(); ++i)
      if (!ds.missing(i, j)) ss += (ds.x(i, j) - mean) * (ds.x(i, j) - mean);
    const double sd = std::sqrt(ss / (m - 1));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
      throw InvalidArgument("standardize: '" + v.name + "' has zero variance");
    for (int i = 0; i < ds.n(); ++i)
      if (!ds.missing(i, j)) ds.x(i, j) = (ds.x(i, j) - mean) / sd;
    v.lower = (v.lower - mean) / sd;
    v.upper = (v.upper - mean) / sd;
    auto& st = s.standardization[j];
    st.center = st.center + st.scale * mean;
    st.scale = st.scale * sd;
  }
  return ds;
}

// Maps working-scale values of variable j back to the original scale.
inline double destandardize(const DatasetSchema& s, int j, double v) {
  if (s.variables[j].is_categorical()) return v;
  const auto& st = s.standardization[j];
  return v * st.scale + st.center;
}

inline SurvivalDataset augment_missingness_indicators(const SurvivalDataset& in) {
  SurvivalDataset ds = in;
  auto& s = ds.schema;
  std::vector<int> targets;
  for (int j = 0; j < in.p(); ++j) {
    if (s.variables[j].is_missingness_indicator) continue;
    bool any = false;
    for (int i = 0; i < in.n() && !any; ++i) any = in.missing(i, j);
    if (!any) continue;
    bool present = false;
    for (const auto& v : s.variables)
      present = present || (v.is_missingness_indicator && v.indicator_for == s.variables[j].name);
    if (!present) targets.push_back(j);
  }
  if (targets.empty()) return ds;
  std::vector<std::string> user_names;
  for (int k = 0; k < s.p(); ++k) user_names.push_back(s.variables[s.user_order[k]].name);
  Mat x(in.n(), in.p() + static_cast<int>(targets.size()));
  x.leftCols(in.p()) = in.x;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& src = in.schema.variables[targets[t]];
    VariableMeta v = VariableMeta::categorical(src.name + ".missing", 2);
    while (s.index_of(v.name) >= 0) v.name += "_";
    v.is_missingness_indicator = true;
    v.indicator_for = src.name;
    s.variables.push_back(v);
    s.standardization.push_back(Standardization{});
    user_names.push_back(v.name);
    for (int i = 0; i < in.n(); ++i) x(i, in.p() + t) = in.missing(i, targets[t]) ? 1.0 : 0.0;
  }
  // reorder so categoricals (now including indicators) come first
  std::vector<std::string> old_names;
  for (const auto& v : s.variables) old_names.push_back(v.name);
  s.user_order.clear();
  for (const auto& nm : user_names)
    s.user_order.push_back(static_cast<int>(std::find(old_names.begin(), old_names.end(), nm) -
                                            old_names.begin()));
  s.canonicalize();
  ds.x.resize(in.n(), s.p());
  for (int j = 0; j < s.p(); ++j) {
    const auto pos = std::find(old_names.begin(), old_names.end(), s.variables[j].name) - old_names.begin();
    ds.x.col(j) = x.col(pos);
  }
  s.validate();
  return ds;
}

// ---------------------------------------------------------------- design rows

// Value of interaction k given a fully realized predictor row (working scale).
inline double interaction_value(const DatasetSchema& s, const InteractionSpec& it, const double* x) {
  switch (it.kind) {
    case InteractionKind::square: {
      const double v = x[s.index_of(it.operands[0])];
      return v * v;
    }
    case InteractionKind::product: {
      double v = 1.0;
      for (const auto& op : it.operands) v *= x[s.index_of(op)];
      return v;
    }
    case InteractionKind::ratio: {
      const int a = s.index_of(it.operands[0]);
      const int b = s.index_of(it.operands[1]);
      const double num = destandardize(s, a, x[a]);
      double den = destandardize(s, b, x[b]);
      if (std::abs(den) < 1e-12) den = std::copysign(1e-12, den);
      return num / den;
    }
  }
  return 0.0;
}

// Resolved operand indices, so the hot loop avoids name lookups.
struct DesignBuilder {
  const DatasetSchema* schema = nullptr;
  DesignLayout layout;
  struct Term {
    InteractionKind kind;
    std::vector<int> ops;
  };
  std::vector<Term> terms;

  DesignBuilder() = default;
  explicit DesignBuilder(const DatasetSchema& s) : schema(&s), layout(s.design_layout()) {
    for (const auto& it : s.interactions) {
      Term t{it.kind, {}};
      for (const auto& op : it.operands) t.ops.push_back(s.index_of(op));
      terms.push_back(t);
    }
  }

  int length() const { return layout.length; }

  template <class Out>
  void fill(const double* x, Out&& z) const {
    const auto& s = *schema;
    int c = 0;
    z[c++] = 1.0;
    for (int j = 0; j < s.p(); ++j) {
      const auto& v = s.variables[j];
      if (v.is_missingness_indicator) continue;
      if (v.is_categorical()) {
        const int code = static_cast<int>(x[j]);
        for (int k = 1; k < v.levels; ++k) z[c++] = code == k ? 1.0 : 0.0;
      } else {
        z[c++] = x[j];
      }
    }
    for (const auto& t : terms) {
      double val = 0.0;
      switch (t.kind) {
        case InteractionKind::square: val = x[t.ops[0]] * x[t.ops[0]]; break;
        case InteractionKind::product:
          val = 1.0;
          for (int o : t.ops) val *= x[o];
          break;
        case InteractionKind::ratio: {
          const double num = destandardize(s, t.ops[0], x[t.ops[0]]);
          double den = destandardize(s, t.ops[1], x[t.ops[1]]);
          if (std::abs(den) < 1e-12) den = std::copysign(1e-12, den);
          val = num / den;
          break;
        }
      }
      z[c++] = val;
    }
  }
};

inline Vec build_design_row(const Vec& x, const DatasetSchema& s) {
  if (x.size() != s.p()) throw InvalidArgument("build_design_row: row length mismatch");
  for (int j = 0; j < s.p(); ++j)
    if (is_missing(x(j))) throw InvalidArgument("build_design_row: row has missing values");
  DesignBuilder b(s);
  Vec z(b.length());
  b.fill(x.data(), z);
  return z;
}

// Builds a schema directly from code (variables given in user order).
inline DatasetSchema make_schema(std::vector<VariableMeta> vars,
                                 std::vector<InteractionSpec> interactions = {},
                                 std::string response = "time", std::string event = "event") {
  DatasetSchema s;
  s.variables = std::move(vars);
  s.interactions = std::move(interactions);
  s.response_name = std::move(response);
  s.event_name = std::move(event);
  s.standardization.assign(s.variables.size(), Standardization{});
  s.canonicalize();
  expand_square_terms(s);
  s.validate();
  return s;
}

}  // namespace sdpm
