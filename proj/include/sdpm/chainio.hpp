#pragma once

// Binary chain files. Layout (little-endian):
//   8-byte magic "SDPMCHN1", u32 format version, u32 header length, header JSON,
//   then records: u8 type, u32 payload length, payload.
// Record type 1 is a draw, type 2 is the diagnostics JSON written when the chain ends.
// A reader stops cleanly at a record cut short by an interrupted run.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sdpm/sampler.hpp"

namespace sdpm {

inline constexpr char kChainMagic[8] = {'S', 'D', 'P', 'M', 'C', 'H', 'N', '1'};
inline constexpr std::uint32_t kChainVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_doubles(const double* d, std::size_t n) {
    const auto* p = reinterpret_cast<const char*>(d);
    buf_.insert(buf_.end(), p, p + n * sizeof(double));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t n) : p_(data), end_(data + n) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return v;
  }
  void get_doubles(double* out, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(out, p_, n * sizeof(double));
    p_ += n * sizeof(double);
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t k) const {
    if (static_cast<std::size_t>(end_ - p_) < k) throw IoError("chain record shorter than expected");
  }
  const char* p_;
  const char* end_;
};

struct ChainDims {
  int n = 0, p = 0, pstar = 0, J = 0, groups = 0, H = 0;
};

inline ChainDims dims_from_header(const nlohmann::json& h) {
  ChainDims d;
  d.n = h.at("n").get<int>();
  d.p = h.at("p").get<int>();
  d.pstar = h.at("latent_dim").get<int>();
  d.J = h.at("design_length").get<int>();
  d.groups = static_cast<int>(h.at("groups").size());
  d.H = h.at("H").get<int>();
  return d;
}

inline std::vector<char> encode_draw(const Draw& d) {
  ByteWriter w;
  w.put<std::uint64_t>(d.iteration);
  for (double v : {d.tau2, d.kappa, d.concentration, d.varphi, d.eta, d.psi, d.log_joint}) w.put(v);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.beta.size()));
  w.put_doubles(d.beta.data(), d.beta.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.delta.size()));
  for (auto v : d.delta) w.put(v);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.gamma.size()));
  for (auto v : d.gamma) w.put(v);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.pi.size()));
  w.put_doubles(d.pi.data(), d.pi.size());
  for (std::size_t h = 0; h < d.means.size(); ++h) {
    const int m = static_cast<int>(d.means[h].size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m));
    w.put_doubles(d.means[h].data(), m);
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) w.put(d.precisions[h](a, b));
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.imputed.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.imputed.cols()));
  w.put_doubles(d.imputed.data(), d.imputed.size());
  return w.bytes();
}

inline Draw decode_draw(const char* data, std::size_t n) {
  ByteReader r(data, n);
  Draw d;
  d.iteration = r.get<std::uint64_t>();
  for (double* v : {&d.tau2, &d.kappa, &d.concentration, &d.varphi, &d.eta, &d.psi, &d.log_joint})
    *v = r.get<double>();
  d.beta.resize(r.get<std::uint32_t>());
  r.get_doubles(d.beta.data(), d.beta.size());
  d.delta.resize(r.get<std::uint32_t>());
  for (auto& v : d.delta) v = r.get<std::uint8_t>();
  d.gamma.resize(r.get<std::uint32_t>());
  for (auto& v : d.gamma) v = r.get<std::uint8_t>();
  const int H = static_cast<int>(r.get<std::uint32_t>());
  d.pi.resize(H);
  r.get_doubles(d.pi.data(), H);
  d.means.resize(H);
  d.precisions.resize(H);
  for (int h = 0; h < H; ++h) {
    const int m = static_cast<int>(r.get<std::uint32_t>());
    d.means[h].resize(m);
    r.get_doubles(d.means[h].data(), m);
    d.precisions[h].resize(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) d.precisions[h](a, b) = d.precisions[h](b, a) = r.get<double>();
  }
  const int rows = static_cast<int>(r.get<std::uint32_t>());
  const int cols = static_cast<int>(r.get<std::uint32_t>());
  d.imputed.resize(rows, cols);
  r.get_doubles(d.imputed.data(), d.imputed.size());
  if (!r.done()) throw IoError("trailing bytes in chain record");
  return d;
}

}  // namespace detail

// Streams draws to disk as they are produced, flushing after each record.
class ChainFileWriter : public DrawSink {
 public:
  explicit ChainFileWriter(std::string path) : path_(std::move(path)) {}

  void begin(const PosteriorChain& ch) override {
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open '" + path_ + "' for writing");
    const std::string h = ch.header.dump();
    out_.write(kChainMagic, sizeof(kChainMagic));
    write_u32(kChainVersion);
    write_u32(static_cast<std::uint32_t>(h.size()));
    out_.write(h.data(), static_cast<std::streamsize>(h.size()));
    check();
  }

  void draw(const Draw& d) override { record(1, detail::encode_draw(d)); }

  void finish(const PosteriorChain& ch) override {
    const DesignLayout layout = ch.schema.design_layout();
    const std::string j = diagnostics_to_json(ch.diagnostics, layout, ch.schema).dump();
    record(2, std::vector<char>(j.begin(), j.end()));
    out_.close();
  }

 private:
  void write_u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void record(std::uint8_t type, const std::vector<char>& payload) {
    out_.put(static_cast<char>(type));
    write_u32(static_cast<std::uint32_t>(payload.size()));
    out_.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out_.flush();
    check();
  }
  void check() {
    if (!out_) throw IoError("write to '" + path_ + "' failed");
  }

  std::string path_;
  std::ofstream out_;
};

inline void write_chain(const PosteriorChain& ch, const std::string& path) {
  ChainFileWriter w(path);
  w.begin(ch);
  for (const auto& d : ch.draws) w.draw(d);
  w.finish(ch);
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto t = line.find('\t', start);
    out.push_back(line.substr(start, t == std::string::npos ? std::string::npos : t - start));
    if (t == std::string::npos) break;
    start = t + 1;
  }
  return out;
}

inline Diagnostics diagnostics_from_json(const nlohmann::json& j, const DatasetSchema& schema) {
  Diagnostics d = make_diagnostics(schema);
  auto cj = [](const nlohmann::json& c) {
    Counter k;
    k.proposed = c.at("proposed").get<long>();
    k.accepted = c.at("accepted").get<long>();
    return k;
  };
  const DesignLayout layout = schema.design_layout();
  for (int g = 0; g < layout.groups(); ++g)
    if (j.at("beta_group").contains(layout.group_name[g])) d.beta_group[g] = cj(j["beta_group"][layout.group_name[g]]);
  d.kappa = cj(j.at("kappa"));
  d.varphi = cj(j.at("varphi"));
  d.eta = cj(j.at("eta"));
  d.psi = cj(j.at("psi"));
  d.selection = cj(j.at("selection"));
  d.selection_failures = j.at("selection_failures").get<long>();
  for (int v = 0; v < schema.p(); ++v)
    if (j.at("missing_latent").contains(schema.variables[v].name))
      d.missing_latent[v] = cj(j["missing_latent"][schema.variables[v].name]);
  d.truncation_warning = j.at("truncation_warning").get<bool>();
  d.truncation_message = j.at("truncation_message").get<std::string>();
  return d;
}

}  // namespace detail

inline PosteriorChain read_chain(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open chain file '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t n = bytes.size();
  if (n < 16 || std::memcmp(bytes.data(), kChainMagic, 8) != 0)
    throw CompatibilityError("'" + path + "' is not a chain file");
  std::uint32_t version = 0, hlen = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&hlen, bytes.data() + 12, 4);
  if (version != kChainVersion)
    throw CompatibilityError("unsupported chain format version " + std::to_string(version));
  if (16 + static_cast<std::size_t>(hlen) > n) throw IoError("chain header truncated in '" + path + "'");
  PosteriorChain ch;
  try {
    ch.header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + hlen);
    ch.schema = schema_from_json(ch.header.at("schema"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed chain header: ") + e.what());
  }
  ch.diagnostics = make_diagnostics(ch.schema);
  std::size_t pos = 16 + hlen;
  while (pos < n) {
    if (n - pos < 5) {
      ch.truncated = true;
      break;
    }
    const auto type = static_cast<std::uint8_t>(bytes[pos]);
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + pos + 1, 4);
    if (n - pos - 5 < len) {
      ch.truncated = true;
      break;
    }
    const char* payload = bytes.data() + pos + 5;
    if (type == 1) {
      ch.draws.push_back(detail::decode_draw(payload, len));
    } else if (type == 2) {
      try {
        ch.diagnostics = detail::diagnostics_from_json(nlohmann::json::parse(payload, payload + len), ch.schema);
      } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed diagnostics record: ") + e.what());
      }
    } else {
      throw IoError("unknown record type " + std::to_string(type) + " in '" + path + "'");
    }
    pos += 5 + len;
  }
  return ch;
}

// Config hash recorded in a chain header.
inline std::string chain_config_hash(const PosteriorChain& ch) {
  return ch.header.value("config_hash", std::string());
}

inline std::string format_exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Tab-separated export: one row per draw, every stored quantity as a column.
inline void export_text(const PosteriorChain& ch, std::ostream& out) {
  const DesignLayout layout = ch.schema.design_layout();
  const SlotMap map(ch.schema);
  std::vector<std::string> cols = {"iteration", "log_joint", "tau2",  "kappa",
                                   "concentration", "varphi", "eta", "psi"};
  const int J = layout.length;
  for (int g = 0; g < layout.groups(); ++g)
    for (int k = 0; k < layout.group_size[g]; ++k)
      cols.push_back("beta[" + layout.group_name[g] + (layout.group_size[g] > 1 ? ":" + std::to_string(k + 1) : "") + "]");
  for (int g = 0; g < layout.groups(); ++g) cols.push_back("delta[" + layout.group_name[g] + "]");
  for (const auto& v : ch.schema.variables) cols.push_back("gamma[" + v.name + "]");
  const int H = ch.draws.empty() ? 0 : static_cast<int>(ch.draws.front().pi.size());
  const int d = map.total;
  for (int h = 0; h < H; ++h) cols.push_back("pi[" + std::to_string(h) + "]");
  for (int h = 0; h < H; ++h) {
    for (int a = 0; a < d; ++a) cols.push_back("mean[" + std::to_string(h) + "," + std::to_string(a) + "]");
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b)
        cols.push_back("prec[" + std::to_string(h) + "," + std::to_string(a) + "," + std::to_string(b) + "]");
  }
  const int nimp = ch.draws.empty() ? 0 : static_cast<int>(ch.draws.front().imputed.size());
  const int pcols = ch.schema.p();
  for (int k = 0; k < nimp; ++k)
    cols.push_back("x[" + std::to_string(k / pcols) + "," + ch.schema.variables[k % pcols].name + "]");
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "\t" : "") << cols[c];
  out << '\n';
  for (const auto& dr : ch.draws) {
    out << dr.iteration;
    for (double v : {dr.log_joint, dr.tau2, dr.kappa, dr.concentration, dr.varphi, dr.eta, dr.psi})
      out << '\t' << format_exact(v);
    for (int k = 0; k < J; ++k) out << '\t' << format_exact(dr.beta(k));
    for (auto v : dr.delta) out << '\t' << static_cast<int>(v);
    for (auto v : dr.gamma) out << '\t' << static_cast<int>(v);
    for (int h = 0; h < H; ++h) out << '\t' << format_exact(dr.pi(h));
    for (int h = 0; h < H; ++h) {
      for (int a = 0; a < d; ++a) out << '\t' << format_exact(dr.means[h](a));
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) out << '\t' << format_exact(dr.precisions[h](a, b));
    }
    for (int k = 0; k < dr.imputed.size(); ++k) out << '\t' << format_exact(dr.imputed.data()[k]);
    out << '\n';
  }
}

// Parses the text export back into draws (dimensions taken from the chain header).
inline std::vector<Draw> import_text(std::istream& in, const PosteriorChain& like) {
  const DesignLayout layout = like.schema.design_layout();
  const SlotMap map(like.schema);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty text export");
  const int ncols = static_cast<int>(detail::split_tabs(line).size());
  const int H = like.header.at("H").get<int>();
  const int d = map.total;
  const int fixed = 8 + layout.length + layout.groups() + like.schema.p() + H + H * (d + d * (d + 1) / 2);
  const int nimp = ncols - fixed;
  std::vector<Draw> out;
  while (std::getline(in, line)) {
    const auto f = detail::split_tabs(line);
    if (static_cast<int>(f.size()) != ncols) throw IoError("ragged row in text export");
    std::size_t k = 0;
    auto num = [&]() {
      double v = 0.0;
      if (!detail::parse_double(f[k++], v)) throw IoError("bad number in text export");
      return v;
    };
    Draw dr;
    dr.iteration = std::stoull(f[k++]);
    for (double* v : {&dr.log_joint, &dr.tau2, &dr.kappa, &dr.concentration, &dr.varphi, &dr.eta, &dr.psi})
      *v = num();
    dr.beta.resize(layout.length);
    for (int j = 0; j < layout.length; ++j) dr.beta(j) = num();
    for (int g = 0; g < layout.groups(); ++g) dr.delta.push_back(static_cast<std::uint8_t>(num()));
    for (int j = 0; j < like.schema.p(); ++j) dr.gamma.push_back(static_cast<std::uint8_t>(num()));
    dr.pi.resize(H);
    for (int h = 0; h < H; ++h) dr.pi(h) = num();
    for (int h = 0; h < H; ++h) {
      Vec m(d);
      Mat q(d, d);
      for (int a = 0; a < d; ++a) m(a) = num();
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) q(a, b) = q(b, a) = num();
      dr.means.push_back(m);
      dr.precisions.push_back(q);
    }
    if (nimp > 0) {
      const int p = like.schema.p();
      dr.imputed.resize(nimp / p, p);
      for (int t = 0; t < nimp; ++t) dr.imputed.data()[t] = num();
    }
    out.push_back(std::move(dr));
  }
  return out;
}

}  // namespace sdpm
