#pragma once

// File formats: corpus lines, key-value manifests/configs, JSON-lines decode
// records, and CSV tables.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "monoattn/decode.hpp"
#include "monoattn/synthesis.hpp"

namespace monoattn {

// ---------------------------------------------------------------------------
// Corpus: one sample per line, "src ids<TAB>tgt ids<TAB>i-j,i-j,..."

inline void write_corpus(const std::vector<SyntheticSample>& corpus,
                         const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& s : corpus) {
    for (size_t i = 0; i < s.source.size(); ++i)
      os << (i ? " " : "") << s.source[i];
    os << '\t';
    for (size_t i = 0; i < s.target.size(); ++i)
      os << (i ? " " : "") << s.target[i];
    os << '\t';
    AlignmentPairs pairs = s.alignment();
    for (size_t i = 0; i < pairs.size(); ++i)
      os << (i ? "," : "") << pairs[i].first << '-' << pairs[i].second;
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

namespace detail {

inline std::vector<int> parse_ids(const std::string& field) {
  std::vector<int> out;
  std::istringstream is(field);
  int v;
  while (is >> v) out.push_back(v);
  return out;
}

}  // namespace detail

inline std::vector<SyntheticSample> read_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<SyntheticSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string src_f, tgt_f, align_f;
    if (!std::getline(ls, src_f, '\t') || !std::getline(ls, tgt_f, '\t') ||
        !std::getline(ls, align_f))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected three tab-separated fields");
    SyntheticSample s;
    s.source = detail::parse_ids(src_f);
    s.target = detail::parse_ids(tgt_f);
    s.permutation.assign(s.target.size(), 0);
    std::istringstream as(align_f);
    std::string pair;
    size_t n_pairs = 0;
    while (std::getline(as, pair, ',')) {
      auto dash = pair.find('-');
      if (dash == std::string::npos)
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": bad alignment pair '" + pair + "'");
      int i = std::stoi(pair.substr(0, dash));
      int j = std::stoi(pair.substr(dash + 1));
      if (j < 0 || j >= static_cast<int>(s.permutation.size()))
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": alignment target out of range");
      s.permutation[static_cast<size_t>(j)] = i;
      ++n_pairs;
    }
    if (n_pairs != s.target.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": alignment must cover every target token");
    s.cross_count = cross_count_fast(s.alignment());
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flat key-value files (manifests and effective configs): "key = value".

inline void write_kv(const std::map<std::string, std::string>& kv,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::map<std::string, std::string> read_kv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == '[') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ": expected 'key = value', got '" + t + "'");
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

inline std::map<std::string, std::string> manifest_for(
    const SyntheticTaskSpec& spec, int n_samples) {
  return {
      {"task", task_name(spec.task)},
      {"vocab_size", std::to_string(spec.vocab_size)},
      {"min_len", std::to_string(spec.min_len)},
      {"max_len", std::to_string(spec.max_len)},
      {"reorder_window", std::to_string(spec.reorder_window)},
      {"reorder_prob", std::to_string(spec.reorder_prob)},
      {"seed", std::to_string(spec.seed)},
      {"n_samples", std::to_string(n_samples)},
  };
}

// ---------------------------------------------------------------------------
// Model config persistence (key-value, same format as manifests).

inline std::map<std::string, std::string> model_config_kv(const ModelConfig& c) {
  return {
      {"src_vocab_size", std::to_string(c.src_vocab_size)},
      {"vocab_size", std::to_string(c.vocab_size)},
      {"d_model", std::to_string(c.d_model)},
      {"heads", std::to_string(c.heads)},
      {"d_ff", std::to_string(c.d_ff)},
      {"d_joint", std::to_string(c.d_joint)},
      {"encoder_layers", std::to_string(c.encoder_layers)},
      {"predictor_layers", std::to_string(c.predictor_layers)},
      {"chunk_frames", std::to_string(c.chunk_frames)},
      {"decision_step", std::to_string(c.decision_step)},
      {"lookahead_chunks", std::to_string(c.lookahead_chunks)},
      {"max_source_len", std::to_string(c.max_source_len)},
      {"max_target_len", std::to_string(c.max_target_len)},
  };
}

inline ModelConfig model_config_from_kv(
    const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto geti = [&](const std::string& key, int& field) {
    auto it = kv.find(key);
    if (it != kv.end()) field = std::stoi(it->second);
  };
  geti("src_vocab_size", c.src_vocab_size);
  geti("vocab_size", c.vocab_size);
  geti("d_model", c.d_model);
  geti("heads", c.heads);
  geti("d_ff", c.d_ff);
  geti("d_joint", c.d_joint);
  geti("encoder_layers", c.encoder_layers);
  geti("predictor_layers", c.predictor_layers);
  geti("chunk_frames", c.chunk_frames);
  geti("decision_step", c.decision_step);
  geti("lookahead_chunks", c.lookahead_chunks);
  geti("max_source_len", c.max_source_len);
  geti("max_target_len", c.max_target_len);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Decode records: one JSON object per line, loss-free round-trip into eval.

struct DecodeRecord {
  int id = 0;
  std::vector<int> source, reference, hypothesis;
  std::vector<int> g;
  int frames_total = 0;
  int64_t cross_count = 0;
  bool length_capped = false;
  std::vector<double> write_stamps;  // empty unless stamps were recorded
};

inline DecodeRecord make_record(int id, const SyntheticSample& sample,
                                const DecodeResult& res) {
  DecodeRecord r;
  r.id = id;
  r.source = sample.source;
  r.reference = sample.target;
  r.hypothesis = res.tokens;
  r.g = res.trace.g;
  r.frames_total = res.trace.frames_total;
  r.cross_count = sample.cross_count;
  r.length_capped = res.trace.length_capped;
  if (res.trace.has_stamps)
    for (const auto& e : res.trace.events)
      if (e.kind == DecodeEvent::Kind::WRITE) r.write_stamps.push_back(e.stamp);
  return r;
}

// Rebuilds a trace (READs merged per g level) for the latency metrics.
inline DecodeTrace record_trace(const DecodeRecord& r) {
  DecodeTrace tr;
  tr.frames_total = r.frames_total;
  tr.g = r.g;
  tr.has_stamps = !r.write_stamps.empty();
  int read = 0;
  for (size_t u = 0; u < r.g.size(); ++u) {
    if (r.g[u] > read) {
      DecodeEvent rd;
      rd.kind = DecodeEvent::Kind::READ;
      rd.chunk_index = static_cast<int>(u) + 1;
      rd.frames_added = r.g[u] - read;
      read = r.g[u];
      tr.events.push_back(rd);
    }
    DecodeEvent wr;
    wr.kind = DecodeEvent::Kind::WRITE;
    wr.token = r.hypothesis[u];
    wr.g = r.g[u];
    if (tr.has_stamps) wr.stamp = r.write_stamps[u];
    tr.events.push_back(wr);
  }
  return tr;
}

inline void write_records(const std::vector<DecodeRecord>& records,
                          const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id},
                     {"source", r.source},
                     {"reference", r.reference},
                     {"hypothesis", r.hypothesis},
                     {"g", r.g},
                     {"frames_total", r.frames_total},
                     {"cross_count", r.cross_count},
                     {"length_capped", r.length_capped}};
    if (!r.write_stamps.empty()) j["write_stamps"] = r.write_stamps;
    os << j.dump() << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<DecodeRecord> read_records(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::vector<DecodeRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
    DecodeRecord r;
    r.id = j.at("id").get<int>();
    r.source = j.at("source").get<std::vector<int>>();
    r.reference = j.at("reference").get<std::vector<int>>();
    r.hypothesis = j.at("hypothesis").get<std::vector<int>>();
    r.g = j.at("g").get<std::vector<int>>();
    r.frames_total = j.at("frames_total").get<int>();
    r.cross_count = j.at("cross_count").get<int64_t>();
    r.length_capped = j.value("length_capped", false);
    if (j.contains("write_stamps"))
      r.write_stamps = j["write_stamps"].get<std::vector<double>>();
    if (r.g.size() != r.hypothesis.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": g and hypothesis lengths differ");
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV (RFC-ish: values known to be plain numbers/identifiers, no quoting).

inline void write_csv(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows,
                      const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("csv row width mismatch");
    for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace monoattn
