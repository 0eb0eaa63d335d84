#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "binsem/normalizer.hpp"

namespace binsem {

// Token-string <-> id bijection with five reserved specials at ids 0..4.
class Vocabulary {
public:
  static constexpr int pad_id = 0;
  static constexpr int unk_id = 1;
  static constexpr int mask_id = 2;
  static constexpr int sos_id = 3;
  static constexpr int eos_id = 4;
  static constexpr int first_regular_id = 5;

  static const std::array<const char*, 5>& special_names() {
    static const std::array<const char*, 5> names = {"[PAD]", "[UNK]", "[MASK]", "[SOS]", "[EOS]"};
    return names;
  }

  // Ids are assigned in descending frequency, ties broken lexicographically,
  // so rebuilding on the same corpus is byte-identical.
  static Vocabulary build(const std::vector<NormalizedFunction>& nfs) {
    std::map<std::string, uint64_t> counts;
    for (const auto& nf : nfs)
      for (const auto& t : nf.tokens) ++counts[t];
    std::vector<std::pair<std::string, uint64_t>> order(counts.begin(), counts.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, cnt] : order) v.append(tok, cnt);
    return v;
  }

  // Total size including the five specials.
  size_t size() const { return tokens_.size() + first_regular_id; }
  size_t regular_size() const { return tokens_.size(); }

  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  // Unknown tokens map to [UNK].
  int id_or_unk(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? unk_id : it->second;
  }

  int id_of(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw ValidationError("token not in vocabulary: " + token);
    return it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= size())
      throw ValidationError("token id out of range: " + std::to_string(id));
    if (id < first_regular_id) {
      static const std::array<std::string, 5> names = {"[PAD]", "[UNK]", "[MASK]", "[SOS]", "[EOS]"};
      return names[id];
    }
    return tokens_[id - first_regular_id];
  }

  uint64_t count_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? 0 : counts_[it->second - first_regular_id];
  }

  void save_tsv(std::ostream& out) const {
    for (const char* s : special_names()) out << s << "\t0\n";
    for (size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << "\t" << counts_[i] << "\n";
  }

  static Vocabulary load_tsv(std::istream& in) {
    Vocabulary v;
    size_t lineno = 0;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(lineno + 1, "vocabulary line without tab");
      std::string tok = line.substr(0, tab);
      uint64_t cnt = std::strtoull(line.substr(tab + 1).c_str(), nullptr, 10);
      if (lineno < 5) {
        if (tok != special_names()[lineno])
          throw ParseError(lineno + 1, "expected special token " + std::string(special_names()[lineno]) + ", got " + tok);
      } else {
        v.append(tok, cnt);
      }
      ++lineno;
    }
    if (lineno < 5) throw ValidationError("vocabulary file lacks the five special tokens");
    return v;
  }

  uint64_t hash() const {
    std::ostringstream ss;
    save_tsv(ss);
    return fnv1a(ss.str());
  }

private:
  void append(const std::string& tok, uint64_t cnt) {
    ids_[tok] = static_cast<int>(tokens_.size()) + first_regular_id;
    tokens_.push_back(tok);
    counts_.push_back(cnt);
  }

  // Non-special entries only; entry i has id i + 5.
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
  std::vector<uint64_t> counts_;
};

// Fixed-length id sequence: [SOS] tokens... [EOS] [PAD]...
struct TokenSequence {
  std::vector<int32_t> ids;
  int true_len = 0;

  int max_seq() const { return static_cast<int>(ids.size()); }
  bool operator==(const TokenSequence&) const = default;
};

inline TokenSequence encode(const NormalizedFunction& nf, const Vocabulary& vocab, int max_seq) {
  if (nf.tokens.size() + 2 > static_cast<size_t>(max_seq))
    throw ValidationError("function " + nf.id.function_name + " exceeds max_seq: " +
                          std::to_string(nf.tokens.size()) + " tokens, limit " + std::to_string(max_seq - 2));
  TokenSequence seq;
  seq.ids.assign(max_seq, Vocabulary::pad_id);
  int pos = 0;
  seq.ids[pos++] = Vocabulary::sos_id;
  for (const auto& t : nf.tokens) seq.ids[pos++] = vocab.id_or_unk(t);
  seq.ids[pos++] = Vocabulary::eos_id;
  seq.true_len = pos;
  return seq;
}

inline std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int i = 1; i + 1 < seq.true_len; ++i) out.push_back(vocab.token_of(seq.ids[i]));
  return out;
}

// Keeps functions with 5 < token count <= 250 (both bounds configurable).
inline std::vector<NormalizedFunction> filter_functions(const std::vector<NormalizedFunction>& nfs,
                                                        size_t min_exclusive = 5, size_t max_inclusive = 250) {
  std::vector<NormalizedFunction> out;
  for (const auto& nf : nfs)
    if (nf.tokens.size() > min_exclusive && nf.tokens.size() <= max_inclusive) out.push_back(nf);
  return out;
}

// Bag of Signature: multiset over a function's numeric constants and string
// literals. Numeric and string keys live in separate namespaces.
struct BoSVector {
  std::map<std::string, uint64_t> entries;

  static std::string const_key(int64_t v) { return "c:" + std::to_string(v); }
  static std::string string_key(const std::string& s) { return "s:" + s; }

  bool empty() const { return entries.empty(); }
};

inline BoSVector extract_bos(const FunctionRecord& f) {
  BoSVector v;
  for (int64_t c : f.bos_constants) ++v.entries[BoSVector::const_key(c)];
  for (const auto& s : f.bos_strings) ++v.entries[BoSVector::string_key(s)];
  return v;
}

inline BoSVector extract_bos(const NormalizedFunction& nf) {
  BoSVector v;
  for (int64_t c : nf.bos_consts) ++v.entries[BoSVector::const_key(c)];
  for (const auto& s : nf.bos_strings) ++v.entries[BoSVector::string_key(s)];
  return v;
}

// Cosine over the count vectors on the key union; an empty bag yields 0.
inline double bos_cosine(const BoSVector& v, const BoSVector& w) {
  if (v.empty() || w.empty()) return 0.0;
  double dot = 0, nv = 0, nw = 0;
  for (const auto& [k, c] : v.entries) {
    nv += static_cast<double>(c) * static_cast<double>(c);
    auto it = w.entries.find(k);
    if (it != w.entries.end()) dot += static_cast<double>(c) * static_cast<double>(it->second);
  }
  for (const auto& [k, c] : w.entries) nw += static_cast<double>(c) * static_cast<double>(c);
  if (nv == 0 || nw == 0) return 0.0;
  return dot / (std::sqrt(nv) * std::sqrt(nw));
}

struct DistStats {
  double mean = 0, median = 0, stddev = 0;
  size_t n = 0;

  static DistStats of(std::vector<double> xs) {
    DistStats s;
    s.n = xs.size();
    if (xs.empty()) return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
    std::sort(xs.begin(), xs.end());
    size_t mid = xs.size() / 2;
    s.median = xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
    return s;
  }

  json to_json() const { return {{"mean", mean}, {"median", median}, {"std", stddev}, {"n", n}}; }
};

struct StatsReport {
  struct RankEntry {
    std::string token;
    uint64_t count = 0;
    double ratio = 0;
    double cumulative = 0;
  };
  std::vector<RankEntry> rank_freq;
  bool oov_defined = false;
  double oov_rate = 0;
  DistStats if_stats;
  bool bb_present = false;
  DistStats bf_stats;
  DistStats ib_stats;

  json to_json() const {
    json rf = json::array();
    for (size_t i = 0; i < rank_freq.size(); ++i)
      rf.push_back({{"rank", i + 1},
                    {"token", rank_freq[i].token},
                    {"count", rank_freq[i].count},
                    {"ratio", rank_freq[i].ratio},
                    {"cumulative", rank_freq[i].cumulative}});
    json j;
    j["rank_freq"] = std::move(rf);
    j["oov_rate"] = oov_defined ? json(oov_rate) : json(nullptr);
    j["if_stats"] = if_stats.to_json();
    j["bf_stats"] = bb_present ? bf_stats.to_json() : json(nullptr);
    j["ib_stats"] = bb_present ? ib_stats.to_json() : json(nullptr);
    return j;
  }
};

// Rank/frequency table, I/F, and (when basic-block ids are present in the
// records) B/F and I/B distributions. The OOV rate is the share of distinct
// held-out tokens absent from the main corpus vocabulary.
inline StatsReport corpus_stats(const std::vector<NormalizedFunction>& nfs,
                                const std::vector<FunctionRecord>& records = {},
                                const std::vector<NormalizedFunction>* holdout = nullptr) {
  StatsReport rep;
  std::map<std::string, uint64_t> counts;
  uint64_t total = 0;
  std::vector<double> per_fn;
  for (const auto& nf : nfs) {
    per_fn.push_back(static_cast<double>(nf.tokens.size()));
    for (const auto& t : nf.tokens) {
      ++counts[t];
      ++total;
    }
  }
  std::vector<std::pair<std::string, uint64_t>> order(counts.begin(), counts.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  double cum = 0;
  for (const auto& [tok, cnt] : order) {
    double ratio = total ? static_cast<double>(cnt) / static_cast<double>(total) : 0.0;
    cum += ratio;
    rep.rank_freq.push_back({tok, cnt, ratio, cum});
  }
  rep.if_stats = DistStats::of(std::move(per_fn));

  if (holdout) {
    std::set<std::string> seen;
    size_t unseen = 0;
    for (const auto& nf : *holdout)
      for (const auto& t : nf.tokens) seen.insert(t);
    for (const auto& t : seen)
      if (!counts.count(t)) ++unseen;
    rep.oov_defined = !seen.empty();
    rep.oov_rate = seen.empty() ? 0.0 : static_cast<double>(unseen) / static_cast<double>(seen.size());
  }

  std::vector<double> bb_per_fn, ins_per_bb;
  for (const auto& r : records) {
    std::map<uint64_t, size_t> blocks;
    bool any = false;
    for (const auto& ins : r.instructions)
      if (ins.basic_block_id) {
        ++blocks[*ins.basic_block_id];
        any = true;
      }
    if (!any) continue;
    bb_per_fn.push_back(static_cast<double>(blocks.size()));
    for (const auto& [bb, cnt] : blocks) ins_per_bb.push_back(static_cast<double>(cnt));
  }
  if (!bb_per_fn.empty()) {
    rep.bb_present = true;
    rep.bf_stats = DistStats::of(std::move(bb_per_fn));
    rep.ib_stats = DistStats::of(std::move(ins_per_bb));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Fine-tuning datasets
// ---------------------------------------------------------------------------

struct PairExample {
  TokenSequence a;
  TokenSequence b;
  double bos_sim = 0;
  int label = 0;            // 1 = same source function
  std::string pair_key;     // "(CO0,GO3)"-style build-pair grouping key
};

struct ToolchainExample {
  TokenSequence x;
  int label = 0;
};

enum class ToolchainTask { compiler, optlevel, optlevel_gcc, optlevel_clang };

inline ToolchainTask toolchain_task_from_string(const std::string& s) {
  if (s == "compiler") return ToolchainTask::compiler;
  if (s == "optlevel") return ToolchainTask::optlevel;
  if (s == "optlevel-gcc" || s == "optlevel_gcc") return ToolchainTask::optlevel_gcc;
  if (s == "optlevel-clang" || s == "optlevel_clang") return ToolchainTask::optlevel_clang;
  throw ValidationError("unknown toolchain task \"" + s + "\"");
}

// "(CO0,GO3)" from two build configs; legs are sorted so the key is
// order-independent.
inline std::string build_pair_key(const std::string& compiler_a, const std::string& opt_a,
                                  const std::string& compiler_b, const std::string& opt_b) {
  auto leg = [](const std::string& c, const std::string& o) {
    std::string l;
    l += static_cast<char>(std::toupper(static_cast<unsigned char>(c.empty() ? '?' : c[0])));
    l += o;
    return l;
  };
  std::string la = leg(compiler_a, opt_a), lb = leg(compiler_b, opt_b);
  if (lb < la) std::swap(la, lb);
  return "(" + la + "," + lb + ")";
}

// binary_id with a trailing "-gcc-O2"-style build suffix stripped, so the
// same program built several ways shares one identity root.
inline std::string binary_id_root(const std::string& binary_id) {
  static const std::regex suffix("^(.*)[-_](gcc|clang)[-_][oO][0-3]$", std::regex::icase);
  std::smatch m;
  if (std::regex_match(binary_id, m, suffix)) return m[1].str();
  return binary_id;
}

// Positive pairs: same (testsuite, binary root, function name) under
// different build configs, token lists differing in at least one position.
// Negatives are uniform non-matching samples. Deterministic per seed.
inline std::vector<PairExample> make_pairs(const std::vector<NormalizedFunction>& nfs,
                                           const Vocabulary& vocab, int max_seq,
                                           double ratio_pos, uint64_t seed) {
  if (ratio_pos <= 0.0 || ratio_pos >= 1.0)
    throw ValidationError("ratio_pos must lie strictly between 0 and 1");
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < nfs.size(); ++i) {
    const NfId& id = nfs[i].id;
    groups[id.testsuite + "\x1f" + binary_id_root(id.binary_id) + "\x1f" + id.function_name].push_back(i);
  }

  auto config_of = [&](size_t i) { return nfs[i].id.compiler + "/" + nfs[i].id.opt_level; };

  std::vector<std::pair<size_t, size_t>> positives;
  for (const auto& [key, members] : groups)
    for (size_t x = 0; x < members.size(); ++x)
      for (size_t y = x + 1; y < members.size(); ++y) {
        size_t i = members[x], j = members[y];
        if (config_of(i) == config_of(j)) continue;
        if (nfs[i].tokens == nfs[j].tokens) continue;  // identical NFs excluded from similar pairs
        positives.emplace_back(i, j);
      }
  if (positives.empty()) throw ValidationError("no positive pair available in corpus");

  std::mt19937_64 rng(seed);
  size_t n_neg = static_cast<size_t>(std::llround(static_cast<double>(positives.size()) * (1.0 - ratio_pos) / ratio_pos));

  auto group_key = [&](size_t i) {
    const NfId& id = nfs[i].id;
    return id.testsuite + "\x1f" + binary_id_root(id.binary_id) + "\x1f" + id.function_name;
  };

  std::set<std::pair<size_t, size_t>> taken;
  std::vector<std::pair<size_t, size_t>> negatives;
  std::uniform_int_distribution<size_t> pick(0, nfs.size() - 1);
  size_t attempts = 0, max_attempts = n_neg * 100 + 1000;
  while (negatives.size() < n_neg && attempts++ < max_attempts) {
    size_t i = pick(rng), j = pick(rng);
    if (i == j) continue;
    if (group_key(i) == group_key(j)) continue;
    auto norm = std::minmax(i, j);
    if (!taken.insert({norm.first, norm.second}).second) continue;
    negatives.emplace_back(i, j);
  }

  auto materialize = [&](size_t i, size_t j, int label) {
    PairExample ex;
    ex.a = encode(nfs[i], vocab, max_seq);
    ex.b = encode(nfs[j], vocab, max_seq);
    ex.bos_sim = bos_cosine(extract_bos(nfs[i]), extract_bos(nfs[j]));
    ex.label = label;
    ex.pair_key = build_pair_key(nfs[i].id.compiler, nfs[i].id.opt_level,
                                 nfs[j].id.compiler, nfs[j].id.opt_level);
    return ex;
  };

  std::vector<PairExample> out;
  out.reserve(positives.size() + negatives.size());
  for (auto [i, j] : positives) out.push_back(materialize(i, j, 1));
  for (auto [i, j] : negatives) out.push_back(materialize(i, j, 0));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

struct ToolchainDataset {
  std::vector<ToolchainExample> examples;
  std::vector<std::string> classes;
  std::vector<size_t> class_counts;
};

// O2 is ruled out for the optimization tasks; NFs whose token list occurs
// under conflicting labels are dropped entirely.
inline ToolchainDataset make_toolchain(const std::vector<NormalizedFunction>& nfs, ToolchainTask task,
                                       const Vocabulary& vocab, int max_seq) {
  ToolchainDataset ds;
  std::optional<std::string> compiler_filter;
  if (task == ToolchainTask::compiler)
    ds.classes = {"gcc", "clang"};
  else {
    ds.classes = {"O0", "O1", "O3"};
    if (task == ToolchainTask::optlevel_gcc) compiler_filter = "gcc";
    if (task == ToolchainTask::optlevel_clang) compiler_filter = "clang";
  }
  ds.class_counts.assign(ds.classes.size(), 0);

  auto label_of = [&](const NormalizedFunction& nf) -> int {
    const std::string& want = task == ToolchainTask::compiler ? nf.id.compiler : nf.id.opt_level;
    for (size_t c = 0; c < ds.classes.size(); ++c)
      if (ds.classes[c] == want) return static_cast<int>(c);
    return -1;
  };

  std::vector<std::pair<size_t, int>> labeled;
  std::map<std::string, std::set<int>> labels_by_body;
  for (size_t i = 0; i < nfs.size(); ++i) {
    if (compiler_filter && nfs[i].id.compiler != *compiler_filter) continue;
    int label = label_of(nfs[i]);
    if (label < 0) continue;  // O2 / unknown / foreign compilers drop here
    labeled.emplace_back(i, label);
    std::string body;
    for (const auto& t : nfs[i].tokens) body += t + "\x1f";
    labels_by_body[body].insert(label);
  }

  for (auto [i, label] : labeled) {
    std::string body;
    for (const auto& t : nfs[i].tokens) body += t + "\x1f";
    if (labels_by_body[body].size() > 1) continue;  // conflicting labels: drop every instance
    ToolchainExample ex;
    ex.x = encode(nfs[i], vocab, max_seq);
    ex.label = label;
    ds.examples.push_back(std::move(ex));
    ++ds.class_counts[static_cast<size_t>(label)];
  }

  for (size_t c = 0; c < ds.classes.size(); ++c)
    if (ds.class_counts[c] == 0) throw ValidationError("class " + ds.classes[c] + " empty");
  return ds;
}

// Disjoint, exhaustive, seed-deterministic split with largest-remainder
// rounding (a single item lands in the largest-ratio part).
template <typename T>
std::array<std::vector<T>, 3> split(const std::vector<T>& dataset, std::array<double, 3> ratios, uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
  size_t n = dataset.size();
  std::array<size_t, 3> counts{};
  std::array<double, 3> frac{};
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<size_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (size_t left = n - assigned, k = 0; left > 0; --left, ++k) ++counts[order[k % 3]];

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  std::array<std::vector<T>, 3> out;
  size_t at = 0;
  for (int part = 0; part < 3; ++part)
    for (size_t k = 0; k < counts[part]; ++k) out[part].push_back(dataset[idx[at++]]);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset serialization (JSONL + sidecar meta)
// ---------------------------------------------------------------------------

inline json sequence_to_json(const TokenSequence& seq) {
  json ids = json::array();
  for (int i = 0; i < seq.true_len; ++i) ids.push_back(seq.ids[i]);
  return ids;
}

inline TokenSequence sequence_from_json(const json& ids, int max_seq) {
  TokenSequence seq;
  if (static_cast<int>(ids.size()) > max_seq) throw ValidationError("sequence longer than max_seq");
  seq.ids.assign(max_seq, Vocabulary::pad_id);
  int pos = 0;
  for (const auto& id : ids) seq.ids[pos++] = id.get<int32_t>();
  seq.true_len = pos;
  return seq;
}

inline void write_pairs(const std::vector<PairExample>& pairs, std::ostream& out) {
  for (const auto& p : pairs) {
    json j;
    j["a"] = sequence_to_json(p.a);
    j["b"] = sequence_to_json(p.b);
    j["bos_sim"] = p.bos_sim;
    j["label"] = p.label;
    if (!p.pair_key.empty()) j["pair"] = p.pair_key;
    out << j.dump() << "\n";
  }
}

inline std::vector<PairExample> read_pairs(std::istream& in, int max_seq) {
  std::vector<PairExample> out;
  for_each_line(in, [&](size_t lineno, const std::string& line) {
    try {
      json j = json::parse(line);
      PairExample p;
      p.a = sequence_from_json(j.at("a"), max_seq);
      p.b = sequence_from_json(j.at("b"), max_seq);
      p.bos_sim = j.at("bos_sim").get<double>();
      if (j.contains("label")) p.label = j.at("label").get<int>();
      if (j.contains("pair")) p.pair_key = j.at("pair").get<std::string>();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed pair example: ") + e.what());
    }
  });
  return out;
}

inline void write_toolchain(const std::vector<ToolchainExample>& xs, std::ostream& out) {
  for (const auto& x : xs) {
    json j;
    j["x"] = sequence_to_json(x.x);
    j["label"] = x.label;
    out << j.dump() << "\n";
  }
}

inline std::vector<ToolchainExample> read_toolchain(std::istream& in, int max_seq) {
  std::vector<ToolchainExample> out;
  for_each_line(in, [&](size_t lineno, const std::string& line) {
    try {
      json j = json::parse(line);
      ToolchainExample x;
      x.x = sequence_from_json(j.at("x"), max_seq);
      if (j.contains("label")) x.label = j.at("label").get<int>();
      out.push_back(std::move(x));
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed toolchain example: ") + e.what());
    }
  });
  return out;
}

struct DatasetMeta {
  std::string kind;  // "binsim" or "toolchain"
  std::vector<std::string> classes;
  std::string vocab_hash;
  int max_seq = 0;
  std::map<std::string, size_t> counts;

  json to_json() const {
    return {{"kind", kind}, {"classes", classes}, {"vocab_hash", vocab_hash}, {"max_seq", max_seq}, {"counts", counts}};
  }
  static DatasetMeta from_json(const json& j) {
    DatasetMeta m;
    m.kind = j.at("kind").get<std::string>();
    for (const auto& c : j.at("classes")) m.classes.push_back(c.get<std::string>());
    m.vocab_hash = j.at("vocab_hash").get<std::string>();
    m.max_seq = j.at("max_seq").get<int>();
    if (j.contains("counts"))
      for (auto it = j.at("counts").begin(); it != j.at("counts").end(); ++it)
        m.counts[it.key()] = it.value().get<size_t>();
    return m;
  }
};

}  // namespace binsem
