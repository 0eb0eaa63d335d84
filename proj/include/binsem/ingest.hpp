#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "binsem/common.hpp"

namespace binsem {

// What an immediate (or a memory displacement) points at. Produced by the
// upstream disassembly exporter or by the asm-text adapter; normalization
// reads addresses only through this.
enum class RefClass { none, libc, self_call, innerfunc, externfunc, jmpdst, string_ref, bss_ref, data_ref };

inline const char* ref_literal(RefClass r) {
  switch (r) {
    case RefClass::libc: return "libc";
    case RefClass::self_call: return "self";
    case RefClass::innerfunc: return "inner";
    case RefClass::externfunc: return "extern";
    case RefClass::jmpdst: return "jmp";
    case RefClass::string_ref: return "str";
    case RefClass::bss_ref: return "bss";
    case RefClass::data_ref: return "data";
    case RefClass::none: break;
  }
  return "";
}

inline RefClass ref_from_literal(const std::string& s) {
  if (s == "libc") return RefClass::libc;
  if (s == "self") return RefClass::self_call;
  if (s == "inner") return RefClass::innerfunc;
  if (s == "extern") return RefClass::externfunc;
  if (s == "jmp") return RefClass::jmpdst;
  if (s == "str") return RefClass::string_ref;
  if (s == "bss") return RefClass::bss_ref;
  if (s == "data") return RefClass::data_ref;
  throw ValidationError("unknown ref literal \"" + s + "\"");
}

enum class OperandKind { immediate, register_, memory };

struct MemExpr {
  std::optional<std::string> base;
  std::optional<std::string> index;
  std::optional<int> scale;  // 1, 2, 4 or 8
  std::optional<int64_t> displacement;
  RefClass disp_ref = RefClass::none;

  bool operator==(const MemExpr&) const = default;
};

struct OperandMeta {
  std::string raw_text;
  OperandKind kind = OperandKind::immediate;
  std::optional<int64_t> value;      // immediate value
  std::optional<int> size_bytes;     // memory access width
  RefClass ref_class = RefClass::none;
  std::string ref_name;              // symbol name, set for libc refs
  std::optional<std::string> segment_prefix;
  std::optional<MemExpr> mem_expr;

  bool operator==(const OperandMeta&) const = default;
};

struct InstructionRecord {
  uint64_t address = 0;
  std::string mnemonic;  // lowercase, prefixes included ("rep stosq")
  std::vector<OperandMeta> operands;
  std::optional<uint64_t> basic_block_id;

  bool operator==(const InstructionRecord&) const = default;
};

enum class CompilerKind { gcc, clang, other };

struct Compiler {
  CompilerKind kind = CompilerKind::other;
  std::string name;  // "gcc", "clang", or the custom spelling

  static Compiler from_string(const std::string& s) {
    if (s == "gcc") return {CompilerKind::gcc, "gcc"};
    if (s == "clang") return {CompilerKind::clang, "clang"};
    return {CompilerKind::other, s};
  }
  bool operator==(const Compiler&) const = default;
};

enum class OptLevel { O0, O1, O2, O3, unknown };

inline const char* opt_literal(OptLevel o) {
  switch (o) {
    case OptLevel::O0: return "O0";
    case OptLevel::O1: return "O1";
    case OptLevel::O2: return "O2";
    case OptLevel::O3: return "O3";
    case OptLevel::unknown: break;
  }
  return "unknown";
}

inline OptLevel opt_from_literal(const std::string& s) {
  if (s == "O0") return OptLevel::O0;
  if (s == "O1") return OptLevel::O1;
  if (s == "O2") return OptLevel::O2;
  if (s == "O3") return OptLevel::O3;
  if (s == "unknown") return OptLevel::unknown;
  throw ValidationError("unknown opt_level literal \"" + s + "\"");
}

struct FunctionRecord {
  std::string binary_id;
  std::string testsuite;
  Compiler compiler;
  OptLevel opt_level = OptLevel::unknown;
  std::string function_name;
  std::vector<InstructionRecord> instructions;
  std::vector<int64_t> bos_constants;  // multiset, duplicates meaningful
  std::vector<std::string> bos_strings;

  bool operator==(const FunctionRecord&) const = default;
};

namespace detail {

inline const json& require_field(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError("missing field " + std::string(key) + (path.empty() ? "" : " at " + path));
  return *it;
}

inline MemExpr mem_from_json(const json& j, const std::string& path) {
  MemExpr m;
  if (j.contains("base")) m.base = j.at("base").get<std::string>();
  if (j.contains("index")) m.index = j.at("index").get<std::string>();
  if (j.contains("scale")) {
    m.scale = j.at("scale").get<int>();
    if (*m.scale != 1 && *m.scale != 2 && *m.scale != 4 && *m.scale != 8)
      throw ValidationError("scale must be 1, 2, 4 or 8 at " + path);
  }
  if (j.contains("disp")) m.displacement = j.at("disp").get<int64_t>();
  if (j.contains("disp_ref")) m.disp_ref = ref_from_literal(j.at("disp_ref").get<std::string>());
  return m;
}

inline OperandMeta operand_from_json(const json& j, const std::string& path) {
  OperandMeta op;
  op.raw_text = require_field(j, "raw", path).get<std::string>();
  std::string kind = require_field(j, "kind", path).get<std::string>();
  if (kind == "imm")
    op.kind = OperandKind::immediate;
  else if (kind == "reg")
    op.kind = OperandKind::register_;
  else if (kind == "mem")
    op.kind = OperandKind::memory;
  else
    throw ValidationError("unknown kind literal \"" + kind + "\" at " + path);
  if (j.contains("value")) op.value = j.at("value").get<int64_t>();
  if (j.contains("size")) {
    int s = j.at("size").get<int>();
    static const std::set<int> widths = {1, 2, 4, 8, 10, 16, 32, 64};
    if (!widths.count(s)) throw ValidationError("invalid size " + std::to_string(s) + " at " + path);
    op.size_bytes = s;
  }
  if (j.contains("ref")) op.ref_class = ref_from_literal(j.at("ref").get<std::string>());
  if (j.contains("ref_name")) op.ref_name = j.at("ref_name").get<std::string>();
  if (j.contains("seg")) op.segment_prefix = j.at("seg").get<std::string>();
  if (j.contains("mem")) op.mem_expr = mem_from_json(j.at("mem"), path);

  if (op.kind == OperandKind::immediate) {
    if (!op.value) throw ValidationError("immediate operand without value at " + path);
    if (op.mem_expr) throw ValidationError("immediate operand with mem expression at " + path);
  }
  if (op.kind == OperandKind::memory && !op.mem_expr)
    throw ValidationError("memory operand without mem expression at " + path);
  return op;
}

}  // namespace detail

inline FunctionRecord record_from_json(const json& j) {
  using detail::require_field;
  FunctionRecord r;
  r.binary_id = require_field(j, "binary_id", "").get<std::string>();
  r.testsuite = require_field(j, "testsuite", "").get<std::string>();
  r.compiler = Compiler::from_string(require_field(j, "compiler", "").get<std::string>());
  r.opt_level = opt_from_literal(require_field(j, "opt_level", "").get<std::string>());
  r.function_name = require_field(j, "function_name", "").get<std::string>();

  const json& ins = require_field(j, "instructions", "");
  for (size_t i = 0; i < ins.size(); ++i) {
    std::string ipath = "instruction " + std::to_string(i);
    const json& ij = ins[i];
    InstructionRecord rec;
    rec.address = require_field(ij, "address", ipath).get<uint64_t>();
    rec.mnemonic = require_field(ij, "mnemonic", ipath).get<std::string>();
    if (rec.mnemonic.empty()) throw ValidationError("empty mnemonic at " + ipath);
    if (ij.contains("bb")) rec.basic_block_id = ij.at("bb").get<uint64_t>();
    if (ij.contains("operands")) {
      const json& ops = ij.at("operands");
      for (size_t k = 0; k < ops.size(); ++k)
        rec.operands.push_back(detail::operand_from_json(ops[k], ipath + " operand " + std::to_string(k)));
    }
    r.instructions.push_back(std::move(rec));
  }
  if (j.contains("bos_consts"))
    for (const auto& c : j.at("bos_consts")) r.bos_constants.push_back(c.get<int64_t>());
  if (j.contains("bos_strings"))
    for (const auto& s : j.at("bos_strings")) r.bos_strings.push_back(s.get<std::string>());
  return r;
}

inline json record_to_json(const FunctionRecord& r) {
  json j;
  j["binary_id"] = r.binary_id;
  j["testsuite"] = r.testsuite;
  j["compiler"] = r.compiler.name;
  j["opt_level"] = opt_literal(r.opt_level);
  j["function_name"] = r.function_name;
  json ins = json::array();
  for (const auto& i : r.instructions) {
    json ij;
    ij["address"] = i.address;
    ij["mnemonic"] = i.mnemonic;
    if (i.basic_block_id) ij["bb"] = *i.basic_block_id;
    json ops = json::array();
    for (const auto& op : i.operands) {
      json oj;
      oj["raw"] = op.raw_text;
      oj["kind"] = op.kind == OperandKind::immediate ? "imm" : op.kind == OperandKind::register_ ? "reg" : "mem";
      if (op.value) oj["value"] = *op.value;
      if (op.size_bytes) oj["size"] = *op.size_bytes;
      if (op.ref_class != RefClass::none) oj["ref"] = ref_literal(op.ref_class);
      if (!op.ref_name.empty()) oj["ref_name"] = op.ref_name;
      if (op.segment_prefix) oj["seg"] = *op.segment_prefix;
      if (op.mem_expr) {
        json mj;
        if (op.mem_expr->base) mj["base"] = *op.mem_expr->base;
        if (op.mem_expr->index) mj["index"] = *op.mem_expr->index;
        if (op.mem_expr->scale) mj["scale"] = *op.mem_expr->scale;
        if (op.mem_expr->displacement) mj["disp"] = *op.mem_expr->displacement;
        if (op.mem_expr->disp_ref != RefClass::none) mj["disp_ref"] = ref_literal(op.mem_expr->disp_ref);
        oj["mem"] = std::move(mj);
      }
      ops.push_back(std::move(oj));
    }
    ij["operands"] = std::move(ops);
    ins.push_back(std::move(ij));
  }
  j["instructions"] = std::move(ins);
  j["bos_consts"] = r.bos_constants;
  j["bos_strings"] = r.bos_strings;
  return j;
}

// Parses the JSONL contract, one FunctionRecord per line. Line order is
// preserved; (binary_id, function_name) must be unique per build config.
inline std::vector<FunctionRecord> parse_records(std::istream& in) {
  std::vector<FunctionRecord> out;
  std::set<std::string> seen;
  for_each_line(in, [&](size_t lineno, const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    try {
      out.push_back(record_from_json(j));
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("schema violation: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(lineno, e.what());
    }
    const FunctionRecord& r = out.back();
    std::string key = r.binary_id + "\x1f" + r.function_name + "\x1f" + r.compiler.name + "\x1f" + opt_literal(r.opt_level);
    if (!seen.insert(key).second)
      throw ParseError(lineno, "duplicate (binary_id, function_name) for one build config: " + r.binary_id + "/" + r.function_name);
  });
  return out;
}

inline void serialize_records(const std::vector<FunctionRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

}  // namespace binsem
