#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "binsem/ingest.hpp"

namespace binsem {

// Normalization granularity. balanced is the default scheme; coarse keeps
// only register classes and collapses immediates/pointers to immval/ptr;
// fine keeps operand text nearly verbatim (immediates still become immval).
enum class NormMode { balanced, coarse, fine };

inline NormMode mode_from_string(const std::string& s) {
  if (s == "balanced") return NormMode::balanced;
  if (s == "coarse") return NormMode::coarse;
  if (s == "fine") return NormMode::fine;
  throw ValidationError("unknown normalization mode \"" + s + "\"");
}

inline const char* mode_literal(NormMode m) {
  switch (m) {
    case NormMode::balanced: return "balanced";
    case NormMode::coarse: return "coarse";
    case NormMode::fine: return "fine";
  }
  return "balanced";
}

struct NormConfig {
  NormMode mode = NormMode::balanced;
  // Displacements with |value| <= this render as decimal literals; larger
  // ones collapse to disp/dispstr/dispbss/dispdata.
  int small_disp_literal_max = 8;
};

namespace detail {

inline std::unordered_map<std::string, std::string> make_register_table() {
  std::unordered_map<std::string, std::string> t;
  auto add = [&](std::initializer_list<const char*> names, const std::string& tok) {
    for (const char* n : names) t.emplace(n, tok);
  };
  add({"rax", "rbx", "rcx", "rdx", "rsi", "rdi"}, "reg8");
  add({"eax", "ebx", "ecx", "edx", "esi", "edi"}, "reg4");
  add({"ax", "bx", "cx", "dx", "si", "di"}, "reg2");
  add({"al", "bl", "cl", "dl", "ah", "bh", "ch", "dh", "sil", "dil"}, "reg1");
  for (int i = 8; i <= 15; ++i) {
    std::string r = "r" + std::to_string(i);
    t.emplace(r, "reg8");
    t.emplace(r + "d", "reg4");
    t.emplace(r + "w", "reg2");
    t.emplace(r + "b", "reg1");
  }
  add({"rsp"}, "sp8"), add({"esp"}, "sp4"), add({"sp"}, "sp2"), add({"spl"}, "sp1");
  add({"rbp"}, "bp8"), add({"ebp"}, "bp4"), add({"bp"}, "bp2"), add({"bpl"}, "bp1");
  add({"rip"}, "ip8"), add({"eip"}, "ip4"), add({"ip"}, "ip2");
  for (int i = 0; i <= 15; ++i) {
    t.emplace("cr" + std::to_string(i), "regcr");
    t.emplace("dr" + std::to_string(i), "regdr");
  }
  t.emplace("st", "regst");
  for (int i = 0; i <= 7; ++i) {
    t.emplace("st" + std::to_string(i), "regst");
    t.emplace("st(" + std::to_string(i) + ")", "regst");
    t.emplace("mm" + std::to_string(i), "regmm");
  }
  add({"cs", "ds", "es", "fs", "gs", "ss"}, "");  // filled below with reg<name>
  for (const char* s : {"cs", "ds", "es", "fs", "gs", "ss"}) t[s] = std::string("reg") + s;
  for (int i = 0; i <= 31; ++i) {
    t.emplace("xmm" + std::to_string(i), "regxmm");
    t.emplace("ymm" + std::to_string(i), "regymm");
    t.emplace("zmm" + std::to_string(i), "regzmm");
  }
  return t;
}

inline const std::unordered_map<std::string, std::string>& register_table() {
  static const auto table = make_register_table();
  return table;
}

// Last whitespace-separated word, so prefixed forms ("rep stosq",
// "lock cmpxchg") classify by the opcode proper.
inline std::string opcode_word(const std::string& mnemonic) {
  auto pos = mnemonic.find_last_of(" \t");
  return pos == std::string::npos ? mnemonic : mnemonic.substr(pos + 1);
}

inline bool is_call_family(const std::string& mnemonic) {
  std::string op = opcode_word(mnemonic);
  return op == "call" || op == "lcall" || op == "callq";
}

inline bool is_jump_family(const std::string& mnemonic) {
  std::string op = opcode_word(mnemonic);
  if (!op.empty() && op[0] == 'j') return true;
  return op == "loop" || op == "loope" || op == "loopne" || op == "loopz" || op == "loopnz";
}

// Tokens are lowercase [a-z0-9] chunks joined by '_'; operand chunks also
// admit []+*:.- . Anything else is dropped.
inline std::string sanitize_chunk(const std::string& s, bool operand) {
  std::string out;
  out.reserve(s.size());
  for (char raw : s) {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (operand && !ok)
      ok = c == '[' || c == ']' || c == '+' || c == '*' || c == ':' || c == '.' || c == '-';
    if (ok) out.push_back(c);
  }
  return out;
}

inline std::string size_prefix(int size_bytes, const std::string& raw_text) {
  switch (size_bytes) {
    case 1: return "byteptr";
    case 2: return "wordptr";
    case 4: return "dwordptr";
    case 8: return "qwordptr";
    case 10: return "tbyteptr";
    case 16: return lowercase(raw_text).find("xword") != std::string::npos ? "xwordptr" : "xmmwordptr";
    case 32: return "ymmwordptr";
    case 64: return "zmmwordptr";
    default: throw ValidationError("unsupported memory width " + std::to_string(size_bytes));
  }
}

}  // namespace detail

enum class ImmCtx { call_target, jump_target, other };

inline std::string normalize_register(const std::string& name) {
  const auto& table = detail::register_table();
  auto it = table.find(lowercase(name));
  if (it == table.end()) throw ValidationError("unknown register \"" + name + "\"");
  return it->second;
}

inline std::string libc_token(const std::string& name) {
  return "libc" + detail::sanitize_chunk(name, false);
}

// Precedence: call classes > jump destination > reference classes > immval.
inline std::string normalize_immediate(const OperandMeta& op, ImmCtx ctx) {
  if (ctx == ImmCtx::call_target) {
    switch (op.ref_class) {
      case RefClass::libc: return libc_token(op.ref_name);
      case RefClass::self_call: return "self";
      case RefClass::innerfunc: return "innerfunc";
      case RefClass::externfunc: return "externfunc";
      default: break;
    }
  }
  if (ctx == ImmCtx::jump_target) return "jmpdst";
  switch (op.ref_class) {
    case RefClass::libc: return libc_token(op.ref_name);
    case RefClass::self_call: return "self";
    case RefClass::innerfunc: return "innerfunc";
    case RefClass::externfunc: return "externfunc";
    case RefClass::jmpdst: return "jmpdst";
    case RefClass::string_ref: return "dispstr";
    case RefClass::bss_ref: return "dispbss";
    case RefClass::data_ref: return "dispdata";
    case RefClass::none: break;
  }
  return "immval";
}

inline std::string normalize_memory(const OperandMeta& op, bool is_lea_src, const NormConfig& cfg) {
  if (cfg.mode == NormMode::coarse) return "ptr";
  if (!op.mem_expr) throw ValidationError("memory operand without mem expression");
  const MemExpr& m = *op.mem_expr;
  if (!m.base && !m.index && !m.displacement)
    throw ValidationError("memory operand with neither base, index, nor displacement");

  std::string expr;
  if (m.base) expr += normalize_register(*m.base);
  if (m.index) {
    if (!expr.empty()) expr += "+";
    expr += normalize_register(*m.index);
    if (m.scale && *m.scale > 1) expr += "*" + std::to_string(*m.scale);
  }
  if (m.displacement && (*m.displacement != 0 || expr.empty())) {
    int64_t d = *m.displacement;
    uint64_t mag = d < 0 ? static_cast<uint64_t>(-(d + 1)) + 1 : static_cast<uint64_t>(d);
    std::string tok;
    if (mag <= static_cast<uint64_t>(cfg.small_disp_literal_max)) {
      tok = std::to_string(mag);
    } else {
      switch (m.disp_ref) {
        case RefClass::string_ref: tok = "dispstr"; break;
        case RefClass::bss_ref: tok = "dispbss"; break;
        case RefClass::data_ref: tok = "dispdata"; break;
        default: tok = "disp"; break;
      }
    }
    if (expr.empty())
      expr = (d < 0 ? "-" : "") + tok;
    else
      expr += (d < 0 ? "-" : "+") + tok;
  }

  std::string bracketed = "[" + expr + "]";
  if (is_lea_src) return bracketed;
  std::string prefix;
  if (op.size_bytes) prefix = detail::size_prefix(*op.size_bytes, op.raw_text);
  if (op.segment_prefix) prefix += lowercase(*op.segment_prefix) + ":";
  return prefix + bracketed;
}

// One instruction, one token: mnemonic (whitespace removed) joined with
// normalized operands by '_'. Opcode text itself is never rewritten.
inline std::string normalize_instruction(const InstructionRecord& ins, const NormConfig& cfg) {
  std::string token = detail::sanitize_chunk(ins.mnemonic, false);
  if (token.empty()) throw ValidationError("empty mnemonic");

  bool call_fam = detail::is_call_family(ins.mnemonic);
  bool jump_fam = detail::is_jump_family(ins.mnemonic);
  bool lea = detail::opcode_word(ins.mnemonic) == "lea";

  for (size_t i = 0; i < ins.operands.size(); ++i) {
    const OperandMeta& op = ins.operands[i];
    std::string chunk;
    if (cfg.mode == NormMode::fine) {
      chunk = op.kind == OperandKind::immediate ? "immval" : detail::sanitize_chunk(op.raw_text, true);
    } else {
      switch (op.kind) {
        case OperandKind::immediate: {
          ImmCtx ctx = ImmCtx::other;
          if (i == 0 && call_fam) ctx = ImmCtx::call_target;
          if (i == 0 && jump_fam) ctx = ImmCtx::jump_target;
          chunk = cfg.mode == NormMode::coarse ? "immval" : normalize_immediate(op, ctx);
          break;
        }
        case OperandKind::register_:
          chunk = normalize_register(op.raw_text);
          break;
        case OperandKind::memory:
          chunk = normalize_memory(op, lea && i == 1, cfg);
          break;
      }
    }
    if (chunk.empty()) throw ValidationError("operand " + std::to_string(i) + " normalized to empty token");
    token += "_" + chunk;
  }
  return token;
}

// Identity of a normalized function, carried through every downstream file.
struct NfId {
  std::string binary_id;
  std::string function_name;
  std::string compiler;
  std::string opt_level;
  std::string testsuite;

  bool operator==(const NfId&) const = default;
};

struct NormalizedFunction {
  NfId id;
  std::vector<std::string> tokens;
  std::vector<int64_t> bos_consts;
  std::vector<std::string> bos_strings;

  bool operator==(const NormalizedFunction&) const = default;
};

inline NormalizedFunction normalize_function(const FunctionRecord& f, const NormConfig& cfg) {
  NormalizedFunction nf;
  nf.id = {f.binary_id, f.function_name, f.compiler.name, opt_literal(f.opt_level), f.testsuite};
  nf.bos_consts = f.bos_constants;
  nf.bos_strings = f.bos_strings;
  nf.tokens.reserve(f.instructions.size());
  for (size_t i = 0; i < f.instructions.size(); ++i) {
    try {
      nf.tokens.push_back(normalize_instruction(f.instructions[i], cfg));
    } catch (const ValidationError& e) {
      throw ValidationError("instruction " + std::to_string(i) + ": " + e.what());
    }
  }
  return nf;
}

inline json nf_to_json(const NormalizedFunction& nf) {
  json j;
  j["id"] = {{"binary_id", nf.id.binary_id},
             {"function_name", nf.id.function_name},
             {"compiler", nf.id.compiler},
             {"opt_level", nf.id.opt_level},
             {"testsuite", nf.id.testsuite}};
  j["tokens"] = nf.tokens;
  j["bos_consts"] = nf.bos_consts;
  j["bos_strings"] = nf.bos_strings;
  return j;
}

inline NormalizedFunction nf_from_json(const json& j) {
  NormalizedFunction nf;
  const json& id = j.at("id");
  nf.id.binary_id = id.at("binary_id").get<std::string>();
  nf.id.function_name = id.at("function_name").get<std::string>();
  nf.id.compiler = id.at("compiler").get<std::string>();
  nf.id.opt_level = id.at("opt_level").get<std::string>();
  if (id.contains("testsuite")) nf.id.testsuite = id.at("testsuite").get<std::string>();
  for (const auto& t : j.at("tokens")) nf.tokens.push_back(t.get<std::string>());
  if (j.contains("bos_consts"))
    for (const auto& c : j.at("bos_consts")) nf.bos_consts.push_back(c.get<int64_t>());
  if (j.contains("bos_strings"))
    for (const auto& s : j.at("bos_strings")) nf.bos_strings.push_back(s.get<std::string>());
  return nf;
}

inline std::vector<NormalizedFunction> read_nfs(std::istream& in) {
  std::vector<NormalizedFunction> out;
  for_each_line(in, [&](size_t lineno, const std::string& line) {
    try {
      out.push_back(nf_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("malformed normalized function: ") + e.what());
    }
  });
  return out;
}

inline void write_nfs(const std::vector<NormalizedFunction>& nfs, std::ostream& out) {
  for (const auto& nf : nfs) out << nf_to_json(nf).dump() << "\n";
}

}  // namespace binsem
