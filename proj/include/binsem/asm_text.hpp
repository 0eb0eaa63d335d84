#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "binsem/normalizer.hpp"

namespace binsem {

enum class SectionKind { text, plt_got, bss, data, rodata_string };

inline SectionKind section_from_string(const std::string& s) {
  if (s == "text") return SectionKind::text;
  if (s == "plt_got") return SectionKind::plt_got;
  if (s == "bss") return SectionKind::bss;
  if (s == "data") return SectionKind::data;
  if (s == "rodata_string") return SectionKind::rodata_string;
  throw ValidationError("unknown section kind \"" + s + "\"");
}

// Address-range hints for the asm-text adapter. Section ranges drive the
// ref classification; the symbol table plus libc name list is the only way
// a call can classify as libc.
struct SectionMap {
  struct Range {
    uint64_t begin = 0;
    uint64_t end = 0;  // half-open
    SectionKind kind = SectionKind::text;
  };
  std::vector<Range> ranges;
  std::map<uint64_t, std::string> symbols;
  std::set<std::string> libc_names;

  std::optional<SectionKind> classify(uint64_t addr) const {
    for (const auto& r : ranges)
      if (addr >= r.begin && addr < r.end) return r.kind;
    return std::nullopt;
  }

  static SectionMap from_json(const json& j) {
    SectionMap m;
    if (j.contains("ranges"))
      for (const auto& r : j.at("ranges"))
        m.ranges.push_back({r.at("begin").get<uint64_t>(), r.at("end").get<uint64_t>(),
                            section_from_string(r.at("kind").get<std::string>())});
    if (j.contains("symbols"))
      for (const auto& s : j.at("symbols"))
        m.symbols[s.at("addr").get<uint64_t>()] = s.at("name").get<std::string>();
    if (j.contains("libc"))
      for (const auto& n : j.at("libc")) m.libc_names.insert(n.get<std::string>());
    return m;
  }
};

struct AsmParseResult {
  FunctionRecord record;
  std::vector<std::string> warnings;
};

namespace detail {

inline bool is_prefix_word(const std::string& w) {
  static const std::set<std::string> prefixes = {"lock", "rep", "repe", "repz", "repne", "repnz", "bnd", "notrack"};
  return prefixes.count(w) > 0;
}

inline bool parse_int_token(const std::string& s, int64_t& out) {
  if (s.empty()) return false;
  size_t i = 0;
  bool neg = false;
  if (s[0] == '-' || s[0] == '+') {
    neg = s[0] == '-';
    i = 1;
  }
  if (i >= s.size()) return false;
  int base = 10;
  if (s.size() > i + 1 && s[i] == '0' && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
    base = 16;
    i += 2;
  }
  if (i >= s.size()) return false;
  uint64_t v = 0;
  for (; i < s.size(); ++i) {
    int d;
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
    if (c >= '0' && c <= '9')
      d = c - '0';
    else if (base == 16 && c >= 'a' && c <= 'f')
      d = c - 'a' + 10;
    else if (c == 'h' && base == 10 && i == s.size() - 1)
      return false;  // IDA-style 38h not supported, objdump syntax only
    else
      return false;
    v = v * static_cast<uint64_t>(base) + static_cast<uint64_t>(d);
  }
  out = neg ? -static_cast<int64_t>(v) : static_cast<int64_t>(v);
  return true;
}

inline bool is_register_name(const std::string& s) {
  return register_table().count(lowercase(s)) > 0;
}

inline std::optional<int> mem_width_keyword(const std::string& w) {
  if (w == "byte") return 1;
  if (w == "word") return 2;
  if (w == "dword") return 4;
  if (w == "qword") return 8;
  if (w == "tbyte") return 10;
  if (w == "xword" || w == "xmmword") return 16;
  if (w == "ymmword") return 32;
  if (w == "zmmword") return 64;
  return std::nullopt;
}

inline std::vector<std::string> split_trim(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& part : out) {
    size_t b = part.find_first_not_of(" \t");
    size_t e = part.find_last_not_of(" \t");
    part = b == std::string::npos ? "" : part.substr(b, e - b + 1);
  }
  return out;
}

// "[base+index*scale+disp]" with any term order objdump emits.
inline MemExpr parse_mem_expr(const std::string& inside, const std::string& whole) {
  MemExpr m;
  std::string cur;
  int sign = 1;
  auto flush = [&]() {
    if (cur.empty()) return;
    int64_t value = 0;
    size_t star = cur.find('*');
    if (star != std::string::npos) {
      std::string a = cur.substr(0, star), b = cur.substr(star + 1);
      std::string reg = is_register_name(a) ? a : b;
      std::string num = is_register_name(a) ? b : a;
      int64_t scale = 0;
      if (!is_register_name(reg) || !parse_int_token(num, scale))
        throw ValidationError("unparseable operand \"" + whole + "\"");
      if (m.index) throw ValidationError("unparseable operand \"" + whole + "\" (two index terms)");
      m.index = lowercase(reg);
      m.scale = static_cast<int>(scale);
    } else if (is_register_name(cur)) {
      if (!m.base)
        m.base = lowercase(cur);
      else if (!m.index)
        m.index = lowercase(cur), m.scale = 1;
      else
        throw ValidationError("unparseable operand \"" + whole + "\" (three registers)");
    } else if (parse_int_token(cur, value)) {
      if (m.displacement) throw ValidationError("unparseable operand \"" + whole + "\" (two displacements)");
      m.displacement = sign * value;
    } else {
      throw ValidationError("unparseable operand \"" + whole + "\"");
    }
    cur.clear();
    sign = 1;
  };
  for (char c : inside) {
    if (c == ' ' || c == '\t') continue;
    if (c == '+' || c == '-') {
      if (cur.empty() && c == '-') {
        sign = -1;
        continue;
      }
      flush();
      sign = c == '-' ? -1 : 1;
    } else {
      cur.push_back(c);
    }
  }
  flush();
  if (!m.base && !m.index && !m.displacement)
    throw ValidationError("unparseable operand \"" + whole + "\" (empty memory expression)");
  return m;
}

}  // namespace detail

// One function in Intel syntax, one instruction per line, optional
// "addr:" prefixes. Ref classes come from the hint map; classification
// ambiguities (a branch target that also sits in a data range) are reported
// through the warnings channel, precedence call > jump > reference wins.
inline AsmParseResult parse_asm_text(const std::string& text, const SectionMap& hints,
                                     const FunctionRecord& meta = {}) {
  AsmParseResult result;
  result.record = meta;
  result.record.instructions.clear();

  struct Pending {
    size_t ins_index;
    size_t op_index;
    uint64_t target;
    enum { call, jump, plain } role;
  };
  std::vector<Pending> pendings;

  std::istringstream ss(text);
  std::string line;
  uint64_t synth_addr = 0;
  while (std::getline(ss, line)) {
    if (auto cut = line.find_first_of(";#"); cut != std::string::npos) line = line.substr(0, cut);
    size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t");
    line = line.substr(b, e - b + 1);
    if (line.empty() || line.back() == ':') continue;  // bare labels

    InstructionRecord ins;
    // optional leading "addr:" (hex, with or without 0x)
    if (auto colon = line.find(':'); colon != std::string::npos && colon > 0) {
      std::string head = line.substr(0, colon);
      bool hexy = true;
      for (char c : head)
        if (!std::isxdigit(static_cast<unsigned char>(c)) && !(c == 'x' && head.find("0x") == 0)) hexy = false;
      if (hexy) {
        int64_t a = 0;
        std::string h = head.find("0x") == 0 ? head : "0x" + head;
        if (detail::parse_int_token(h, a)) {
          ins.address = static_cast<uint64_t>(a);
          line = line.substr(colon + 1);
          size_t nb = line.find_first_not_of(" \t");
          line = nb == std::string::npos ? "" : line.substr(nb);
        }
      }
    }
    if (line.empty()) continue;
    if (ins.address == 0) ins.address = synth_addr;
    synth_addr = ins.address + 1;

    // mnemonic = prefixes + opcode word
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::string mnemonic = lowercase(word);
    while (detail::is_prefix_word(mnemonic.substr(mnemonic.find_last_of(' ') + 1))) {
      std::string next;
      if (!(ls >> next)) break;
      mnemonic += " " + lowercase(next);
    }
    ins.mnemonic = mnemonic;
    std::string rest;
    std::getline(ls, rest);
    size_t rb = rest.find_first_not_of(" \t");
    rest = rb == std::string::npos ? "" : rest.substr(rb);

    bool call_fam = detail::is_call_family(mnemonic);
    bool jump_fam = detail::is_jump_family(mnemonic);

    if (!rest.empty()) {
      for (const std::string& raw : detail::split_trim(rest, ',')) {
        if (raw.empty()) continue;
        OperandMeta op;
        op.raw_text = raw;
        std::string low = lowercase(raw);

        if (low.find('[') != std::string::npos) {
          op.kind = OperandKind::memory;
          std::string head = low.substr(0, low.find('['));
          std::string inside = low.substr(low.find('[') + 1);
          if (inside.empty() || inside.back() != ']')
            throw ValidationError("unparseable operand \"" + raw + "\"");
          inside.pop_back();
          // head: ["<width> ptr"] ["<seg>:"]
          std::vector<std::string> hw;
          {
            std::istringstream hs(head);
            std::string w;
            while (hs >> w) hw.push_back(w);
          }
          size_t wi = 0;
          if (wi < hw.size()) {
            if (auto width = detail::mem_width_keyword(hw[wi])) {
              op.size_bytes = *width;
              ++wi;
              if (wi < hw.size() && hw[wi] == "ptr") ++wi;
            }
          }
          if (wi < hw.size()) {
            std::string segw = hw[wi];
            if (segw.size() == 3 && segw.back() == ':')
              op.segment_prefix = segw.substr(0, 2), ++wi;
          }
          if (wi < hw.size() && !hw[wi].empty())
            throw ValidationError("unparseable operand \"" + raw + "\"");
          // objdump also writes the segment glued to the bracket: fs:[...]
          if (!op.segment_prefix && inside.size() > 3 && inside[2] == ':') {
            op.segment_prefix = inside.substr(0, 2);
            inside = inside.substr(3);
          }
          op.mem_expr = detail::parse_mem_expr(inside, raw);
          if (op.mem_expr->displacement)
            pendings.push_back({result.record.instructions.size(), ins.operands.size(),
                                static_cast<uint64_t>(*op.mem_expr->displacement), Pending::plain});
        } else if (detail::is_register_name(low)) {
          op.kind = OperandKind::register_;
        } else {
          int64_t v = 0;
          if (!detail::parse_int_token(low, v)) throw ValidationError("unparseable operand \"" + raw + "\"");
          op.kind = OperandKind::immediate;
          op.value = v;
          auto role = call_fam && ins.operands.empty()   ? Pending::call
                      : jump_fam && ins.operands.empty() ? Pending::jump
                                                         : Pending::plain;
          pendings.push_back({result.record.instructions.size(), ins.operands.size(), static_cast<uint64_t>(v), role});
        }
        ins.operands.push_back(std::move(op));
      }
    }
    result.record.instructions.push_back(std::move(ins));
  }

  uint64_t fn_start = result.record.instructions.empty() ? 0 : result.record.instructions.front().address;

  for (const auto& p : pendings) {
    OperandMeta& op = result.record.instructions[p.ins_index].operands[p.op_index];
    auto section = hints.classify(p.target);
    auto data_kind = [&]() -> RefClass {
      if (!section) return RefClass::none;
      switch (*section) {
        case SectionKind::rodata_string: return RefClass::string_ref;
        case SectionKind::bss: return RefClass::bss_ref;
        case SectionKind::data: return RefClass::data_ref;
        default: return RefClass::none;
      }
    };
    if (p.role == Pending::call) {
      auto sym = hints.symbols.find(p.target);
      if (sym != hints.symbols.end() && hints.libc_names.count(sym->second)) {
        op.ref_class = RefClass::libc;
        op.ref_name = sym->second;
      } else if (section == SectionKind::text) {
        op.ref_class = p.target == fn_start ? RefClass::self_call : RefClass::innerfunc;
      } else if (section == SectionKind::plt_got) {
        op.ref_class = RefClass::externfunc;
      } else if (auto dk = data_kind(); dk != RefClass::none) {
        op.ref_class = dk;
        result.warnings.push_back("call target 0x" + hash_hex(p.target) + " resolves to a data section");
      }
    } else if (p.role == Pending::jump) {
      op.ref_class = RefClass::jmpdst;
      if (auto dk = data_kind(); dk != RefClass::none)
        result.warnings.push_back("jump target 0x" + hash_hex(p.target) + " also lies in a data section");
    } else {
      RefClass dk = data_kind();
      if (op.kind == OperandKind::memory)
        op.mem_expr->disp_ref = dk;
      else
        op.ref_class = dk;
      if (section == SectionKind::text && dk == RefClass::none && op.kind == OperandKind::immediate)
        result.warnings.push_back("immediate 0x" + hash_hex(p.target) + " is a code address outside call/jump context");
    }
  }
  return result;
}

}  // namespace binsem
