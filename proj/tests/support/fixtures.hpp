#pragma once

// Synthetic x86-64 fixture corpus shared by the test suites. Everything is
// derived from mt19937_64 streams keyed on (seed, program, function, build
// config), so fixtures are reproducible across runs and processes.

#include <random>
#include <string>
#include <vector>

#include "binsem/asm_text.hpp"
#include "binsem/ingest.hpp"

namespace fixtures {

using namespace binsem;

inline OperandMeta imm(int64_t value, RefClass ref = RefClass::none, const std::string& name = "") {
  OperandMeta op;
  op.kind = OperandKind::immediate;
  op.value = value;
  op.ref_class = ref;
  op.ref_name = name;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(value));
  op.raw_text = value >= 0 ? buf : std::to_string(value);
  return op;
}

inline OperandMeta reg(const std::string& name) {
  OperandMeta op;
  op.kind = OperandKind::register_;
  op.raw_text = name;
  return op;
}

struct MemSpec {
  std::optional<int> size;
  std::optional<std::string> base;
  std::optional<std::string> index;
  std::optional<int> scale;
  std::optional<int64_t> disp;
  RefClass disp_ref = RefClass::none;
  std::optional<std::string> seg;
};

inline OperandMeta mem(const MemSpec& s) {
  OperandMeta op;
  op.kind = OperandKind::memory;
  op.size_bytes = s.size;
  op.segment_prefix = s.seg;
  MemExpr m;
  m.base = s.base;
  m.index = s.index;
  m.scale = s.scale;
  m.displacement = s.disp;
  m.disp_ref = s.disp_ref;
  op.mem_expr = m;

  std::string raw;
  switch (s.size.value_or(0)) {
    case 1: raw = "byte ptr "; break;
    case 2: raw = "word ptr "; break;
    case 4: raw = "dword ptr "; break;
    case 8: raw = "qword ptr "; break;
    case 10: raw = "tbyte ptr "; break;
    case 16: raw = "xmmword ptr "; break;
    default: break;
  }
  if (s.seg) raw += *s.seg + ":";
  raw += "[";
  bool first = true;
  if (s.base) raw += *s.base, first = false;
  if (s.index) {
    if (!first) raw += "+";
    raw += *s.index;
    if (s.scale && *s.scale > 1) raw += "*" + std::to_string(*s.scale);
    first = false;
  }
  if (s.disp && (*s.disp != 0 || first)) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(std::llabs(*s.disp)));
    if (first)
      raw += (*s.disp < 0 ? std::string("-") : std::string()) + buf;
    else
      raw += (*s.disp < 0 ? "-" : "+") + std::string(buf);
  }
  raw += "]";
  op.raw_text = raw;
  return op;
}

inline InstructionRecord ins(uint64_t addr, const std::string& mnemonic, std::vector<OperandMeta> ops = {},
                             std::optional<uint64_t> bb = std::nullopt) {
  InstructionRecord r;
  r.address = addr;
  r.mnemonic = mnemonic;
  r.operands = std::move(ops);
  r.basic_block_id = bb;
  return r;
}

struct CorpusSpec {
  uint64_t seed = 1;
  int programs = 4;
  int functions = 6;
  // (compiler, opt) build configs; defaults give the paper's six usable ones
  // plus O2 so toolchain filtering has something to drop.
  std::vector<std::pair<std::string, std::string>> configs = {
      {"gcc", "O0"}, {"gcc", "O1"}, {"gcc", "O2"}, {"gcc", "O3"},
      {"clang", "O0"}, {"clang", "O1"}, {"clang", "O2"}, {"clang", "O3"}};
};

// One materialized instruction pattern slot. Operand choices are fixed per
// slot, so a body built by cycling slots is recoverable from context: any
// masked position repeats one cycle earlier or later.
inline std::vector<InstructionRecord> make_slot(std::mt19937_64& g, uint64_t fn_base) {
  const std::vector<std::string> gp8 = {"rax", "rbx", "rcx", "rdx", "rsi", "rdi", "r8", "r14"};
  const std::vector<std::string> gp4 = {"eax", "ebx", "ecx", "edx", "esi", "edi", "r8d", "r14d"};
  auto r8 = [&] { return gp8[g() % gp8.size()]; };
  auto r4 = [&] { return gp4[g() % gp4.size()]; };

  std::vector<InstructionRecord> out;
  auto push = [&](const std::string& mn, std::vector<OperandMeta> ops = {}) { out.push_back(ins(0, mn, std::move(ops))); };
  switch (g() % 18) {
    case 0: push("mov", {reg(r8()), reg(r8())}); break;
    case 1: push("mov", {reg(r4()), imm(static_cast<int64_t>(g() % 0x80))}); break;
    case 2: push("mov", {reg(r8()), mem({8, "rbp", {}, {}, -8 - static_cast<int64_t>(g() % 8) * 8})}); break;
    case 3: push("mov", {mem({4, "rbp", {}, {}, -4 - static_cast<int64_t>(g() % 8) * 4}), reg(r4())}); break;
    case 4: push("lea", {reg(r8()), mem({{}, "rbp", {}, {}, -0x40 - static_cast<int64_t>(g() % 4) * 8})}); break;
    case 5: push("add", {reg(r8()), imm(static_cast<int64_t>(g() % 0x30))}); break;
    case 6:
      push("cmp", {reg(r4()), imm(static_cast<int64_t>(g() % 0x20))});
      push(g() % 2 ? "je" : "jne", {imm(static_cast<int64_t>(fn_base + 0x40 + g() % 0x40), RefClass::jmpdst)});
      break;
    case 7: push("call", {imm(0x401000 + static_cast<int64_t>(g() % 0x40) * 0x10, RefClass::innerfunc)}); break;
    case 8:
      push("call",
           {imm(0x400500 + static_cast<int64_t>(g() % 8) * 0x10, RefClass::libc, g() % 2 ? "memcpy" : "strlen")});
      break;
    case 9:
      push("mov", {reg(r4()), imm(0x4c2000 + static_cast<int64_t>(g() % 16) * 8,
                                  g() % 2 ? RefClass::string_ref : RefClass::bss_ref)});
      break;
    case 10: push("movzx", {reg(r4()), mem({1, r8(), {}, {}, static_cast<int64_t>(g() % 6)})}); break;
    case 11: push("mov", {reg(r8()), mem({8, {}, {}, {}, 0x28, RefClass::none, "fs"})}); break;
    case 12: push("xor", {reg(r4()), reg(r4())}); break;
    case 13: push("test", {reg(r8()), reg(r8())}); break;
    case 14: push("lea", {reg(r8()), mem({{}, r8(), r8(), static_cast<int>(1u << (g() % 4)), {}})}); break;
    case 15: push("call", {imm(0x400d00 + static_cast<int64_t>(g() % 8) * 0x10, RefClass::externfunc)}); break;
    case 16: push("sub", {reg(r4()), reg(r4())}); break;
    case 17:
      push("mov", {reg(r8()), imm(0x4d1000 + static_cast<int64_t>(g() % 8) * 8, RefClass::data_ref)});
      break;
  }
  return out;
}

// One deterministic function body: a prologue, a periodic pattern of
// materialized slots (so any masked instruction repeats elsewhere in the
// sequence), and a config-keyed tail that makes every build of the same
// function distinct at the token level and gives the toolchain classifiers
// a learnable signal.
inline FunctionRecord make_function(const CorpusSpec& spec, int prog, int fn, size_t config_idx) {
  const auto& [compiler, opt] = spec.configs[config_idx];
  uint64_t base_key = fnv1a("fn", spec.seed);
  base_key = fnv1a(std::to_string(prog) + "/" + std::to_string(fn), base_key);
  std::mt19937_64 base(base_key);
  std::mt19937_64 conf(fnv1a(compiler + opt, base_key));

  FunctionRecord r;
  r.binary_id = "prog" + std::to_string(prog);
  r.testsuite = "fixsuite";
  r.compiler = Compiler::from_string(compiler);
  r.opt_level = opt_from_literal(opt);
  r.function_name = "func_" + std::to_string(prog) + "_" + std::to_string(fn);

  uint64_t fn_base = 0x401000 + static_cast<uint64_t>(prog) * 0x1000 + static_cast<uint64_t>(fn) * 0x100;
  uint64_t addr = fn_base;
  uint64_t bb = 0;
  auto push = [&](InstructionRecord i) {
    bool branch = !i.mnemonic.empty() && i.mnemonic[0] == 'j';
    i.address = addr;
    i.basic_block_id = bb;
    r.instructions.push_back(std::move(i));
    addr += 4;
    if (branch) ++bb;
  };
  auto push_new = [&](const std::string& mn, std::vector<OperandMeta> ops = {}) { push(ins(0, mn, std::move(ops))); };

  push_new("push", {reg("rbp")});
  push_new("mov", {reg("rbp"), reg("rsp")});
  push_new("sub", {reg("rsp"), imm(16 + static_cast<int64_t>(base() % 4) * 16)});

  size_t pattern_len = 3 + base() % 3;
  std::vector<std::vector<InstructionRecord>> slots;
  for (size_t s = 0; s < pattern_len; ++s) slots.push_back(make_slot(base, fn_base));
  // a config occasionally re-materializes one slot, consistently across cycles
  if (conf() % 2 == 0) slots[conf() % pattern_len] = make_slot(conf, fn_base);

  size_t cycles = 2 + base() % 3;
  for (size_t c = 0; c < cycles; ++c)
    for (const auto& slot : slots)
      for (const auto& i : slot) push(i);

  // config-keyed tail: optimization level and compiler leave a footprint
  switch (r.opt_level) {
    case OptLevel::O0:
      push_new("mov", {reg("eax"), mem({4, "rbp", {}, {}, -8})});
      break;
    case OptLevel::O1:
      push_new("mov", {reg("eax"), reg("ebx")});
      break;
    case OptLevel::O2:
      push_new("xor", {reg("eax"), reg("eax")});
      break;
    case OptLevel::O3:
      push_new("lea", {reg("rax"), mem({{}, "rax", "rax", 4, {}})});
      break;
    default:
      break;
  }
  if (r.compiler.kind == CompilerKind::gcc)
    push_new("leave");
  else
    push_new("pop", {reg("rbp")});
  push_new("ret");

  // BoS pool shared per (program, function); configs occasionally drop one
  std::mt19937_64 bos(fnv1a("bos", base_key));
  int nconst = 2 + static_cast<int>(bos() % 4);
  for (int i = 0; i < nconst; ++i) r.bos_constants.push_back(static_cast<int64_t>(bos() % 0x100));
  r.bos_strings.push_back("str_" + std::to_string(prog) + "_" + std::to_string(fn));
  if (conf() % 3 == 0 && !r.bos_constants.empty()) r.bos_constants.pop_back();
  return r;
}

inline std::vector<FunctionRecord> make_corpus(const CorpusSpec& spec = {}) {
  std::vector<FunctionRecord> out;
  for (size_t k = 0; k < spec.configs.size(); ++k)
    for (int p = 0; p < spec.programs; ++p)
      for (int f = 0; f < spec.functions; ++f) out.push_back(make_function(spec, p, f, k));
  return out;
}

}  // namespace fixtures
