#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "binsem/asm_text.hpp"
#include "binsem/ingest.hpp"
#include "support/fixtures.hpp"

using namespace binsem;

TEST_CASE("empty stream yields empty list") {
  std::istringstream in("");
  CHECK(parse_records(in).empty());
}

TEST_CASE("single record with two instructions parses") {
  std::string line = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O0","function_name":"f",)"
                     R"("instructions":[{"address":1,"mnemonic":"push","operands":[{"raw":"rbp","kind":"reg"}]},)"
                     R"({"address":2,"mnemonic":"ret","operands":[]}],"bos_consts":[1,8,8],"bos_strings":["hi"]})";
  std::istringstream in(line);
  auto records = parse_records(in);
  REQUIRE(records.size() == 1);
  CHECK(records[0].compiler.kind == CompilerKind::gcc);
  CHECK(records[0].opt_level == OptLevel::O0);
  CHECK(records[0].instructions.size() == 2);
  CHECK(records[0].bos_constants == std::vector<int64_t>{1, 8, 8});
}

TEST_CASE("serialize then parse is the identity") {
  auto corpus = fixtures::make_corpus({.seed = 7, .programs = 2, .functions = 3});
  std::ostringstream out;
  serialize_records(corpus, out);
  std::istringstream in(out.str());
  auto again = parse_records(in);
  REQUIRE(again.size() == corpus.size());
  CHECK(again == corpus);

  // and at the JSON level, modulo field order
  std::ostringstream out2;
  serialize_records(again, out2);
  CHECK(out.str() == out2.str());
}

TEST_CASE("missing mnemonic names the field and instruction") {
  std::string line = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O0","function_name":"f",)"
                     R"("instructions":[{"address":1,"operands":[]}]})";
  std::istringstream in(line);
  CHECK_THROWS_WITH(parse_records(in), Catch::Matchers::ContainsSubstring("missing field mnemonic at instruction 0"));
}

TEST_CASE("unknown enum literal is named") {
  std::string line = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O9","function_name":"f","instructions":[]})";
  std::istringstream in(line);
  CHECK_THROWS_WITH(parse_records(in), Catch::Matchers::ContainsSubstring("O9"));

  std::string line2 = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O0","function_name":"f",)"
                      R"("instructions":[{"address":1,"mnemonic":"call","operands":[{"raw":"x","kind":"imm","value":5,"ref":"banana"}]}]})";
  std::istringstream in2(line2);
  CHECK_THROWS_WITH(parse_records(in2), Catch::Matchers::ContainsSubstring("banana"));
}

TEST_CASE("errors carry the line number") {
  std::string text = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O0","function_name":"f","instructions":[]})"
                     "\nnot json\n";
  std::istringstream in(text);
  CHECK_THROWS_WITH(parse_records(in), Catch::Matchers::StartsWith("line 2:"));
}

TEST_CASE("operand invariants are enforced") {
  std::string imm_no_value = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O0","function_name":"f",)"
                             R"("instructions":[{"address":1,"mnemonic":"push","operands":[{"raw":"x","kind":"imm"}]}]})";
  std::istringstream in1(imm_no_value);
  CHECK_THROWS_AS(parse_records(in1), ParseError);

  std::string mem_no_expr = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O0","function_name":"f",)"
                            R"("instructions":[{"address":1,"mnemonic":"push","operands":[{"raw":"x","kind":"mem"}]}]})";
  std::istringstream in2(mem_no_expr);
  CHECK_THROWS_AS(parse_records(in2), ParseError);

  std::string bad_scale = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O0","function_name":"f",)"
                          R"("instructions":[{"address":1,"mnemonic":"push","operands":[{"raw":"x","kind":"mem","mem":{"base":"rax","scale":3}}]}]})";
  std::istringstream in3(bad_scale);
  CHECK_THROWS_WITH(parse_records(in3), Catch::Matchers::ContainsSubstring("scale"));
}

TEST_CASE("duplicate function under one build config rejected") {
  std::string line = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O0","function_name":"f","instructions":[]})";
  std::istringstream in(line + "\n" + line);
  CHECK_THROWS_WITH(parse_records(in), Catch::Matchers::ContainsSubstring("duplicate"));

  // same name under a different opt level is fine
  std::string other = R"({"binary_id":"a","testsuite":"t","compiler":"gcc","opt_level":"O1","function_name":"f","instructions":[]})";
  std::istringstream in2(line + "\n" + other);
  CHECK(parse_records(in2).size() == 2);
}

// --- asm-text adapter -------------------------------------------------------

static SectionMap demo_hints() {
  SectionMap m;
  m.ranges.push_back({0x401000, 0x420000, SectionKind::text});
  m.ranges.push_back({0x400500, 0x401000, SectionKind::plt_got});
  m.ranges.push_back({0x425000, 0x426000, SectionKind::bss});
  m.ranges.push_back({0x427000, 0x428000, SectionKind::data});
  m.ranges.push_back({0x42a000, 0x42b000, SectionKind::rodata_string});
  m.symbols[0x400510] = "malloc";
  m.libc_names.insert("malloc");
  return m;
}

TEST_CASE("call into plt range classifies extern") {
  auto res = parse_asm_text("call 0x400d00\n", demo_hints());
  REQUIRE(res.record.instructions.size() == 1);
  CHECK(res.record.instructions[0].operands[0].ref_class == RefClass::externfunc);
}

TEST_CASE("call into text range classifies inner, self at function start") {
  auto res = parse_asm_text("401000: push rbp\n401001: call 0x410530\n401005: call 0x401000\n", demo_hints());
  REQUIRE(res.record.instructions.size() == 3);
  CHECK(res.record.instructions[1].operands[0].ref_class == RefClass::innerfunc);
  CHECK(res.record.instructions[2].operands[0].ref_class == RefClass::self_call);
}

TEST_CASE("plain immediate with no hint match stays unclassified") {
  auto res = parse_asm_text("mov eax, 0x38\n", demo_hints());
  const auto& op = res.record.instructions[0].operands[1];
  CHECK(op.kind == OperandKind::immediate);
  CHECK(op.value == 0x38);
  CHECK(op.ref_class == RefClass::none);
}

TEST_CASE("every ref class is reachable from the hint rules") {
  std::string text =
      "401000: call 0x400510\n"   // libc (symbol + name table)
      "401004: call 0x401000\n"   // self
      "401008: call 0x410000\n"   // inner
      "40100c: call 0x400d00\n"   // extern
      "401010: jne 0x401020\n"    // jmpdst
      "401014: mov eax, 0x42a010\n"  // string ref
      "401018: mov ebx, 0x425010\n"  // bss ref
      "40101c: mov ecx, 0x427010\n"  // data ref
      "401020: mov edx, 0x38\n";     // none
  auto res = parse_asm_text(text, demo_hints());
  const auto& ins = res.record.instructions;
  auto ref_at = [&](size_t i) { return ins[i].operands.back().ref_class; };
  CHECK(ref_at(0) == RefClass::libc);
  CHECK(ins[0].operands[0].ref_name == "malloc");
  CHECK(ref_at(1) == RefClass::self_call);
  CHECK(ref_at(2) == RefClass::innerfunc);
  CHECK(ref_at(3) == RefClass::externfunc);
  CHECK(ref_at(4) == RefClass::jmpdst);
  CHECK(ref_at(5) == RefClass::string_ref);
  CHECK(ref_at(6) == RefClass::bss_ref);
  CHECK(ref_at(7) == RefClass::data_ref);
  CHECK(ref_at(8) == RefClass::none);
}

TEST_CASE("memory operands parse width, segment and expression") {
  auto res = parse_asm_text("mov rax, qword ptr fs:[0x28]\nmov ebx, dword ptr [rbp-0x10]\nlea rcx, [rax+rbx*4+0x427008]\n",
                            demo_hints());
  const auto& i0 = res.record.instructions[0].operands[1];
  CHECK(i0.size_bytes == 8);
  CHECK(i0.segment_prefix == "fs");
  CHECK(i0.mem_expr->displacement == 0x28);

  const auto& i1 = res.record.instructions[1].operands[1];
  CHECK(i1.size_bytes == 4);
  CHECK(i1.mem_expr->base == "rbp");
  CHECK(i1.mem_expr->displacement == -0x10);

  const auto& i2 = res.record.instructions[2].operands[1];
  CHECK(i2.mem_expr->base == "rax");
  CHECK(i2.mem_expr->index == "rbx");
  CHECK(i2.mem_expr->scale == 4);
  CHECK(i2.mem_expr->displacement == 0x427008);
  CHECK(i2.mem_expr->disp_ref == RefClass::data_ref);
}

TEST_CASE("adapter is deterministic") {
  std::string text = "401000: push rbp\ncall 0x400510\nmov eax, dword ptr [rbp-0x8]\nret\n";
  auto a = parse_asm_text(text, demo_hints());
  auto b = parse_asm_text(text, demo_hints());
  CHECK(a.record == b.record);
}

TEST_CASE("unparseable operand reports the offending text") {
  CHECK_THROWS_WITH(parse_asm_text("mov eax, @@bogus\n", demo_hints()),
                    Catch::Matchers::ContainsSubstring("@@bogus"));
}

TEST_CASE("ambiguous code-address immediate is flagged") {
  auto res = parse_asm_text("mov rax, 0x410500\n", demo_hints());
  CHECK(res.record.instructions[0].operands[1].ref_class == RefClass::none);
  REQUIRE_FALSE(res.warnings.empty());
}

TEST_CASE("prefixed mnemonics keep the prefix") {
  auto res = parse_asm_text("rep stosq\nlock add dword ptr [rax], 1\n", demo_hints());
  CHECK(res.record.instructions[0].mnemonic == "rep stosq");
  CHECK(res.record.instructions[1].mnemonic == "lock add");
}
