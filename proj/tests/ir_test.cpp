#include <gtest/gtest.h>

#include "corruptions.hpp"
#include "ssair/corpus.hpp"
#include "ssair/ir_text.hpp"
#include "ssair/verify.hpp"

using namespace ssair;

namespace {

constexpr const char* kMul =
    "func @mul(%x: f64, %y: f64) -> f64 { ^entry: %z = mul %x, %y  ret %z }";

std::string parse_error(const std::string& text) {
  try {
    parse_ir(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Parse, MinimalFunction) {
  auto m = parse_ir(kMul);
  ASSERT_EQ(m.functions.size(), 1u);
  const auto& f = m.functions[0];
  EXPECT_EQ(f.name, "mul");
  ASSERT_EQ(f.blocks.size(), 1u);
  EXPECT_EQ(f.blocks[0].body.size(), 1u);
  EXPECT_EQ(f.blocks[0].body[0].op, OpKind::Mul);
  EXPECT_TRUE(verify(m).empty());
}

TEST(Parse, Errors) {
  EXPECT_NE(parse_error("").find("expected 'func'"), std::string::npos);
  EXPECT_NE(parse_error("func @f(%x: foo) -> f64 { ^entry: ret %x }").find("unknown type literal"),
            std::string::npos);
  EXPECT_NE(parse_error(std::string(kMul) + kMul).find("duplicate function"), std::string::npos);
  auto e = parse_error("func @f(%x: f64) -> f64 {\n^entry:\n  %y = frob %x\n  ret %y\n}");
  EXPECT_NE(e.find("line 3"), std::string::npos) << e;
  EXPECT_NE(e.find("unknown op"), std::string::npos) << e;
}

TEST(Parse, TensorConstantsAndComments) {
  auto m = parse_ir(R"(
// comment
func @c() -> tensor<2x2xf64> {
^entry:
  %t = const tensor<2x2xf64> [1.0, 2.0, 3.0, 4.0]  // row-major
  ret %t
})");
  const auto& lit = *m.functions[0].blocks[0].body[0].attrs.literal;
  EXPECT_EQ(std::get<DenseTensor>(lit), DenseTensor({2, 2}, {1, 2, 3, 4}));
}

TEST(Print, CanonicalMul) {
  EXPECT_EQ(print_ir(parse_ir(kMul)),
            "func @mul(%x: f64, %y: f64) -> f64 {\n^entry:\n  %z = mul %x, %y\n  ret %z\n}\n");
}

TEST(Print, FunctionsInInsertionOrder) {
  auto m = parse_ir(std::string(kMul) +
                    "func @a(%x: f64) -> f64 { ^entry: ret %x }");
  auto text = print_ir(m);
  EXPECT_LT(text.find("@mul"), text.find("@a("));
}

TEST(Print, RenumbersAnonymousValues) {
  auto m = parse_ir("func @f(%x: f64) -> f64 { ^entry: %7 = neg %x  %7b = exp %7  ret %7b }");
  EXPECT_NE(print_ir(m).find("%1 = neg %x"), std::string::npos) << print_ir(m);
}

TEST(Verify, DominanceViolation) {
  auto m = parse_ir(R"(
func @bad(%x: f64) -> f64 {
^entry:
  %c = lt %x, %x
  br %c, ^a, ^b
^a:
  %y = exp %x
  jmp ^b
^b:
  %z = mul %y, %x
  ret %z
})");
  auto d = verify(m);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].function, "bad");
  EXPECT_NE(d[0].message.find("dominate"), std::string::npos);
}

TEST(Verify, TypeMismatch) {
  auto m = parse_ir(R"(
func @f(%x: f64, %t: tensor<2xf64>) -> f64 {
^entry:
  %z = add %x, %t
  ret %x
})");
  auto d = verify(m);
  ASSERT_EQ(d.size(), 1u) << d[0].str();
  EXPECT_NE(d[0].message.find("add"), std::string::npos) << d[0].str();
}

TEST(Verify, RejectsIrreducibleAndRecursive) {
  auto irr = parse_ir(R"(
func @f(%x: f64, %c: bool) -> f64 {
^entry:
  br %c, ^a, ^b
^a:
  br %c, ^b, ^out
^b:
  br %c, ^a, ^out
^out:
  ret %x
})");
  EXPECT_FALSE(verify(irr).empty());
  auto rec = parse_ir(R"(
func @f(%x: f64) -> f64 {
^entry:
  %y = call @f %x
  ret %y
})");
  EXPECT_FALSE(verify(rec).empty());
}

// Round trip and verifier soundness over generated programs.
class CorpusIr : public ::testing::TestWithParam<uint64_t> {};

TEST_P(CorpusIr, RoundTripAndVerifierSoundness) {
  for (uint64_t s = GetParam(); s < GetParam() + 25; ++s) {
    auto cp = generate_program(s);
    ASSERT_TRUE(verify(cp.module).empty()) << "seed " << s << ": " << verify(cp.module)[0].str();
    const auto text = print_ir(cp.module);
    auto back = parse_ir(text);
    ASSERT_TRUE(modules_equivalent(back, cp.module)) << "seed " << s;
    ASSERT_EQ(print_ir(back), text) << "seed " << s;

    std::mt19937_64 rng(s);
    using Edit = bool (*)(Function&, std::mt19937_64&);
    for (Edit edit : {Edit{fixtures::corrupt_self_operand}, Edit{fixtures::corrupt_drop_terminator},
                      Edit{fixtures::corrupt_retarget_to_entry}}) {
      for (size_t fi = 0; fi < cp.module.functions.size(); ++fi) {
        ProgramModule bad = cp.module;
        if (!edit(bad.functions[fi], rng)) continue;
        EXPECT_FALSE(verify(bad).empty()) << "seed " << s << " function " << fi;
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, CorpusIr, ::testing::Values(0u, 25u, 50u, 75u, 100u, 125u, 150u, 175u));
