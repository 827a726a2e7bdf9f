#include <gtest/gtest.h>

#include <cmath>

#include "ssair/corpus.hpp"
#include "ssair/ir_text.hpp"
#include "ssair/oracle.hpp"

using namespace ssair;

namespace {

constexpr const char* kFixtures = R"(
func @mul(%x: f64, %y: f64) -> f64 {
^entry:
  %z = mul %x, %y
  ret %z
}

func @square(%x: f64) -> f64 {
^entry:
  %z = mul %x, %x
  ret %z
}

// x^3 as x, then two loop trips multiplying by x
func @cube(%x: f64) -> f64 {
^entry:
  %i0 = const i64 0
  jmp ^head(%x, %i0)
^head(%acc: f64, %i: i64):
  %two = const i64 2
  %more = lt %i, %two
  br %more, ^body, ^exit
^body:
  %acc2 = mul %acc, %x
  %step = const i64 1
  %i2 = add %i, %step
  jmp ^head(%acc2, %i2)
^exit:
  ret %acc
}

func @abs(%x: f64) -> f64 {
^entry:
  %zero = const f64 0.0
  %neg = lt %x, %zero
  br %neg, ^flip, ^keep
^flip:
  %m = neg %x
  jmp ^done(%m)
^keep:
  jmp ^done(%x)
^done(%r: f64):
  ret %r
}

func @tanh(%x: f64) -> f64 {
^entry:
  %y = tanh %x
  ret %y
}

func @log(%x: f64) -> f64 {
^entry:
  %y = log %x
  ret %y
}
)";

const ProgramModule& fx() {
  static const ProgramModule m = parse_ir(kFixtures);
  return m;
}

Trace trace(const std::string& f, std::vector<RuntimeValue> args) {
  return trace_eval(fx(), f, args);
}

std::vector<double> backprop(const std::string& f, std::vector<RuntimeValue> args) {
  std::vector<std::optional<RuntimeValue>> seeds{1.0};
  std::vector<double> out;
  for (auto& c : tape_backprop(trace(f, args), seeds)) out.push_back(as_f64(*c));
  return out;
}

double fd1(const std::string& f, double x) {
  std::vector<RuntimeValue> args{x};
  std::vector<std::optional<RuntimeValue>> seeds{1.0};
  return as_f64(*finite_diff_grad(fx(), f, args, seeds)[0]);
}

}  // namespace

TEST(Trace, RecordsExecutedPrimitivesOnly) {
  EXPECT_EQ(trace("mul", {3.0, 2.0}).tape.size(), 1u);
  auto cube = trace("cube", {2.0});
  ASSERT_EQ(cube.tape.size(), 2u);
  EXPECT_EQ(cube.tape[0].op, OpKind::Mul);
  EXPECT_EQ(cube.tape[1].op, OpKind::Mul);
  EXPECT_EQ(trace("abs", {-1.5}).tape.size(), 1u);
  EXPECT_EQ(trace("abs", {1.5}).tape.size(), 0u);
}

TEST(TapeBackprop, ProductAndFanOut) {
  EXPECT_EQ(backprop("mul", {3.0, 2.0}), (std::vector<double>{2.0, 3.0}));
  EXPECT_EQ(backprop("square", {3.0}), (std::vector<double>{6.0}));
  EXPECT_EQ(backprop("cube", {2.0}), (std::vector<double>{12.0}));
}

TEST(FiniteDiff, Examples) {
  EXPECT_NEAR(fd1("tanh", 0.0), 1.0, 1e-8);
  EXPECT_NEAR(fd1("log", 1.0), 1.0, 1e-8);
}

TEST(FiniteDiff, DomainErrorPropagates) {
  std::vector<RuntimeValue> args{1e-9};
  std::vector<std::optional<RuntimeValue>> seeds{1.0};
  EXPECT_THROW(finite_diff_grad(fx(), "log", args, seeds), DomainError);
}

TEST(RelativeError, Definition) {
  EXPECT_EQ(relative_error(RuntimeValue(1.5), RuntimeValue(1.0)), 0.5);
  EXPECT_EQ(relative_error(RuntimeValue(4.0), RuntimeValue(2.0)), 1.0);
  EXPECT_EQ(relative_error(RuntimeValue(0.25), RuntimeValue(0.0)), 0.25);
}

TEST(Trace, CorpusMatchesInterpreter) {
  // same results, and one tape node per executed differentiable primitive
  for (uint64_t s = 0; s < 100; ++s) {
    auto cp = generate_program(s);
    std::mt19937_64 rng(s + 500);
    auto args = random_args(cp.module.get(cp.entry), rng);
    EvalStats st;
    auto ref = eval_function(cp.module, cp.entry, args, kDefaultStepLimit, &st);
    auto t = trace_eval(cp.module, cp.entry, args);
    ASSERT_EQ(ref.size(), t.outputs.size());
    for (size_t i = 0; i < ref.size(); ++i) ASSERT_TRUE(values_equal(ref[i], t.outputs[i]));
    EXPECT_EQ(static_cast<int64_t>(t.tape.size()), st.differentiable_primitives) << "seed " << s;
  }
}
