#include <gtest/gtest.h>

#include <cmath>

#include "ssair/corpus.hpp"
#include "ssair/ir_text.hpp"
#include "ssair/oracle.hpp"
#include "ssair/reverse_ad.hpp"
#include "ssair/verify.hpp"
#include "test_util.hpp"

using namespace ssair;
using ssair::fixtures::random_tensor;

namespace {

constexpr const char* kFixtures = R"(
func @mul(%x: f64, %y: f64) -> f64 {
^entry:
  %z = mul %x, %y
  ret %z
}

// x * x * x by a counted loop
func @cube(%x: f64) -> f64 {
^entry:
  %one = const f64 1.0
  %i0 = const i64 0
  jmp ^head(%one, %i0)
^head(%acc: f64, %i: i64):
  %three = const i64 3
  %more = lt %i, %three
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

func @exp(%x: f64) -> f64 {
^entry:
  %y = exp %x
  ret %y
}

func @wx(%W: tensor<3x4xf64>, %x: tensor<4x1xf64>) -> f64 {
^entry:
  %y = matmul %W, %x
  %s = reduce_sum %y {axis = all}
  ret %s
}

func @sq(%a: f64) -> f64 {
^entry:
  %r = mul %a, %a
  ret %r
}

func @jvp_user(%x: tensor<2xf64>) -> f64 {
^entry:
  %j = fused_jvp @sq %x
  %s = reduce_sum %j {axis = all}
  ret %s
}
)";

const ProgramModule& fx() {
  static const ProgramModule m = parse_ir(kFixtures);
  return m;
}

std::vector<double> grads(const std::string& f, std::vector<RuntimeValue> args,
                          std::vector<RuntimeValue> seeds = {1.0}) {
  std::vector<double> out;
  for (auto& c : grad(fx(), f, args, seeds).cotangents) out.push_back(as_f64(c.value));
  return out;
}

}  // namespace

TEST(Grad, AnalyticFixtures) {
  EXPECT_EQ(grads("mul", {3.0, 2.0}), (std::vector<double>{2.0, 3.0}));
  EXPECT_EQ(grads("cube", {2.0}), (std::vector<double>{12.0}));
  EXPECT_EQ(grads("abs", {-1.5}), (std::vector<double>{-1.0}));
  EXPECT_EQ(grads("abs", {2.5}), (std::vector<double>{1.0}));
  EXPECT_EQ(grads("tanh", {0.0}), (std::vector<double>{1.0}));
  EXPECT_EQ(grads("mul", {3.0, 2.0}, {0.0}), (std::vector<double>{0.0, 0.0}));
}

TEST(Grad, MatmulIsOuterProduct) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto W = random_tensor(rng, {3, 4}), x = random_tensor(rng, {4, 1});
    std::vector<RuntimeValue> args{W, x}, seeds{1.0};
    std::vector<std::optional<RuntimeValue>> os{1.0};
    auto g = grad(fx(), "wx", args, seeds);
    const auto& dW = as_tensor(g.cotangents[0].value);
    for (int64_t i = 0; i < 3; ++i)
      for (int64_t j = 0; j < 4; ++j) EXPECT_EQ(dW[i * 4 + j], x[j]);
    auto fd = finite_diff_grad(fx(), "wx", args, os);
    EXPECT_LT(relative_error(g.cotangents[0].value, *fd[0]), 1e-6);
    EXPECT_LT(relative_error(g.cotangents[1].value, *fd[1]), 1e-6);
  }
}

TEST(Grad, NonDifferentiableOpIsNamed) {
  try {
    build_adjoint(fx(), "jvp_user");
    FAIL();
  } catch (const AdError& e) {
    EXPECT_NE(std::string(e.what()).find("fused_jvp"), std::string::npos) << e.what();
  }
}

TEST(Grad, EmittedFunctionsVerifyAndKeepOriginal) {
  auto ap = build_adjoint(fx(), "cube");
  EXPECT_TRUE(verify(ap.module).empty());
  EXPECT_NE(ap.module.find("cube__aug"), nullptr);
  EXPECT_NE(ap.module.find("cube__pb"), nullptr);
  ProgramModule only_cube;
  only_cube.add(fx().get("cube"));
  ProgramModule after;
  after.add(ap.module.get("cube"));
  EXPECT_TRUE(modules_equivalent(only_cube, after));
}

TEST(GradOfGrad, AnalyticSecondDerivatives) {
  EXPECT_EQ(grad_of_grad(fx(), "cube", 2.0), 12.0);
  EXPECT_EQ(grad_of_grad(fx(), "tanh", 0.0), 0.0);
  EXPECT_NEAR(grad_of_grad(fx(), "exp", 1.0), std::exp(1.0), 1e-9);
  for (double x : {-0.7, 0.3, 1.9}) {
    const double t = std::tanh(x);
    EXPECT_NEAR(grad_of_grad(fx(), "cube", x), 6 * x, 1e-9);
    EXPECT_NEAR(grad_of_grad(fx(), "tanh", x), -2 * t * (1 - t * t), 1e-9);
    EXPECT_NEAR(grad_of_grad(fx(), "exp", x), std::exp(x), 1e-9);
  }
}

TEST(Grad, FaultInjectionBreaksProductRule) {
  AdOptions bad;
  bad.fault_mul = true;
  std::vector<RuntimeValue> args{3.0, 2.0}, seeds{1.0};
  auto g = grad(fx(), "mul", args, seeds, bad);
  EXPECT_NE(as_f64(g.cotangents[0].value), 2.0);
}

// Corpus properties: oracle agreement, primal preservation, trace
// discipline, and that the adjoint program is itself differentiable.
class CorpusAd : public ::testing::TestWithParam<uint64_t> {};

TEST_P(CorpusAd, MatchesOraclesAndPreservesPrimal) {
  for (uint64_t s = GetParam(); s < GetParam() + 20; ++s) {
    auto cp = generate_program(s);
    const auto& f = cp.module.get(cp.entry);
    auto ap = build_adjoint(cp.module, cp.entry);
    ASSERT_TRUE(verify(ap.module).empty()) << "seed " << s;
    std::mt19937_64 rng(1000 + s);
    for (int k = 0; k < 3; ++k) {
      auto args = random_args(f, rng);
      std::vector<RuntimeValue> seeds;
      for (auto& r : f.results)
        seeds.push_back(r.is_f64() ? RuntimeValue(1.0) : RuntimeValue(random_tensor(rng, r.shape)));
      std::vector<std::optional<RuntimeValue>> os(seeds.begin(), seeds.end());

      auto primal = eval_function(cp.module, cp.entry, args);
      auto aug = eval_function(ap.module, ap.aug, args);
      for (size_t i = 0; i < primal.size(); ++i)
        ASSERT_TRUE(values_equal(primal[i], aug[i])) << "seed " << s;

      auto g = grad(ap, args, seeds);
      auto tape = tape_backprop(trace_eval(cp.module, cp.entry, args), os);
      auto fd = finite_diff_grad(cp.module, cp.entry, args, os);
      for (auto& c : g.cotangents) {
        EXPECT_LE(relative_error(c.value, *tape[c.param_index]), 1e-12) << "seed " << s;
        EXPECT_LE(relative_error(c.value, *fd[c.param_index]), 1e-5) << "seed " << s;
      }
    }
  }
}

bool scalar_only(const ProgramModule& m) {
  for (const auto& f : m.functions)
    for (const auto& v : f.values)
      if (v.type && v.type->is_tensor()) return false;
  return true;
}

TEST_P(CorpusAd, AugmentedScalarProgramIsDifferentiable) {
  int checked = 0;
  for (uint64_t s = GetParam(); s < GetParam() + 20; ++s) {
    CorpusOptions scalar;
    scalar.allow_tensors = false;
    auto cp = generate_program(s, scalar);
    ASSERT_TRUE(scalar_only(cp.module)) << "seed " << s;
    auto ap = build_adjoint(cp.module, cp.entry);
    auto ap2 = build_adjoint(ap.module, ap.aug);
    EXPECT_TRUE(verify(ap2.module).empty()) << "seed " << s;
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

INSTANTIATE_TEST_SUITE_P(Seeds, CorpusAd, ::testing::Values(0u, 20u, 40u, 60u, 80u));

TEST(Grad, PullbackConsumesTrace) {
  // the pullback ends with check_empty on both stacks, so a trace with an
  // extra entry must be rejected
  auto ap = build_adjoint(fx(), "cube");
  std::vector<RuntimeValue> args{2.0};
  auto aug = eval_function(ap.module, ap.aug, args);
  auto extra = stack_push(as_stack(aug[2]), RuntimeValue(1.0));
  std::vector<RuntimeValue> pb_ok{aug[1], aug[2], 1.0}, pb_bad{aug[1], extra, 1.0};
  EXPECT_NO_THROW(eval_function(ap.module, ap.pb, pb_ok));
  EXPECT_THROW(eval_function(ap.module, ap.pb, pb_bad), RuntimeError);
}
