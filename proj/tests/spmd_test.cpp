#include <gtest/gtest.h>

#include "ssair/corpus.hpp"
#include "ssair/ir_text.hpp"
#include "ssair/oracle.hpp"
#include "ssair/spmd.hpp"
#include "ssair/verify.hpp"

using namespace ssair;

namespace {

constexpr const char* kFixtures = R"(
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

func @power(%x: f64, %n: i64) -> f64 {
^entry:
  %one = const f64 1.0
  %i0 = const i64 0
  jmp ^head(%one, %i0)
^head(%acc: f64, %i: i64):
  %more = lt %i, %n
  br %more, ^body, ^exit
^body:
  %acc2 = mul %acc, %x
  %step = const i64 1
  %i2 = add %i, %step
  jmp ^head(%acc2, %i2)
^exit:
  ret %acc
}

func @square(%x: f64) -> f64 {
^entry:
  %y = mul %x, %x
  ret %y
}

// log only where x > 0; other lanes must not trip the domain check
func @safe_log(%x: f64) -> f64 {
^entry:
  %zero = const f64 0.0
  %pos = gt %x, %zero
  br %pos, ^l, ^r
^l:
  %y = log %x
  jmp ^done(%y)
^r:
  jmp ^done(%x)
^done(%v: f64):
  ret %v
}

func @rows(%W: tensor<2x3xf64>, %x: tensor<3x1xf64>) -> tensor<2x1xf64> {
^entry:
  %y = matmul %W, %x
  %t = tanh %y
  ret %t
}
)";

const ProgramModule& fx() {
  static const ProgramModule m = parse_ir(kFixtures);
  return m;
}

std::vector<double> batch1(const std::string& f, std::vector<std::vector<RuntimeValue>> lanes) {
  auto bp = vectorize(fx(), f, static_cast<int64_t>(lanes.size()));
  std::vector<double> out;
  for (auto& r : run_batched(bp, lanes)) out.push_back(as_f64(r[0]));
  return out;
}

}  // namespace

TEST(Vectorize, DivergentBranch) {
  EXPECT_EQ(batch1("abs", {{-1.0}, {2.0}, {-3.0}}), (std::vector<double>{1, 2, 3}));
}

TEST(Vectorize, PerLaneTripCounts) {
  EXPECT_EQ(batch1("power", {{2.0, int64_t{1}}, {2.0, int64_t{2}}, {2.0, int64_t{3}}}),
            (std::vector<double>{2, 4, 8}));
  EXPECT_EQ(batch1("power", {{3.0, int64_t{0}}, {1.5, int64_t{4}}}),
            (std::vector<double>{1.0, 5.0625}));
}

TEST(Vectorize, MaskedLanesAvoidDomainErrors) {
  auto out = batch1("safe_log", {{-1.0}, {1.0}, {0.0}});
  EXPECT_EQ(out, (std::vector<double>{-1.0, 0.0, 0.0}));
}

TEST(Vectorize, NamingAndValidity) {
  auto bp = vectorize(fx(), "power", 3);
  EXPECT_EQ(bp.name, "power__batched_B3");
  EXPECT_NE(bp.module.find("power__batched_B3"), nullptr);
  EXPECT_TRUE(verify(bp.module).empty());
  EXPECT_THROW(vectorize(fx(), "power", 0), VectorizeError);
}

TEST(Vectorize, TensorLanes) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::vector<RuntimeValue>> lanes;
  for (int i = 0; i < 4; ++i) {
    std::vector<double> w(6), x(3);
    for (auto& v : w) v = u(rng);
    for (auto& v : x) v = u(rng);
    lanes.push_back({DenseTensor({2, 3}, w), DenseTensor({3, 1}, x)});
  }
  auto out = run_batched(vectorize(fx(), "rows", 4), lanes);
  for (int i = 0; i < 4; ++i)
    EXPECT_TRUE(values_equal(out[i][0], eval_function(fx(), "rows", lanes[i])[0]));
}

TEST(StackLanes, RoundTrip) {
  std::vector<RuntimeValue> xs{1.0, 2.0, 3.0};
  auto b = stack_lanes(xs, ValueType::f64());
  EXPECT_EQ(as_tensor(b), DenseTensor({3}, {1, 2, 3}));
  auto back = unstack_lanes(b, ValueType::f64(), 3);
  for (size_t i = 0; i < 3; ++i) EXPECT_TRUE(values_equal(back[i], xs[i]));
  std::vector<RuntimeValue> ns{int64_t{4}, int64_t{0}};
  auto bn = unstack_lanes(stack_lanes(ns, ValueType::i64()), ValueType::i64(), 2);
  EXPECT_EQ(as_i64(bn[0]), 4);
}

TEST(BatchedGrad, Fixtures) {
  auto sq = batched_grad(fx(), "square", {{1.0}, {2.0}, {3.0}}, {{1.0}, {1.0}, {1.0}});
  std::vector<double> g;
  for (auto& r : sq) g.push_back(as_f64(r.cotangents[0].value));
  EXPECT_EQ(g, (std::vector<double>{2, 4, 6}));
  auto ab = batched_grad(fx(), "abs", {{-1.0}, {5.0}}, {{1.0}, {1.0}});
  EXPECT_EQ(as_f64(ab[0].cotangents[0].value), -1.0);
  EXPECT_EQ(as_f64(ab[1].cotangents[0].value), 1.0);
  auto pw = batched_grad(fx(), "power", {{2.0, int64_t{1}}, {2.0, int64_t{3}}}, {{1.0}, {1.0}});
  EXPECT_EQ(as_f64(pw[0].cotangents[0].value), 1.0);
  EXPECT_EQ(as_f64(pw[1].cotangents[0].value), 12.0);
}

class CorpusSpmd : public ::testing::TestWithParam<uint64_t> {};

TEST_P(CorpusSpmd, MatchesPerLaneEvaluation) {
  for (uint64_t s = GetParam(); s < GetParam() + 20; ++s) {
    auto cp = generate_program(s);
    const auto& f = cp.module.get(cp.entry);
    std::mt19937_64 rng(s * 3 + 1);
    for (int64_t B : {1, 3, 8}) {
      std::vector<std::vector<RuntimeValue>> args, seeds;
      for (int64_t i = 0; i < B; ++i) {
        args.push_back(random_args(f, rng));
        std::vector<RuntimeValue> sd;
        for (auto& r : f.results)
          sd.push_back(r.is_f64() ? RuntimeValue(0.5 + static_cast<double>(i))
                                  : RuntimeValue(DenseTensor::filled(r.shape, -0.25)));
        seeds.push_back(sd);
      }
      auto out = run_batched(vectorize(cp.module, cp.entry, B), args);
      auto bg = batched_grad(cp.module, cp.entry, args, seeds);
      for (int64_t i = 0; i < B; ++i) {
        auto ref = eval_function(cp.module, cp.entry, args[static_cast<size_t>(i)]);
        for (size_t r = 0; r < ref.size(); ++r)
          ASSERT_TRUE(values_equal(ref[r], out[static_cast<size_t>(i)][r]))
              << "seed " << s << " B " << B << " lane " << i;
        auto g = grad(cp.module, cp.entry, args[static_cast<size_t>(i)], seeds[static_cast<size_t>(i)]);
        for (size_t k = 0; k < g.cotangents.size(); ++k)
          EXPECT_LE(relative_error(bg[static_cast<size_t>(i)].cotangents[k].value, g.cotangents[k].value),
                    1e-12)
              << "seed " << s << " B " << B;
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, CorpusSpmd, ::testing::Values(0u, 20u, 40u, 60u, 80u));
