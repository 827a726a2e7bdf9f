#include <gtest/gtest.h>

#include <cmath>

#include "ssair/corpus.hpp"
#include "ssair/forward_ad.hpp"
#include "ssair/ir_text.hpp"
#include "ssair/oracle.hpp"
#include "ssair/reverse_ad.hpp"
#include "test_util.hpp"

using namespace ssair;
using ssair::fixtures::random_tensor;
using ssair::fixtures::t1;

namespace {

constexpr const char* kFns = R"(
func @tanh_add(%a: f64, %b: f64) -> f64 {
^entry:
  %s = add %a, %b
  %t = tanh %s
  ret %t
}

func @id(%a: f64) -> f64 {
^entry:
  ret %a
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

func @loss(%a: tensor<2x3xf64>, %b: tensor<3xf64>) -> f64 {
^entry:
  %c = fused_map @tanh_add %a, %b
  %s = reduce_sum %c {axis = all}
  ret %s
}
)";

const ProgramModule& fns() {
  static const ProgramModule m = parse_ir(kFns);
  return m;
}

// Random polynomial in (a, b): sum of c * a^i * b^j terms, plus a branch on a.
std::string random_poly(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> deg(0, 3), terms(1, 4);
  std::uniform_real_distribution<double> coef(-2, 2);
  std::string s = "func @poly(%a: f64, %b: f64) -> f64 {\n^entry:\n  %acc0 = const f64 0.0\n";
  const int n = terms(rng);
  for (int k = 0; k < n; ++k) {
    auto K = std::to_string(k);
    s += "  %pa" + K + " = pow_int %a {n = " + std::to_string(deg(rng)) + "}\n";
    s += "  %pb" + K + " = pow_int %b {n = " + std::to_string(deg(rng)) + "}\n";
    s += "  %c" + K + " = const f64 " + std::to_string(coef(rng)) + "\n";
    s += "  %m" + K + " = mul %pa" + K + ", %pb" + K + "\n";
    s += "  %t" + K + " = mul %c" + K + ", %m" + K + "\n";
    s += "  %acc" + std::to_string(k + 1) + " = add %acc" + K + ", %t" + K + "\n";
  }
  s += "  ret %acc" + std::to_string(n) + "\n}\n";
  return s;
}

double central(const std::function<double(double)>& f, double x) {
  const double h = std::max(1e-6, 1e-6 * std::abs(x));
  return (f(x + h) - f(x - h)) / (2 * h);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(DualEval, TanhAddSeedsBothDirections) {
  std::vector<Dual> args{Dual(0.0, {1.0, 0.0}), Dual(0.0, {0.0, 1.0})};
  auto y = dual_eval(fns(), "tanh_add", args);
  EXPECT_EQ(y.v, 0.0);
  EXPECT_EQ(y.d, (std::vector<double>{1.0, 1.0}));
}

TEST(DualEval, BranchFollowsPrimal) {
  std::vector<Dual> args{Dual(-1.5, {1.0})};
  auto y = dual_eval(fns(), "abs", args);
  EXPECT_EQ(y.v, 1.5);
  EXPECT_EQ(y.d[0], -1.0);
}

TEST(DualEval, RandomPolynomialsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = parse_ir(random_poly(rng));
    const auto& f = m.get("poly");
    const double a = u(rng), b = u(rng);
    std::vector<Dual> args{Dual(a, {1.0, 0.0}), Dual(b, {0.0, 1.0})};
    auto y = dual_eval(m, "poly", args);
    auto eval = [&](double x, double z) {
      std::vector<double> v{x, z};
      return eval_scalar_function<double>(m, f, v);
    };
    ASSERT_EQ(y.v, eval(a, b));
    EXPECT_LT(rel(y.d[0], central([&](double x) { return eval(x, b); }, a)), 1e-6);
    EXPECT_LT(rel(y.d[1], central([&](double z) { return eval(a, z); }, b)), 1e-6);
  }
}

TEST(FusedPartials, TanhOfSumAtZero) {
  std::vector<DenseTensor> args{t1({0, 1}), t1({0, -1})};
  auto p = fused_map_with_partials(fns(), "tanh_add", args);
  EXPECT_EQ(p.out, t1({0, 0}));
  ASSERT_EQ(p.partials.size(), 2u);
  EXPECT_EQ(p.partials[0], t1({1, 1}));
  EXPECT_EQ(p.partials[1], t1({1, 1}));
}

TEST(FusedPartials, IdentityHasUnitPartials) {
  std::mt19937_64 rng(1);
  std::vector<DenseTensor> args{random_tensor(rng, {2, 3})};
  auto p = fused_map_with_partials(fns(), "id", args);
  EXPECT_EQ(p.out, args[0]);
  EXPECT_EQ(p.partials[0], DenseTensor::filled({2, 3}, 1.0));
}

TEST(FusedPartials, CorpusMapsPrimalAndPartials) {
  // primal bit-identical to the interpreter's fused_map; each partial equals
  // the one-hot dual derivative and central differences at that element
  std::mt19937_64 rng(22);
  int checked = 0;
  for (uint64_t s = 0; s < 300 && checked < 40; ++s) {
    auto cp = generate_program(s);
    for (const auto& f : cp.module.functions) {
      if (f.name.rfind("map", 0) != 0) continue;
      const size_t k = f.params.size();
      std::vector<DenseTensor> args;
      for (size_t i = 0; i < k; ++i)
        args.push_back(random_tensor(rng, k == 1 ? Shape{3, 4} : i == 0 ? Shape{3, 1} : Shape{1, 4}));
      FusedPartials p;
      try {
        p = fused_map_with_partials(cp.module, f.name, args);
      } catch (const DomainError&) {
        continue;
      }
      Attributes at;
      at.callee = f.name;
      std::vector<RuntimeValue> rv(args.begin(), args.end());
      ASSERT_EQ(as_tensor(apply_primitive(cp.module, OpKind::FusedMap, at, rv)), p.out);
      for (int64_t r = 0; r < 3; ++r)
        for (int64_t c = 0; c < 4; ++c) {
          std::vector<double> x;
          for (size_t i = 0; i < k; ++i)
            x.push_back(k == 1 ? args[i][r * 4 + c] : i == 0 ? args[i][r] : args[i][c]);
          for (size_t i = 0; i < k; ++i) {
            std::vector<Dual> d;
            for (size_t j = 0; j < k; ++j) d.push_back(Dual(x[j], {i == j ? 1.0 : 0.0}));
            const double partial = p.partials[i][r * 4 + c];
            ASSERT_EQ(dual_eval(cp.module, f.name, d).d[0], partial);
            auto g = [&](double v) {
              auto y = x;
              y[i] = v;
              return eval_scalar_function<double>(cp.module, f, y);
            };
            EXPECT_LT(rel(partial, central(g, x[i])), 1e-6) << f.name << " seed " << s;
          }
        }
      ++checked;
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(FusedPullback, NoBroadcastIsIdentityTimesPartials) {
  std::mt19937_64 rng(2);
  std::vector<DenseTensor> args{random_tensor(rng, {4})};
  auto p = fused_map_with_partials(fns(), "id", args);
  auto ybar = random_tensor(rng, {4});
  std::vector<Shape> shapes{{4}};
  EXPECT_EQ(fused_map_pullback(p, ybar, shapes)[0], ybar);
}

TEST(FusedPullback, SumsOverBroadcastAxis) {
  std::mt19937_64 rng(3);
  std::vector<DenseTensor> args{DenseTensor::zeros({2, 3}), random_tensor(rng, {3})};
  auto p = fused_map_with_partials(fns(), "tanh_add", args);
  auto ybar = random_tensor(rng, {2, 3});
  std::vector<Shape> shapes{{2, 3}, {3}};
  auto cot = fused_map_pullback(p, ybar, shapes);
  for (int64_t j = 0; j < 3; ++j) {
    double want = 0.0;
    for (int64_t i = 0; i < 2; ++i) want += ybar[i * 3 + j] * p.partials[1][i * 3 + j];
    EXPECT_EQ(cot[1][j], want);
  }
}

TEST(FusedPullback, Linear) {
  std::mt19937_64 rng(4);
  std::vector<DenseTensor> args{random_tensor(rng, {2, 3}), random_tensor(rng, {3})};
  auto p = fused_map_with_partials(fns(), "tanh_add", args);
  std::vector<Shape> shapes{{2, 3}, {3}};
  for (int trial = 0; trial < 20; ++trial) {
    auto y1 = random_tensor(rng, {2, 3}), y2 = random_tensor(rng, {2, 3});
    const double al = 0.75, be = -1.25;
    auto mix = elementwise_zip(
        [&](std::span<const double> v) { return al * v[0] + be * v[1]; }, {&y1, &y2});
    auto a = fused_map_pullback(p, mix, shapes);
    auto b1 = fused_map_pullback(p, y1, shapes), b2 = fused_map_pullback(p, y2, shapes);
    for (size_t i = 0; i < 2; ++i) {
      auto want = elementwise_zip(
          [&](std::span<const double> v) { return al * v[0] + be * v[1]; }, {&b1[i], &b2[i]});
      double worst = 0.0;
      for (int64_t e = 0; e < want.numel(); ++e)
        worst = std::max(worst, std::abs(a[i][e] - want[e]) / std::max(1.0, std::abs(want[e])));
      EXPECT_LT(worst, 1e-15);
    }
  }
}

TEST(FusedPullback, ReverseModeThroughFusedMapMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<RuntimeValue> args{random_tensor(rng, {2, 3}), random_tensor(rng, {3})};
    std::vector<RuntimeValue> seeds{1.0};
    std::vector<std::optional<RuntimeValue>> os{1.0};
    auto g = grad(fns(), "loss", args, seeds);
    auto fd = finite_diff_grad(fns(), "loss", args, os);
    for (auto& c : g.cotangents) EXPECT_LT(relative_error(c.value, *fd[c.param_index]), 1e-6);
  }
}
