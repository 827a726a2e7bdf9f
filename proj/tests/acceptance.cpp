// One line per acceptance criterion; exit status is the number of failures.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "corruptions.hpp"
#include "ssair/corpus.hpp"
#include "ssair/forward_ad.hpp"
#include "ssair/ir_text.hpp"
#include "ssair/nn_train.hpp"
#include "ssair/oracle.hpp"
#include "ssair/spmd.hpp"
#include "ssair/verify.hpp"

using namespace ssair;

namespace {

constexpr const char* kFixtures = R"(
func @mul(%x: f64, %y: f64) -> f64 {
^entry:
  %z = mul %x, %y
  ret %z
}

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

func @tanh_add(%a: f64, %b: f64) -> f64 {
^entry:
  %s = add %a, %b
  %t = tanh %s
  ret %t
}

func @tanh_bcast(%a: tensor<3x4xf64>, %b: tensor<4xf64>) -> f64 {
^entry:
  %c = fused_map @tanh_add %a, %b
  %s = reduce_sum %c {axis = all}
  ret %s
}
)";

const ProgramModule& fx() {
  static const ProgramModule m = parse_ir(kFixtures);
  return m;
}

double rel(double a, double b) { return relative_error(RuntimeValue(a), RuntimeValue(b)); }

DenseTensor rand_tensor(std::mt19937_64& rng, Shape s) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> d(static_cast<size_t>(shape_numel(s)));
  for (auto& x : d) x = u(rng);
  return DenseTensor(std::move(s), std::move(d));
}

std::vector<RuntimeValue> seeds_for(const Function& f, std::mt19937_64& rng) {
  std::vector<RuntimeValue> out;
  for (auto& r : f.results)
    out.push_back(r.is_f64() ? RuntimeValue(1.0) : RuntimeValue(rand_tensor(rng, r.shape)));
  return out;
}

int failures = 0;

struct Shape3 {
  bool branch = false, loop = false, tensor = false;
};

// back edges show up as jumps to a block at or before the current one
Shape3 features(const ProgramModule& m) {
  Shape3 r;
  for (const auto& f : m.functions) {
    for (const auto& v : f.values) r.tensor |= v.type && v.type->is_tensor();
    for (size_t b = 0; b < f.blocks.size(); ++b) {
      const auto& t = f.blocks[b].terminator;
      if (!t) continue;
      if (auto* br = std::get_if<BranchTerm>(&*t)) {
        r.branch = true;
        r.loop |= br->then_target.index <= b || br->else_target.index <= b;
      } else if (auto* j = std::get_if<JumpTerm>(&*t)) {
        r.loop |= j->target.index <= b;
      }
    }
  }
  return r;
}

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

void triple_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_tape = 0, worst_fd = 0;
  int programs = 0, checks = 0, skipped = 0, errors = 0, branches = 0, loops = 0, tensors = 0;
  for (uint64_t s = 0; s < 200; ++s) {
    try {
      auto cp = generate_program(s);
      const auto shape = features(cp.module);
      branches += shape.branch;
      loops += shape.loop;
      tensors += shape.tensor;
      const auto& f = cp.module.get(cp.entry);
      auto ap = build_adjoint(cp.module, cp.entry);
      std::mt19937_64 rng(7000 + s);
      for (int k = 0; k < 5; ++k) {
        auto args = random_args(f, rng);
        auto seeds = seeds_for(f, rng);
        std::vector<std::optional<RuntimeValue>> os(seeds.begin(), seeds.end());
        try {
          auto g = grad(ap, args, seeds);
          auto tape = tape_backprop(trace_eval(cp.module, cp.entry, args), os);
          auto fd = finite_diff_grad(cp.module, cp.entry, args, os);
          for (auto& c : g.cotangents) {
            worst_tape = std::max(worst_tape, relative_error(c.value, *tape[c.param_index]));
            worst_fd = std::max(worst_fd, relative_error(c.value, *fd[c.param_index]));
          }
          ++checks;
        } catch (const DomainError&) {
          ++skipped;
        }
      }
      ++programs;
    } catch (const std::exception& e) {
      ++errors;
      std::fprintf(stderr, "seed %llu: %s\n", static_cast<unsigned long long>(s), e.what());
    }
  }
  const double t = seconds_since(t0);
  report(1, "triple-gradient-agreement",
         errors == 0 && programs >= 200 && worst_tape <= 1e-12 && worst_fd <= 1e-5 && t < 60,
         fmt("%d programs (%d branch, %d loop, %d tensor), %d input sets (%d skipped on domain), max rel tape %.3g (<=1e-12), "
             "fd %.3g (<=1e-5), %.1fs (<60s)",
             programs, branches, loops, tensors, checks, skipped, worst_tape, worst_fd, t));
}

double g1(const char* f, std::vector<RuntimeValue> args, size_t i = 0) {
  std::vector<RuntimeValue> seed{1.0};
  return as_f64(grad(fx(), f, args, seed).cotangents.at(i).value);
}

void control_flow_fixtures() {
  double worst = 0;
  for (auto [x, y] : {std::pair{2.0, 3.0}, {-1.5, 0.25}, {0.0, 7.0}}) {
    worst = std::max(worst, rel(g1("mul", {x, y}, 0), y));
    worst = std::max(worst, rel(g1("mul", {x, y}, 1), x));
  }
  for (double x : {-2.0, 0.5, 1.7}) worst = std::max(worst, rel(g1("cube", {x}), 3 * x * x));
  for (double x : {-3.0, -0.1, 0.2, 4.0}) worst = std::max(worst, rel(g1("abs", {x}), x < 0 ? -1 : 1));
  report(2, "control-flow-adjoints", worst <= 1e-12, fmt("max rel err %.3g (<=1e-12)", worst));
}

void nested() {
  double worst = 0;
  for (double x : {-1.3, 0.4, 2.0}) {
    const double t = std::tanh(x), s2 = 1 - t * t;
    worst = std::max(worst, rel(grad_of_grad(fx(), "cube", x), 6 * x));
    worst = std::max(worst, rel(grad_of_grad(fx(), "tanh", x), -2 * t * s2));
    worst = std::max(worst, rel(grad_of_grad(fx(), "exp", x), std::exp(x)));
  }
  report(3, "nested-differentiation", worst <= 1e-9, fmt("max rel err %.3g (<=1e-9)", worst));
}

double central(const std::function<double(double)>& f, double x) {
  const double h = std::max(1e-6, 1e-6 * std::abs(x));
  return (f(x + h) - f(x - h)) / (2 * h);
}

void fusion() {
  int cases = 0, mismatches = 0;
  double worst_partial = 0;
  std::mt19937_64 rng(44);
  for (uint64_t s = 0; cases < 100 && s < 2000; ++s) {
    auto cp = generate_program(s);
    for (const auto& f : cp.module.functions) {
      if (cases >= 100 || f.name.rfind("map", 0) != 0) continue;
      const size_t k = f.params.size();
      std::vector<DenseTensor> args;
      for (size_t i = 0; i < k; ++i)
        args.push_back(rand_tensor(rng, k == 1 ? Shape{3, 4} : i == 0 ? Shape{3, 1} : Shape{1, 4}));
      FusedPartials p;
      try {
        p = fused_map_with_partials(cp.module, f.name, args);
      } catch (const DomainError&) {
        continue;
      }
      ++cases;
      for (int64_t r = 0; r < 3; ++r)
        for (int64_t c = 0; c < 4; ++c) {
          std::vector<RuntimeValue> x;
          for (size_t i = 0; i < k; ++i)
            x.push_back(k == 1 ? args[i][r * 4 + c] : i == 0 ? args[i][r] : args[i][c]);
          // unfused: the scalar function through the interpreter, one element at a time
          const double y = as_f64(eval_function(cp.module, f.name, x)[0]);
          mismatches += y != p.out[r * 4 + c];
          for (size_t i = 0; i < k; ++i) {
            auto g = [&](double v) {
              auto z = x;
              z[i] = v;
              return as_f64(eval_function(cp.module, f.name, z)[0]);
            };
            worst_partial = std::max(worst_partial, rel(p.partials[i][r * 4 + c], central(g, as_f64(x[i]))));
          }
        }
    }
  }
  double worst_grad = 0;
  for (int t = 0; t < 10; ++t) {
    std::vector<RuntimeValue> args{rand_tensor(rng, {3, 4}), rand_tensor(rng, {4})}, seeds{1.0};
    std::vector<std::optional<RuntimeValue>> os{1.0};
    auto g = grad(fx(), "tanh_bcast", args, seeds);
    auto fd = finite_diff_grad(fx(), "tanh_bcast", args, os);
    for (auto& c : g.cotangents) worst_grad = std::max(worst_grad, relative_error(c.value, *fd[c.param_index]));
  }
  report(4, "fusion-equivalence",
         cases >= 100 && mismatches == 0 && worst_partial <= 1e-6 && worst_grad <= 1e-6,
         fmt("%d cases, %d primal mismatches (==0), partial fd %.3g (<=1e-6), tanh(a.+b) grad fd %.3g "
             "(<=1e-6)",
             cases, mismatches, worst_partial, worst_grad));
}

void spmd() {
  int programs = 0, mismatches = 0, errors = 0;
  double worst = 0;
  for (uint64_t s = 0; s < 200; ++s) {
    try {
      auto cp = generate_program(s);
      const auto& f = cp.module.get(cp.entry);
      std::mt19937_64 rng(9000 + s);
      for (int64_t B : {1, 3, 8}) {
        std::vector<std::vector<RuntimeValue>> args, seeds;
        for (int64_t i = 0; i < B; ++i) {
          args.push_back(random_args(f, rng));
          seeds.push_back(seeds_for(f, rng));
        }
        auto out = run_batched(vectorize(cp.module, cp.entry, B), args);
        auto bg = batched_grad(cp.module, cp.entry, args, seeds);
        for (size_t i = 0; i < args.size(); ++i) {
          auto ref = eval_function(cp.module, cp.entry, args[i]);
          for (size_t r = 0; r < ref.size(); ++r) mismatches += !values_equal(ref[r], out[i][r]);
          auto g = grad(cp.module, cp.entry, args[i], seeds[i]);
          for (size_t c = 0; c < g.cotangents.size(); ++c)
            worst = std::max(worst, relative_error(bg[i].cotangents[c].value, g.cotangents[c].value));
        }
      }
      ++programs;
    } catch (const std::exception& e) {
      ++errors;
      std::fprintf(stderr, "seed %llu: %s\n", static_cast<unsigned long long>(s), e.what());
    }
  }
  report(5, "spmd-soundness", errors == 0 && programs >= 200 && mismatches == 0 && worst <= 1e-12,
         fmt("%d programs x B in {1,3,8}, %d lane mismatches (==0), batched_grad max rel %.3g "
             "(<=1e-12)",
             programs, mismatches, worst));
}

void whole_step() {
  DANConfig cfg;
  const int64_t rows = cfg.batch_size;
  auto data = make_synthetic(cfg, rows, cfg.rho, 0);
  auto p = init_params(cfg.layer_sizes, cfg.seed);
  bool built = false;
  double worst = 0;
  try {
    auto loss = build_dan_loss(cfg.layer_sizes, rows);
    built = verify(loss.adjoint.module).empty() && loss.adjoint.module.find(loss.adjoint.aug);
    auto g = dan_gradient(loss, p, data, cfg.lambda);
    // finite differences of c_loss + d_loss straight from the primal IR
    ProgramModule m = loss.adjoint.module;
    std::vector<double> x, yc, yd;
    for (auto& s : data) {
      x.insert(x.end(), s.x.data().begin(), s.x.data().end());
      yc.push_back(s.y_c);
      yd.push_back(s.y_d);
    }
    auto flat = p.flatten();
    std::vector<RuntimeValue> tail{DenseTensor({rows, cfg.layer_sizes[0]}, x), DenseTensor({rows}, yc),
                                   DenseTensor({rows}, yd), cfg.lambda};
    auto total = [&](const std::vector<RuntimeValue>& params) {
      auto a = params;
      a.insert(a.end(), tail.begin(), tail.end());
      auto r = eval_function(m, "dan_loss", a);
      return as_f64(r[0]) + as_f64(r[1]);
    };
    for (size_t i = 0; i < 2 * p.trunk.size(); ++i) {
      const auto& t = as_tensor(flat[i]);
      for (int64_t e = 0; e < t.numel(); ++e) {
        std::vector<double> up(t.data().begin(), t.data().end()), dn = up;
        const double h = 1e-6;
        up[static_cast<size_t>(e)] += h;
        dn[static_cast<size_t>(e)] -= h;
        auto fu = flat, fd = flat;
        fu[i] = DenseTensor(t.shape(), up);
        fd[i] = DenseTensor(t.shape(), dn);
        worst = std::max(worst, rel(as_tensor(g[i])[e], (total(fu) - total(fd)) / (2 * h)));
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "whole step: %s\n", e.what());
    built = false;
  }
  report(6, "whole-step-differentiability", built && worst <= 1e-4,
         fmt("dan_loss augmented: %s, trunk grad vs fd max rel %.3g (<=1e-4)", built ? "yes" : "no",
             worst));
}

void dan_mechanism() {
  const auto t0 = std::chrono::steady_clock::now();
  DANConfig c0, c1;
  c0.lambda = 0;
  c1.lambda = 1;
  auto h0 = train(c0), h1 = train(c1);
  const double t = seconds_since(t0);
  const auto& e0 = h0.epochs.back();
  const auto& e1 = h1.epochs.back();
  const bool ok = e0.domain_probe_acc >= 0.8 && e0.domain_probe_acc - e1.domain_probe_acc >= 0.05 &&
                  e1.class_acc >= 0.7 && t < 120;
  report(7, "dan-mechanism", ok,
         fmt("seed %llu: probe(l=0) %.4f (>=0.8), probe(l=1) %.4f (gap %.4f >=0.05), "
             "class_acc(l=1) %.4f (>=0.7), %.1fs (<120s)",
             static_cast<unsigned long long>(c0.seed), e0.domain_probe_acc, e1.domain_probe_acc,
             e0.domain_probe_acc - e1.domain_probe_acc, e1.class_acc, t));
}

void ir_hygiene() {
  int programs = 0, round_trip_fail = 0, false_rejects = 0, corruptions = 0, false_accepts = 0;
  for (uint64_t s = 0; s < 200; ++s) {
    auto cp = generate_program(s);
    ++programs;
    if (!verify(cp.module).empty()) ++false_rejects;
    const auto text = print_ir(cp.module);
    try {
      auto back = parse_ir(text);
      round_trip_fail += !modules_equivalent(back, cp.module) || print_ir(back) != text;
    } catch (const std::exception&) {
      ++round_trip_fail;
    }
    std::mt19937_64 rng(s);
    using Edit = bool (*)(Function&, std::mt19937_64&);
    for (Edit edit : {Edit{fixtures::corrupt_self_operand}, Edit{fixtures::corrupt_drop_terminator},
                      Edit{fixtures::corrupt_retarget_to_entry}})
      for (size_t fi = 0; fi < cp.module.functions.size(); ++fi) {
        ProgramModule bad = cp.module;
        if (!edit(bad.functions[fi], rng)) continue;
        ++corruptions;
        false_accepts += verify(bad).empty();
      }
  }
  report(8, "ir-hygiene", round_trip_fail == 0 && false_rejects == 0 && false_accepts == 0,
         fmt("%d programs, %d round-trip failures, %d false rejects, %d/%d corruptions accepted",
             programs, round_trip_fail, false_rejects, false_accepts, corruptions));
}

std::pair<int, std::string> shell(const std::string& args) {
  const std::string cmd = std::string(SSAIR_CLI) + " " + args + " 2>/dev/null";
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

void determinism() {
  const std::string d = std::string(SSAIR_SAMPLES) + "/";
  const std::vector<std::string> cmds{
      "check " + d + "mul.ssair",
      "check " + d + "bad_dominance.ssair",
      "print " + d + "power_loop.ssair",
      "run " + d + "mul.ssair --entry mul --args '[2.0, 3.0]'",
      "grad " + d + "power_loop.ssair --entry power --args '[1.5, 4]'",
      "grad " + d + "fused.ssair --entry layer --emit-ir",
      "gradcheck " + d + "power_loop.ssair --entry power --trials 20 --seed 3",
      "gradcheck " + d + "fused.ssair --entry layer --trials 20 --seed 3",
      "batch " + d + "abs.ssair --entry abs --args '[[-1.0],[2.0],[-3.0]]'",
      "train-dan --config '{\"seed\":0}'",
  };
  int unstable = 0;
  size_t bytes = 0;
  for (const auto& c : cmds) {
    auto first = shell(c);
    bytes += first.second.size();
    for (int r = 0; r < 2; ++r)
      if (shell(c) != first) {
        ++unstable;
        std::fprintf(stderr, "unstable: %s\n", c.c_str());
        break;
      }
  }
  report(9, "cli-determinism", unstable == 0,
         fmt("%zu commands x 3 runs, %d differing, %zu bytes compared", cmds.size(), unstable, bytes));
}

}  // namespace

int main() {
  triple_agreement();
  control_flow_fixtures();
  nested();
  fusion();
  spmd();
  whole_step();
  dan_mechanism();
  ir_hygiene();
  determinism();
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
