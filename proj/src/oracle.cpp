#include "ssair/oracle.hpp"

#include <cmath>
#include <limits>

#include "ssair/adjoint_rules.hpp"
#include "ssair/forward_ad.hpp"

namespace ssair {

namespace {

struct Slotted {
  RuntimeValue v;
  int64_t slot = -1;
};

class Tracer {
 public:
  Tracer(const ProgramModule& m, Trace& t, int64_t limit) : m_(m), t_(t), limit_(limit) {}

  std::vector<Slotted> call(const Function& f, std::vector<Slotted> args) {
    if (args.size() != f.params.size()) throw RuntimeError("@" + f.name + ": wrong argument count");
    std::vector<Slotted> env(f.values.size());
    for (size_t i = 0; i < args.size(); ++i) env[f.params[i].index] = std::move(args[i]);
    BlockId cur{0};
    while (true) {
      const Block& b = f.block(cur);
      for (const auto& inst : b.body) {
        tick();
        ++t_.stats.op_counts[inst.op];
        std::vector<Slotted> ops;
        for (auto v : inst.operands) ops.push_back(env[v.index]);
        if (inst.op == OpKind::Call) {
          env[inst.result.index] = call(m_.get(inst.attrs.callee), std::move(ops)).at(0);
          continue;
        }
        std::vector<RuntimeValue> vals;
        for (auto& o : ops) vals.push_back(o.v);
        Slotted out{apply_primitive(m_, inst.op, inst.attrs, vals), -1};
        const ValueType& rt = f.type(inst.result);
        if (is_differentiable_primitive(inst.op) && rt.is_float()) ++t_.stats.differentiable_primitives;
        bool tracked = false;
        for (auto& o : ops) tracked = tracked || o.slot >= 0;
        if (rt.is_differentiable() && tracked && is_differentiable_primitive(inst.op)) {
          require_adjoint(inst.op);
          TapeNode n{inst.op, inst.attrs, {}, {}, rt, t_.num_slots++, {}};
          for (size_t i = 0; i < ops.size(); ++i) {
            n.operand_slots.push_back(ops[i].slot);
            n.operand_types.push_back(f.type(inst.operands[i]));
          }
          if (inst.op == OpKind::FusedMap) {
            std::vector<DenseTensor> ts;
            for (auto& v : vals) ts.push_back(as_tensor(v));
            auto p = fused_map_with_partials(m_, inst.attrs.callee, ts);
            n.saved.assign(p.partials.begin(), p.partials.end());
          } else {
            for (auto item : saved_items(inst.op)) n.saved.push_back(item.result ? out.v : vals[item.index]);
          }
          out.slot = n.result_slot;
          t_.tape.push_back(std::move(n));
        }
        env[inst.result.index] = std::move(out);
      }
      tick();
      const Terminator& term = *b.terminator;
      if (auto* r = std::get_if<ReturnTerm>(&term)) {
        std::vector<Slotted> out;
        for (auto v : r->values) out.push_back(env[v.index]);
        return out;
      }
      const std::vector<ValueId>* args2;
      BlockId next;
      if (auto* j = std::get_if<JumpTerm>(&term)) {
        next = j->target;
        args2 = &j->args;
      } else {
        const auto& br = std::get<BranchTerm>(term);
        ++t_.stats.branches;
        bool c = as_bool(env[br.cond.index].v);
        next = c ? br.then_target : br.else_target;
        args2 = c ? &br.then_args : &br.else_args;
      }
      std::vector<Slotted> vals;
      for (auto v : *args2) vals.push_back(env[v.index]);
      const auto& ps = f.block(next).params;
      for (size_t i = 0; i < ps.size(); ++i) env[ps[i].index] = std::move(vals[i]);
      cur = next;
    }
  }

 private:
  void tick() {
    ++t_.stats.steps;
    if (t_.stats.steps > limit_) throw StepLimitError("step limit exceeded while tracing");
  }

  const ProgramModule& m_;
  Trace& t_;
  int64_t limit_;
};

double objective_term(const RuntimeValue& out, const RuntimeValue& seed) {
  if (auto* d = std::get_if<double>(&out)) return *d * as_f64(seed);
  const auto& a = as_tensor(out);
  const auto& s = as_tensor(seed);
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a[i] * s[i];
  return acc;
}

}  // namespace

Trace trace_eval(const ProgramModule& m, std::string_view name, std::span<const RuntimeValue> args,
                 int64_t step_limit) {
  const Function& f = m.get(name);
  if (args.size() != f.params.size()) throw RuntimeError("@" + f.name + ": wrong argument count");
  Trace t;
  std::vector<Slotted> in;
  for (size_t i = 0; i < args.size(); ++i) {
    const ValueType& pt = f.type(f.params[i]);
    if (!value_has_type(args[i], pt))
      throw RuntimeError("@" + f.name + " argument " + std::to_string(i) + " should be " + pt.str());
    int64_t slot = pt.is_differentiable() ? t.num_slots++ : -1;
    t.param_slots.push_back(slot);
    t.param_types.push_back(pt);
    in.push_back({args[i], slot});
  }
  auto out = Tracer(m, t, step_limit).call(f, std::move(in));
  for (auto& o : out) {
    t.outputs.push_back(o.v);
    t.output_slots.push_back(o.slot);
  }
  return t;
}

std::vector<std::optional<RuntimeValue>> tape_backprop(
    const Trace& t, std::span<const std::optional<RuntimeValue>> seeds) {
  EagerEmitter e;
  auto adj = adjoints(e);
  std::vector<std::optional<RuntimeValue>> cot(static_cast<size_t>(t.num_slots));
  auto add = [&](int64_t slot, const RuntimeValue& v) {
    if (slot < 0) return;
    auto& c = cot[static_cast<size_t>(slot)];
    c = c ? adj.accumulate(*c, v) : v;
  };
  for (size_t k = 0; k < seeds.size() && k < t.output_slots.size(); ++k)
    if (seeds[k]) add(t.output_slots[k], *seeds[k]);
  for (auto it = t.tape.rbegin(); it != t.tape.rend(); ++it) {
    const auto& c = cot[static_cast<size_t>(it->result_slot)];
    if (!c) continue;
    auto bars = adj.pullback(it->op, it->attrs, it->operand_types, it->result_type, it->saved, *c);
    for (size_t j = 0; j < bars.size(); ++j)
      if (bars[j] && it->operand_types[j].is_differentiable()) add(it->operand_slots[j], *bars[j]);
  }
  std::vector<std::optional<RuntimeValue>> out;
  for (size_t i = 0; i < t.param_slots.size(); ++i) {
    if (t.param_slots[i] < 0) {
      out.push_back(std::nullopt);
      continue;
    }
    const auto& c = cot[static_cast<size_t>(t.param_slots[i])];
    out.push_back(c ? *c : zero_of(t.param_types[i]));
  }
  return out;
}

double seeded_objective(std::span<const RuntimeValue> outputs,
                        std::span<const std::optional<RuntimeValue>> seeds) {
  double acc = 0.0;
  for (size_t k = 0; k < outputs.size() && k < seeds.size(); ++k)
    if (seeds[k]) acc += objective_term(outputs[k], *seeds[k]);
  return acc;
}

std::vector<std::optional<RuntimeValue>> finite_diff_grad(
    const ProgramModule& m, std::string_view name, std::span<const RuntimeValue> args,
    std::span<const std::optional<RuntimeValue>> seeds) {
  const Function& f = m.get(name);
  std::vector<RuntimeValue> x(args.begin(), args.end());
  auto eval_at = [&](size_t i, int64_t elem, double value) {
    auto saved = x[i];
    if (std::holds_alternative<double>(x[i])) {
      x[i] = value;
    } else {
      const auto& t = as_tensor(x[i]);
      std::vector<double> d(t.data().begin(), t.data().end());
      d[static_cast<size_t>(elem)] = value;
      x[i] = DenseTensor(t.shape(), std::move(d));
    }
    double r = seeded_objective(eval_function(m, name, x), seeds);
    x[i] = saved;
    return r;
  };
  std::vector<std::optional<RuntimeValue>> out;
  for (size_t i = 0; i < args.size(); ++i) {
    const ValueType& pt = f.type(f.params[i]);
    if (!pt.is_float()) {
      out.push_back(std::nullopt);
      continue;
    }
    auto deriv = [&](int64_t elem, double x0) {
      const double h = std::max(1e-6, 1e-6 * std::abs(x0));
      return (eval_at(i, elem, x0 + h) - eval_at(i, elem, x0 - h)) / (2.0 * h);
    };
    if (pt.is_f64()) {
      out.push_back(deriv(0, as_f64(args[i])));
    } else {
      const auto& t = as_tensor(args[i]);
      std::vector<double> g;
      for (int64_t e = 0; e < t.numel(); ++e) g.push_back(deriv(e, t[e]));
      out.push_back(DenseTensor(t.shape(), std::move(g)));
    }
  }
  return out;
}

double relative_error(const RuntimeValue& a, const RuntimeValue& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  auto one = [](double x, double y) {
    if (std::isnan(x) || std::isnan(y)) return kInf;
    return std::abs(x - y) / std::max(1.0, std::abs(y));
  };
  if (std::holds_alternative<double>(a) && std::holds_alternative<double>(b))
    return one(std::get<double>(a), std::get<double>(b));
  if (std::holds_alternative<DenseTensor>(a) && std::holds_alternative<DenseTensor>(b)) {
    const auto& x = std::get<DenseTensor>(a);
    const auto& y = std::get<DenseTensor>(b);
    if (x.shape() != y.shape()) return kInf;
    double worst = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) worst = std::max(worst, one(x[i], y[i]));
    return worst;
  }
  return kInf;
}

}  // namespace ssair
