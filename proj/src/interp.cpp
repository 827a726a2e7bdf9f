#include "ssair/interp.hpp"

#include <cmath>

namespace ssair {

namespace {

DenseTensor as_broadcast_tensor(const RuntimeValue& v) {
  if (auto* d = std::get_if<double>(&v)) return DenseTensor({1}, {*d});
  return as_tensor(v);
}

RuntimeValue float_unary(OpKind op, const Attributes& attrs, const RuntimeValue& a) {
  if (auto* d = std::get_if<double>(&a)) return scalar_kernel<double>(op, std::span(d, 1), attrs);
  if (auto* i = std::get_if<int64_t>(&a)) {
    if (op == OpKind::Neg) return -*i;
  }
  const auto& t = as_tensor(a);
  return elementwise_zip([&](std::span<const double> x) { return scalar_kernel<double>(op, x, attrs); },
                         {&t});
}

RuntimeValue float_binary(OpKind op, const RuntimeValue& a, const RuntimeValue& b) {
  if (auto* x = std::get_if<double>(&a)) {
    double p[2] = {*x, as_f64(b)};
    return scalar_kernel<double>(op, std::span<const double>(p, 2), {});
  }
  if (auto* x = std::get_if<int64_t>(&a)) {
    int64_t y = as_i64(b);
    switch (op) {
      case OpKind::Add: return *x + y;
      case OpKind::Sub: return *x - y;
      case OpKind::Mul: return *x * y;
      default: throw RuntimeError("unsupported i64 op " + std::string(op_name(op)));
    }
  }
  const auto& s = as_tensor(a);
  const auto& t = as_tensor(b);
  return elementwise_zip([&](std::span<const double> x) { return scalar_kernel<double>(op, x, {}); },
                         {&s, &t});
}

template <class T>
bool compare(OpKind op, T a, T b) {
  return op == OpKind::Lt ? a < b : op == OpKind::Gt ? a > b : a == b;
}

RuntimeValue add_elements(const RuntimeValue& a, const RuntimeValue& b) {
  if (std::holds_alternative<double>(a)) return as_f64(a) + as_f64(b);
  if (std::holds_alternative<DenseTensor>(a)) return float_binary(OpKind::Add, a, b);
  if (std::holds_alternative<Stack>(a)) {
    throw RuntimeError("stack_add: nested stacks are not supported");
  }
  throw RuntimeError("stack_add: elements of type " + type_of(a).str() + " have no sum");
}

Stack stack_add(const Stack& a, const Stack& b) {
  // top-aligned: missing deeper entries are zero
  auto ea = stack_elements(a), eb = stack_elements(b);
  const size_t n = std::max(ea.size(), eb.size());
  std::vector<std::optional<RuntimeValue>> sum(n);
  for (size_t i = 0; i < n; ++i) {
    const std::optional<RuntimeValue>* x = i < ea.size() ? &ea[i] : nullptr;
    const std::optional<RuntimeValue>* y = i < eb.size() ? &eb[i] : nullptr;
    if (x && *x && y && *y) sum[i] = add_elements(**x, **y);
    else if (x && *x) sum[i] = *x;
    else if (y && *y) sum[i] = *y;
  }
  Stack s;
  for (size_t i = n; i-- > 0;) s = stack_push(s, sum[i]);
  return s;
}

RuntimeValue lane_slice(const RuntimeValue& batched, const ValueType& elem, int64_t lane) {
  const auto& t = as_tensor(batched);
  switch (elem.kind) {
    case TypeKind::F64: return t[lane];
    case TypeKind::Bool: return t[lane] != 0.0;
    case TypeKind::I64: return static_cast<int64_t>(t[lane]);
    case TypeKind::Tensor: return unstack_at(t, lane).reshape(elem.shape);
    default: throw RuntimeError("lanes: unsupported element type " + elem.str());
  }
}

RuntimeValue lanes_gather(const std::vector<RuntimeValue>& per_lane, const ValueType& elem) {
  if (elem.is_tensor()) {
    std::vector<DenseTensor> parts;
    for (auto& v : per_lane) parts.push_back(as_tensor(v));
    return stack(parts);
  }
  std::vector<double> data;
  for (auto& v : per_lane) {
    if (auto* d = std::get_if<double>(&v)) data.push_back(*d);
    else if (auto* b = std::get_if<bool>(&v)) data.push_back(*b ? 1.0 : 0.0);
    else data.push_back(static_cast<double>(as_i64(v)));
  }
  Shape s{static_cast<int64_t>(data.size())};
  return DenseTensor(std::move(s), std::move(data));
}

RuntimeValue fused_map(const ProgramModule& m, const Attributes& attrs,
                       std::span<const RuntimeValue> args) {
  const Function& f = m.get(attrs.callee);
  std::vector<const DenseTensor*> ts;
  for (auto& a : args) ts.push_back(&as_tensor(a));
  return elementwise_zip(
      [&](std::span<const double> x) { return eval_scalar_function<double>(m, f, x); }, ts);
}

RuntimeValue fused_jvp(const ProgramModule& m, const Attributes& attrs,
                       std::span<const RuntimeValue> args) {
  const Function& f = m.get(attrs.callee);
  const size_t k = args.size();
  Shape out;
  for (auto& a : args) out = out.empty() ? as_tensor(a).shape() : broadcast_shapes(out, as_tensor(a).shape());
  const int64_t n = shape_numel(out);
  std::vector<std::vector<int64_t>> offs;
  for (auto& a : args) offs.push_back(BroadcastIndexer(out, as_tensor(a).shape()).offsets());
  std::vector<double> data(static_cast<size_t>((k + 1) * n));
  std::vector<Dual> xs(k);
  for (int64_t e = 0; e < n; ++e) {
    for (size_t j = 0; j < k; ++j) {
      xs[j] = Dual::constant(as_tensor(args[j])[offs[j][e]], k);
      xs[j].d[j] = 1.0;
    }
    Dual y = eval_scalar_function<Dual>(m, f, xs, k);
    data[e] = y.v;
    for (size_t j = 0; j < k; ++j) data[(j + 1) * n + e] = y.d.size() > j ? y.d[j] : 0.0;
  }
  Shape s{static_cast<int64_t>(k + 1)};
  s.insert(s.end(), out.begin(), out.end());
  return DenseTensor(std::move(s), std::move(data));
}

}  // namespace

bool is_differentiable_primitive(OpKind op) {
  switch (op) {
    case OpKind::Add: case OpKind::Sub: case OpKind::Mul: case OpKind::Div: case OpKind::Neg:
    case OpKind::Exp: case OpKind::Log: case OpKind::Tanh: case OpKind::Sigmoid:
    case OpKind::Relu: case OpKind::PowInt: case OpKind::Select: case OpKind::MatMul:
    case OpKind::Transpose: case OpKind::Reshape: case OpKind::ReduceSum: case OpKind::StackOp:
    case OpKind::Unstack: case OpKind::FusedMap:
      return true;
    default:
      return false;
  }
}

RuntimeValue apply_primitive(const ProgramModule& m, OpKind op, const Attributes& attrs,
                             std::span<const RuntimeValue> a) {
  switch (op) {
    case OpKind::Const: return *attrs.literal;
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: return float_binary(op, a[0], a[1]);
    case OpKind::Neg:
    case OpKind::Exp:
    case OpKind::Log:
    case OpKind::Tanh:
    case OpKind::Sigmoid:
    case OpKind::Relu:
    case OpKind::PowInt: return float_unary(op, attrs, a[0]);
    case OpKind::Lt:
    case OpKind::Gt:
    case OpKind::Eq: {
      if (auto* x = std::get_if<double>(&a[0])) return compare(op, *x, as_f64(a[1]));
      if (auto* x = std::get_if<int64_t>(&a[0])) return compare(op, *x, as_i64(a[1]));
      if (auto* x = std::get_if<bool>(&a[0])) return compare(op, *x, as_bool(a[1]));
      const auto& s = as_tensor(a[0]);
      const auto& t = as_tensor(a[1]);
      return elementwise_zip(
          [&](std::span<const double> x) { return compare(op, x[0], x[1]) ? 1.0 : 0.0; }, {&s, &t});
    }
    case OpKind::Select: {
      if (auto* c = std::get_if<bool>(&a[0])) return *c ? a[1] : a[2];
      const auto& c = as_tensor(a[0]);
      if (auto* l = std::get_if<LaneStack>(&a[1])) {
        const auto& r = as_lane_stack(a[2]);
        LaneStack out;
        for (int64_t i = 0; i < c.numel(); ++i)
          out.lanes.push_back(c[i] != 0.0 ? l->lanes[i] : r.lanes[i]);
        return out;
      }
      const auto& x = as_tensor(a[1]);
      const auto& y = as_tensor(a[2]);
      return elementwise_zip(
          [](std::span<const double> v) { return v[0] != 0.0 ? v[1] : v[2]; }, {&c, &x, &y});
    }
    case OpKind::MatMul: return matmul(as_tensor(a[0]), as_tensor(a[1]));
    case OpKind::Transpose: return transpose(as_tensor(a[0]));
    case OpKind::Reshape: {
      const ValueType& to = *attrs.type;
      DenseTensor t = as_broadcast_tensor(a[0]);
      if (to.is_f64()) {
        if (t.numel() != 1) throw ShapeError("reshape: cannot make f64 from " + shape_str(t.shape()));
        return t[0];
      }
      return t.reshape(to.shape);
    }
    case OpKind::ReduceSum: {
      const auto& t = as_tensor(a[0]);
      if (attrs.axis_all) return reduce_sum_all(t);
      auto r = reduce_sum_axis(t, *attrs.axis);
      if (t.rank() == 1) return r[0];
      return r;
    }
    case OpKind::StackOp: {
      if (std::holds_alternative<double>(a[0])) {
        std::vector<double> d;
        for (auto& v : a) d.push_back(as_f64(v));
        Shape s{static_cast<int64_t>(d.size())};
        return DenseTensor(std::move(s), std::move(d));
      }
      std::vector<DenseTensor> parts;
      for (auto& v : a) parts.push_back(as_tensor(v));
      return stack(parts);
    }
    case OpKind::Unstack: {
      const auto& t = as_tensor(a[0]);
      auto r = unstack_at(t, *attrs.index);
      if (t.rank() == 1) return r[0];
      return r;
    }
    case OpKind::FusedMap: return fused_map(m, attrs, a);
    case OpKind::FusedJvp: return fused_jvp(m, attrs, a);
    case OpKind::Call: throw RuntimeError("call is evaluated by the interpreter");
    case OpKind::StackNew: return Stack{};
    case OpKind::Push: return stack_push(as_stack(a[0]), a[1]);
    case OpKind::Top: {
      const auto& s = as_stack(a[0]);
      if (s.empty()) throw RuntimeError("top of empty stack");
      const auto& v = stack_top(s);
      return v ? *v : zero_of(*attrs.type);
    }
    case OpKind::Pop: {
      const auto& s = as_stack(a[0]);
      if (s.empty()) throw RuntimeError("pop of empty stack");
      return stack_pop(s);
    }
    case OpKind::CheckEmpty: {
      const auto& s = as_stack(a[0]);
      if (!s.empty())
        throw RuntimeError("stack not empty at exit (" + std::to_string(s.size()) + " entries left)");
      return s;
    }
    case OpKind::TopOrZero: {
      const auto& s = as_stack(a[0]);
      if (s.empty() || !stack_top(s)) return zero_of(*attrs.type);
      return *stack_top(s);
    }
    case OpKind::PopOrZero: {
      const auto& s = as_stack(a[0]);
      return s.empty() ? s : stack_pop(s);
    }
    case OpKind::PushZero: return stack_push(as_stack(a[0]), std::nullopt);
    case OpKind::StackAdd: return stack_add(as_stack(a[0]), as_stack(a[1]));
    case OpKind::LanesNew: {
      LaneStack l;
      l.lanes.resize(static_cast<size_t>(*attrs.lanes));
      return l;
    }
    case OpKind::LanesPush: {
      LaneStack l = as_lane_stack(a[0]);
      const auto& mask = as_tensor(a[2]);
      for (size_t i = 0; i < l.lanes.size(); ++i)
        if (mask[i] != 0.0)
          l.lanes[i] = stack_push(l.lanes[i], lane_slice(a[1], *attrs.type, static_cast<int64_t>(i)));
      return l;
    }
    case OpKind::LanesTop: {
      const auto& l = as_lane_stack(a[0]);
      const auto& mask = as_tensor(a[1]);
      std::vector<RuntimeValue> vals;
      for (size_t i = 0; i < l.lanes.size(); ++i) {
        const auto& s = l.lanes[i];
        if (mask[i] == 0.0) {
          vals.push_back(zero_of(*attrs.type));
          continue;
        }
        if (s.empty()) throw RuntimeError("top of empty stack in lane " + std::to_string(i));
        const auto& v = stack_top(s);
        if (v && !value_has_type(*v, *attrs.type))
          throw RuntimeError("lane " + std::to_string(i) + " holds " + type_of(*v).str() +
                             ", expected " + attrs.type->str());
        vals.push_back(v ? *v : zero_of(*attrs.type));
      }
      return lanes_gather(vals, *attrs.type);
    }
    case OpKind::LanesPop: {
      LaneStack l = as_lane_stack(a[0]);
      const auto& mask = as_tensor(a[1]);
      for (size_t i = 0; i < l.lanes.size(); ++i) {
        if (mask[i] == 0.0) continue;
        if (l.lanes[i].empty()) throw RuntimeError("pop of empty stack in lane " + std::to_string(i));
        l.lanes[i] = stack_pop(l.lanes[i]);
      }
      return l;
    }
    case OpKind::LanesCheckEmpty: {
      const auto& l = as_lane_stack(a[0]);
      const auto& mask = as_tensor(a[1]);
      for (size_t i = 0; i < l.lanes.size(); ++i)
        if (mask[i] != 0.0 && !l.lanes[i].empty())
          throw RuntimeError("stack not empty at exit in lane " + std::to_string(i));
      return l;
    }
  }
  throw RuntimeError("unknown op");
}

namespace {

class Interpreter {
 public:
  Interpreter(const ProgramModule& m, int64_t limit, EvalStats* stats)
      : m_(m), limit_(limit), stats_(stats) {}

  std::vector<RuntimeValue> call(const Function& f, std::span<const RuntimeValue> args) {
    if (args.size() != f.params.size())
      throw RuntimeError("@" + f.name + " expects " + std::to_string(f.params.size()) +
                         " arguments, got " + std::to_string(args.size()));
    for (size_t i = 0; i < args.size(); ++i)
      if (!value_has_type(args[i], f.type(f.params[i])))
        throw RuntimeError("@" + f.name + " argument " + std::to_string(i) + " should be " +
                           f.type(f.params[i]).str() + ", got " + type_of(args[i]).str());
    if (++depth_ > 256) throw RuntimeError("call depth exceeded");
    std::vector<std::optional<RuntimeValue>> env(f.values.size());
    for (size_t i = 0; i < args.size(); ++i) env[f.params[i].index] = args[i];
    auto get = [&](ValueId v) -> const RuntimeValue& {
      auto& slot = env.at(v.index);
      if (!slot) throw RuntimeError("read of unset value in @" + f.name);
      return *slot;
    };
    BlockId cur{0};
    std::vector<RuntimeValue> ops;
    while (true) {
      const Block& b = f.block(cur);
      for (const auto& inst : b.body) {
        tick();
        ops.clear();
        for (auto v : inst.operands) ops.push_back(get(v));
        if (stats_) {
          ++stats_->op_counts[inst.op];
          if (is_differentiable_primitive(inst.op) && f.type(inst.result).is_float())
            ++stats_->differentiable_primitives;
        }
        if (inst.op == OpKind::Call) {
          auto r = call(m_.get(inst.attrs.callee), ops);
          env[inst.result.index] = std::move(r.at(0));
        } else {
          try {
            env[inst.result.index] = apply_primitive(m_, inst.op, inst.attrs, ops);
          } catch (const DomainError& e) {
            throw DomainError(context(f, inst) + e.what());
          } catch (const StepLimitError&) {
            throw;
          } catch (const std::exception& e) {
            throw RuntimeError(context(f, inst) + e.what());
          }
        }
      }
      tick();
      if (!b.terminator) throw RuntimeError("block without terminator in @" + f.name);
      const Terminator& t = *b.terminator;
      if (auto* r = std::get_if<ReturnTerm>(&t)) {
        std::vector<RuntimeValue> out;
        for (auto v : r->values) out.push_back(get(v));
        --depth_;
        return out;
      }
      const std::vector<ValueId>* args2;
      BlockId next;
      if (auto* j = std::get_if<JumpTerm>(&t)) {
        next = j->target;
        args2 = &j->args;
      } else {
        const auto& br = std::get<BranchTerm>(t);
        if (stats_) ++stats_->branches;
        bool c = as_bool(get(br.cond));
        next = c ? br.then_target : br.else_target;
        args2 = c ? &br.then_args : &br.else_args;
      }
      std::vector<RuntimeValue> vals;
      for (auto v : *args2) vals.push_back(get(v));
      const auto& ps = f.block(next).params;
      for (size_t i = 0; i < ps.size(); ++i) env[ps[i].index] = std::move(vals[i]);
      cur = next;
    }
  }

 private:
  void tick() {
    if (stats_) ++stats_->steps;
    if (++steps_ > limit_)
      throw StepLimitError("step limit of " + std::to_string(limit_) + " exceeded");
  }

  static std::string context(const Function& f, const Instruction& inst) {
    std::string v = f.value_name(inst.result);
    if (v.empty()) v = std::to_string(inst.result.index);
    return "@" + f.name + " %" + v + " = " + std::string(op_name(inst.op)) + ": ";
  }

  const ProgramModule& m_;
  int64_t limit_;
  EvalStats* stats_;
  int64_t steps_ = 0;
  int depth_ = 0;
};

}  // namespace

std::vector<RuntimeValue> eval_function(const ProgramModule& m, std::string_view name,
                                        std::span<const RuntimeValue> args, int64_t step_limit,
                                        EvalStats* stats) {
  return Interpreter(m, step_limit, stats).call(m.get(name), args);
}

}  // namespace ssair
