#pragma once

#include <cmath>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ssair/dual.hpp"
#include "ssair/ir.hpp"

namespace ssair {

class DomainError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class StepLimitError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

/// Domain checks run on the primal so that double and Dual evaluation fail
/// identically.
inline void check_domain(OpKind op, double a, double b = 1.0) {
  if (op == OpKind::Log && !(a > 0.0))
    throw DomainError("log of non-positive value " + std::to_string(a));
  if (op == OpKind::Div && b == 0.0) throw DomainError("division by zero");
}

/// The float arithmetic shared by every evaluator. S is double or Dual.
template <class S>
S scalar_kernel(OpKind op, std::span<const S> a, const Attributes& attrs) {
  using std::exp;
  using std::log;
  using std::tanh;
  switch (op) {
    case OpKind::Add: return a[0] + a[1];
    case OpKind::Sub: return a[0] - a[1];
    case OpKind::Mul: return a[0] * a[1];
    case OpKind::Div:
      check_domain(op, primal(a[0]), primal(a[1]));
      return a[0] / a[1];
    case OpKind::Neg: return -a[0];
    case OpKind::Exp: return exp(a[0]);
    case OpKind::Log:
      check_domain(op, primal(a[0]));
      return log(a[0]);
    case OpKind::Tanh: return tanh(a[0]);
    case OpKind::Sigmoid: return sigmoid(a[0]);
    case OpKind::Relu: return relu(a[0]);
    case OpKind::PowInt: return pow_int(a[0], *attrs.exponent);
    default: break;
  }
  throw RuntimeError("op " + std::string(op_name(op)) + " is not a scalar float kernel");
}

inline bool is_scalar_kernel(OpKind op) {
  switch (op) {
    case OpKind::Add: case OpKind::Sub: case OpKind::Mul: case OpKind::Div: case OpKind::Neg:
    case OpKind::Exp: case OpKind::Log: case OpKind::Tanh: case OpKind::Sigmoid:
    case OpKind::Relu: case OpKind::PowInt:
      return true;
    default:
      return false;
  }
}

/// Evaluates a scalar-only function (f64 params, one f64 result; internal
/// bools, i64 and branches allowed) over S. Used by fused_map and fused_jvp.
template <class S>
S eval_scalar_function(const ProgramModule& m, const Function& f, std::span<const S> args,
                       size_t tangents = 0) {
  using Slot = std::variant<std::monostate, S, bool, int64_t>;
  std::vector<Slot> env(f.values.size());
  for (size_t i = 0; i < f.params.size(); ++i) env[f.params[i].index] = args[i];
  auto num = [&](ValueId v) -> const S& { return std::get<S>(env[v.index]); };
  auto lit = [&](double x) {
    if constexpr (std::is_same_v<S, double>) return x;
    else return S::constant(x, tangents);
  };
  BlockId cur{0};
  int64_t steps = 0;
  while (true) {
    const Block& b = f.block(cur);
    for (const auto& inst : b.body) {
      if (++steps > 1'000'000) throw StepLimitError("scalar function @" + f.name + " exceeded step limit");
      Slot& out = env[inst.result.index];
      const auto& ops = inst.operands;
      switch (inst.op) {
        case OpKind::Const: {
          const auto& l = *inst.attrs.literal;
          if (auto* d = std::get_if<double>(&l)) out = lit(*d);
          else if (auto* bb = std::get_if<bool>(&l)) out = *bb;
          else if (auto* i = std::get_if<int64_t>(&l)) out = *i;
          else throw RuntimeError("tensor constant in scalar function @" + f.name);
          break;
        }
        case OpKind::Lt:
        case OpKind::Gt:
        case OpKind::Eq: {
          const Slot& x = env[ops[0].index];
          const Slot& y = env[ops[1].index];
          if (std::holds_alternative<S>(x)) {
            double p = primal(std::get<S>(x)), q = primal(std::get<S>(y));
            out = inst.op == OpKind::Lt ? p < q : inst.op == OpKind::Gt ? p > q : p == q;
          } else if (std::holds_alternative<int64_t>(x)) {
            int64_t p = std::get<int64_t>(x), q = std::get<int64_t>(y);
            out = inst.op == OpKind::Lt ? p < q : inst.op == OpKind::Gt ? p > q : p == q;
          } else {
            out = std::get<bool>(x) == std::get<bool>(y);
          }
          break;
        }
        case OpKind::Select:
          out = std::get<bool>(env[ops[0].index]) ? env[ops[1].index] : env[ops[2].index];
          break;
        case OpKind::Call: {
          const Function& g = m.get(inst.attrs.callee);
          std::vector<S> cargs;
          for (auto v : ops) cargs.push_back(num(v));
          out = eval_scalar_function<S>(m, g, cargs, tangents);
          break;
        }
        default: {
          if (!ops.empty() && std::holds_alternative<int64_t>(env[ops[0].index])) {
            int64_t x = std::get<int64_t>(env[ops[0].index]);
            int64_t y = ops.size() > 1 ? std::get<int64_t>(env[ops[1].index]) : 0;
            switch (inst.op) {
              case OpKind::Add: out = x + y; break;
              case OpKind::Sub: out = x - y; break;
              case OpKind::Mul: out = x * y; break;
              case OpKind::Neg: out = -x; break;
              default: throw RuntimeError("bad i64 op in @" + f.name);
            }
            break;
          }
          if (!is_scalar_kernel(inst.op))
            throw RuntimeError("op " + std::string(op_name(inst.op)) +
                               " is not allowed in scalar function @" + f.name);
          if (ops.size() == 1) {
            const S* p = &num(ops[0]);
            out = scalar_kernel<S>(inst.op, std::span<const S>(p, 1), inst.attrs);
          } else {
            S pair[2] = {num(ops[0]), num(ops[1])};
            out = scalar_kernel<S>(inst.op, std::span<const S>(pair, 2), inst.attrs);
          }
        }
      }
    }
    const Terminator& t = *b.terminator;
    auto pass = [&](BlockId target, const std::vector<ValueId>& args2) {
      std::vector<Slot> vals;
      for (auto v : args2) vals.push_back(env[v.index]);
      const auto& ps = f.block(target).params;
      for (size_t i = 0; i < ps.size(); ++i) env[ps[i].index] = vals[i];
      cur = target;
    };
    if (auto* r = std::get_if<ReturnTerm>(&t)) return num(r->values.at(0));
    if (auto* j = std::get_if<JumpTerm>(&t)) pass(j->target, j->args);
    else {
      const auto& br = std::get<BranchTerm>(t);
      if (std::get<bool>(env[br.cond.index])) pass(br.then_target, br.then_args);
      else pass(br.else_target, br.else_args);
    }
  }
}

}  // namespace ssair
