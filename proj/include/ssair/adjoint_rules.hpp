#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssair/ir.hpp"

namespace ssair {

class AdError : public IrError {
 public:
  using IrError::IrError;
};

/// A value an op's adjoint needs from the forward pass.
struct SaveItem {
  bool result = false;  // otherwise operands[index]
  size_t index = 0;
};

/// Forward values saved for op's adjoint, in push order. fused_map instead
/// saves one partial-derivative tensor per operand.
inline std::vector<SaveItem> saved_items(OpKind op) {
  switch (op) {
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::MatMul: return {{false, 0}, {false, 1}};
    case OpKind::Log:
    case OpKind::Relu:
    case OpKind::PowInt:
    case OpKind::Select: return {{false, 0}};
    case OpKind::Exp:
    case OpKind::Tanh:
    case OpKind::Sigmoid: return {{true, 0}};
    default: return {};
  }
}

/// Throws AdError when op appears on a differentiated path but has no
/// adjoint.
inline void require_adjoint(OpKind op) {
  switch (op) {
    case OpKind::FusedJvp:
    case OpKind::TopOrZero:
    case OpKind::PopOrZero:
    case OpKind::PushZero:
    case OpKind::StackAdd:
    case OpKind::LanesNew:
    case OpKind::LanesPush:
    case OpKind::LanesTop:
    case OpKind::LanesPop:
    case OpKind::LanesCheckEmpty:
    case OpKind::Call:
      throw AdError("op '" + std::string(op_name(op)) + "' is not differentiable");
    default: break;
  }
}

/// Emitter-generic adjoint algebra. E provides
///   using V;  V op(OpKind, std::vector<V>, Attributes);  V constant(RuntimeValue);
///   ValueType type(const V&);
/// The IR emitter writes instructions, the eager emitter computes values, so
/// the reverse-mode transform and the tape oracle share every rule.
template <class E>
struct Adjoints {
  using V = typename E::V;
  E& e;

  V zero(const ValueType& t) {
    if (t.is_f64()) return e.constant(0.0);
    if (t.is_tensor()) return e.constant(DenseTensor::zeros(t.shape));
    if (t.is_stack()) return e.op(OpKind::StackNew, {}, {});
    throw AdError("no zero for type " + t.str());
  }
  V one(const ValueType& t) {
    if (t.is_f64()) return e.constant(1.0);
    return e.constant(DenseTensor({1}, {1.0}));
  }
  V c(const ValueType& t, double x) {
    if (t.is_f64()) return e.constant(x);
    return e.constant(DenseTensor({1}, {x}));
  }
  V add(V a, V b) { return e.op(OpKind::Add, {a, b}, {}); }
  V sub(V a, V b) { return e.op(OpKind::Sub, {a, b}, {}); }
  V mul(V a, V b) { return e.op(OpKind::Mul, {a, b}, {}); }
  V div(V a, V b) { return e.op(OpKind::Div, {a, b}, {}); }
  V neg(V a) { return e.op(OpKind::Neg, {a}, {}); }

  V accumulate(V a, V b) {
    if (e.type(a).is_stack()) return e.op(OpKind::StackAdd, {a, b}, {});
    return add(a, b);
  }

  V reshape(V v, const ValueType& to) {
    Attributes at;
    at.type = to;
    return e.op(OpKind::Reshape, {v}, at);
  }
  V reduce(V v, int64_t axis) {
    Attributes at;
    at.axis = axis;
    return e.op(OpKind::ReduceSum, {v}, at);
  }

  /// Sums a broadcast-shaped cotangent back to `target`.
  V sum_to(V v, const ValueType& target) {
    ValueType t = e.type(v);
    if (t == target || !target.is_tensor()) return v;
    while (t.shape.size() > target.shape.size()) {
      v = reduce(v, 0);
      t = e.type(v);
    }
    for (size_t i = 0; i < target.shape.size(); ++i) {
      if (target.shape[i] == 1 && t.shape[i] != 1) {
        v = reduce(v, static_cast<int64_t>(i));
        Shape s = t.shape;
        s[i] = 1;
        v = reshape(v, ValueType::tensor(s));
        t = e.type(v);
      }
    }
    return v;
  }

  /// Expands v to `target` by adding zeros; v's shape must broadcast.
  V expand(V v, const ValueType& target) {
    if (e.type(v).is_f64()) v = reshape(v, ValueType::tensor({1}));
    return add(zero(target), v);
  }

  std::vector<std::optional<V>> pullback(OpKind op, const Attributes& attrs,
                                         const std::vector<ValueType>& ots, const ValueType& rt,
                                         const std::vector<V>& saved, V yb, bool fault_mul = false) {
    require_adjoint(op);
    std::vector<std::optional<V>> out(ots.size());
    auto diff = [&](size_t i) { return ots[i].is_differentiable(); };
    switch (op) {
      case OpKind::Add:
      case OpKind::Sub:
        if (!diff(0)) break;
        out[0] = sum_to(yb, ots[0]);
        out[1] = sum_to(op == OpKind::Add ? yb : neg(yb), ots[1]);
        break;
      case OpKind::Mul:
        if (!diff(0)) break;
        out[0] = sum_to(mul(yb, saved[fault_mul ? 0 : 1]), ots[0]);
        out[1] = sum_to(mul(yb, saved[0]), ots[1]);
        break;
      case OpKind::Div:
        if (!diff(0)) break;
        out[0] = sum_to(div(yb, saved[1]), ots[0]);
        out[1] = sum_to(neg(div(mul(yb, saved[0]), mul(saved[1], saved[1]))), ots[1]);
        break;
      case OpKind::Neg:
        if (diff(0)) out[0] = neg(yb);
        break;
      case OpKind::Exp: out[0] = mul(yb, saved[0]); break;
      case OpKind::Log: out[0] = div(yb, saved[0]); break;
      case OpKind::Tanh:
        out[0] = mul(yb, sub(one(rt), mul(saved[0], saved[0])));
        break;
      case OpKind::Sigmoid:
        out[0] = mul(yb, mul(saved[0], sub(one(rt), saved[0])));
        break;
      case OpKind::Relu: {
        auto z = zero(rt);
        auto pos = e.op(OpKind::Gt, {saved[0], z}, {});
        out[0] = e.op(OpKind::Select, {pos, yb, z}, {});
        break;
      }
      case OpKind::PowInt: {
        const int64_t n = *attrs.exponent;
        if (n == 0) {
          out[0] = zero(ots[0]);
          break;
        }
        Attributes p;
        p.exponent = n - 1;
        auto d = mul(c(rt, static_cast<double>(n)), e.op(OpKind::PowInt, {saved[0]}, p));
        out[0] = mul(yb, d);
        break;
      }
      case OpKind::Select: {
        if (!rt.is_differentiable()) break;
        if (ots[0].is_bool()) {
          auto z = zero(rt);
          out[1] = e.op(OpKind::Select, {saved[0], yb, z}, {});
          out[2] = e.op(OpKind::Select, {saved[0], z, yb}, {});
        } else {
          auto z = zero(ValueType::tensor({1}));
          out[1] = sum_to(e.op(OpKind::Select, {saved[0], yb, z}, {}), ots[1]);
          out[2] = sum_to(e.op(OpKind::Select, {saved[0], z, yb}, {}), ots[2]);
        }
        break;
      }
      case OpKind::MatMul:
        out[0] = e.op(OpKind::MatMul, {yb, e.op(OpKind::Transpose, {saved[1]}, {})}, {});
        out[1] = e.op(OpKind::MatMul, {e.op(OpKind::Transpose, {saved[0]}, {}), yb}, {});
        break;
      case OpKind::Transpose: out[0] = e.op(OpKind::Transpose, {yb}, {}); break;
      case OpKind::Reshape: out[0] = reshape(yb, ots[0]); break;
      case OpKind::ReduceSum: {
        const ValueType& a = ots[0];
        if (attrs.axis_all) {
          out[0] = expand(yb, a);
        } else {
          Shape s = a.shape;
          s[static_cast<size_t>(*attrs.axis)] = 1;
          out[0] = add(zero(a), reshape(yb, ValueType::tensor(s)));
        }
        break;
      }
      case OpKind::StackOp:
        for (size_t i = 0; i < ots.size(); ++i) {
          Attributes at;
          at.index = static_cast<int64_t>(i);
          out[i] = e.op(OpKind::Unstack, {yb}, at);
        }
        break;
      case OpKind::Unstack: {
        const ValueType& a = ots[0];
        ValueType elem = a.shape.size() == 1
                             ? ValueType::f64()
                             : ValueType::tensor(Shape(a.shape.begin() + 1, a.shape.end()));
        std::vector<V> parts;
        for (int64_t i = 0; i < a.shape[0]; ++i)
          parts.push_back(i == *attrs.index ? yb : zero(elem));
        out[0] = e.op(OpKind::StackOp, parts, {});
        break;
      }
      case OpKind::FusedMap:
        for (size_t i = 0; i < ots.size(); ++i) out[i] = sum_to(mul(saved[i], yb), ots[i]);
        break;
      case OpKind::Push: {
        out[0] = e.op(OpKind::PopOrZero, {yb}, {});
        if (diff(1)) {
          Attributes at;
          at.type = ots[1];
          out[1] = e.op(OpKind::TopOrZero, {yb}, at);
        }
        break;
      }
      case OpKind::Top:
        if (rt.is_differentiable())
          out[0] = e.op(OpKind::Push, {e.op(OpKind::StackNew, {}, {}), yb}, {});
        break;
      case OpKind::Pop: out[0] = e.op(OpKind::PushZero, {yb}, {}); break;
      case OpKind::CheckEmpty: out[0] = yb; break;
      case OpKind::Const:
      case OpKind::StackNew:
      case OpKind::Lt:
      case OpKind::Gt:
      case OpKind::Eq: break;
      default: require_adjoint(op); break;
    }
    return out;
  }
};

template <class E>
Adjoints<E> adjoints(E& e) {
  return Adjoints<E>{e};
}

}  // namespace ssair
