#pragma once

#include <cstdint>
#include <string>

#include "ssair/tensor.hpp"

namespace ssair {

enum class TypeKind { F64, Bool, I64, Tensor, Stack, LaneStack };

/// Static type of an SSA value. Tensor shapes are static; `stack` is the
/// persistent value stack used by adjoint traces, and `lanestack<B>` is its
/// batched counterpart (one independent stack per lane).
struct ValueType {
  TypeKind kind = TypeKind::F64;
  Shape shape;       // Tensor only
  int64_t lanes = 0;  // LaneStack only

  static ValueType f64() { return {TypeKind::F64, {}, 0}; }
  static ValueType boolean() { return {TypeKind::Bool, {}, 0}; }
  static ValueType i64() { return {TypeKind::I64, {}, 0}; }
  static ValueType tensor(Shape s) { return {TypeKind::Tensor, std::move(s), 0}; }
  static ValueType stack() { return {TypeKind::Stack, {}, 0}; }
  static ValueType lane_stack(int64_t b) { return {TypeKind::LaneStack, {}, b}; }

  bool is_f64() const { return kind == TypeKind::F64; }
  bool is_bool() const { return kind == TypeKind::Bool; }
  bool is_i64() const { return kind == TypeKind::I64; }
  bool is_tensor() const { return kind == TypeKind::Tensor; }
  bool is_stack() const { return kind == TypeKind::Stack; }
  bool is_lane_stack() const { return kind == TypeKind::LaneStack; }
  bool is_scalar() const { return is_f64() || is_bool() || is_i64(); }
  /// Values of this type carry cotangents.
  bool is_differentiable() const { return is_f64() || is_tensor() || is_stack(); }
  /// f64 or tensor: the numeric float universe.
  bool is_float() const { return is_f64() || is_tensor(); }

  std::string str() const;

  friend bool operator==(const ValueType&, const ValueType&) = default;
};

}  // namespace ssair
