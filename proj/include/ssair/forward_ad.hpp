#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ssair/dual.hpp"
#include "ssair/interp.hpp"

namespace ssair {

/// Computes adjoint rules on concrete values.
struct EagerEmitter {
  using V = RuntimeValue;
  const ProgramModule* module = nullptr;

  V op(OpKind o, std::vector<V> args, Attributes attrs);
  V constant(RuntimeValue v) { return v; }
  ValueType type(const V& v) { return type_of(v); }
};

/// Output of a fused elementwise map together with d out / d arg_i for every
/// argument, all at the broadcast output shape, from a single dual pass.
struct FusedPartials {
  DenseTensor out;
  std::vector<DenseTensor> partials;
};

FusedPartials fused_map_with_partials(const ProgramModule& m, std::string_view callee,
                                      std::span<const DenseTensor> args);

/// Cotangents of the arguments given the output cotangent.
std::vector<DenseTensor> fused_map_pullback(const FusedPartials& p, const DenseTensor& ybar,
                                            std::span<const Shape> arg_shapes);

/// Forward-mode evaluation of a scalar function.
Dual dual_eval(const ProgramModule& m, std::string_view name, std::span<const Dual> args);

}  // namespace ssair
