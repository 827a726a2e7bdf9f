#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssair/interp.hpp"
#include "ssair/reverse_ad.hpp"

namespace ssair {

class VectorizeError : public IrError {
 public:
  using IrError::IrError;
};

/// Program-level batching: @name__batched_B<lanes> runs `lanes` independent
/// instances of @name at once. Parameters and results use batched_type.
/// Control flow becomes masked straight-line code plus loops that run until
/// every lane has exited.
struct BatchedProgram {
  ProgramModule module;  // input functions plus the batched one
  std::string source, name;
  int64_t lanes = 0;
};

BatchedProgram vectorize(const ProgramModule& m, std::string_view name, int64_t lanes);

std::string batched_name(std::string_view name, int64_t lanes);

/// Packs per-lane values of type t into the batched representation and back.
RuntimeValue stack_lanes(std::span<const RuntimeValue> per_lane, const ValueType& t);
std::vector<RuntimeValue> unstack_lanes(const RuntimeValue& batched, const ValueType& t,
                                        int64_t lanes);

/// args[lane][param] -> outputs[lane][result].
std::vector<std::vector<RuntimeValue>> run_batched(
    const BatchedProgram& bp, const std::vector<std::vector<RuntimeValue>>& args,
    int64_t step_limit = kDefaultStepLimit);

/// Per-lane gradients computed by batching the augmented forward function
/// and the pullback of `name`. seeds[lane] has one entry per differentiable
/// result.
std::vector<GradResult> batched_grad(const ProgramModule& m, std::string_view name,
                                     const std::vector<std::vector<RuntimeValue>>& args,
                                     const std::vector<std::vector<RuntimeValue>>& seeds);

}  // namespace ssair
