#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ssair/interp.hpp"

namespace ssair {

/// One executed differentiable primitive.
struct TapeNode {
  OpKind op;
  Attributes attrs;
  std::vector<int64_t> operand_slots;  // -1: no cotangent needed
  std::vector<ValueType> operand_types;
  ValueType result_type;
  int64_t result_slot;
  std::vector<RuntimeValue> saved;
};

/// Straight-line record of one concrete execution (a Wengert list).
struct Trace {
  std::vector<RuntimeValue> outputs;
  std::vector<int64_t> output_slots;
  std::vector<int64_t> param_slots;
  std::vector<ValueType> param_types;
  std::vector<TapeNode> tape;
  int64_t num_slots = 0;
  EvalStats stats;
};

Trace trace_eval(const ProgramModule& m, std::string_view name, std::span<const RuntimeValue> args,
                 int64_t step_limit = kDefaultStepLimit);

/// Replays the tape backwards with the shared adjoint rules. Returns one
/// cotangent per parameter (nullopt for non-differentiable ones). `seeds`
/// has one entry per output; nullopt seeds nothing.
std::vector<std::optional<RuntimeValue>> tape_backprop(
    const Trace& t, std::span<const std::optional<RuntimeValue>> seeds);

/// <seeds, outputs> summed over differentiable outputs.
double seeded_objective(std::span<const RuntimeValue> outputs,
                        std::span<const std::optional<RuntimeValue>> seeds);

/// Central differences of the seeded objective, step max(1e-6, 1e-6 |x|).
/// One entry per parameter, nullopt for non-differentiable ones.
std::vector<std::optional<RuntimeValue>> finite_diff_grad(
    const ProgramModule& m, std::string_view name, std::span<const RuntimeValue> args,
    std::span<const std::optional<RuntimeValue>> seeds);

/// max |a - b| / max(1, |b|) over elements; infinity on shape mismatch.
double relative_error(const RuntimeValue& a, const RuntimeValue& b);

}  // namespace ssair
