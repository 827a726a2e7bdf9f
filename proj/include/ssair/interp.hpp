#pragma once

#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "ssair/ir.hpp"
#include "ssair/scalar_eval.hpp"
#include "ssair/value.hpp"

namespace ssair {

inline constexpr int64_t kDefaultStepLimit = 50'000'000;

struct EvalStats {
  std::map<OpKind, int64_t> op_counts;
  int64_t steps = 0;
  int64_t branches = 0;  // conditional branches taken
  /// Executed instructions that a reverse-mode tape would record.
  int64_t differentiable_primitives = 0;
};

/// True for ops that produce a float value from float inputs and so carry
/// derivatives (const, comparisons, calls and stack plumbing do not).
bool is_differentiable_primitive(OpKind op);

/// Evaluates one non-call instruction on concrete operands. Shared by the
/// interpreter and the tracing evaluator.
RuntimeValue apply_primitive(const ProgramModule& m, OpKind op, const Attributes& attrs,
                             std::span<const RuntimeValue> args);

/// Runs @name. Throws RuntimeError (DomainError, StepLimitError) on failure.
std::vector<RuntimeValue> eval_function(const ProgramModule& m, std::string_view name,
                                        std::span<const RuntimeValue> args,
                                        int64_t step_limit = kDefaultStepLimit,
                                        EvalStats* stats = nullptr);

}  // namespace ssair
