#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssair/adjoint_rules.hpp"
#include "ssair/interp.hpp"

namespace ssair {

struct AdOptions {
  /// Test hook: corrupts the mul adjoint so gradient checks must fail.
  bool fault_mul = false;
};

/// Copies `callee` into the builder's current position, binding its
/// parameters to `args`. Nested calls are inlined too. Leaves the builder in
/// a fresh continuation block and returns the callee's results there.
std::vector<ValueId> inline_function(FunctionBuilder& b, const ProgramModule& m,
                                     const Function& callee, std::span<const ValueId> args,
                                     bool keep_names = false);

/// f with every call inlined and all returns joined in one exit block.
Function inline_calls(const ProgramModule& m, const Function& f, std::string new_name);

/// The reverse-mode split of a function: `aug` runs the primal and returns its
/// results followed by two stacks (branch log, saved values); `pb` takes
/// those stacks plus seeds for the differentiable results and returns
/// cotangents for the differentiable parameters.
struct AdjointProgram {
  ProgramModule module;  // input functions plus aug and pb
  std::string primal, aug, pb;
  std::vector<size_t> diff_params;
  std::vector<size_t> diff_results;
};

AdjointProgram build_adjoint(const ProgramModule& m, std::string_view name,
                             const AdOptions& opts = {});

struct CotangentEntry {
  size_t param_index;
  std::string name;
  RuntimeValue value;
};

struct GradResult {
  std::vector<RuntimeValue> outputs;
  std::vector<CotangentEntry> cotangents;  // one per differentiable parameter
};

/// `seeds` has one entry per differentiable result.
GradResult grad(const AdjointProgram& ap, std::span<const RuntimeValue> args,
                std::span<const RuntimeValue> seeds, int64_t step_limit = kDefaultStepLimit);
GradResult grad(const ProgramModule& m, std::string_view name, std::span<const RuntimeValue> args,
                std::span<const RuntimeValue> seeds, const AdOptions& opts = {});

/// Adds `name`(params..., seeds...) -> cotangents, the gradient map of
/// ap.primal as an ordinary function (aug and pb inlined).
void add_gradient_function(AdjointProgram& ap, const std::string& name);

/// Differentiates the gradient map again: the result's cotangents are with
/// respect to (params..., seeds...) of the gradient function.
GradResult grad_of_grad(const ProgramModule& m, std::string_view name,
                        std::span<const RuntimeValue> args, std::span<const RuntimeValue> seeds,
                        std::span<const RuntimeValue> outer_seeds);

/// Second derivative of an f64 -> f64 function.
double grad_of_grad(const ProgramModule& m, std::string_view name, double x);

}  // namespace ssair
