#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ssair/types.hpp"
#include "ssair/value.hpp"

namespace ssair {

enum class OpKind {
  Const,
  Add, Sub, Mul, Div, Neg,
  Exp, Log, Tanh, Sigmoid, Relu, PowInt,
  Lt, Gt, Eq, Select,
  MatMul, Transpose, Reshape, ReduceSum, StackOp, Unstack,
  FusedMap, Call,
  // adjoint plumbing: one dual pass yielding primal and partials
  FusedJvp,
  // persistent value stacks (adjoint traces)
  StackNew, Push, Top, Pop, CheckEmpty,
  // stack cotangent algebra (second-order adjoints only)
  TopOrZero, PopOrZero, PushZero, StackAdd,
  // per-lane stacks (batched programs only)
  LanesNew, LanesPush, LanesTop, LanesPop, LanesCheckEmpty,
};

std::string_view op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);

struct ValueId {
  uint32_t index = UINT32_MAX;
  bool valid() const { return index != UINT32_MAX; }
  friend auto operator<=>(const ValueId&, const ValueId&) = default;
};

struct BlockId {
  uint32_t index = UINT32_MAX;
  friend auto operator<=>(const BlockId&, const BlockId&) = default;
};

/// Op-specific static data. Only the fields an op uses are set.
struct Attributes {
  std::optional<RuntimeValue> literal;  // const
  std::optional<ValueType> type;        // const, reshape target, top/lanes element type
  std::optional<int64_t> axis;          // reduce_sum (unset + axis_all for ALL)
  bool axis_all = false;
  std::optional<int64_t> index;     // unstack
  std::optional<int64_t> exponent;  // pow_int
  std::optional<int64_t> lanes;     // lanes_new
  std::string callee;               // fused_map, fused_jvp, call
};

bool attributes_equal(const Attributes& a, const Attributes& b);

struct Instruction {
  ValueId result;
  OpKind op = OpKind::Const;
  std::vector<ValueId> operands;
  Attributes attrs;
};

struct ReturnTerm {
  std::vector<ValueId> values;
};
struct JumpTerm {
  BlockId target;
  std::vector<ValueId> args;
};
struct BranchTerm {
  ValueId cond;
  BlockId then_target;
  std::vector<ValueId> then_args;
  BlockId else_target;
  std::vector<ValueId> else_args;
};
using Terminator = std::variant<ReturnTerm, JumpTerm, BranchTerm>;

struct Block {
  std::string name;
  std::vector<ValueId> params;
  std::vector<Instruction> body;
  std::optional<Terminator> terminator;
};

struct ValueInfo {
  std::string name;
  std::optional<ValueType> type;
};

struct Function {
  std::string name;
  std::vector<ValueId> params;
  std::vector<ValueType> results;
  std::vector<Block> blocks;  // blocks[0] is the entry
  std::vector<ValueInfo> values;

  ValueId new_value(std::optional<ValueType> type, std::string name = {});
  const ValueType& type(ValueId v) const;
  const std::string& value_name(ValueId v) const { return values.at(v.index).name; }
  const Block& block(BlockId b) const { return blocks.at(b.index); }
  Block& block(BlockId b) { return blocks.at(b.index); }
  std::vector<ValueType> param_types() const;
};

class ProgramModule {
 public:
  std::vector<Function> functions;

  const Function* find(std::string_view name) const;
  Function* find(std::string_view name);
  const Function& get(std::string_view name) const;
  /// Throws on a duplicate name.
  void add(Function f);
  /// Adds or replaces by name.
  void put(Function f);
};

class IrError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TypeError : public IrError {
 public:
  using IrError::IrError;
};

/// Result type of `op` given its operand types; throws TypeError.
ValueType infer_result_type(const ProgramModule* m, OpKind op, std::span<const ValueType> operands,
                            const Attributes& attrs);

/// Type of a value under the batching map: scalars become tensor<B>, tensors
/// gain a leading B axis, stacks become lanestack<B>.
ValueType batched_type(const ValueType& t, int64_t lanes);

std::vector<BlockId> successors(const Block& b);

/// Calls fn(ValueId) for every value the block's terminator reads.
template <class Fn>
void for_each_terminator_use(const Terminator& t, Fn&& fn) {
  std::visit(
      [&](const auto& term) {
        using T = std::decay_t<decltype(term)>;
        if constexpr (std::is_same_v<T, ReturnTerm>) {
          for (auto v : term.values) fn(v);
        } else if constexpr (std::is_same_v<T, JumpTerm>) {
          for (auto v : term.args) fn(v);
        } else {
          fn(term.cond);
          for (auto v : term.then_args) fn(v);
          for (auto v : term.else_args) fn(v);
        }
      },
      t);
}

/// Incremental construction of a Function with type inference at each emit.
class FunctionBuilder {
 public:
  FunctionBuilder(const ProgramModule* module, std::string name,
                  std::vector<std::pair<ValueType, std::string>> params,
                  std::vector<ValueType> results);

  ValueId param(size_t i) const { return fn_.params.at(i); }
  BlockId entry() const { return BlockId{0}; }
  BlockId add_block(std::string name, const std::vector<ValueType>& param_types = {});
  ValueId block_param(BlockId b, size_t i) const { return fn_.block(b).params.at(i); }
  void set_block(BlockId b) { cur_ = b; }
  BlockId current_block() const { return cur_; }

  ValueId emit(OpKind op, std::vector<ValueId> operands, Attributes attrs = {},
               std::string name = {});
  ValueId constant(RuntimeValue v, std::string name = {});
  ValueId f64(double v) { return constant(v); }

  void ret(std::vector<ValueId> values);
  void jump(BlockId target, std::vector<ValueId> args = {});
  void branch(ValueId cond, BlockId t, std::vector<ValueId> targs, BlockId e,
              std::vector<ValueId> eargs);

  const ValueType& type(ValueId v) const { return fn_.type(v); }
  const Function& function() const { return fn_; }
  Function& function() { return fn_; }
  Function finish() { return std::move(fn_); }

 private:
  const ProgramModule* module_;
  Function fn_;
  BlockId cur_{0};
};

/// Resolves the result types of parsed instructions (reverse postorder, so
/// dominating definitions come first). Unresolvable results keep no type.
void infer_types(Function& f, const ProgramModule& m);

}  // namespace ssair
