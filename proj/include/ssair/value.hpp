#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ssair/tensor.hpp"
#include "ssair/types.hpp"

namespace ssair {

struct StackNode;

/// Persistent (immutable, structurally shared) stack. Push and pop are O(1)
/// and never disturb other holders of the same stack.
struct Stack {
  std::shared_ptr<const StackNode> head;
  size_t size() const;
  bool empty() const { return head == nullptr; }
};

/// One independent stack per batch lane.
struct LaneStack {
  std::vector<Stack> lanes;
};

using RuntimeValue = std::variant<double, bool, int64_t, DenseTensor, Stack, LaneStack>;

struct StackNode {
  /// nullopt is a symbolic additive zero (used by stack cotangents)
  std::optional<RuntimeValue> value;
  std::shared_ptr<const StackNode> next;
};

class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Stack stack_push(const Stack& s, std::optional<RuntimeValue> v);
const std::optional<RuntimeValue>& stack_top(const Stack& s);
Stack stack_pop(const Stack& s);
/// Elements from top to bottom.
std::vector<std::optional<RuntimeValue>> stack_elements(const Stack& s);

ValueType type_of(const RuntimeValue& v);
bool value_has_type(const RuntimeValue& v, const ValueType& t);
RuntimeValue zero_of(const ValueType& t);

/// Exact structural equality (tensors compare elementwise with ==).
bool values_equal(const RuntimeValue& a, const RuntimeValue& b);
std::string value_str(const RuntimeValue& v);

double as_f64(const RuntimeValue& v);
bool as_bool(const RuntimeValue& v);
int64_t as_i64(const RuntimeValue& v);
const DenseTensor& as_tensor(const RuntimeValue& v);
const Stack& as_stack(const RuntimeValue& v);
const LaneStack& as_lane_stack(const RuntimeValue& v);

}  // namespace ssair
