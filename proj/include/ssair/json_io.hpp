#pragma once

#include <json.hpp>

#include "ssair/value.hpp"

namespace ssair {

/// f64 -> number, bool -> bool, i64 -> integer, tensor -> {"shape", "data"}.
/// Stacks are not representable.
nlohmann::json value_to_json(const RuntimeValue& v);

/// Throws RuntimeError when `j` does not describe a value of type `t`.
RuntimeValue value_from_json(const nlohmann::json& j, const ValueType& t);

}  // namespace ssair
