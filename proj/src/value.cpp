#include "ssair/value.hpp"

#include <sstream>

#include "ssair/format.hpp"

namespace ssair {

std::string ValueType::str() const {
  switch (kind) {
    case TypeKind::F64: return "f64";
    case TypeKind::Bool: return "bool";
    case TypeKind::I64: return "i64";
    case TypeKind::Stack: return "stack";
    case TypeKind::LaneStack: return "lanestack<" + std::to_string(lanes) + ">";
    case TypeKind::Tensor: {
      std::string s = "tensor<";
      for (auto d : shape) s += std::to_string(d) + "x";
      return s + "f64>";
    }
  }
  return "?";
}

size_t Stack::size() const {
  size_t n = 0;
  for (auto* p = head.get(); p; p = p->next.get()) ++n;
  return n;
}

Stack stack_push(const Stack& s, std::optional<RuntimeValue> v) {
  return Stack{std::make_shared<const StackNode>(StackNode{std::move(v), s.head})};
}

const std::optional<RuntimeValue>& stack_top(const Stack& s) {
  if (!s.head) throw RuntimeError("top of empty stack");
  return s.head->value;
}

Stack stack_pop(const Stack& s) {
  if (!s.head) throw RuntimeError("pop of empty stack");
  return Stack{s.head->next};
}

std::vector<std::optional<RuntimeValue>> stack_elements(const Stack& s) {
  std::vector<std::optional<RuntimeValue>> out;
  for (auto* p = s.head.get(); p; p = p->next.get()) out.push_back(p->value);
  return out;
}

ValueType type_of(const RuntimeValue& v) {
  struct V {
    ValueType operator()(double) const { return ValueType::f64(); }
    ValueType operator()(bool) const { return ValueType::boolean(); }
    ValueType operator()(int64_t) const { return ValueType::i64(); }
    ValueType operator()(const DenseTensor& t) const { return ValueType::tensor(t.shape()); }
    ValueType operator()(const Stack&) const { return ValueType::stack(); }
    ValueType operator()(const LaneStack& l) const {
      return ValueType::lane_stack(static_cast<int64_t>(l.lanes.size()));
    }
  };
  return std::visit(V{}, v);
}

bool value_has_type(const RuntimeValue& v, const ValueType& t) { return type_of(v) == t; }

RuntimeValue zero_of(const ValueType& t) {
  switch (t.kind) {
    case TypeKind::F64: return 0.0;
    case TypeKind::Bool: return false;
    case TypeKind::I64: return int64_t{0};
    case TypeKind::Tensor: return DenseTensor::zeros(t.shape);
    case TypeKind::Stack: return Stack{};
    case TypeKind::LaneStack: return LaneStack{std::vector<Stack>(static_cast<size_t>(t.lanes))};
  }
  return 0.0;
}

bool values_equal(const RuntimeValue& a, const RuntimeValue& b) {
  if (a.index() != b.index()) return false;
  if (auto* s = std::get_if<Stack>(&a)) {
    auto ea = stack_elements(*s), eb = stack_elements(std::get<Stack>(b));
    if (ea.size() != eb.size()) return false;
    for (size_t i = 0; i < ea.size(); ++i) {
      if (ea[i].has_value() != eb[i].has_value()) return false;
      if (ea[i] && !values_equal(*ea[i], *eb[i])) return false;
    }
    return true;
  }
  if (auto* l = std::get_if<LaneStack>(&a)) {
    const auto& lb = std::get<LaneStack>(b);
    if (l->lanes.size() != lb.lanes.size()) return false;
    for (size_t i = 0; i < l->lanes.size(); ++i)
      if (!values_equal(l->lanes[i], lb.lanes[i])) return false;
    return true;
  }
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Stack> || std::is_same_v<T, LaneStack>) return false;
        else return x == std::get<T>(b);
      },
      a);
}

std::string value_str(const RuntimeValue& v) {
  std::ostringstream os;
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, double>) os << format_double(x);
        else if constexpr (std::is_same_v<T, bool>) os << (x ? "true" : "false");
        else if constexpr (std::is_same_v<T, int64_t>) os << x;
        else if constexpr (std::is_same_v<T, DenseTensor>) {
          os << "tensor" << shape_str(x.shape()) << "[";
          for (int64_t i = 0; i < x.numel(); ++i) os << (i ? ", " : "") << format_double(x[i]);
          os << "]";
        } else if constexpr (std::is_same_v<T, Stack>) os << "stack(size " << x.size() << ")";
        else os << "lanestack(" << x.lanes.size() << " lanes)";
      },
      v);
  return os.str();
}

namespace {
[[noreturn]] void bad(const char* want, const RuntimeValue& v) {
  throw RuntimeError(std::string("expected ") + want + ", got " + type_of(v).str());
}
}  // namespace

double as_f64(const RuntimeValue& v) {
  if (auto* d = std::get_if<double>(&v)) return *d;
  bad("f64", v);
}
bool as_bool(const RuntimeValue& v) {
  if (auto* d = std::get_if<bool>(&v)) return *d;
  bad("bool", v);
}
int64_t as_i64(const RuntimeValue& v) {
  if (auto* d = std::get_if<int64_t>(&v)) return *d;
  bad("i64", v);
}
const DenseTensor& as_tensor(const RuntimeValue& v) {
  if (auto* d = std::get_if<DenseTensor>(&v)) return *d;
  bad("tensor", v);
}
const Stack& as_stack(const RuntimeValue& v) {
  if (auto* d = std::get_if<Stack>(&v)) return *d;
  bad("stack", v);
}
const LaneStack& as_lane_stack(const RuntimeValue& v) {
  if (auto* d = std::get_if<LaneStack>(&v)) return *d;
  bad("lanestack", v);
}

}  // namespace ssair
