#include "ssair/json_io.hpp"

namespace ssair {

using nlohmann::json;

json value_to_json(const RuntimeValue& v) {
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* b = std::get_if<bool>(&v)) return *b;
  if (auto* i = std::get_if<int64_t>(&v)) return *i;
  if (auto* t = std::get_if<DenseTensor>(&v)) {
    json data = json::array();
    for (int64_t k = 0; k < t->numel(); ++k) data.push_back((*t)[k]);
    return json{{"shape", t->shape()}, {"data", std::move(data)}};
  }
  throw RuntimeError("stack values have no JSON form");
}

RuntimeValue value_from_json(const json& j, const ValueType& t) {
  auto fail = [&](const std::string& why) -> RuntimeError {
    return RuntimeError("expected " + t.str() + ", got " + j.dump() + why);
  };
  switch (t.kind) {
    case TypeKind::F64:
      if (!j.is_number()) throw fail("");
      return j.get<double>();
    case TypeKind::Bool:
      if (!j.is_boolean()) throw fail("");
      return j.get<bool>();
    case TypeKind::I64:
      if (!j.is_number_integer()) throw fail("");
      return j.get<int64_t>();
    case TypeKind::Tensor: {
      if (!j.is_object() || !j.contains("shape") || !j.contains("data")) throw fail("");
      Shape s;
      for (auto& e : j["shape"]) {
        if (!e.is_number_integer()) throw fail(" (bad shape)");
        s.push_back(e.get<int64_t>());
      }
      if (s != t.shape) throw fail(" (shape mismatch)");
      std::vector<double> d;
      for (auto& e : j["data"]) {
        if (!e.is_number()) throw fail(" (non-numeric data)");
        d.push_back(e.get<double>());
      }
      if (static_cast<int64_t>(d.size()) != shape_numel(s)) throw fail(" (wrong element count)");
      return DenseTensor(std::move(s), std::move(d));
    }
    default: throw RuntimeError("values of type " + t.str() + " cannot be read from JSON");
  }
}

}  // namespace ssair
