#include "ssair/forward_ad.hpp"

#include "ssair/adjoint_rules.hpp"

namespace ssair {

RuntimeValue EagerEmitter::op(OpKind o, std::vector<V> args, Attributes attrs) {
  static const ProgramModule empty;
  return apply_primitive(module ? *module : empty, o, attrs, args);
}

FusedPartials fused_map_with_partials(const ProgramModule& m, std::string_view callee,
                                      std::span<const DenseTensor> args) {
  Attributes at;
  at.callee = std::string(callee);
  std::vector<RuntimeValue> vs(args.begin(), args.end());
  auto bundle = as_tensor(apply_primitive(m, OpKind::FusedJvp, at, vs));
  FusedPartials out;
  out.out = unstack_at(bundle, 0);
  for (size_t i = 0; i < args.size(); ++i)
    out.partials.push_back(unstack_at(bundle, static_cast<int64_t>(i + 1)));
  return out;
}

std::vector<DenseTensor> fused_map_pullback(const FusedPartials& p, const DenseTensor& ybar,
                                            std::span<const Shape> arg_shapes) {
  EagerEmitter e;
  auto adj = adjoints(e);
  std::vector<ValueType> ots;
  for (auto& s : arg_shapes) ots.push_back(ValueType::tensor(s));
  std::vector<RuntimeValue> saved(p.partials.begin(), p.partials.end());
  auto bars = adj.pullback(OpKind::FusedMap, {}, ots, ValueType::tensor(p.out.shape()), saved, ybar);
  std::vector<DenseTensor> out;
  for (auto& b : bars) out.push_back(as_tensor(*b));
  return out;
}

Dual dual_eval(const ProgramModule& m, std::string_view name, std::span<const Dual> args) {
  const Function& f = m.get(name);
  size_t k = 0;
  for (auto& a : args) k = std::max(k, a.d.size());
  return eval_scalar_function<Dual>(m, f, args, k);
}

}  // namespace ssair
