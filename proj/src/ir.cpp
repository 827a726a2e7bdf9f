#include "ssair/ir.hpp"

#include <array>
#include <utility>

#include "ssair/cfg.hpp"

namespace ssair {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 39> kOpNames{{
    {OpKind::Const, "const"},         {OpKind::Add, "add"},
    {OpKind::Sub, "sub"},             {OpKind::Mul, "mul"},
    {OpKind::Div, "div"},             {OpKind::Neg, "neg"},
    {OpKind::Exp, "exp"},             {OpKind::Log, "log"},
    {OpKind::Tanh, "tanh"},           {OpKind::Sigmoid, "sigmoid"},
    {OpKind::Relu, "relu"},           {OpKind::PowInt, "pow_int"},
    {OpKind::Lt, "lt"},               {OpKind::Gt, "gt"},
    {OpKind::Eq, "eq"},               {OpKind::Select, "select"},
    {OpKind::MatMul, "matmul"},       {OpKind::Transpose, "transpose"},
    {OpKind::Reshape, "reshape"},     {OpKind::ReduceSum, "reduce_sum"},
    {OpKind::StackOp, "stack"},       {OpKind::Unstack, "unstack"},
    {OpKind::FusedMap, "fused_map"},  {OpKind::Call, "call"},
    {OpKind::FusedJvp, "fused_jvp"},  {OpKind::StackNew, "stack_new"},
    {OpKind::Push, "push"},           {OpKind::Top, "top"},
    {OpKind::Pop, "pop"},             {OpKind::CheckEmpty, "check_empty"},
    {OpKind::TopOrZero, "top_or_zero"}, {OpKind::PopOrZero, "pop_or_zero"},
    {OpKind::PushZero, "push_zero"},  {OpKind::StackAdd, "stack_add"},
    {OpKind::LanesNew, "lanes_new"},  {OpKind::LanesPush, "lanes_push"},
    {OpKind::LanesTop, "lanes_top"},  {OpKind::LanesPop, "lanes_pop"},
    {OpKind::LanesCheckEmpty, "lanes_check_empty"},
}};

[[noreturn]] void type_fail(OpKind op, const std::string& msg) {
  throw TypeError(std::string(op_name(op)) + ": " + msg);
}

std::string types_str(std::span<const ValueType> ts) {
  std::string s;
  for (size_t i = 0; i < ts.size(); ++i) s += (i ? ", " : "") + ts[i].str();
  return s;
}

void expect_arity(OpKind op, std::span<const ValueType> ts, size_t n) {
  if (ts.size() != n)
    type_fail(op, "expected " + std::to_string(n) + " operands, got " + std::to_string(ts.size()));
}

Shape broadcast_or_fail(OpKind op, const Shape& a, const Shape& b) {
  try {
    return broadcast_shapes(a, b);
  } catch (const ShapeError& e) {
    type_fail(op, e.what());
  }
}

const Function& scalar_callee(const ProgramModule* m, OpKind op, const Attributes& attrs,
                              size_t nargs) {
  if (!m) type_fail(op, "no module to resolve @" + attrs.callee);
  const Function* f = m->find(attrs.callee);
  if (!f) type_fail(op, "unknown function @" + attrs.callee);
  if (f->params.size() != nargs)
    type_fail(op, "@" + attrs.callee + " takes " + std::to_string(f->params.size()) +
                      " arguments, got " + std::to_string(nargs));
  for (auto p : f->params)
    if (!f->type(p).is_f64()) type_fail(op, "@" + attrs.callee + " must take only f64 parameters");
  if (f->results.size() != 1 || !f->results[0].is_f64())
    type_fail(op, "@" + attrs.callee + " must return a single f64");
  return *f;
}

}  // namespace

std::string_view op_name(OpKind op) {
  for (auto& [k, n] : kOpNames)
    if (k == op) return n;
  return "?";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (auto& [k, n] : kOpNames)
    if (n == name) return k;
  return std::nullopt;
}

bool attributes_equal(const Attributes& a, const Attributes& b) {
  if (a.literal.has_value() != b.literal.has_value()) return false;
  if (a.literal && !values_equal(*a.literal, *b.literal)) return false;
  return a.type == b.type && a.axis == b.axis && a.axis_all == b.axis_all && a.index == b.index &&
         a.exponent == b.exponent && a.lanes == b.lanes && a.callee == b.callee;
}

ValueId Function::new_value(std::optional<ValueType> type, std::string name) {
  values.push_back({std::move(name), std::move(type)});
  return ValueId{static_cast<uint32_t>(values.size() - 1)};
}

const ValueType& Function::type(ValueId v) const {
  if (v.index >= values.size()) throw IrError("value id out of range in @" + name);
  const auto& t = values[v.index].type;
  if (!t) throw TypeError("value %" + std::to_string(v.index) + " in @" + name + " has no type");
  return *t;
}

std::vector<ValueType> Function::param_types() const {
  std::vector<ValueType> out;
  for (auto p : params) out.push_back(type(p));
  return out;
}

const Function* ProgramModule::find(std::string_view name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

Function* ProgramModule::find(std::string_view name) {
  for (auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

const Function& ProgramModule::get(std::string_view name) const {
  if (auto* f = find(name)) return *f;
  throw IrError("no function named @" + std::string(name));
}

void ProgramModule::add(Function f) {
  if (find(f.name)) throw IrError("duplicate function name @" + f.name);
  functions.push_back(std::move(f));
}

void ProgramModule::put(Function f) {
  if (auto* g = find(f.name)) *g = std::move(f);
  else functions.push_back(std::move(f));
}

ValueType batched_type(const ValueType& t, int64_t lanes) {
  switch (t.kind) {
    case TypeKind::F64:
    case TypeKind::Bool:
    case TypeKind::I64: return ValueType::tensor({lanes});
    case TypeKind::Tensor: {
      Shape s{lanes};
      s.insert(s.end(), t.shape.begin(), t.shape.end());
      return ValueType::tensor(std::move(s));
    }
    case TypeKind::Stack: return ValueType::lane_stack(lanes);
    case TypeKind::LaneStack: break;
  }
  throw TypeError("lanestack values cannot be batched again");
}

ValueType infer_result_type(const ProgramModule* m, OpKind op, std::span<const ValueType> ts,
                            const Attributes& attrs) {
  auto mismatch = [&]() -> ValueType { type_fail(op, "type mismatch (" + types_str(ts) + ")"); };
  switch (op) {
    case OpKind::Const: {
      expect_arity(op, ts, 0);
      if (!attrs.type || !attrs.literal) type_fail(op, "missing literal");
      if (attrs.type->is_stack() || attrs.type->is_lane_stack())
        type_fail(op, "stack constants are not allowed; use stack_new");
      if (!value_has_type(*attrs.literal, *attrs.type))
        type_fail(op, "literal does not match type " + attrs.type->str());
      return *attrs.type;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: {
      expect_arity(op, ts, 2);
      if (ts[0].is_f64() && ts[1].is_f64()) return ValueType::f64();
      if (ts[0].is_i64() && ts[1].is_i64() && op != OpKind::Div) return ValueType::i64();
      if (ts[0].is_tensor() && ts[1].is_tensor())
        return ValueType::tensor(broadcast_or_fail(op, ts[0].shape, ts[1].shape));
      return mismatch();
    }
    case OpKind::Neg:
      expect_arity(op, ts, 1);
      if (ts[0].is_f64() || ts[0].is_i64() || ts[0].is_tensor()) return ts[0];
      return mismatch();
    case OpKind::Exp:
    case OpKind::Log:
    case OpKind::Tanh:
    case OpKind::Sigmoid:
    case OpKind::Relu:
      expect_arity(op, ts, 1);
      if (ts[0].is_float()) return ts[0];
      return mismatch();
    case OpKind::PowInt:
      expect_arity(op, ts, 1);
      if (!attrs.exponent || *attrs.exponent < 0) type_fail(op, "needs exponent n >= 0");
      if (ts[0].is_float()) return ts[0];
      return mismatch();
    case OpKind::Lt:
    case OpKind::Gt:
    case OpKind::Eq:
      expect_arity(op, ts, 2);
      if ((ts[0].is_f64() && ts[1].is_f64()) || (ts[0].is_i64() && ts[1].is_i64()))
        return ValueType::boolean();
      if (op == OpKind::Eq && ts[0].is_bool() && ts[1].is_bool()) return ValueType::boolean();
      if (ts[0].is_tensor() && ts[1].is_tensor())
        return ValueType::tensor(broadcast_or_fail(op, ts[0].shape, ts[1].shape));
      return mismatch();
    case OpKind::Select:
      expect_arity(op, ts, 3);
      if (ts[0].is_bool() && ts[1] == ts[2] && !ts[1].is_lane_stack()) return ts[1];
      if (ts[0].is_tensor() && ts[1].is_tensor() && ts[2].is_tensor())
        return ValueType::tensor(
            broadcast_or_fail(op, broadcast_or_fail(op, ts[0].shape, ts[1].shape), ts[2].shape));
      if (ts[0].is_tensor() && ts[0].shape.size() == 1 && ts[1].is_lane_stack() && ts[1] == ts[2] &&
          ts[1].lanes == ts[0].shape[0])
        return ts[1];
      return mismatch();
    case OpKind::MatMul:
      expect_arity(op, ts, 2);
      if (!ts[0].is_tensor() || !ts[1].is_tensor() || ts[0].shape.size() != 2 ||
          ts[1].shape.size() != 2)
        type_fail(op, "needs rank-2 tensors (" + types_str(ts) + ")");
      if (ts[0].shape[1] != ts[1].shape[0]) type_fail(op, "inner dimension mismatch");
      return ValueType::tensor({ts[0].shape[0], ts[1].shape[1]});
    case OpKind::Transpose:
      expect_arity(op, ts, 1);
      if (!ts[0].is_tensor() || ts[0].shape.size() != 2) type_fail(op, "needs a rank-2 tensor");
      return ValueType::tensor({ts[0].shape[1], ts[0].shape[0]});
    case OpKind::Reshape: {
      expect_arity(op, ts, 1);
      if (!attrs.type || !attrs.type->is_float()) type_fail(op, "needs a target type");
      if (!ts[0].is_float()) return mismatch();
      auto numel = [](const ValueType& t) { return t.is_f64() ? 1 : shape_numel(t.shape); };
      if (numel(ts[0]) != numel(*attrs.type))
        type_fail(op, "cannot reshape " + ts[0].str() + " to " + attrs.type->str());
      return *attrs.type;
    }
    case OpKind::ReduceSum: {
      expect_arity(op, ts, 1);
      if (!ts[0].is_tensor()) return mismatch();
      if (attrs.axis_all) return ValueType::f64();
      if (!attrs.axis) type_fail(op, "needs an axis");
      auto ax = *attrs.axis;
      if (ax < 0 || ax >= static_cast<int64_t>(ts[0].shape.size()))
        type_fail(op, "axis " + std::to_string(ax) + " out of range for " + ts[0].str());
      if (ts[0].shape.size() == 1) return ValueType::f64();
      Shape s = ts[0].shape;
      s.erase(s.begin() + ax);
      return ValueType::tensor(std::move(s));
    }
    case OpKind::StackOp: {
      if (ts.empty()) type_fail(op, "needs at least one operand");
      for (auto& t : ts)
        if (t != ts[0]) type_fail(op, "operands must share a type (" + types_str(ts) + ")");
      if (ts[0].is_f64()) return ValueType::tensor({static_cast<int64_t>(ts.size())});
      if (!ts[0].is_tensor()) return mismatch();
      Shape s{static_cast<int64_t>(ts.size())};
      s.insert(s.end(), ts[0].shape.begin(), ts[0].shape.end());
      return ValueType::tensor(std::move(s));
    }
    case OpKind::Unstack: {
      expect_arity(op, ts, 1);
      if (!ts[0].is_tensor()) return mismatch();
      if (!attrs.index || *attrs.index < 0 || *attrs.index >= ts[0].shape[0])
        type_fail(op, "index out of range for " + ts[0].str());
      if (ts[0].shape.size() == 1) return ValueType::f64();
      return ValueType::tensor(Shape(ts[0].shape.begin() + 1, ts[0].shape.end()));
    }
    case OpKind::FusedMap:
    case OpKind::FusedJvp: {
      if (ts.empty()) type_fail(op, "needs at least one operand");
      scalar_callee(m, op, attrs, ts.size());
      Shape s;
      for (auto& t : ts) {
        if (!t.is_tensor()) type_fail(op, "operands must be tensors (" + types_str(ts) + ")");
        s = s.empty() ? t.shape : broadcast_or_fail(op, s, t.shape);
      }
      if (op == OpKind::FusedJvp) s.insert(s.begin(), static_cast<int64_t>(ts.size() + 1));
      return ValueType::tensor(std::move(s));
    }
    case OpKind::Call: {
      if (!m) type_fail(op, "no module to resolve @" + attrs.callee);
      const Function* f = m->find(attrs.callee);
      if (!f) type_fail(op, "unknown function @" + attrs.callee);
      if (f->results.size() != 1) type_fail(op, "@" + attrs.callee + " must return one value");
      auto pts = f->param_types();
      if (pts.size() != ts.size() || !std::equal(pts.begin(), pts.end(), ts.begin()))
        type_fail(op, "arguments (" + types_str(ts) + ") do not match @" + attrs.callee + "(" +
                          types_str(pts) + ")");
      return f->results[0];
    }
    case OpKind::StackNew:
      expect_arity(op, ts, 0);
      return ValueType::stack();
    case OpKind::Push:
      expect_arity(op, ts, 2);
      if (!ts[0].is_stack() || ts[1].is_stack() || ts[1].is_lane_stack()) return mismatch();
      return ValueType::stack();
    case OpKind::Top:
    case OpKind::TopOrZero:
      expect_arity(op, ts, 1);
      if (!ts[0].is_stack()) return mismatch();
      if (!attrs.type || attrs.type->is_stack() || attrs.type->is_lane_stack())
        type_fail(op, "needs an element type");
      return *attrs.type;
    case OpKind::Pop:
    case OpKind::PopOrZero:
    case OpKind::PushZero:
    case OpKind::CheckEmpty:
      expect_arity(op, ts, 1);
      if (!ts[0].is_stack()) return mismatch();
      return ValueType::stack();
    case OpKind::StackAdd:
      expect_arity(op, ts, 2);
      if (!ts[0].is_stack() || !ts[1].is_stack()) return mismatch();
      return ValueType::stack();
    case OpKind::LanesNew:
      expect_arity(op, ts, 0);
      if (!attrs.lanes || *attrs.lanes < 1) type_fail(op, "needs lanes >= 1");
      return ValueType::lane_stack(*attrs.lanes);
    case OpKind::LanesPush: {
      expect_arity(op, ts, 3);
      if (!ts[0].is_lane_stack()) return mismatch();
      if (!attrs.type || attrs.type->is_stack() || attrs.type->is_lane_stack())
        type_fail(op, "needs an element type");
      if (ts[1] != batched_type(*attrs.type, ts[0].lanes) ||
          ts[2] != ValueType::tensor({ts[0].lanes}))
        return mismatch();
      return ts[0];
    }
    case OpKind::LanesTop:
      expect_arity(op, ts, 2);
      if (!ts[0].is_lane_stack() || ts[1] != ValueType::tensor({ts[0].lanes})) return mismatch();
      if (!attrs.type || attrs.type->is_stack() || attrs.type->is_lane_stack())
        type_fail(op, "needs an element type");
      return batched_type(*attrs.type, ts[0].lanes);
    case OpKind::LanesPop:
    case OpKind::LanesCheckEmpty:
      expect_arity(op, ts, 2);
      if (!ts[0].is_lane_stack() || ts[1] != ValueType::tensor({ts[0].lanes})) return mismatch();
      return ts[0];
  }
  type_fail(op, "unknown op");
}

std::vector<BlockId> successors(const Block& b) {
  if (!b.terminator) return {};
  if (auto* j = std::get_if<JumpTerm>(&*b.terminator)) return {j->target};
  if (auto* br = std::get_if<BranchTerm>(&*b.terminator)) return {br->then_target, br->else_target};
  return {};
}

FunctionBuilder::FunctionBuilder(const ProgramModule* module, std::string name,
                                 std::vector<std::pair<ValueType, std::string>> params,
                                 std::vector<ValueType> results)
    : module_(module) {
  fn_.name = std::move(name);
  fn_.results = std::move(results);
  fn_.blocks.push_back(Block{"entry", {}, {}, std::nullopt});
  for (auto& [t, n] : params) {
    auto v = fn_.new_value(t, n);
    fn_.params.push_back(v);
    fn_.blocks[0].params.push_back(v);
  }
}

BlockId FunctionBuilder::add_block(std::string name, const std::vector<ValueType>& param_types) {
  fn_.blocks.push_back(Block{std::move(name), {}, {}, std::nullopt});
  auto& b = fn_.blocks.back();
  for (auto& t : param_types) b.params.push_back(fn_.new_value(t));
  return BlockId{static_cast<uint32_t>(fn_.blocks.size() - 1)};
}

ValueId FunctionBuilder::emit(OpKind op, std::vector<ValueId> operands, Attributes attrs,
                              std::string name) {
  std::vector<ValueType> ts;
  ts.reserve(operands.size());
  for (auto v : operands) ts.push_back(fn_.type(v));
  auto rt = infer_result_type(module_, op, ts, attrs);
  auto r = fn_.new_value(std::move(rt), std::move(name));
  fn_.block(cur_).body.push_back(Instruction{r, op, std::move(operands), std::move(attrs)});
  return r;
}

ValueId FunctionBuilder::constant(RuntimeValue v, std::string name) {
  Attributes a;
  a.type = type_of(v);
  a.literal = std::move(v);
  return emit(OpKind::Const, {}, std::move(a), std::move(name));
}

void FunctionBuilder::ret(std::vector<ValueId> values) {
  fn_.block(cur_).terminator = ReturnTerm{std::move(values)};
}

void FunctionBuilder::jump(BlockId target, std::vector<ValueId> args) {
  fn_.block(cur_).terminator = JumpTerm{target, std::move(args)};
}

void FunctionBuilder::branch(ValueId cond, BlockId t, std::vector<ValueId> targs, BlockId e,
                             std::vector<ValueId> eargs) {
  fn_.block(cur_).terminator = BranchTerm{cond, t, std::move(targs), e, std::move(eargs)};
}

void infer_types(Function& f, const ProgramModule& m) {
  if (f.blocks.empty()) return;
  Cfg cfg(f);
  std::vector<BlockId> order = cfg.rpo();
  for (uint32_t b = 0; b < f.blocks.size(); ++b)
    if (!cfg.reachable(BlockId{b})) order.push_back(BlockId{b});
  // two sweeps let unreachable or out-of-order definitions settle
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (auto b : order) {
      for (auto& inst : f.block(b).body) {
        if (inst.result.index >= f.values.size() || f.values[inst.result.index].type) continue;
        std::vector<ValueType> ts;
        bool known = true;
        for (auto v : inst.operands) {
          if (v.index >= f.values.size() || !f.values[v.index].type) {
            known = false;
            break;
          }
          ts.push_back(*f.values[v.index].type);
        }
        if (!known) continue;
        try {
          f.values[inst.result.index].type = infer_result_type(&m, inst.op, ts, inst.attrs);
        } catch (const IrError&) {
        }
      }
    }
  }
}

}  // namespace ssair
