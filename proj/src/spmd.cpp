#include "ssair/spmd.hpp"

#include <set>

#include "ssair/cfg.hpp"

namespace ssair {

namespace {

constexpr uint32_t kNoBlock = UINT32_MAX;

struct BV {
  ValueId id;
  bool batched = false;
  bool bundle = false;  // fused_jvp result laid out as (k+1, B, ...)
};

int rank_of(const ValueType& t) { return t.is_tensor() ? static_cast<int>(t.shape.size()) : 0; }

class Vectorizer {
 public:
  Vectorizer(const ProgramModule& m, const Function& g, int64_t lanes, std::string name)
      : m_(m), g_(g), cfg_(g), ipdom_(post_idoms(g, cfg_)), B_(lanes), name_(std::move(name)) {
    for (auto [u, h] : cfg_.back_edges()) {
      auto& latches = latches_[h.index];
      latches.push_back(u);
    }
  }

  Function run() {
    std::vector<std::pair<ValueType, std::string>> params;
    for (auto p : g_.params) params.push_back({batched_type(g_.type(p), B_), g_.value_name(p)});
    std::vector<ValueType> results;
    for (auto& r : g_.results) results.push_back(batched_type(r, B_));
    FunctionBuilder b(&m_, name_, params, results);
    b_ = &b;
    vmap_.assign(g_.values.size(), BV{});
    for (size_t i = 0; i < g_.params.size(); ++i) vmap_[g_.params[i].index] = {b.param(i), true};
    ones_ = b.constant(DenseTensor::filled({B_}, 1.0));
    visited_.assign(g_.blocks.size(), 0);
    auto rest = walk(BlockId{0}, {}, kNoBlock, ones_, /*is_entry=*/true);
    if (rest) throw VectorizeError("internal: walk ended without return");
    return b.finish();
  }

 private:
  // ---- helpers on batched values

  ValueId reshape(ValueId v, ValueType to) {
    if (b_->type(v) == to) return v;
    Attributes at;
    at.type = std::move(to);
    return b_->emit(OpKind::Reshape, {v}, at);
  }

  // (B, S) -> (B, 1 x (r - rank S), S)
  ValueId align(ValueId v, int orig_rank, int r) {
    if (orig_rank >= r) return v;
    const ValueType t = b_->type(v);
    Shape s{B_};
    for (int i = orig_rank; i < r; ++i) s.push_back(1);
    s.insert(s.end(), t.shape.begin() + 1, t.shape.end());
    return reshape(v, ValueType::tensor(s));
  }

  ValueId ones_of_rank(int r) {
    Shape s{B_};
    for (int i = 0; i < r; ++i) s.push_back(1);
    return b_->constant(DenseTensor::filled(s, 1.0));
  }

  // Uniform -> batched without changing any bit (select copies, never adds).
  ValueId promote(const BV& v, const ValueType& t) {
    if (v.batched) return v.id;
    if (t.is_f64()) {
      auto r = reshape(v.id, ValueType::tensor({1}));
      return b_->emit(OpKind::Select, {ones_, r, r});
    }
    if (t.is_tensor()) return b_->emit(OpKind::Select, {ones_of_rank(rank_of(t)), v.id, v.id});
    throw VectorizeError("internal: uniform value of type " + t.str());
  }

  ValueId zero_batched(const ValueType& t) {
    if (t.is_stack()) {
      Attributes at;
      at.lanes = B_;
      return b_->emit(OpKind::LanesNew, {}, at);
    }
    return b_->constant(DenseTensor::zeros(batched_type(t, B_).shape));
  }

  ValueId mask_for(ValueId mask, int r) { return align(mask, 0, r); }

  ValueId select_batched(ValueId cond, ValueId a, ValueId b, const ValueType& t) {
    if (t.is_stack()) return b_->emit(OpKind::Select, {cond, a, b});
    return b_->emit(OpKind::Select, {mask_for(cond, rank_of(t)), a, b});
  }

  ValueId not_mask(ValueId c) { return b_->emit(OpKind::Sub, {ones_, c}); }

  // ---- instruction translation

  BV get(ValueId v) const {
    const BV& x = vmap_.at(v.index);
    if (!x.id.valid()) throw VectorizeError("internal: value used before definition");
    return x;
  }

  // operand prepared for an elementwise op whose original result rank is r
  ValueId elementwise_operand(ValueId orig, int r) {
    BV v = get(orig);
    const ValueType& t = g_.type(orig);
    if (v.batched) return align(v.id, rank_of(t), r);
    if (t.is_f64()) return reshape(v.id, ValueType::tensor({1}));
    return v.id;
  }

  BV translate(const Instruction& inst, ValueId mask) {
    const ValueType& rt = g_.type(inst.result);
    const auto& ops = inst.operands;
    bool any_batched = false;
    for (auto o : ops) any_batched = any_batched || get(o).batched;

    auto uniform_copy = [&]() {
      std::vector<ValueId> u;
      for (auto o : ops) u.push_back(get(o).id);
      return BV{b_->emit(inst.op, u, inst.attrs), false};
    };

    switch (inst.op) {
      case OpKind::Const: {
        if (rt.is_float()) return uniform_copy();
        const auto& lit = *inst.attrs.literal;
        double x = std::holds_alternative<bool>(lit) ? (std::get<bool>(lit) ? 1.0 : 0.0)
                                                     : static_cast<double>(as_i64(lit));
        return {b_->constant(DenseTensor::filled({B_}, x)), true};
      }
      case OpKind::Call: throw VectorizeError("internal: call survived inlining");
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
      case OpKind::Div:
      case OpKind::Neg:
      case OpKind::Exp:
      case OpKind::Log:
      case OpKind::Tanh:
      case OpKind::Sigmoid:
      case OpKind::Relu:
      case OpKind::PowInt:
      case OpKind::Lt:
      case OpKind::Gt:
      case OpKind::Eq:
      case OpKind::FusedMap:
      case OpKind::FusedJvp: {
        const bool force = !rt.is_float() || !g_.type(ops[0]).is_float();
        if (!any_batched && !force) return uniform_copy();
        int r = 0;
        for (auto o : ops) r = std::max(r, rank_of(g_.type(o)));
        std::vector<ValueId> u;
        for (auto o : ops) {
          if (force && !get(o).batched) u.push_back(align(promote(get(o), g_.type(o)), rank_of(g_.type(o)), r));
          else u.push_back(elementwise_operand(o, r));
        }
        if (inst.op == OpKind::Log) u[0] = domain_safe(u[0], mask, r);
        if (inst.op == OpKind::Div && get(ops[1]).batched) u[1] = domain_safe(u[1], mask, r);
        auto id = b_->emit(inst.op, u, inst.attrs);
        return {id, true, inst.op == OpKind::FusedJvp};
      }
      case OpKind::Select: {
        const ValueType& ct = g_.type(ops[0]);
        if (!any_batched) return uniform_copy();
        if (ct.is_bool()) {
          ValueId c = get(ops[0]).id;
          if (rt.is_stack()) return {b_->emit(OpKind::Select, {c, get(ops[1]).id, get(ops[2]).id}), true};
          int r = rank_of(rt);
          ValueId a, bb;
          if (rt.is_float()) {
            a = elementwise_operand(ops[1], r);
            bb = elementwise_operand(ops[2], r);
          } else {
            a = get(ops[1]).id;
            bb = get(ops[2]).id;
          }
          return {b_->emit(OpKind::Select, {mask_for(c, r), a, bb}), true};
        }
        int r = 0;
        for (auto o : ops) r = std::max(r, rank_of(g_.type(o)));
        std::vector<ValueId> u;
        for (auto o : ops) u.push_back(elementwise_operand(o, r));
        return {b_->emit(OpKind::Select, u), true};
      }
      case OpKind::MatMul: {
        if (!any_batched) return uniform_copy();
        return {per_lane(ops, [&](std::vector<ValueId> parts) {
                  return b_->emit(OpKind::MatMul, std::move(parts));
                }),
                true};
      }
      case OpKind::Transpose:
      case OpKind::StackOp: {
        if (!any_batched) return uniform_copy();
        return {per_lane(ops, [&](std::vector<ValueId> parts) {
                  return b_->emit(inst.op, std::move(parts), inst.attrs);
                }),
                true};
      }
      case OpKind::Unstack: {
        BV a = get(ops[0]);
        if (!a.batched) return uniform_copy();
        if (a.bundle) return {b_->emit(OpKind::Unstack, {a.id}, inst.attrs), true};
        return {per_lane(ops, [&](std::vector<ValueId> parts) {
                  return b_->emit(OpKind::Unstack, std::move(parts), inst.attrs);
                }),
                true};
      }
      case OpKind::Reshape: {
        if (!any_batched) return uniform_copy();
        return {reshape(get(ops[0]).id, batched_type(rt, B_)), true};
      }
      case OpKind::ReduceSum: {
        BV a = get(ops[0]);
        if (!a.batched) return uniform_copy();
        const Shape& s = g_.type(ops[0]).shape;
        Attributes at;
        if (inst.attrs.axis_all) {
          auto flat = reshape(a.id, ValueType::tensor({B_, shape_numel(s)}));
          at.axis = 1;
          return {b_->emit(OpKind::ReduceSum, {flat}, at), true};
        }
        at.axis = *inst.attrs.axis + 1;
        return {b_->emit(OpKind::ReduceSum, {a.id}, at), true};
      }
      case OpKind::StackNew: {
        Attributes at;
        at.lanes = B_;
        return {b_->emit(OpKind::LanesNew, {}, at), true};
      }
      case OpKind::Push: {
        Attributes at;
        at.type = g_.type(ops[1]);
        auto v = promote(get(ops[1]), g_.type(ops[1]));
        return {b_->emit(OpKind::LanesPush, {get(ops[0]).id, v, mask}, at), true};
      }
      case OpKind::Top: {
        Attributes at;
        at.type = rt;
        return {b_->emit(OpKind::LanesTop, {get(ops[0]).id, mask}, at), true};
      }
      case OpKind::Pop: return {b_->emit(OpKind::LanesPop, {get(ops[0]).id, mask}), true};
      case OpKind::CheckEmpty:
        return {b_->emit(OpKind::LanesCheckEmpty, {get(ops[0]).id, mask}), true};
      default:
        throw VectorizeError("op '" + std::string(op_name(inst.op)) +
                             "' is not supported in batched programs");
    }
  }

  ValueId domain_safe(ValueId v, ValueId mask, int r) {
    if (mask == ones_) return v;
    const ValueType t = b_->type(v);
    auto one = b_->constant(DenseTensor({1}, {1.0}));
    return b_->emit(OpKind::Select, {mask_for(mask, static_cast<int>(t.shape.size()) - 1 < r ? r : static_cast<int>(t.shape.size()) - 1), v, one});
  }

  // Applies fn lane by lane to the operands' slices and restacks the results.
  template <class Fn>
  ValueId per_lane(const std::vector<ValueId>& ops, Fn&& fn) {
    std::vector<ValueId> lanes;
    for (int64_t i = 0; i < B_; ++i) {
      std::vector<ValueId> parts;
      for (auto o : ops) {
        BV v = get(o);
        if (!v.batched) {
          parts.push_back(v.id);
          continue;
        }
        Attributes at;
        at.index = i;
        parts.push_back(b_->emit(OpKind::Unstack, {v.id}, at));
      }
      lanes.push_back(fn(std::move(parts)));
    }
    return b_->emit(OpKind::StackOp, lanes);
  }

  // ---- control flow

  void enter(BlockId b) {
    if (visited_[b.index]++)
      throw VectorizeError("cannot batch @" + g_.name + ": control flow is not structured");
  }

  void bind_params(BlockId b, const std::vector<ValueId>& args) {
    const auto& ps = g_.block(b).params;
    for (size_t i = 0; i < ps.size(); ++i) vmap_[ps[i].index] = {args[i], true};
  }

  std::vector<ValueId> batched_args(const std::vector<ValueId>& orig) {
    std::vector<ValueId> out;
    for (auto v : orig) out.push_back(promote(get(v), g_.type(v)));
    return out;
  }

  // Emits blocks from `b` until control reaches `stop`; returns the arguments
  // passed to `stop` (nullopt after a return).
  std::optional<std::vector<ValueId>> walk(BlockId b, std::vector<ValueId> args, uint32_t stop,
                                           ValueId mask, bool is_entry = false) {
    while (true) {
      if (b.index == stop) return args;
      if (latches_.count(b.index)) {
        auto [x, xargs] = emit_loop(b, args, mask);
        b = x;
        args = std::move(xargs);
        continue;
      }
      enter(b);
      if (!is_entry) bind_params(b, args);
      is_entry = false;
      const Block& blk = g_.block(b);
      for (const auto& inst : blk.body) vmap_[inst.result.index] = translate(inst, mask);
      const Terminator& t = *blk.terminator;
      if (auto* r = std::get_if<ReturnTerm>(&t)) {
        if (stop != kNoBlock)
          throw VectorizeError("cannot batch @" + g_.name + ": return inside a branch or loop");
        b_->ret(batched_args(r->values));
        return std::nullopt;
      }
      if (auto* j = std::get_if<JumpTerm>(&t)) {
        args = batched_args(j->args);
        b = j->target;
        continue;
      }
      const auto& br = std::get<BranchTerm>(t);
      auto join = ipdom_[b.index];
      if (!join) throw VectorizeError("cannot batch @" + g_.name + ": branch without a join point");
      ValueId c = get(br.cond).id;
      ValueId mt = b_->emit(OpKind::Mul, {mask, c});
      ValueId me = b_->emit(OpKind::Mul, {mask, not_mask(c)});
      auto targs = walk(br.then_target, batched_args(br.then_args), join->index, mt);
      auto eargs = walk(br.else_target, batched_args(br.else_args), join->index, me);
      if (!targs || !eargs) throw VectorizeError("cannot batch @" + g_.name + ": unstructured branch");
      const auto& jps = g_.block(*join).params;
      args.clear();
      for (size_t i = 0; i < jps.size(); ++i)
        args.push_back(select_batched(c, (*targs)[i], (*eargs)[i], g_.type(jps[i])));
      b = *join;
    }
  }

  std::pair<BlockId, std::vector<ValueId>> emit_loop(BlockId h, const std::vector<ValueId>& init,
                                                     ValueId mask) {
    enter(h);
    const Block& hb = g_.block(h);
    const auto* br = hb.terminator ? std::get_if<BranchTerm>(&*hb.terminator) : nullptr;
    auto in_loop = cfg_.natural_loop(h);
    if (!br || in_loop[br->then_target.index] == in_loop[br->else_target.index])
      throw VectorizeError("cannot batch @" + g_.name + ": loops must test their exit at the header");

    // values of h that lanes freeze when they leave
    std::vector<ValueId> frozen;
    for (auto p : hb.params) frozen.push_back(p);
    for (auto& i : hb.body) frozen.push_back(i.result);

    std::vector<ValueType> lh_types{ValueType::tensor({B_})};
    for (auto p : hb.params) lh_types.push_back(batched_type(g_.type(p), B_));
    std::vector<size_t> frozen_batched;  // indices into `frozen` carried as registers
    // h's body may produce uniform values; those need no register
    std::vector<ValueId> init_args{mask};
    init_args.insert(init_args.end(), init.begin(), init.end());
    // register types are known only for batched results; decide by type
    for (size_t k = 0; k < frozen.size(); ++k) {
      const ValueType& t = g_.type(frozen[k]);
      if (k < hb.params.size() || will_be_batched(hb.body[k - hb.params.size()])) {
        frozen_batched.push_back(k);
        lh_types.push_back(batched_type(t, B_));
        init_args.push_back(zero_batched(t));
      }
    }
    const BlockId lh = b_->add_block("", lh_types);
    const BlockId lb = b_->add_block("");
    const BlockId lx = b_->add_block("");
    b_->jump(lh, init_args);

    b_->set_block(lh);
    ValueId active = b_->block_param(lh, 0);
    for (size_t i = 0; i < hb.params.size(); ++i)
      vmap_[hb.params[i].index] = {b_->block_param(lh, 1 + i), true};
    for (const auto& inst : hb.body) vmap_[inst.result.index] = translate(inst, active);
    std::vector<ValueId> regs;
    for (size_t r = 0; r < frozen_batched.size(); ++r) {
      ValueId v = frozen[frozen_batched[r]];
      ValueId old = b_->block_param(lh, 1 + hb.params.size() + r);
      BV cur = get(v);
      ValueId curb = promote(cur, g_.type(v));
      regs.push_back(select_batched(active, curb, old, g_.type(v)));
    }
    const bool then_in = in_loop[br->then_target.index];
    ValueId c = get(br->cond).id;
    ValueId stay = then_in ? c : not_mask(c);
    ValueId mbody = b_->emit(OpKind::Mul, {active, stay});
    Attributes all;
    all.axis_all = true;
    ValueId count = b_->emit(OpKind::ReduceSum, {mbody}, all);
    ValueId any = b_->emit(OpKind::Gt, {count, b_->constant(0.0)});
    b_->branch(any, lb, {}, lx, {});

    // body
    b_->set_block(lb);
    BlockId body_target = then_in ? br->then_target : br->else_target;
    const auto& body_args = then_in ? br->then_args : br->else_args;
    auto latch = walk(body_target, batched_args(body_args), h.index, mbody);
    if (!latch) throw VectorizeError("cannot batch @" + g_.name + ": loop body returns");
    std::vector<ValueId> next{mbody};
    next.insert(next.end(), latch->begin(), latch->end());
    next.insert(next.end(), regs.begin(), regs.end());
    b_->jump(lh, next);

    // exit: every lane sees the values it had when it left
    b_->set_block(lx);
    for (size_t r = 0; r < frozen_batched.size(); ++r) vmap_[frozen[frozen_batched[r]].index] = {regs[r], true};
    BlockId x = then_in ? br->else_target : br->then_target;
    const auto& xargs = then_in ? br->else_args : br->then_args;
    return {x, batched_args(xargs)};
  }

  // Whether translate() will produce a batched value for inst (needed before
  // emission to type the loop-header registers).
  bool will_be_batched(const Instruction& inst) {
    const ValueType& rt = g_.type(inst.result);
    if (!rt.is_float()) return true;
    if (inst.op == OpKind::Const) return false;
    for (auto o : inst.operands) {
      const BV& v = vmap_[o.index];
      if (!v.id.valid()) {
        // defined earlier in the same header: look it up recursively
        for (const auto& j : g_.block(header_of(o)).body)
          if (j.result == o) {
            if (will_be_batched(j)) return true;
            goto next;
          }
        return true;  // header params are batched
      }
      if (v.batched) return true;
    next:;
    }
    return false;
  }

  BlockId header_of(ValueId v) {
    for (uint32_t b = 0; b < g_.blocks.size(); ++b) {
      for (auto p : g_.blocks[b].params)
        if (p == v) return BlockId{b};
      for (auto& i : g_.blocks[b].body)
        if (i.result == v) return BlockId{b};
    }
    throw VectorizeError("internal: value without definition");
  }

  const ProgramModule& m_;
  const Function& g_;
  Cfg cfg_;
  std::vector<std::optional<BlockId>> ipdom_;
  int64_t B_;
  std::string name_;
  FunctionBuilder* b_ = nullptr;
  std::vector<BV> vmap_;
  ValueId ones_;
  std::vector<int> visited_;
  std::map<uint32_t, std::vector<BlockId>> latches_;
};

}  // namespace

std::string batched_name(std::string_view name, int64_t lanes) {
  return std::string(name) + "__batched_B" + std::to_string(lanes);
}

BatchedProgram vectorize(const ProgramModule& m, std::string_view name, int64_t lanes) {
  if (lanes < 1) throw VectorizeError("batch size must be at least 1");
  const Function& f = m.get(name);
  Function g = inline_calls(m, f, f.name);
  if (!Cfg(g).reducible()) throw VectorizeError("cannot batch @" + f.name + ": irreducible control flow");
  BatchedProgram bp;
  bp.module = m;
  bp.source = f.name;
  bp.name = batched_name(name, lanes);
  bp.lanes = lanes;
  bp.module.put(Vectorizer(m, g, lanes, bp.name).run());
  return bp;
}

RuntimeValue stack_lanes(std::span<const RuntimeValue> per_lane, const ValueType& t) {
  const int64_t n = static_cast<int64_t>(per_lane.size());
  switch (t.kind) {
    case TypeKind::F64:
    case TypeKind::Bool:
    case TypeKind::I64: {
      std::vector<double> d;
      for (auto& v : per_lane) {
        if (auto* x = std::get_if<double>(&v)) d.push_back(*x);
        else if (auto* b = std::get_if<bool>(&v)) d.push_back(*b ? 1.0 : 0.0);
        else d.push_back(static_cast<double>(as_i64(v)));
      }
      return DenseTensor({n}, std::move(d));
    }
    case TypeKind::Tensor: {
      std::vector<DenseTensor> parts;
      for (auto& v : per_lane) parts.push_back(as_tensor(v));
      return stack(parts);
    }
    case TypeKind::Stack: {
      LaneStack l;
      for (auto& v : per_lane) l.lanes.push_back(as_stack(v));
      return l;
    }
    default: throw RuntimeError("cannot batch values of type " + t.str());
  }
}

std::vector<RuntimeValue> unstack_lanes(const RuntimeValue& batched, const ValueType& t,
                                        int64_t lanes) {
  std::vector<RuntimeValue> out;
  if (t.is_stack()) {
    for (auto& s : as_lane_stack(batched).lanes) out.push_back(s);
    return out;
  }
  const auto& bt = as_tensor(batched);
  for (int64_t i = 0; i < lanes; ++i) {
    switch (t.kind) {
      case TypeKind::F64: out.push_back(bt[i]); break;
      case TypeKind::Bool: out.push_back(bt[i] != 0.0); break;
      case TypeKind::I64: out.push_back(static_cast<int64_t>(bt[i])); break;
      default: out.push_back(unstack_at(bt, i)); break;
    }
  }
  return out;
}

std::vector<std::vector<RuntimeValue>> run_batched(const BatchedProgram& bp,
                                                   const std::vector<std::vector<RuntimeValue>>& args,
                                                   int64_t step_limit) {
  const Function& f = bp.module.get(bp.source);
  if (static_cast<int64_t>(args.size()) != bp.lanes)
    throw RuntimeError("expected arguments for " + std::to_string(bp.lanes) + " lanes");
  std::vector<RuntimeValue> packed;
  for (size_t p = 0; p < f.params.size(); ++p) {
    std::vector<RuntimeValue> col;
    for (auto& lane : args) {
      if (lane.size() != f.params.size()) throw RuntimeError("wrong argument count in a lane");
      if (!value_has_type(lane[p], f.type(f.params[p])))
        throw RuntimeError("argument " + std::to_string(p) + " should be " + f.type(f.params[p]).str());
      col.push_back(lane[p]);
    }
    packed.push_back(stack_lanes(col, f.type(f.params[p])));
  }
  auto res = eval_function(bp.module, bp.name, packed, step_limit);
  std::vector<std::vector<RuntimeValue>> out(args.size());
  for (size_t r = 0; r < f.results.size(); ++r) {
    auto cols = unstack_lanes(res[r], f.results[r], bp.lanes);
    for (size_t i = 0; i < out.size(); ++i) out[i].push_back(cols[i]);
  }
  return out;
}

std::vector<GradResult> batched_grad(const ProgramModule& m, std::string_view name,
                                     const std::vector<std::vector<RuntimeValue>>& args,
                                     const std::vector<std::vector<RuntimeValue>>& seeds) {
  const int64_t B = static_cast<int64_t>(args.size());
  auto ap = build_adjoint(m, name);
  auto aug = vectorize(ap.module, ap.aug, B);
  auto fwd = run_batched(aug, args);
  auto pb = vectorize(aug.module, ap.pb, B);
  const size_t n = ap.module.get(ap.primal).results.size();
  std::vector<std::vector<RuntimeValue>> pargs;
  for (int64_t i = 0; i < B; ++i) {
    std::vector<RuntimeValue> a{fwd[i][n], fwd[i][n + 1]};
    a.insert(a.end(), seeds[i].begin(), seeds[i].end());
    pargs.push_back(std::move(a));
  }
  auto cots = run_batched(pb, pargs);
  const Function& f = ap.module.get(ap.primal);
  std::vector<GradResult> out(static_cast<size_t>(B));
  for (int64_t i = 0; i < B; ++i) {
    out[i].outputs.assign(fwd[i].begin(), fwd[i].begin() + static_cast<std::ptrdiff_t>(n));
    for (size_t k = 0; k < ap.diff_params.size(); ++k) {
      size_t p = ap.diff_params[k];
      out[i].cotangents.push_back({p, f.value_name(f.params[p]), cots[i][k]});
    }
  }
  return out;
}

}  // namespace ssair
