#include "ssair/reverse_ad.hpp"

#include <unordered_map>

#include "ssair/cfg.hpp"

namespace ssair {

namespace {

struct IrEmitter {
  using V = ValueId;
  FunctionBuilder& b;
  V op(OpKind o, std::vector<V> args, Attributes attrs) {
    return b.emit(o, std::move(args), std::move(attrs));
  }
  V constant(RuntimeValue v) { return b.constant(std::move(v)); }
  ValueType type(const V& v) { return b.type(v); }
};

std::vector<std::pair<ValueType, std::string>> typed_params(const Function& f) {
  std::vector<std::pair<ValueType, std::string>> out;
  for (auto p : f.params) out.push_back({f.type(p), f.value_name(p)});
  return out;
}

// Every branch edge goes through its own empty block, so edges that carry
// block arguments are always jumps.
void split_branch_edges(Function& g) {
  const size_t n = g.blocks.size();
  for (size_t b = 0; b < n; ++b) {
    auto* br = g.blocks[b].terminator ? std::get_if<BranchTerm>(&*g.blocks[b].terminator) : nullptr;
    if (!br) continue;
    auto trampoline = [&](BlockId target, std::vector<ValueId> args) {
      g.blocks.push_back(Block{"", {}, {}, JumpTerm{target, std::move(args)}});
      return BlockId{static_cast<uint32_t>(g.blocks.size() - 1)};
    };
    BranchTerm t = *br;
    BlockId tt = trampoline(t.then_target, t.then_args);
    BlockId et = trampoline(t.else_target, t.else_args);
    g.blocks[b].terminator = BranchTerm{t.cond, tt, {}, et, {}};
  }
}

// Joins extra predecessors pairwise so no block has more than two.
void limit_merge_preds(Function& g) {
  while (true) {
    Cfg cfg(g);
    bool changed = false;
    for (uint32_t b = 0; b < g.blocks.size() && !changed; ++b) {
      const auto& preds = cfg.preds(BlockId{b});
      if (preds.size() <= 2) continue;
      Block join{"", {}, {}, std::nullopt};
      for (auto p : g.blocks[b].params) join.params.push_back(g.new_value(g.type(p)));
      join.terminator = JumpTerm{BlockId{b}, join.params};
      g.blocks.push_back(std::move(join));
      BlockId jb{static_cast<uint32_t>(g.blocks.size() - 1)};
      for (int k = 0; k < 2; ++k) {
        auto& t = *g.blocks[preds[k].index].terminator;
        auto* j = std::get_if<JumpTerm>(&t);
        if (!j) throw AdError("internal: merge predecessor is not a jump");
        j->target = jb;
      }
      changed = true;
    }
    if (!changed) return;
  }
}

class AdjointBuilder {
 public:
  AdjointBuilder(const ProgramModule& m, const Function& g, const AdOptions& opts)
      : m_(m), g_(g), cfg_(g), opts_(opts) {
    for (uint32_t b = 0; b < g.blocks.size(); ++b)
      if (g.blocks[b].terminator && std::holds_alternative<ReturnTerm>(*g.blocks[b].terminator)) {
        if (exit_.index != UINT32_MAX) throw AdError("internal: several return blocks");
        exit_ = BlockId{b};
      }
    if (exit_.index == UINT32_MAX) throw AdError("@" + g.name + " never returns");
    for (uint32_t b = 0; b < g.blocks.size(); ++b)
      if (cfg_.preds(BlockId{b}).size() > 2) throw AdError("internal: block with >2 predecessors");
    collect_cotangent_carriers();
  }

  Function build_aug(const std::string& name) {
    auto results = g_.results;
    results.push_back(ValueType::stack());
    results.push_back(ValueType::stack());
    FunctionBuilder A(&m_, name, typed_params(g_), results);
    std::vector<ValueId> vmap(g_.values.size());
    for (size_t i = 0; i < g_.params.size(); ++i) vmap[g_.params[i].index] = A.param(i);
    std::vector<BlockId> bmap(g_.blocks.size());
    for (uint32_t b = 0; b < g_.blocks.size(); ++b) {
      if (b == 0) {
        bmap[b] = A.entry();
        continue;
      }
      std::vector<ValueType> ts;
      for (auto p : g_.blocks[b].params) ts.push_back(g_.type(p));
      ts.push_back(ValueType::stack());
      ts.push_back(ValueType::stack());
      bmap[b] = A.add_block(g_.blocks[b].name, ts);
      for (size_t i = 0; i < g_.blocks[b].params.size(); ++i)
        vmap[g_.blocks[b].params[i].index] = A.block_param(bmap[b], i);
    }
    for (auto bid : cfg_.rpo()) {
      const Block& blk = g_.block(bid);
      A.set_block(bmap[bid.index]);
      ValueId log, saved;
      if (bid.index == 0) {
        log = A.emit(OpKind::StackNew, {}, {}, "log");
        saved = A.emit(OpKind::StackNew, {}, {}, "saved");
      } else {
        const size_t np = blk.params.size();
        log = A.block_param(bmap[bid.index], np);
        saved = A.block_param(bmap[bid.index], np + 1);
      }
      for (const auto& inst : blk.body) {
        std::vector<ValueId> ops;
        for (auto v : inst.operands) ops.push_back(vmap[v.index]);
        const ValueType& rt = g_.type(inst.result);
        if (inst.op == OpKind::Call) throw AdError("internal: call survived inlining");
        if (rt.is_differentiable()) require_adjoint(inst.op);
        if (inst.op == OpKind::FusedMap) {
          auto bundle = A.emit(OpKind::FusedJvp, ops, inst.attrs);
          Attributes a0;
          a0.index = 0;
          vmap[inst.result.index] = A.emit(OpKind::Unstack, {bundle}, a0, g_.value_name(inst.result));
          for (size_t i = 0; i < ops.size(); ++i) {
            Attributes ai;
            ai.index = static_cast<int64_t>(i + 1);
            saved = A.emit(OpKind::Push, {saved, A.emit(OpKind::Unstack, {bundle}, ai)});
          }
          continue;
        }
        auto y = A.emit(inst.op, ops, inst.attrs, g_.value_name(inst.result));
        vmap[inst.result.index] = y;
        if (!rt.is_differentiable()) continue;
        for (auto item : saved_items(inst.op))
          saved = A.emit(OpKind::Push, {saved, item.result ? y : ops[item.index]});
      }
      auto map_list = [&](const std::vector<ValueId>& vs) {
        std::vector<ValueId> out;
        for (auto v : vs) out.push_back(vmap[v.index]);
        return out;
      };
      const Terminator& t = *blk.terminator;
      if (auto* r = std::get_if<ReturnTerm>(&t)) {
        auto vals = map_list(r->values);
        vals.push_back(log);
        vals.push_back(saved);
        A.ret(vals);
      } else if (auto* j = std::get_if<JumpTerm>(&t)) {
        const auto& preds = cfg_.preds(j->target);
        if (preds.size() == 2) {
          auto bit = A.constant(preds[0] == bid);
          log = A.emit(OpKind::Push, {log, bit});
        }
        auto args = map_list(j->args);
        args.push_back(log);
        args.push_back(saved);
        A.jump(bmap[j->target.index], args);
      } else {
        const auto& br = std::get<BranchTerm>(t);
        A.branch(vmap[br.cond.index], bmap[br.then_target.index], {log, saved},
                 bmap[br.else_target.index], {log, saved});
      }
    }
    return A.finish();
  }

  Function build_pb(const std::string& name, std::vector<size_t>& diff_params,
                    std::vector<size_t>& diff_results) {
    std::vector<std::pair<ValueType, std::string>> params{{ValueType::stack(), "log"},
                                                         {ValueType::stack(), "saved"}};
    for (size_t i = 0; i < g_.results.size(); ++i)
      if (g_.results[i].is_differentiable()) {
        diff_results.push_back(i);
        params.push_back({g_.results[i], "seed" + std::to_string(i)});
      }
    std::vector<ValueType> results;
    for (size_t i = 0; i < g_.params.size(); ++i)
      if (g_.type(g_.params[i]).is_differentiable()) {
        diff_params.push_back(i);
        results.push_back(g_.type(g_.params[i]));
      }
    FunctionBuilder P(&m_, name, params, results);
    IrEmitter em{P};
    auto adj = adjoints(em);

    std::vector<BlockId> rev(g_.blocks.size());
    std::vector<ValueType> carrier_types{ValueType::stack(), ValueType::stack()};
    for (auto v : carriers_) carrier_types.push_back(g_.type(v));
    for (uint32_t b = 0; b < g_.blocks.size(); ++b) {
      const auto& n = g_.blocks[b].name;
      rev[b] = P.add_block(n.empty() ? std::string() : n + "_rev", carrier_types);
    }

    // start: zero carriers, seed the returned values
    std::vector<ValueId> gbar;
    for (auto v : carriers_) gbar.push_back(adj.zero(g_.type(v)));
    const auto& rvals = std::get<ReturnTerm>(*g_.block(exit_).terminator).values;
    for (size_t k = 0; k < diff_results.size(); ++k) {
      size_t gi = carrier_index_.at(rvals[diff_results[k]].index);
      gbar[gi] = adj.accumulate(gbar[gi], P.param(2 + k));
    }
    P.jump(rev[exit_.index], with_stacks(P.param(0), P.param(1), gbar));

    for (uint32_t b = 0; b < g_.blocks.size(); ++b) emit_reverse_block(P, adj, rev, BlockId{b}, diff_params);
    return P.finish();
  }

 private:
  static std::vector<ValueId> with_stacks(ValueId log, ValueId saved, const std::vector<ValueId>& g) {
    std::vector<ValueId> out{log, saved};
    out.insert(out.end(), g.begin(), g.end());
    return out;
  }

  void collect_cotangent_carriers() {
    std::vector<uint32_t> def_block(g_.values.size(), UINT32_MAX);
    std::vector<char> carrier(g_.values.size(), 0);
    auto differentiable = [&](ValueId v) { return g_.type(v).is_differentiable(); };
    for (auto p : g_.params)
      if (differentiable(p)) carrier[p.index] = 1;
    for (uint32_t b = 0; b < g_.blocks.size(); ++b) {
      const auto& blk = g_.blocks[b];
      for (auto p : blk.params) {
        def_block[p.index] = b;
        if (differentiable(p)) carrier[p.index] = 1;
      }
      for (const auto& i : blk.body) def_block[i.result.index] = b;
    }
    for (uint32_t b = 0; b < g_.blocks.size(); ++b) {
      const auto& blk = g_.blocks[b];
      for (const auto& i : blk.body)
        for (auto v : i.operands)
          if (def_block[v.index] != b && differentiable(v)) carrier[v.index] = 1;
      if (blk.terminator)
        for_each_terminator_use(*blk.terminator, [&](ValueId v) {
          if (differentiable(v)) carrier[v.index] = 1;
        });
    }
    for (uint32_t v = 0; v < g_.values.size(); ++v)
      if (carrier[v]) {
        carrier_index_[v] = carriers_.size();
        carriers_.push_back(ValueId{v});
      }
  }

  template <class Adj>
  void emit_reverse_block(FunctionBuilder& P, Adj& adj, const std::vector<BlockId>& rev, BlockId bid,
                          const std::vector<size_t>& diff_params) {
    const Block& blk = g_.block(bid);
    P.set_block(rev[bid.index]);
    ValueId log = P.block_param(rev[bid.index], 0);
    ValueId saved = P.block_param(rev[bid.index], 1);
    std::vector<ValueId> gbar;
    for (size_t i = 0; i < carriers_.size(); ++i) gbar.push_back(P.block_param(rev[bid.index], 2 + i));
    std::unordered_map<uint32_t, ValueId> local;

    auto add_to = [&](ValueId v, ValueId contrib) {
      auto it = carrier_index_.find(v.index);
      if (it != carrier_index_.end()) {
        gbar[it->second] = adj.accumulate(gbar[it->second], contrib);
        return;
      }
      auto [l, fresh] = local.try_emplace(v.index, contrib);
      if (!fresh) l->second = adj.accumulate(l->second, contrib);
    };

    for (auto it = blk.body.rbegin(); it != blk.body.rend(); ++it) {
      const Instruction& inst = *it;
      const ValueType& rt = g_.type(inst.result);
      if (!rt.is_differentiable()) continue;
      std::vector<ValueType> ots;
      for (auto v : inst.operands) ots.push_back(g_.type(v));
      // saved values come off the stack whether or not a cotangent arrived
      std::vector<ValueType> save_types;
      if (inst.op == OpKind::FusedMap) save_types.assign(ots.size(), rt);
      else
        for (auto item : saved_items(inst.op)) save_types.push_back(item.result ? rt : ots[item.index]);
      std::vector<ValueId> vals(save_types.size());
      for (size_t k = save_types.size(); k-- > 0;) {
        Attributes at;
        at.type = save_types[k];
        vals[k] = P.emit(OpKind::Top, {saved}, at);
        saved = P.emit(OpKind::Pop, {saved});
      }
      std::optional<ValueId> yb;
      auto ci = carrier_index_.find(inst.result.index);
      if (ci != carrier_index_.end()) {
        yb = gbar[ci->second];
        gbar[ci->second] = adj.zero(rt);
      } else if (auto l = local.find(inst.result.index); l != local.end()) {
        yb = l->second;
      }
      if (!yb) continue;
      auto bars = adj.pullback(inst.op, inst.attrs, ots, rt, vals, *yb, opts_.fault_mul);
      for (size_t j = 0; j < bars.size(); ++j)
        if (bars[j] && ots[j].is_differentiable()) add_to(inst.operands[j], *bars[j]);
    }

    if (bid.index == 0) {
      P.emit(OpKind::CheckEmpty, {log});
      P.emit(OpKind::CheckEmpty, {saved});
      std::vector<ValueId> out;
      for (auto i : diff_params) out.push_back(gbar[carrier_index_.at(g_.params[i].index)]);
      P.ret(out);
      return;
    }

    std::vector<std::optional<ValueId>> pbar(blk.params.size());
    for (size_t i = 0; i < blk.params.size(); ++i) {
      auto ci = carrier_index_.find(blk.params[i].index);
      if (ci == carrier_index_.end()) continue;
      pbar[i] = gbar[ci->second];
      gbar[ci->second] = adj.zero(g_.type(blk.params[i]));
    }
    auto edge_carriers = [&](BlockId pred) {
      auto g = gbar;
      const auto& t = *g_.block(pred).terminator;
      if (auto* j = std::get_if<JumpTerm>(&t)) {
        for (size_t i = 0; i < pbar.size(); ++i) {
          if (!pbar[i]) continue;
          size_t gi = carrier_index_.at(j->args[i].index);
          g[gi] = adj.accumulate(g[gi], *pbar[i]);
        }
      }
      return g;
    };
    const auto& preds = cfg_.preds(bid);
    if (preds.empty()) {
      // unreachable in the primal; never entered
      P.jump(rev[0], with_stacks(log, saved, gbar));
      return;
    }
    if (preds.size() == 1) {
      P.jump(rev[preds[0].index], with_stacks(log, saved, edge_carriers(preds[0])));
      return;
    }
    Attributes bt;
    bt.type = ValueType::boolean();
    ValueId came_from_first = P.emit(OpKind::Top, {log}, bt);
    log = P.emit(OpKind::Pop, {log});
    auto g0 = edge_carriers(preds[0]);
    auto g1 = edge_carriers(preds[1]);
    P.branch(came_from_first, rev[preds[0].index], with_stacks(log, saved, g0), rev[preds[1].index],
             with_stacks(log, saved, g1));
  }

  const ProgramModule& m_;
  const Function& g_;
  Cfg cfg_;
  AdOptions opts_;
  BlockId exit_;
  std::vector<ValueId> carriers_;
  std::unordered_map<uint32_t, size_t> carrier_index_;
};

}  // namespace

std::vector<ValueId> inline_function(FunctionBuilder& b, const ProgramModule& m,
                                     const Function& callee, std::span<const ValueId> args,
                                     bool keep_names) {
  if (args.size() != callee.params.size())
    throw IrError("inlining @" + callee.name + ": wrong argument count");
  std::vector<ValueId> vmap(callee.values.size());
  for (size_t i = 0; i < args.size(); ++i) vmap[callee.params[i].index] = args[i];
  Cfg cfg(callee);
  std::vector<BlockId> bmap(callee.blocks.size());
  for (uint32_t k = 0; k < callee.blocks.size(); ++k) {
    if (k == 0) {
      bmap[k] = b.current_block();
      continue;
    }
    if (!cfg.reachable(BlockId{k})) continue;
    std::vector<ValueType> ts;
    for (auto p : callee.blocks[k].params) ts.push_back(callee.type(p));
    bmap[k] = b.add_block(keep_names ? callee.blocks[k].name : std::string(), ts);
    for (size_t i = 0; i < ts.size(); ++i)
      vmap[callee.blocks[k].params[i].index] = b.block_param(bmap[k], i);
  }
  BlockId cont = b.add_block(keep_names ? "exit" : std::string(), callee.results);
  auto map_list = [&](const std::vector<ValueId>& vs) {
    std::vector<ValueId> out;
    for (auto v : vs) out.push_back(vmap[v.index]);
    return out;
  };
  for (auto bid : cfg.rpo()) {
    const Block& blk = callee.block(bid);
    b.set_block(bmap[bid.index]);
    for (const auto& inst : blk.body) {
      auto ops = map_list(inst.operands);
      if (inst.op == OpKind::Call) {
        auto r = inline_function(b, m, m.get(inst.attrs.callee), ops);
        vmap[inst.result.index] = r.at(0);
      } else {
        vmap[inst.result.index] =
            b.emit(inst.op, ops, inst.attrs, keep_names ? callee.value_name(inst.result) : "");
      }
    }
    if (!blk.terminator) throw IrError("inlining @" + callee.name + ": block without terminator");
    const Terminator& t = *blk.terminator;
    if (auto* r = std::get_if<ReturnTerm>(&t)) b.jump(cont, map_list(r->values));
    else if (auto* j = std::get_if<JumpTerm>(&t)) b.jump(bmap[j->target.index], map_list(j->args));
    else {
      const auto& br = std::get<BranchTerm>(t);
      b.branch(vmap[br.cond.index], bmap[br.then_target.index], map_list(br.then_args),
               bmap[br.else_target.index], map_list(br.else_args));
    }
  }
  b.set_block(cont);
  std::vector<ValueId> out;
  for (size_t i = 0; i < callee.results.size(); ++i) out.push_back(b.block_param(cont, i));
  return out;
}

Function inline_calls(const ProgramModule& m, const Function& f, std::string new_name) {
  FunctionBuilder B(&m, std::move(new_name), typed_params(f), f.results);
  std::vector<ValueId> params;
  for (size_t i = 0; i < f.params.size(); ++i) params.push_back(B.param(i));
  auto r = inline_function(B, m, f, params, true);
  B.ret(r);
  return B.finish();
}

AdjointProgram build_adjoint(const ProgramModule& m, std::string_view name, const AdOptions& opts) {
  const Function& f = m.get(name);
  Function g = inline_calls(m, f, f.name);
  split_branch_edges(g);
  limit_merge_preds(g);
  AdjointProgram ap;
  ap.module = m;
  ap.primal = f.name;
  ap.aug = f.name + "__aug";
  ap.pb = f.name + "__pb";
  AdjointBuilder builder(m, g, opts);
  ap.module.put(builder.build_aug(ap.aug));
  ap.module.put(builder.build_pb(ap.pb, ap.diff_params, ap.diff_results));
  return ap;
}

GradResult grad(const AdjointProgram& ap, std::span<const RuntimeValue> args,
                std::span<const RuntimeValue> seeds, int64_t step_limit) {
  if (seeds.size() != ap.diff_results.size())
    throw RuntimeError("expected " + std::to_string(ap.diff_results.size()) + " seeds, got " +
                       std::to_string(seeds.size()));
  auto fwd = eval_function(ap.module, ap.aug, args, step_limit);
  GradResult out;
  const size_t n = fwd.size() - 2;
  out.outputs.assign(fwd.begin(), fwd.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<RuntimeValue> pargs{fwd[n], fwd[n + 1]};
  for (size_t k = 0; k < seeds.size(); ++k) {
    const ValueType& want = ap.module.get(ap.primal).results[ap.diff_results[k]];
    if (!value_has_type(seeds[k], want))
      throw RuntimeError("seed " + std::to_string(k) + " should be " + want.str() + ", got " +
                         type_of(seeds[k]).str());
    pargs.push_back(seeds[k]);
  }
  auto cots = eval_function(ap.module, ap.pb, pargs, step_limit);
  const Function& f = ap.module.get(ap.primal);
  for (size_t k = 0; k < ap.diff_params.size(); ++k) {
    size_t i = ap.diff_params[k];
    out.cotangents.push_back({i, f.value_name(f.params[i]), cots[k]});
  }
  return out;
}

GradResult grad(const ProgramModule& m, std::string_view name, std::span<const RuntimeValue> args,
                std::span<const RuntimeValue> seeds, const AdOptions& opts) {
  return grad(build_adjoint(m, name, opts), args, seeds);
}

void add_gradient_function(AdjointProgram& ap, const std::string& name) {
  const Function& f = ap.module.get(ap.primal);
  const Function& pb = ap.module.get(ap.pb);
  auto params = typed_params(f);
  for (auto i : ap.diff_results) params.push_back({f.results[i], "seed" + std::to_string(i)});
  FunctionBuilder W(&ap.module, name, params, pb.results);
  std::vector<ValueId> xs;
  for (size_t i = 0; i < f.params.size(); ++i) xs.push_back(W.param(i));
  auto fwd = inline_function(W, ap.module, ap.module.get(ap.aug), xs);
  const size_t n = f.results.size();
  std::vector<ValueId> pargs{fwd[n], fwd[n + 1]};
  for (size_t k = 0; k < ap.diff_results.size(); ++k) pargs.push_back(W.param(f.params.size() + k));
  auto cots = inline_function(W, ap.module, pb, pargs);
  W.ret(cots);
  ap.module.put(W.finish());
}

GradResult grad_of_grad(const ProgramModule& m, std::string_view name,
                        std::span<const RuntimeValue> args, std::span<const RuntimeValue> seeds,
                        std::span<const RuntimeValue> outer_seeds) {
  auto ap = build_adjoint(m, name);
  const std::string gname = std::string(name) + "__grad";
  add_gradient_function(ap, gname);
  std::vector<RuntimeValue> wargs(args.begin(), args.end());
  wargs.insert(wargs.end(), seeds.begin(), seeds.end());
  return grad(ap.module, gname, wargs, outer_seeds);
}

double grad_of_grad(const ProgramModule& m, std::string_view name, double x) {
  const Function& f = m.get(name);
  if (f.params.size() != 1 || !f.type(f.params[0]).is_f64() || f.results.size() != 1 ||
      !f.results[0].is_f64())
    throw AdError("@" + f.name + " must map f64 to f64");
  std::vector<RuntimeValue> args{x}, seeds{1.0}, outer{1.0};
  return as_f64(grad_of_grad(m, name, args, seeds, outer).cotangents.at(0).value);
}

}  // namespace ssair
