#include "ssair/verify.hpp"

#include <functional>
#include <map>
#include <set>

#include "ssair/cfg.hpp"

namespace ssair {

std::string Diagnostic::str() const {
  std::string s = "@" + function;
  if (!block.empty()) s += " ^" + block;
  return s + ": " + message;
}

namespace {

struct DefSite {
  uint32_t block = UINT32_MAX;
  int position = -1;  // -1 for block parameters
};

class FunctionVerifier {
 public:
  FunctionVerifier(const Function& f, const ProgramModule& m) : f_(f), m_(m) {}

  std::vector<Diagnostic> run() {
    if (f_.blocks.empty()) {
      error(UINT32_MAX, "function has no blocks");
      return out_;
    }
    if (f_.blocks[0].params != f_.params)
      error(0, "entry block parameters must be the function parameters");
    collect_defs();
    Cfg cfg(f_);
    if (!cfg.preds(BlockId{0}).empty()) error(0, "entry block has predecessors");
    for (uint32_t b = 0; b < f_.blocks.size(); ++b) {
      if (!cfg.reachable(BlockId{b})) error(b, "unreachable block");
      check_block(b, cfg);
    }
    if (!cfg.reducible()) error(UINT32_MAX, "control flow is irreducible");
    return out_;
  }

 private:
  void error(uint32_t b, std::string msg) {
    std::string bn;
    if (b != UINT32_MAX) bn = f_.blocks[b].name.empty() ? std::to_string(b) : f_.blocks[b].name;
    out_.push_back({f_.name, bn, std::move(msg)});
  }

  std::string vname(ValueId v) const {
    if (v.index < f_.values.size() && !f_.values[v.index].name.empty())
      return "%" + f_.values[v.index].name;
    return "%" + std::to_string(v.index);
  }

  void define(ValueId v, DefSite site) {
    if (v.index >= f_.values.size()) {
      error(site.block, "value id out of range");
      return;
    }
    if (!defs_.emplace(v.index, site).second)
      error(site.block, "value " + vname(v) + " is defined more than once");
  }

  void collect_defs() {
    for (auto p : f_.params) define(p, {0, -1});
    for (uint32_t b = 0; b < f_.blocks.size(); ++b) {
      const auto& blk = f_.blocks[b];
      if (b != 0)
        for (auto p : blk.params) define(p, {b, -1});
      for (size_t i = 0; i < blk.body.size(); ++i)
        define(blk.body[i].result, {b, static_cast<int>(i)});
    }
  }

  const ValueType* type_of_value(ValueId v) const {
    if (v.index >= f_.values.size() || !f_.values[v.index].type) return nullptr;
    return &*f_.values[v.index].type;
  }

  // position: instruction index of the use; body.size() for the terminator
  bool check_use(ValueId v, uint32_t b, int position, const Cfg& cfg) {
    auto it = defs_.find(v.index);
    if (it == defs_.end()) {
      error(b, "use of undefined value " + vname(v));
      return false;
    }
    const DefSite& d = it->second;
    if (!cfg.reachable(BlockId{b})) return true;
    bool ok = d.block == b ? d.position < position : cfg.dominates(BlockId{d.block}, BlockId{b});
    if (!ok) error(b, "value " + vname(v) + " does not dominate its use");
    return ok;
  }

  void check_edge(uint32_t b, BlockId target, const std::vector<ValueId>& args) {
    if (target.index >= f_.blocks.size()) {
      error(b, "branch to a nonexistent block");
      return;
    }
    const auto& params = f_.blocks[target.index].params;
    const auto& tname = f_.blocks[target.index].name;
    std::string label = "^" + (tname.empty() ? std::to_string(target.index) : tname);
    if (args.size() != params.size()) {
      error(b, "edge to " + label + " passes " + std::to_string(args.size()) +
                   " arguments, block takes " + std::to_string(params.size()));
      return;
    }
    for (size_t i = 0; i < args.size(); ++i) {
      auto* at = type_of_value(args[i]);
      auto* pt = type_of_value(params[i]);
      if (at && pt && *at != *pt)
        error(b, "edge to " + label + " argument " + std::to_string(i) + " has type " + at->str() +
                     ", parameter expects " + pt->str());
    }
  }

  void check_block(uint32_t b, const Cfg& cfg) {
    const auto& blk = f_.blocks[b];
    for (auto p : blk.params)
      if (!type_of_value(p)) error(b, "parameter " + vname(p) + " has no type");
    for (size_t i = 0; i < blk.body.size(); ++i) {
      const auto& inst = blk.body[i];
      bool operands_ok = true;
      std::vector<ValueType> ts;
      for (auto v : inst.operands) {
        if (!check_use(v, b, static_cast<int>(i), cfg)) operands_ok = false;
        auto* t = type_of_value(v);
        if (!t) operands_ok = false;
        else ts.push_back(*t);
      }
      if (!operands_ok) continue;
      try {
        auto rt = infer_result_type(&m_, inst.op, ts, inst.attrs);
        auto* have = type_of_value(inst.result);
        if (!have) error(b, vname(inst.result) + " has no type");
        else if (*have != rt)
          error(b, vname(inst.result) + " has type " + have->str() + " but " +
                       std::string(op_name(inst.op)) + " produces " + rt.str());
      } catch (const IrError& e) {
        error(b, vname(inst.result) + " = " + e.what());
      }
    }
    if (!blk.terminator) {
      error(b, "block has no terminator");
      return;
    }
    const int tpos = static_cast<int>(blk.body.size());
    for_each_terminator_use(*blk.terminator, [&](ValueId v) { check_use(v, b, tpos, cfg); });
    std::visit(
        [&](const auto& t) {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, ReturnTerm>) {
            if (t.values.size() != f_.results.size()) {
              error(b, "returns " + std::to_string(t.values.size()) + " values, function declares " +
                           std::to_string(f_.results.size()));
              return;
            }
            for (size_t i = 0; i < t.values.size(); ++i) {
              auto* vt = type_of_value(t.values[i]);
              if (vt && *vt != f_.results[i])
                error(b, "return value " + std::to_string(i) + " has type " + vt->str() +
                             ", function declares " + f_.results[i].str());
            }
          } else if constexpr (std::is_same_v<T, JumpTerm>) {
            check_edge(b, t.target, t.args);
          } else {
            auto* ct = type_of_value(t.cond);
            if (ct && !ct->is_bool()) error(b, "branch condition must be bool, got " + ct->str());
            check_edge(b, t.then_target, t.then_args);
            check_edge(b, t.else_target, t.else_args);
          }
        },
        *blk.terminator);
  }

  const Function& f_;
  const ProgramModule& m_;
  std::map<uint32_t, DefSite> defs_;
  std::vector<Diagnostic> out_;
};

}  // namespace

std::vector<Diagnostic> verify_function(const Function& f, const ProgramModule& m) {
  return FunctionVerifier(f, m).run();
}

std::vector<Diagnostic> verify(const ProgramModule& m) {
  std::vector<Diagnostic> out;
  std::set<std::string> seen;
  for (const auto& f : m.functions) {
    if (!seen.insert(f.name).second) out.push_back({f.name, "", "duplicate function name"});
    auto d = verify_function(f, m);
    out.insert(out.end(), d.begin(), d.end());
  }

  // call graph must be acyclic
  std::map<std::string, std::vector<std::string>> calls;
  for (const auto& f : m.functions)
    for (const auto& b : f.blocks)
      for (const auto& i : b.body)
        if (!i.attrs.callee.empty() && m.find(i.attrs.callee)) calls[f.name].push_back(i.attrs.callee);
  std::map<std::string, int> state;  // 1 visiting, 2 done
  std::set<std::string> reported;
  std::function<void(const std::string&)> dfs = [&](const std::string& n) {
    state[n] = 1;
    for (const auto& c : calls[n]) {
      if (state[c] == 1) {
        if (reported.insert(c).second)
          out.push_back({c, "", "recursive call cycle through @" + n});
      } else if (state[c] == 0) {
        dfs(c);
      }
    }
    state[n] = 2;
  };
  for (const auto& f : m.functions)
    if (state[f.name] == 0) dfs(f.name);
  return out;
}

void verify_or_throw(const ProgramModule& m) {
  auto d = verify(m);
  if (!d.empty()) throw IrError("invalid IR: " + d.front().str());
}

}  // namespace ssair
