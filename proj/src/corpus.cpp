#include "ssair/corpus.hpp"

#include <algorithm>

namespace ssair {

namespace {

struct Pooled {
  ValueId id;
  double bound;  // |value| <= bound (elementwise for tensors)
};

class Generator {
 public:
  Generator(uint64_t seed, const CorpusOptions& o) : rng_(seed), o_(o) {}

  CorpusProgram run() {
    std::vector<std::pair<ValueType, std::string>> params;
    const int nx = uniform(1, 3);
    for (int i = 0; i < nx; ++i) params.push_back({ValueType::f64(), "x" + std::to_string(i)});
    if (coin(0.6) && o_.allow_tensors) {
      Shape s{uniform(1, std::min(4, o_.max_dim)), uniform(1, std::min(4, o_.max_dim))};
      if (coin(0.3)) s = {uniform(2, o_.max_dim)};
      params.push_back({ValueType::tensor(s), "t"});
    }
    has_n_ = coin(0.5);
    if (has_n_) params.push_back({ValueType::i64(), "n"});
    const bool tensor_result = coin(0.2);

    std::vector<ValueType> results{ValueType::f64()};
    FunctionBuilder b(&mod_, "prog", params, results);
    b_ = &b;
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& t = params[i].first;
      if (t.is_f64()) scalars_.push_back({b.param(i), 2.0});
      else if (t.is_tensor()) tensors_.push_back({b.param(i), 1.0});
      else n_param_ = b.param(i);
    }
    region(0, uniform(3, 6), o_.allow_tensors);

    // combine a few live values so most of the program matters
    ValueId acc = pick_scalar().id;
    for (int k = 0; k < 2 && scalars_.size() > 1; ++k) acc = b.emit(OpKind::Add, {acc, pick_scalar().id});
    if (!tensors_.empty()) {
      Attributes all;
      all.axis_all = true;
      acc = b.emit(OpKind::Add, {acc, b.emit(OpKind::ReduceSum, {pick_tensor().id}, all)});
    }
    if (tensor_result && !tensors_.empty()) {
      auto t = pick_tensor().id;
      b.function().results.push_back(b.type(t));
      b.ret({acc, t});
    } else {
      b.ret({acc});
    }
    mod_.add(b.finish());
    return {std::move(mod_), "prog"};
  }

 private:
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

  Pooled pick_scalar() { return scalars_[static_cast<size_t>(uniform(0, static_cast<int>(scalars_.size()) - 1))]; }
  Pooled pick_tensor() { return tensors_[static_cast<size_t>(uniform(0, static_cast<int>(tensors_.size()) - 1))]; }

  ValueId c64(double v) { return b_->constant(v); }

  Pooled squash(Pooled p) {
    if (p.bound <= 4.0) return p;
    return {b_->emit(OpKind::Tanh, {p.id}), 1.0};
  }
  Pooled unit(Pooled p) {
    if (p.bound <= 1.0) return p;
    return {b_->emit(OpKind::Tanh, {p.id}), 1.0};
  }

  void region(int depth, int statements, bool allow_tensors) {
    for (int s = 0; s < statements; ++s) {
      int kind = uniform(0, 9);
      if (kind <= 1 && depth < o_.max_depth && !scalar_only_) {
        if_stmt(depth, allow_tensors);
      } else if (kind == 2 && depth < o_.max_depth && !scalar_only_) {
        loop_stmt(depth, allow_tensors);
      } else if (kind == 3 && !scalar_only_ && helper_depth_ == 0) {
        call_stmt();
      } else if (kind >= 7 && allow_tensors && !scalar_only_) {
        tensor_stmt();
      } else {
        scalar_stmt();
      }
    }
  }

  void scalar_stmt() {
    Pooled a = pick_scalar(), c = pick_scalar();
    Pooled out;
    switch (uniform(0, 11)) {
      case 0: out = {b_->emit(OpKind::Add, {a.id, c.id}), a.bound + c.bound}; break;
      case 1: out = {b_->emit(OpKind::Sub, {a.id, c.id}), a.bound + c.bound}; break;
      case 2: out = {b_->emit(OpKind::Mul, {a.id, c.id}), a.bound * c.bound}; break;
      case 3: {
        auto sq = b_->emit(OpKind::Mul, {c.id, c.id});
        auto den = b_->emit(OpKind::Add, {c64(1.0), sq});
        out = {b_->emit(OpKind::Div, {a.id, den}), a.bound};
        break;
      }
      case 4: out = {b_->emit(OpKind::Tanh, {a.id}), 1.0}; break;
      case 5: out = {b_->emit(OpKind::Sigmoid, {a.id}), 1.0}; break;
      case 6: {
        auto t = b_->emit(OpKind::Tanh, {a.id});
        out = {b_->emit(OpKind::Exp, {t}), 2.8};
        break;
      }
      case 7: {
        auto sq = b_->emit(OpKind::Mul, {a.id, a.id});
        auto s = b_->emit(OpKind::Add, {c64(1.0), sq});
        out = {b_->emit(OpKind::Log, {s}), 1.0 + a.bound * a.bound};
        break;
      }
      case 8: {
        Attributes at;
        at.exponent = uniform(0, 3);
        Pooled u = unit(a);
        out = {b_->emit(OpKind::PowInt, {u.id}, at), 1.0};
        break;
      }
      case 9: out = {b_->emit(OpKind::Neg, {a.id}), a.bound}; break;
      case 10: {
        auto cond = b_->emit(coin(0.5) ? OpKind::Gt : OpKind::Lt, {a.id, c.id});
        out = {b_->emit(OpKind::Select, {cond, a.id, c.id}), std::max(a.bound, c.bound)};
        break;
      }
      default: {
        double k = std::round(real(-2.0, 2.0) * 4.0) / 4.0;
        out = {b_->emit(OpKind::Mul, {a.id, c64(k == 0.0 ? 0.5 : k)}), a.bound * 2.0};
        break;
      }
    }
    scalars_.push_back(squash(out));
  }

  ValueType scalar_or_tensor_type(const Pooled& p) const { return b_->type(p.id); }

  std::vector<Pooled> compatible_with(const Shape& s) {
    std::vector<Pooled> out;
    for (auto& t : tensors_) {
      const Shape& u = b_->type(t.id).shape;
      try {
        if (broadcast_shapes(s, u) == s) out.push_back(t);
      } catch (const ShapeError&) {
      }
    }
    return out;
  }

  Pooled make_tensor() {
    const int k = uniform(2, std::min(6, o_.max_dim));
    std::vector<ValueId> parts;
    double bound = 0.0;
    for (int i = 0; i < k; ++i) {
      auto p = pick_scalar();
      parts.push_back(p.id);
      bound = std::max(bound, p.bound);
    }
    Pooled v{b_->emit(OpKind::StackOp, parts), bound};
    if (coin(0.4) && k % 2 == 0) {
      Attributes at;
      at.type = ValueType::tensor({2, k / 2});
      v.id = b_->emit(OpKind::Reshape, {v.id}, at);
    }
    return v;
  }

  void tensor_stmt() {
    if (tensors_.empty() || coin(0.15)) {
      tensors_.push_back(make_tensor());
      return;
    }
    Pooled a = pick_tensor();
    const Shape sa = b_->type(a.id).shape;
    switch (uniform(0, 10)) {
      case 0:
      case 1: {
        auto cs = compatible_with(sa);
        Pooled c = cs[static_cast<size_t>(uniform(0, static_cast<int>(cs.size()) - 1))];
        static constexpr OpKind ops[] = {OpKind::Add, OpKind::Sub, OpKind::Mul};
        OpKind op = ops[uniform(0, 2)];
        double bound = op == OpKind::Mul ? a.bound * c.bound : a.bound + c.bound;
        tensors_.push_back(squash({b_->emit(op, {a.id, c.id}), bound}));
        break;
      }
      case 2: {
        static constexpr OpKind ops[] = {OpKind::Tanh, OpKind::Sigmoid, OpKind::Neg};
        OpKind op = ops[uniform(0, 2)];
        tensors_.push_back({b_->emit(op, {a.id}), op == OpKind::Neg ? a.bound : 1.0});
        break;
      }
      case 3: {
        if (sa.size() != 2) {
          tensors_.push_back(reshape_stmt(a));
          break;
        }
        // find a right operand with matching inner dimension, else use a^T
        ValueId rhs;
        double rb = a.bound;
        bool found = false;
        for (auto& t : tensors_) {
          const Shape& u = b_->type(t.id).shape;
          if (u.size() == 2 && u[0] == sa[1] && coin(0.5)) {
            rhs = t.id;
            rb = t.bound;
            found = true;
            break;
          }
        }
        if (!found) rhs = b_->emit(OpKind::Transpose, {a.id});
        tensors_.push_back(
            squash({b_->emit(OpKind::MatMul, {a.id, rhs}), static_cast<double>(sa[1]) * a.bound * rb}));
        break;
      }
      case 4:
        if (sa.size() == 2) tensors_.push_back({b_->emit(OpKind::Transpose, {a.id}), a.bound});
        else tensors_.push_back(reshape_stmt(a));
        break;
      case 5: {
        Attributes at;
        if (coin(0.5)) {
          at.axis_all = true;
          scalars_.push_back(squash({b_->emit(OpKind::ReduceSum, {a.id}, at),
                                     static_cast<double>(shape_numel(sa)) * a.bound}));
        } else {
          at.axis = uniform(0, static_cast<int>(sa.size()) - 1);
          auto r = b_->emit(OpKind::ReduceSum, {a.id}, at);
          Pooled p = squash({r, static_cast<double>(sa[static_cast<size_t>(*at.axis)]) * a.bound});
          if (b_->type(p.id).is_f64()) scalars_.push_back(p);
          else tensors_.push_back(p);
        }
        break;
      }
      case 6: {
        Attributes at;
        at.index = uniform(0, static_cast<int>(sa[0]) - 1);
        auto r = b_->emit(OpKind::Unstack, {a.id}, at);
        if (b_->type(r).is_f64()) scalars_.push_back({r, a.bound});
        else tensors_.push_back({r, a.bound});
        break;
      }
      case 7:
      case 8: {
        const int arity = uniform(1, 2);
        std::vector<ValueId> ops{a.id};
        double bound = a.bound;
        if (arity == 2) {
          auto cs = compatible_with(sa);
          auto c = cs[static_cast<size_t>(uniform(0, static_cast<int>(cs.size()) - 1))];
          ops.push_back(c.id);
          bound = std::max(bound, c.bound);
        }
        Attributes at;
        at.callee = scalar_function(arity, bound);
        tensors_.push_back(squash({b_->emit(OpKind::FusedMap, ops, at), 4.0}));
        break;
      }
      case 9: {
        auto cs = compatible_with(sa);
        auto c = cs[static_cast<size_t>(uniform(0, static_cast<int>(cs.size()) - 1))];
        auto cond = b_->emit(OpKind::Gt, {a.id, c.id});
        tensors_.push_back({b_->emit(OpKind::Select, {cond, a.id, c.id}), std::max(a.bound, c.bound)});
        break;
      }
      default: {
        std::vector<double> d;
        for (int64_t i = 0; i < shape_numel(sa); ++i) d.push_back(std::round(real(-1, 1) * 8.0) / 8.0);
        auto k = b_->constant(DenseTensor(sa, d));
        tensors_.push_back(squash({b_->emit(OpKind::Mul, {a.id, k}), a.bound}));
        break;
      }
    }
  }

  Pooled reshape_stmt(Pooled a) {
    const Shape sa = b_->type(a.id).shape;
    Attributes at;
    if (sa.size() == 2) at.type = ValueType::tensor({sa[0] * sa[1]});
    else at.type = ValueType::tensor(coin(0.5) ? Shape{1, sa[0]} : Shape{sa[0], 1});
    return {b_->emit(OpKind::Reshape, {a.id}, at), a.bound};
  }

  struct Scope {
    size_t scalars, tensors;
  };
  Scope enter() { return {scalars_.size(), tensors_.size()}; }
  void leave(Scope s) {
    scalars_.resize(s.scalars);
    tensors_.resize(s.tensors);
  }

  void if_stmt(int depth, bool allow_tensors) {
    Pooled a = pick_scalar(), c = pick_scalar();
    auto cond = b_->emit(coin(0.5) ? OpKind::Gt : OpKind::Lt, {a.id, c.id});
    const bool with_tensor = allow_tensors && !tensors_.empty() && coin(0.4);
    std::vector<ValueType> jt{ValueType::f64()};
    ValueType tt;
    if (with_tensor) {
      tt = b_->type(pick_tensor().id);
      jt.push_back(tt);
    }
    auto then_b = b_->add_block("");
    auto else_b = b_->add_block("");
    auto join = b_->add_block("", jt);
    b_->branch(cond, then_b, {}, else_b, {});
    double bound = 0.0;
    for (auto arm : {then_b, else_b}) {
      b_->set_block(arm);
      auto sc = enter();
      region(depth + 1, uniform(1, 3), allow_tensors);
      Pooled s = pick_scalar();
      std::vector<ValueId> args{s.id};
      bound = std::max(bound, s.bound);
      if (with_tensor) {
        auto p = tensor_of_type(tt);
        args.push_back(p.id);
        bound = std::max(bound, p.bound);
      }
      b_->jump(join, args);
      leave(sc);
    }
    b_->set_block(join);
    scalars_.push_back({b_->block_param(join, 0), bound});
    if (with_tensor) tensors_.push_back({b_->block_param(join, 1), bound});
  }

  Pooled tensor_of_type(const ValueType& t) {
    std::vector<Pooled> same;
    for (auto& p : tensors_)
      if (b_->type(p.id) == t) same.push_back(p);
    return same[static_cast<size_t>(uniform(0, static_cast<int>(same.size()) - 1))];
  }

  void loop_stmt(int depth, bool allow_tensors) {
    // carried: 1-2 scalars, maybe one tensor, then the counter
    std::vector<Pooled> init;
    const int ns = uniform(1, 2);
    for (int i = 0; i < ns; ++i) init.push_back(unit(pick_scalar()));
    std::optional<ValueType> tt;
    if (allow_tensors && !tensors_.empty() && coin(0.4)) {
      auto t = unit(pick_tensor());
      tt = b_->type(t.id);
      init.push_back(t);
    }
    ValueId bound_v;
    if (has_n_ && coin(0.6)) bound_v = n_param_;
    else bound_v = b_->constant(static_cast<int64_t>(uniform(0, o_.max_trips)));
    std::vector<ValueType> ht;
    std::vector<ValueId> args;
    for (auto& p : init) {
      ht.push_back(b_->type(p.id));
      args.push_back(p.id);
    }
    ht.push_back(ValueType::i64());
    args.push_back(b_->constant(int64_t{0}));
    auto head = b_->add_block("", ht);
    auto body = b_->add_block("");
    auto exit = b_->add_block("");
    b_->jump(head, args);
    b_->set_block(head);
    const size_t nc = init.size();
    ValueId counter = b_->block_param(head, nc);
    b_->branch(b_->emit(OpKind::Lt, {counter, bound_v}), body, {}, exit, {});

    b_->set_block(body);
    auto sc = enter();
    for (size_t i = 0; i < nc; ++i) {
      Pooled p{b_->block_param(head, i), 1.0};
      if (b_->type(p.id).is_f64()) scalars_.push_back(p);
      else tensors_.push_back(p);
    }
    region(depth + 1, uniform(1, 4), allow_tensors);
    std::vector<ValueId> next;
    for (size_t i = 0; i < nc; ++i) {
      const ValueType t = b_->type(b_->block_param(head, i));
      Pooled p = t.is_f64() ? pick_scalar() : tensor_of_type(t);
      next.push_back(unit(p).id);
    }
    next.push_back(b_->emit(OpKind::Add, {counter, b_->constant(int64_t{1})}));
    b_->jump(head, next);
    leave(sc);

    b_->set_block(exit);
    for (size_t i = 0; i < nc; ++i) {
      Pooled p{b_->block_param(head, i), 1.0};
      if (b_->type(p.id).is_f64()) scalars_.push_back(p);
      else tensors_.push_back(p);
    }
  }

  void call_stmt() {
    Pooled a = pick_scalar(), c = pick_scalar();
    Attributes at;
    at.callee = helper_function();
    scalars_.push_back(squash({b_->emit(OpKind::Call, {a.id, c.id}, at), 4.0}));
  }

  // Scalar-only function with `arity` f64 params; may contain an if.
  std::string scalar_function(int arity, double arg_bound) {
    std::string name = "map" + std::to_string(sub_count_++);
    build_scalar_function(name, arity, arg_bound, /*allow_if=*/true);
    return name;
  }

  std::string helper_function() {
    std::string name = "helper" + std::to_string(helper_count_++);
    build_scalar_function(name, 2, 2.0, true);
    return name;
  }

  void build_scalar_function(const std::string& name, int arity, double arg_bound, bool allow_if) {
    // save outer state
    auto* outer_b = b_;
    auto outer_s = std::move(scalars_);
    auto outer_t = std::move(tensors_);
    bool outer_scalar_only = scalar_only_;
    ++helper_depth_;

    std::vector<std::pair<ValueType, std::string>> ps;
    for (int i = 0; i < arity; ++i) ps.push_back({ValueType::f64(), std::string(1, static_cast<char>('a' + i))});
    FunctionBuilder fb(&mod_, name, ps, {ValueType::f64()});
    b_ = &fb;
    scalars_.clear();
    tensors_.clear();
    for (int i = 0; i < arity; ++i) scalars_.push_back({fb.param(static_cast<size_t>(i)), arg_bound});
    scalar_only_ = true;
    const int n = uniform(1, 4);
    for (int s = 0; s < n; ++s) scalar_stmt();
    if (allow_if && coin(0.4)) {
      Pooled a = pick_scalar(), c = pick_scalar();
      auto cond = fb.emit(OpKind::Gt, {a.id, c.id});
      auto t = fb.add_block(""), e = fb.add_block(""), j = fb.add_block("", {ValueType::f64()});
      fb.branch(cond, t, {}, e, {});
      double bound = 0;
      for (auto arm : {t, e}) {
        fb.set_block(arm);
        auto sc = enter();
        scalar_stmt();
        auto p = pick_scalar();
        bound = std::max(bound, p.bound);
        fb.jump(j, {p.id});
        leave(sc);
      }
      fb.set_block(j);
      scalars_.push_back({fb.block_param(j, 0), bound});
    }
    auto r = squash(scalars_.back());
    fb.ret({r.id});
    mod_.add(fb.finish());

    --helper_depth_;
    scalar_only_ = outer_scalar_only;
    b_ = outer_b;
    scalars_ = std::move(outer_s);
    tensors_ = std::move(outer_t);
  }

  std::mt19937_64 rng_;
  CorpusOptions o_;
  ProgramModule mod_;
  FunctionBuilder* b_ = nullptr;
  std::vector<Pooled> scalars_, tensors_;
  bool has_n_ = false;
  ValueId n_param_;
  bool scalar_only_ = false;
  int helper_depth_ = 0;
  int sub_count_ = 0, helper_count_ = 0;
};

}  // namespace

CorpusProgram generate_program(uint64_t seed, const CorpusOptions& opts) {
  return Generator(seed, opts).run();
}

std::vector<RuntimeValue> random_args(const Function& f, std::mt19937_64& rng) {
  std::vector<RuntimeValue> out;
  std::uniform_real_distribution<double> u2(-2.0, 2.0), u1(-1.0, 1.0);
  for (auto p : f.params) {
    const ValueType& t = f.type(p);
    switch (t.kind) {
      case TypeKind::F64: out.push_back(u2(rng)); break;
      case TypeKind::Bool: out.push_back(std::bernoulli_distribution(0.5)(rng)); break;
      case TypeKind::I64: out.push_back(static_cast<int64_t>(std::uniform_int_distribution<int>(0, 8)(rng))); break;
      case TypeKind::Tensor: {
        std::vector<double> d(static_cast<size_t>(shape_numel(t.shape)));
        for (auto& x : d) x = u1(rng);
        out.push_back(DenseTensor(t.shape, std::move(d)));
        break;
      }
      default: throw RuntimeError("random_args: unsupported parameter type " + t.str());
    }
  }
  return out;
}

}  // namespace ssair
