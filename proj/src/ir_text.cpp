#include "ssair/ir_text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ssair/format.hpp"

namespace ssair {

namespace {

// ---------------------------------------------------------------- lexer

enum class Tok { End, Word, Number, Local, Label, Global, Punct, Arrow };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1, col = 1;
};

bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_space();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= src_.size()) return t;
    char c = src_[pos_];
    if (c == '%' || c == '^' || c == '@') {
      advance();
      t.kind = c == '%' ? Tok::Local : c == '^' ? Tok::Label : Tok::Global;
      t.text = read_while(ident_char);
      return t;
    }
    if (c == '-' && peek(1) == '>') {
      advance();
      advance();
      t.kind = Tok::Arrow;
      t.text = "->";
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        ((c == '-' || c == '+') && (std::isdigit(static_cast<unsigned char>(peek(1))) ||
                                    peek(1) == '.' || peek(1) == 'i' || peek(1) == 'n'))) {
      t.kind = Tok::Number;
      if (c == '-' || c == '+') {
        t.text += c;
        advance();
      }
      t.text += read_number();
      // dims like 2x3xf64 lex as one word
      if (pos_ < src_.size() && ident_char(src_[pos_])) {
        t.kind = Tok::Word;
        t.text += read_while(ident_char);
      }
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      t.kind = Tok::Word;
      t.text = read_while(ident_char);
      return t;
    }
    advance();
    t.kind = Tok::Punct;
    t.text = std::string(1, c);
    return t;
  }

 private:
  char peek(size_t k) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_space() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) advance();
      else if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else break;
    }
  }
  template <class Pred>
  std::string read_while(Pred p) {
    std::string s;
    while (pos_ < src_.size() && p(src_[pos_])) {
      s += src_[pos_];
      advance();
    }
    return s;
  }
  std::string read_number() {
    if (peek(0) == 'i' || peek(0) == 'n') return read_while(ident_char);
    std::string s;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      bool exp_sign = (c == '+' || c == '-') && !s.empty() && (s.back() == 'e' || s.back() == 'E');
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' ||
          exp_sign) {
        // 'e' only counts as exponent when followed by a digit or sign
        if ((c == 'e' || c == 'E') && !(std::isdigit(static_cast<unsigned char>(peek(1))) ||
                                        peek(1) == '+' || peek(1) == '-'))
          break;
        s += c;
        advance();
      } else break;
    }
    return s;
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

// ---------------------------------------------------------------- parser

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) { tok_ = lex_.next(); }

  ProgramModule parse_module() {
    ProgramModule m;
    if (!is_word("func")) fail("expected 'func'");
    while (is_word("func")) {
      auto f = parse_function();
      if (m.find(f.name)) fail_at(fn_line_, fn_col_, "duplicate function name @" + f.name);
      m.functions.push_back(std::move(f));
    }
    if (tok_.kind != Tok::End) fail("expected 'func'");
    for (auto& f : m.functions) infer_types(f, m);
    return m;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) {
    std::string got = tok_.kind == Tok::End ? "end of input" : "'" + prefix() + tok_.text + "'";
    throw ParseError(tok_.line, tok_.col, msg + ", got " + got);
  }
  [[noreturn]] void fail_at(int line, int col, const std::string& msg) {
    throw ParseError(line, col, msg);
  }
  std::string prefix() const {
    switch (tok_.kind) {
      case Tok::Local: return "%";
      case Tok::Label: return "^";
      case Tok::Global: return "@";
      default: return "";
    }
  }
  bool is_word(std::string_view w) const { return tok_.kind == Tok::Word && tok_.text == w; }
  bool is_punct(char c) const { return tok_.kind == Tok::Punct && tok_.text[0] == c; }
  Token take() {
    Token t = tok_;
    tok_ = lex_.next();
    return t;
  }
  void expect_punct(char c) {
    if (!is_punct(c)) fail(std::string("expected '") + c + "'");
    take();
  }
  void expect_word(std::string_view w) {
    if (!is_word(w)) fail("expected '" + std::string(w) + "'");
    take();
  }
  Token expect(Tok k, const char* what) {
    if (tok_.kind != k) fail(std::string("expected ") + what);
    return take();
  }

  int64_t parse_int() {
    auto t = expect(Tok::Number, "integer");
    int64_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size())
      fail_at(t.line, t.col, "invalid integer '" + t.text + "'");
    return v;
  }

  double parse_double() {
    if (tok_.kind == Tok::Word && (tok_.text == "inf" || tok_.text == "nan")) {
      auto t = take();
      return t.text == "inf" ? std::numeric_limits<double>::infinity()
                             : std::numeric_limits<double>::quiet_NaN();
    }
    auto t = expect(Tok::Number, "number");
    std::string s = t.text;
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
      neg = s[0] == '-';
      s.erase(0, 1);
    }
    double v = 0;
    if (s == "inf") v = std::numeric_limits<double>::infinity();
    else if (s == "nan") v = std::numeric_limits<double>::quiet_NaN();
    else {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        fail_at(t.line, t.col, "invalid number '" + t.text + "'");
    }
    return neg ? -v : v;
  }

  ValueType parse_type() {
    if (tok_.kind != Tok::Word) fail("expected type");
    auto t = take();
    if (t.text == "f64") return ValueType::f64();
    if (t.text == "bool") return ValueType::boolean();
    if (t.text == "i64") return ValueType::i64();
    if (t.text == "stack") return ValueType::stack();
    if (t.text == "lanestack") {
      expect_punct('<');
      auto b = parse_int();
      expect_punct('>');
      if (b < 1) fail_at(t.line, t.col, "lanestack needs at least one lane");
      return ValueType::lane_stack(b);
    }
    if (t.text == "tensor") {
      expect_punct('<');
      if (tok_.kind != Tok::Word) fail("expected tensor dimensions like 2x3xf64");
      auto d = take();
      // "2x3xf64" -> ["2","3","f64"]
      std::vector<std::string> parts;
      std::string cur;
      for (char c : d.text) {
        if (c == 'x') {
          parts.push_back(cur);
          cur.clear();
        } else cur += c;
      }
      parts.push_back(cur);
      if (parts.size() < 2 || parts.back() != "f64")
        fail_at(d.line, d.col, "unknown type literal 'tensor<" + d.text + ">'");
      Shape s;
      for (size_t i = 0; i + 1 < parts.size(); ++i) {
        int64_t v = 0;
        auto [p, ec] = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), v);
        if (ec != std::errc() || p != parts[i].data() + parts[i].size() || v < 1)
          fail_at(d.line, d.col, "invalid tensor extent '" + parts[i] + "'");
        s.push_back(v);
      }
      expect_punct('>');
      return ValueType::tensor(std::move(s));
    }
    fail_at(t.line, t.col, "unknown type literal '" + t.text + "'");
  }

  RuntimeValue parse_literal(const ValueType& t) {
    switch (t.kind) {
      case TypeKind::F64: return parse_double();
      case TypeKind::I64: return parse_int();
      case TypeKind::Bool:
        if (is_word("true")) {
          take();
          return true;
        }
        expect_word("false");
        return false;
      case TypeKind::Tensor: {
        auto open = tok_;
        expect_punct('[');
        std::vector<double> data;
        if (!is_punct(']')) {
          data.push_back(parse_double());
          while (is_punct(',')) {
            take();
            data.push_back(parse_double());
          }
        }
        expect_punct(']');
        if (static_cast<int64_t>(data.size()) != shape_numel(t.shape))
          fail_at(open.line, open.col,
                  "tensor literal has " + std::to_string(data.size()) + " elements, type " +
                      t.str() + " needs " + std::to_string(shape_numel(t.shape)));
        return DenseTensor(t.shape, std::move(data));
      }
      default: fail("constants of type " + t.str() + " are not supported");
    }
  }

  ValueId define(Function& f, const Token& name, std::optional<ValueType> type) {
    bool numeric = !name.text.empty() &&
                   std::all_of(name.text.begin(), name.text.end(),
                               [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    if (names_.count(name.text)) fail_at(name.line, name.col, "redefinition of %" + name.text);
    auto v = f.new_value(std::move(type), numeric ? std::string() : name.text);
    names_[name.text] = v;
    return v;
  }

  // Operand slots live inside vectors that may still grow, so uses are
  // recorded against (block, instruction, operand) coordinates instead.
  struct UseRef {
    std::string name;
    int line, col;
    size_t block;
    int inst;  // -1: terminator
    int slot;  // operand index; for terminators see term_slot
  };

  std::vector<ValueId> parse_operand_list(std::vector<Token>& toks) {
    std::vector<ValueId> out;
    if (tok_.kind != Tok::Local) return out;
    toks.push_back(take());
    out.push_back({});
    while (is_punct(',') ) {
      take();
      toks.push_back(expect(Tok::Local, "operand"));
      out.push_back({});
    }
    return out;
  }

  std::vector<Token> parse_args() {
    std::vector<Token> toks;
    if (!is_punct('(')) return toks;
    take();
    if (!is_punct(')')) {
      toks.push_back(expect(Tok::Local, "value"));
      while (is_punct(',')) {
        take();
        toks.push_back(expect(Tok::Local, "value"));
      }
    }
    expect_punct(')');
    return toks;
  }

  void parse_attrs(Attributes& a, OpKind op, const Token& at) {
    if (!is_punct('{')) return;
    take();
    while (!is_punct('}')) {
      auto key = expect(Tok::Word, "attribute name");
      expect_punct('=');
      if (key.text == "axis") {
        if (is_word("all")) {
          take();
          a.axis_all = true;
        } else {
          a.axis = parse_int();
        }
      } else if (key.text == "index") {
        a.index = parse_int();
      } else if (key.text == "n") {
        a.exponent = parse_int();
      } else if (key.text == "lanes") {
        a.lanes = parse_int();
      } else if (key.text == "to" || key.text == "type") {
        a.type = parse_type();
      } else {
        fail_at(key.line, key.col,
                "unknown attribute '" + key.text + "' for " + std::string(op_name(op)));
      }
      if (is_punct(',')) take();
      else if (!is_punct('}')) fail("expected ',' or '}'");
    }
    take();
    (void)at;
  }

  Function parse_function() {
    fn_line_ = tok_.line;
    fn_col_ = tok_.col;
    expect_word("func");
    Function f;
    f.name = expect(Tok::Global, "function name").text;
    names_.clear();

    expect_punct('(');
    if (!is_punct(')')) {
      do {
        if (is_punct(',')) take();
        auto n = expect(Tok::Local, "parameter");
        expect_punct(':');
        auto t = parse_type();
        f.params.push_back(define(f, n, t));
      } while (is_punct(','));
    }
    expect_punct(')');
    if (tok_.kind != Tok::Arrow) fail("expected '->'");
    take();
    if (is_punct('(')) {
      take();
      if (!is_punct(')')) {
        f.results.push_back(parse_type());
        while (is_punct(',')) {
          take();
          f.results.push_back(parse_type());
        }
      }
      expect_punct(')');
    } else {
      f.results.push_back(parse_type());
      while (is_punct(',')) {
        take();
        f.results.push_back(parse_type());
      }
    }
    expect_punct('{');

    std::map<std::string, uint32_t> labels;
    struct LabelUse {
      Token tok;
      size_t block;
      int which;  // 0 jump/then, 1 else
    };
    std::vector<LabelUse> label_uses;
    std::vector<UseRef> refs;

    if (tok_.kind != Tok::Label) fail("expected block label");
    while (tok_.kind == Tok::Label) {
      auto lbl = take();
      const size_t bi = f.blocks.size();
      bool numeric = std::all_of(lbl.text.begin(), lbl.text.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c));
      });
      if (labels.count(lbl.text)) fail_at(lbl.line, lbl.col, "duplicate block label ^" + lbl.text);
      labels[lbl.text] = static_cast<uint32_t>(bi);
      f.blocks.push_back(Block{numeric ? std::string() : lbl.text, {}, {}, std::nullopt});
      if (is_punct('(')) {
        if (bi == 0) fail("entry block parameters are implicit (the function parameters)");
        take();
        do {
          if (is_punct(',')) take();
          auto n = expect(Tok::Local, "block parameter");
          expect_punct(':');
          auto t = parse_type();
          auto v = define(f, n, t);
          f.blocks[bi].params.push_back(v);
        } while (is_punct(','));
        expect_punct(')');
      }
      if (bi == 0) f.blocks[0].params = f.params;
      expect_punct(':');

      // instructions
      while (tok_.kind == Tok::Local) {
        auto res = take();
        expect_punct('=');
        if (tok_.kind != Tok::Word) fail("expected op name");
        auto opt = take();
        auto op = op_from_name(opt.text);
        if (!op) fail_at(opt.line, opt.col, "unknown op '" + opt.text + "'");
        Instruction inst;
        inst.op = *op;
        if (*op == OpKind::Const) {
          auto t = parse_type();
          inst.attrs.type = t;
          inst.attrs.literal = parse_literal(t);
        } else {
          if (tok_.kind == Tok::Global) inst.attrs.callee = take().text;
          std::vector<Token> toks;
          // nullary ops: the next line's result name is not an operand
          if (tok_.line == opt.line) inst.operands = parse_operand_list(toks);
          for (size_t i = 0; i < toks.size(); ++i)
            refs.push_back({toks[i].text, toks[i].line, toks[i].col, bi,
                            static_cast<int>(f.blocks[bi].body.size()), static_cast<int>(i)});
          parse_attrs(inst.attrs, *op, opt);
        }
        inst.result = define(f, res, std::nullopt);
        f.blocks[bi].body.push_back(std::move(inst));
      }

      // terminator
      if (is_word("ret")) {
        take();
        std::vector<Token> toks;
        ReturnTerm r;
        r.values = parse_operand_list(toks);
        for (size_t i = 0; i < toks.size(); ++i)
          refs.push_back({toks[i].text, toks[i].line, toks[i].col, bi, -1, static_cast<int>(i)});
        f.blocks[bi].terminator = r;
      } else if (is_word("jmp")) {
        take();
        auto tl = expect(Tok::Label, "block label");
        label_uses.push_back({tl, bi, 0});
        auto args = parse_args();
        JumpTerm j;
        j.args.resize(args.size());
        for (size_t i = 0; i < args.size(); ++i)
          refs.push_back({args[i].text, args[i].line, args[i].col, bi, -1, static_cast<int>(i)});
        f.blocks[bi].terminator = j;
      } else if (is_word("br")) {
        take();
        auto c = expect(Tok::Local, "branch condition");
        refs.push_back({c.text, c.line, c.col, bi, -1, -1});
        expect_punct(',');
        auto tl = expect(Tok::Label, "block label");
        label_uses.push_back({tl, bi, 0});
        auto targs = parse_args();
        expect_punct(',');
        auto el = expect(Tok::Label, "block label");
        label_uses.push_back({el, bi, 1});
        auto eargs = parse_args();
        BranchTerm b;
        b.then_args.resize(targs.size());
        b.else_args.resize(eargs.size());
        for (size_t i = 0; i < targs.size(); ++i)
          refs.push_back({targs[i].text, targs[i].line, targs[i].col, bi, -1,
                          static_cast<int>(i)});
        for (size_t i = 0; i < eargs.size(); ++i)
          refs.push_back({eargs[i].text, eargs[i].line, eargs[i].col, bi, -1,
                          static_cast<int>(1000000 + i)});
        f.blocks[bi].terminator = b;
      } else if (tok_.kind == Tok::Label || is_punct('}')) {
        // missing terminator: structurally representable, reported by verify
      } else {
        fail("expected instruction or terminator");
      }
    }
    expect_punct('}');

    for (auto& lu : label_uses) {
      auto it = labels.find(lu.tok.text);
      if (it == labels.end()) fail_at(lu.tok.line, lu.tok.col, "unknown block ^" + lu.tok.text);
      auto& t = *f.blocks[lu.block].terminator;
      if (auto* j = std::get_if<JumpTerm>(&t)) j->target = BlockId{it->second};
      else if (auto* b = std::get_if<BranchTerm>(&t)) {
        if (lu.which == 0) b->then_target = BlockId{it->second};
        else b->else_target = BlockId{it->second};
      }
    }
    for (auto& r : refs) {
      auto it = names_.find(r.name);
      if (it == names_.end()) fail_at(r.line, r.col, "use of undefined value %" + r.name);
      ValueId v = it->second;
      auto& blk = f.blocks[r.block];
      if (r.inst >= 0) {
        blk.body[static_cast<size_t>(r.inst)].operands[static_cast<size_t>(r.slot)] = v;
        continue;
      }
      auto& t = *blk.terminator;
      if (auto* rt = std::get_if<ReturnTerm>(&t)) rt->values[static_cast<size_t>(r.slot)] = v;
      else if (auto* j = std::get_if<JumpTerm>(&t)) j->args[static_cast<size_t>(r.slot)] = v;
      else if (auto* b = std::get_if<BranchTerm>(&t)) {
        if (r.slot == -1) b->cond = v;
        else if (r.slot >= 1000000) b->else_args[static_cast<size_t>(r.slot - 1000000)] = v;
        else b->then_args[static_cast<size_t>(r.slot)] = v;
      }
    }
    return f;
  }

  Lexer lex_;
  Token tok_;
  std::unordered_map<std::string, ValueId> names_;
  int fn_line_ = 1, fn_col_ = 1;
};

// ---------------------------------------------------------------- printer

std::string literal_str(const RuntimeValue& v) {
  if (auto* t = std::get_if<DenseTensor>(&v)) {
    std::string s = "[";
    for (int64_t i = 0; i < t->numel(); ++i) s += (i ? ", " : "") + format_double((*t)[i]);
    return s + "]";
  }
  if (auto* d = std::get_if<double>(&v)) return format_double(*d);
  if (auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (auto* i = std::get_if<int64_t>(&v)) return std::to_string(*i);
  return "?";
}

class Printer {
 public:
  explicit Printer(const Function& f) : f_(f) {
    std::map<std::string, int> counts;
    for (auto& v : f.values)
      if (!v.name.empty()) ++counts[v.name];
    // definition order: block params then results, block by block
    uint32_t next = 0;
    auto assign = [&](ValueId v) {
      if (v.index >= f.values.size() || names_.count(v.index)) return;
      const auto& n = f.values[v.index].name;
      if (!n.empty() && counts[n] == 1) names_[v.index] = n;
      else names_[v.index] = std::to_string(next);
      ++next;
    };
    for (auto p : f.params) assign(p);
    for (auto& b : f.blocks) {
      for (auto p : b.params) assign(p);
      for (auto& i : b.body) assign(i.result);
    }
    std::map<std::string, int> bcounts;
    for (auto& b : f.blocks)
      if (!b.name.empty()) ++bcounts[b.name];
    for (size_t i = 0; i < f.blocks.size(); ++i) {
      const auto& n = f.blocks[i].name;
      labels_.push_back(!n.empty() && bcounts[n] == 1 ? n : std::to_string(i));
    }
  }

  std::string v(ValueId id) const {
    auto it = names_.find(id.index);
    return "%" + (it != names_.end() ? it->second : "undef" + std::to_string(id.index));
  }
  std::string lbl(BlockId b) const {
    return "^" + (b.index < labels_.size() ? labels_[b.index] : "undef" + std::to_string(b.index));
  }
  std::string vlist(const std::vector<ValueId>& vs) const {
    std::string s;
    for (size_t i = 0; i < vs.size(); ++i) s += (i ? ", " : "") + v(vs[i]);
    return s;
  }
  std::string args(const std::vector<ValueId>& vs) const {
    return vs.empty() ? "" : "(" + vlist(vs) + ")";
  }
  std::string typed(ValueId id) const {
    const auto& t = f_.values.at(id.index).type;
    return v(id) + ": " + (t ? t->str() : "?");
  }

  std::string print() const {
    std::ostringstream os;
    os << "func @" << f_.name << "(";
    for (size_t i = 0; i < f_.params.size(); ++i) os << (i ? ", " : "") << typed(f_.params[i]);
    os << ") -> ";
    if (f_.results.size() == 1) os << f_.results[0].str();
    else {
      os << "(";
      for (size_t i = 0; i < f_.results.size(); ++i) os << (i ? ", " : "") << f_.results[i].str();
      os << ")";
    }
    os << " {\n";
    for (size_t bi = 0; bi < f_.blocks.size(); ++bi) {
      const auto& b = f_.blocks[bi];
      os << lbl(BlockId{static_cast<uint32_t>(bi)});
      if (bi != 0 && !b.params.empty()) {
        os << "(";
        for (size_t i = 0; i < b.params.size(); ++i) os << (i ? ", " : "") << typed(b.params[i]);
        os << ")";
      }
      os << ":\n";
      for (auto& inst : b.body) os << "  " << instruction(inst) << "\n";
      if (b.terminator) os << "  " << terminator(*b.terminator) << "\n";
    }
    os << "}\n";
    return os.str();
  }

  std::string instruction(const Instruction& i) const {
    std::string s = v(i.result) + " = " + std::string(op_name(i.op));
    if (i.op == OpKind::Const) {
      s += " " + (i.attrs.type ? i.attrs.type->str() : "?");
      s += " " + (i.attrs.literal ? literal_str(*i.attrs.literal) : "?");
      return s;
    }
    if (!i.attrs.callee.empty()) s += " @" + i.attrs.callee;
    if (!i.operands.empty()) s += " " + vlist(i.operands);
    std::vector<std::string> at;
    if (i.attrs.axis_all) at.push_back("axis = all");
    else if (i.attrs.axis) at.push_back("axis = " + std::to_string(*i.attrs.axis));
    if (i.attrs.index) at.push_back("index = " + std::to_string(*i.attrs.index));
    if (i.attrs.exponent) at.push_back("n = " + std::to_string(*i.attrs.exponent));
    if (i.attrs.lanes) at.push_back("lanes = " + std::to_string(*i.attrs.lanes));
    if (i.attrs.type) at.push_back((i.op == OpKind::Reshape ? "to = " : "type = ") + i.attrs.type->str());
    if (!at.empty()) {
      s += " {";
      for (size_t k = 0; k < at.size(); ++k) s += (k ? ", " : "") + at[k];
      s += "}";
    }
    return s;
  }

  std::string terminator(const Terminator& t) const {
    if (auto* r = std::get_if<ReturnTerm>(&t))
      return r->values.empty() ? "ret" : "ret " + vlist(r->values);
    if (auto* j = std::get_if<JumpTerm>(&t)) return "jmp " + lbl(j->target) + args(j->args);
    const auto& b = std::get<BranchTerm>(t);
    return "br " + v(b.cond) + ", " + lbl(b.then_target) + args(b.then_args) + ", " +
           lbl(b.else_target) + args(b.else_args);
  }

 private:
  const Function& f_;
  std::unordered_map<uint32_t, std::string> names_;
  std::vector<std::string> labels_;
};

// ---------------------------------------------------------------- equivalence

std::unordered_map<uint32_t, int64_t> canonical_ids(const Function& f) {
  std::unordered_map<uint32_t, int64_t> ids;
  int64_t next = 0;
  auto assign = [&](ValueId v) {
    if (!ids.count(v.index)) ids[v.index] = next++;
  };
  for (auto p : f.params) assign(p);
  for (auto& b : f.blocks) {
    for (auto p : b.params) assign(p);
    for (auto& i : b.body) assign(i.result);
  }
  return ids;
}

bool functions_equivalent(const Function& a, const Function& b) {
  if (a.name != b.name || a.results != b.results || a.blocks.size() != b.blocks.size() ||
      a.params.size() != b.params.size())
    return false;
  auto ia = canonical_ids(a), ib = canonical_ids(b);
  auto same = [&](ValueId x, ValueId y) {
    auto px = ia.find(x.index), py = ib.find(y.index);
    if (px == ia.end() || py == ib.end()) return false;
    if (px->second != py->second) return false;
    const auto& tx = a.values[x.index].type;
    const auto& ty = b.values[y.index].type;
    return tx == ty;
  };
  auto same_list = [&](const std::vector<ValueId>& x, const std::vector<ValueId>& y) {
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i)
      if (!same(x[i], y[i])) return false;
    return true;
  };
  if (!same_list(a.params, b.params)) return false;
  for (size_t bi = 0; bi < a.blocks.size(); ++bi) {
    const auto& x = a.blocks[bi];
    const auto& y = b.blocks[bi];
    if (!same_list(x.params, y.params) || x.body.size() != y.body.size()) return false;
    for (size_t k = 0; k < x.body.size(); ++k) {
      const auto& p = x.body[k];
      const auto& q = y.body[k];
      if (p.op != q.op || !same(p.result, q.result) || !same_list(p.operands, q.operands) ||
          !attributes_equal(p.attrs, q.attrs))
        return false;
    }
    if (x.terminator.has_value() != y.terminator.has_value()) return false;
    if (!x.terminator) continue;
    const auto& tx = *x.terminator;
    const auto& ty = *y.terminator;
    if (tx.index() != ty.index()) return false;
    if (auto* r = std::get_if<ReturnTerm>(&tx)) {
      if (!same_list(r->values, std::get<ReturnTerm>(ty).values)) return false;
    } else if (auto* j = std::get_if<JumpTerm>(&tx)) {
      const auto& k = std::get<JumpTerm>(ty);
      if (j->target != k.target || !same_list(j->args, k.args)) return false;
    } else {
      const auto& p = std::get<BranchTerm>(tx);
      const auto& q = std::get<BranchTerm>(ty);
      if (!same(p.cond, q.cond) || p.then_target != q.then_target ||
          p.else_target != q.else_target || !same_list(p.then_args, q.then_args) ||
          !same_list(p.else_args, q.else_args))
        return false;
    }
  }
  return true;
}

}  // namespace

ProgramModule parse_ir(std::string_view text) { return Parser(text).parse_module(); }

std::string print_function(const Function& f) { return Printer(f).print(); }

std::string print_ir(const ProgramModule& m) {
  std::string out;
  for (size_t i = 0; i < m.functions.size(); ++i) {
    if (i) out += "\n";
    out += print_function(m.functions[i]);
  }
  return out;
}

bool modules_equivalent(const ProgramModule& a, const ProgramModule& b) {
  if (a.functions.size() != b.functions.size()) return false;
  for (size_t i = 0; i < a.functions.size(); ++i)
    if (!functions_equivalent(a.functions[i], b.functions[i])) return false;
  return true;
}

}  // namespace ssair
