#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "syntax_internal.hpp"

namespace icr::detail {

namespace {

using Node = TreeNode;

Node leaf(const char* label) { return Node(label); }

const std::map<std::string, std::string, std::less<>> kBinaryLabels = {
    {"+", "Add"},     {"-", "Sub"},      {"*", "Mult"},   {"/", "Div"},    {"%", "Mod"},
    {"//", "FloorDiv"}, {"**", "Pow"},   {"@", "MatMult"}, {"<<", "LShift"}, {">>", "RShift"},
    {">>>", "URShift"}, {"&", "BitAnd"}, {"|", "BitOr"},  {"^", "BitXor"}, {"&&", "And"},
    {"||", "Or"},     {"and", "And"},    {"or", "Or"},    {"==", "Eq"},    {"!=", "NotEq"},
    {"<>", "NotEq"},  {"<", "Lt"},       {"<=", "LtE"},   {">", "Gt"},     {">=", "GtE"},
    {"in", "In"},     {"is", "Is"},      {"instanceof", "InstanceOf"}, {"??", "Coalesce"}};

const std::map<std::string, std::string, std::less<>> kUnaryLabels = {
    {"-", "USub"}, {"+", "UAdd"}, {"!", "Not"}, {"not", "Not"}, {"~", "Invert"},
    {"++", "PreInc"}, {"--", "PreDec"}, {"*", "Deref"}, {"&", "AddressOf"}};

const std::map<std::string, std::string, std::less<>> kAugLabels = {
    {"+=", "Add"},  {"-=", "Sub"},     {"*=", "Mult"},   {"/=", "Div"},   {"%=", "Mod"},
    {"//=", "FloorDiv"}, {"**=", "Pow"}, {"&=", "BitAnd"}, {"|=", "BitOr"}, {"^=", "BitXor"},
    {"<<=", "LShift"}, {">>=", "RShift"}, {">>>=", "URShift"}, {"@=", "MatMult"}};

// Binary precedence, lowest first. Comparison chains and boolean ops get
// their own node labels (Compare / BoolOp) like Python's ast.
struct Level {
  std::vector<std::string_view> ops;
  const char* node;
};

const std::vector<Level> kBraceLevels = {
    {{"??"}, "BinOp"},
    {{"||"}, "BoolOp"},
    {{"&&"}, "BoolOp"},
    {{"|"}, "BinOp"},
    {{"^"}, "BinOp"},
    {{"&"}, "BinOp"},
    {{"==", "!="}, "Compare"},
    {{"<", "<=", ">", ">=", "instanceof"}, "Compare"},
    {{"<<", ">>", ">>>"}, "BinOp"},
    {{"+", "-"}, "BinOp"},
    {{"*", "/", "%"}, "BinOp"},
};

const std::vector<Level> kIndentLevels = {
    {{"or"}, "BoolOp"},
    {{"and"}, "BoolOp"},
    // "not" is unary and handled between and/comparison
    {{"==", "!=", "<>", "<", "<=", ">", ">=", "in", "is"}, "Compare"},
    {{"|"}, "BinOp"},
    {{"^"}, "BinOp"},
    {{"&"}, "BinOp"},
    {{"<<", ">>"}, "BinOp"},
    {{"+", "-"}, "BinOp"},
    {{"*", "/", "%", "//", "@"}, "BinOp"},
};

class ParserBase {
 public:
  ParserBase(const std::vector<CodeToken>& toks, Family fam) : toks_(toks), fam_(fam) {}

 protected:
  const CodeToken& peek(std::size_t ahead = 0) const {
    std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  bool at_end() const { return peek().kind == Tok::End; }
  bool is(std::string_view text, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return (t.kind == Tok::Op || t.kind == Tok::Keyword) && t.text == text;
  }
  bool is_kind(Tok k, std::size_t ahead = 0) const { return peek(ahead).kind == k; }
  bool accept(std::string_view text) {
    if (!is(text)) return false;
    ++pos_;
    return true;
  }
  void expect(std::string_view text) {
    if (!accept(text)) fail("expected '" + std::string(text) + "'");
  }
  std::string expect_ident() {
    if (!is_kind(Tok::Ident)) fail("expected identifier");
    return toks_[pos_++].text;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " near token " + std::to_string(pos_) + " '" + peek().text + "'");
  }

  // ---- expressions -------------------------------------------------------

  Node expression() {
    if (fam_ == Family::Indent) return py_test();
    return assignment();
  }

  Node assignment() {
    // brace family: right-associative, assignment is an expression
    if (fam_ == Family::Brace) {
      if (auto lam = try_arrow_lambda()) return std::move(*lam);
    }
    Node lhs = conditional();
    if (fam_ == Family::Brace) {
      if (accept("=")) return Node("Assign", {std::move(lhs), assignment()});
      if (is(">")) {
        std::size_t run = gt_run();
        if (run >= 1 && run <= 2 && is(">=", run) && peek(run).glued) {
          pos_ += run + 1;
          return Node("AugAssign", {std::move(lhs), Node(run == 1 ? "RShift" : "URShift"), assignment()});
        }
      }
      auto it = kAugLabels.find(peek().text);
      if (peek().kind == Tok::Op && it != kAugLabels.end()) {
        ++pos_;
        return Node("AugAssign", {std::move(lhs), Node(it->second), assignment()});
      }
    }
    return lhs;
  }

  std::optional<Node> try_arrow_lambda() {
    std::size_t save = pos_;
    if (is_kind(Tok::Ident) && is("->", 1)) {
      pos_ += 2;
      Node params("Params", {Node("Param", {leaf("Name")})});
      return Node("Lambda", {std::move(params), lambda_body()});
    }
    if (is("(")) {
      ++pos_;
      Node params("Params");
      bool ok = true;
      while (!is(")")) {
        Node p("Param");
        if (is_kind(Tok::Ident) && is_kind(Tok::Ident, 1)) {
          ++pos_;
          p.children.push_back(leaf("Type"));
        }
        if (!is_kind(Tok::Ident)) {
          ok = false;
          break;
        }
        ++pos_;
        p.children.push_back(leaf("Name"));
        params.children.push_back(std::move(p));
        if (!accept(",")) break;
      }
      if (ok && accept(")") && accept("->")) return Node("Lambda", {std::move(params), lambda_body()});
    }
    pos_ = save;
    return std::nullopt;
  }

  Node lambda_body() {
    if (is("{")) return block_hook();
    return expression();
  }

  virtual Node block_hook() { fail("block not supported here"); }

  Node conditional() {
    Node c = binary(0);
    if (fam_ == Family::Brace && accept("?")) {
      Node a = assignment();
      expect(":");
      Node b = assignment();
      return Node("Conditional", {std::move(c), std::move(a), std::move(b)});
    }
    return c;
  }

  const std::vector<Level>& levels() const { return fam_ == Family::Brace ? kBraceLevels : kIndentLevels; }

  bool level_op(const Level& lv, std::string& op_text, std::size_t& width) const {
    const auto& t = peek();
    if (t.kind != Tok::Op && t.kind != Tok::Keyword) return false;
    if (fam_ == Family::Indent && lv.node == std::string_view("Compare")) {
      if (t.text == "not" && is("in", 1)) {
        op_text = "not in";
        width = 2;
        return true;
      }
      if (t.text == "is" && is("not", 1)) {
        op_text = "is not";
        width = 2;
        return true;
      }
    }
    if (fam_ == Family::Brace && t.text == ">") {
      std::size_t run = gt_run();
      bool shift_level = std::find(lv.ops.begin(), lv.ops.end(), std::string_view(">>")) != lv.ops.end();
      if (run >= 2) {
        if (!shift_level || (run == 2 && is(">=", 2) && peek(2).glued) ||
            (run == 3 && is(">=", 3) && peek(3).glued))
          return false;
        op_text = run >= 3 ? ">>>" : ">>";
        width = run >= 3 ? 3 : 2;
        return true;
      }
    }
    for (auto op : lv.ops) {
      if (t.text == op) {
        op_text = t.text;
        width = 1;
        return true;
      }
    }
    return false;
  }

  // Number of consecutive glued '>' tokens starting at the cursor.
  std::size_t gt_run() const {
    std::size_t n = 0;
    while (n < 3 && is(">", n) && (n == 0 || peek(n).glued)) ++n;
    return n;
  }

  Node binary(std::size_t level) {
    const auto& lvls = levels();
    if (level >= lvls.size()) return unary();
    if (fam_ == Family::Indent && level == 2 && is("not")) {
      ++pos_;
      return Node("UnaryOp", {leaf("Not"), binary(level)});
    }
    Node lhs = binary(level + 1);
    std::string op;
    std::size_t width = 0;
    while (level_op(lvls[level], op, width)) {
      pos_ += width;
      Node rhs = binary(level + 1);
      std::string label = op == "not in" ? "NotIn" : op == "is not" ? "IsNot" : kBinaryLabels.at(op);
      lhs = Node(lvls[level].node, {std::move(lhs), Node(label), std::move(rhs)});
    }
    return lhs;
  }

  Node unary() {
    const auto& t = peek();
    if (t.kind == Tok::Op || (t.kind == Tok::Keyword && t.text == "not")) {
      bool allowed = fam_ == Family::Brace ? (t.text == "-" || t.text == "+" || t.text == "!" || t.text == "~" ||
                                              t.text == "++" || t.text == "--" || t.text == "*" || t.text == "&")
                                           : (t.text == "-" || t.text == "+" || t.text == "~");
      if (allowed) {
        std::string op = t.text;
        ++pos_;
        return Node("UnaryOp", {Node(kUnaryLabels.at(op)), unary()});
      }
    }
    if (fam_ == Family::Brace) {
      if (is("new")) return new_expr();
      if (is("typeof") || is("delete") || is("sizeof")) {
        ++pos_;
        return Node("UnaryOp", {leaf("Keyword"), unary()});
      }
      if (auto cast = try_cast()) return std::move(*cast);
    } else {
      if (is("await")) {
        ++pos_;
        return Node("Await", {unary()});
      }
    }
    Node base = postfix(primary());
    if (fam_ == Family::Indent && accept("**")) return Node("BinOp", {std::move(base), leaf("Pow"), unary()});
    return base;
  }

  std::optional<Node> try_cast() {
    if (!is("(") || !is_kind(Tok::Ident, 1)) return std::nullopt;
    std::size_t save = pos_;
    ++pos_;
    try {
      Node ty = type_ref();
      if (accept(")")) {
        const auto& n = peek();
        bool operand_follows = n.kind == Tok::Ident || n.kind == Tok::Number || n.kind == Tok::String ||
                               (n.kind == Tok::Op && (n.text == "(" || n.text == "!" || n.text == "~")) ||
                               (n.kind == Tok::Keyword && (n.text == "this" || n.text == "new" || n.text == "true" ||
                                                           n.text == "false" || n.text == "null"));
        // "(a) (b)" is ambiguous; only treat as cast when the parenthesised part is clearly a type
        // or the operand is not a parenthesised expression.
        if (operand_follows && !(n.kind == Tok::Op && n.text == "(" && ty.children.empty())) {
          return Node("Cast", {std::move(ty), unary()});
        }
      }
    } catch (const ParseError&) {
    }
    pos_ = save;
    return std::nullopt;
  }

  // Brace-family type reference: qualified name, generic args, array/pointer suffixes.
  Node type_ref() {
    while (is("const") || is("final") || is("volatile") || is("typename")) ++pos_;
    if (!is_kind(Tok::Ident)) fail("expected type");
    ++pos_;
    Node ty("Type");
    while ((is(".") || is("::")) && is_kind(Tok::Ident, 1)) pos_ += 2;
    if (is("<")) ty.children.push_back(type_args());
    while (true) {
      if (is("[") && is("]", 1)) {
        pos_ += 2;
        ty = Node("ArrayType", {std::move(ty)});
      } else if (is("*") || is("&") || is("&&") || is("...")) {
        ++pos_;
      } else {
        break;
      }
    }
    return ty;
  }

  Node type_args() {
    expect("<");
    Node args("TypeArgs");
    if (accept(">")) return args;
    while (true) {
      if (accept("?")) {
        if (accept("extends") || accept("super")) args.children.push_back(type_ref());
        else args.children.push_back(leaf("Wildcard"));
      } else {
        args.children.push_back(type_ref());
      }
      if (!accept(",")) break;
    }
    close_angle();
    return args;
  }

  void close_angle() { expect(">"); }

  Node new_expr() {
    expect("new");
    Node ty = type_ref();
    Node n("New", {std::move(ty)});
    if (is("(")) {
      n.children.push_back(call_args(")"));
      if (is("{")) n.children.push_back(block_hook());
    } else if (is("[")) {
      while (accept("[")) {
        if (!is("]")) n.children.push_back(expression());
        expect("]");
      }
      if (is("{")) n.children.push_back(array_init());
    } else if (is("{")) {
      n.children.push_back(array_init());
    } else {
      fail("expected constructor arguments");
    }
    return n;
  }

  Node array_init() {
    expect("{");
    Node init("ArrayInit");
    while (!is("}")) {
      init.children.push_back(is("{") ? array_init() : expression());
      if (!accept(",")) break;
    }
    expect("}");
    return init;
  }

  Node call_args(std::string_view close) {
    expect(close == ")" ? "(" : "[");
    Node args("Args");
    while (!is(close)) {
      args.children.push_back(call_arg());
      if (!accept(",")) break;
    }
    expect(close);
    return args;
  }

  Node call_arg() {
    if (fam_ == Family::Indent) {
      if (accept("*")) return Node("Starred", {py_test()});
      if (accept("**")) return Node("DoubleStarred", {py_test()});
      if (is_kind(Tok::Ident) && is("=", 1)) {
        pos_ += 2;
        return Node("Keyword", {py_test()});
      }
      Node v = py_test();
      if (is("for")) return Node("GeneratorExp", {std::move(v), comprehension()});
      return v;
    }
    return expression();
  }

  Node postfix(Node base) {
    while (true) {
      if (is("(")) {
        base = Node("Call", {std::move(base), call_args(")")});
      } else if (is("[")) {
        ++pos_;
        Node idx = fam_ == Family::Indent ? subscript() : expression();
        expect("]");
        base = Node("Index", {std::move(base), std::move(idx)});
      } else if ((is(".") || is("->") || is("?.")) && (is_kind(Tok::Ident, 1) || is_kind(Tok::Keyword, 1))) {
        pos_ += 2;
        base = Node("Attribute", {std::move(base), leaf("Name")});
      } else if (fam_ == Family::Brace && is("::") && (is_kind(Tok::Ident, 1) || is("new", 1))) {
        pos_ += 2;
        base = Node("MethodRef", {std::move(base), leaf("Name")});
      } else if (fam_ == Family::Brace && (is("++") || is("--"))) {
        std::string op = peek().text;
        ++pos_;
        base = Node("PostfixOp", {std::move(base), Node(op == "++" ? "PostInc" : "PostDec")});
      } else {
        return base;
      }
    }
  }

  Node subscript() {
    auto slice_part = [&](Node& s) {
      if (!is(":") && !is("]") && !is(",")) s.children.push_back(py_test());
    };
    Node first("Slice");
    bool is_slice = false;
    Node head;
    if (!is(":")) head = py_test();
    if (is(":")) {
      is_slice = true;
      if (!head.label.empty()) first.children.push_back(std::move(head));
      ++pos_;
      slice_part(first);
      if (accept(":")) slice_part(first);
    }
    Node result = is_slice ? std::move(first) : std::move(head);
    if (is(",")) {
      Node tup("Tuple", {std::move(result)});
      while (accept(",")) {
        if (is("]")) break;
        tup.children.push_back(subscript());
      }
      return tup;
    }
    return result;
  }

  Node primary() {
    const auto& t = peek();
    switch (t.kind) {
      case Tok::Ident:
        ++pos_;
        return leaf("Name");
      case Tok::Number:
        ++pos_;
        return leaf("Num");
      case Tok::String:
        while (is_kind(Tok::String)) ++pos_;
        return leaf("Str");
      case Tok::Keyword:
        if (t.text == "true" || t.text == "false" || t.text == "null" || t.text == "nullptr" ||
            t.text == "undefined" || t.text == "None" || t.text == "True" || t.text == "False") {
          ++pos_;
          return leaf("Constant");
        }
        if (t.text == "this" || t.text == "super") {
          ++pos_;
          return leaf("This");
        }
        if (fam_ == Family::Indent && t.text == "lambda") return py_lambda();
        if (fam_ == Family::Indent && t.text == "yield") return py_yield();
        fail("unexpected keyword");
      case Tok::Op:
        if (t.text == "(") return paren();
        if (t.text == "[") return list_display();
        if (t.text == "{" && fam_ == Family::Indent) return dict_display();
        if (t.text == "{" && fam_ == Family::Brace) return array_init();
        if (t.text == "..." && fam_ == Family::Indent) {
          ++pos_;
          return leaf("Constant");
        }
        fail("unexpected operator");
      default:
        fail("unexpected token");
    }
  }

  Node paren() {
    expect("(");
    if (accept(")")) return Node("Tuple");
    Node first = fam_ == Family::Indent ? (is("*") ? (++pos_, Node("Starred", {py_test()})) : py_test_or_yield())
                                        : expression();
    if (fam_ == Family::Indent && is("for")) {
      Node g("GeneratorExp", {std::move(first), comprehension()});
      expect(")");
      return g;
    }
    if (is(",")) {
      Node tup("Tuple", {std::move(first)});
      while (accept(",")) {
        if (is(")")) break;
        tup.children.push_back(fam_ == Family::Indent ? py_star_or_test() : expression());
      }
      expect(")");
      return tup;
    }
    expect(")");
    return Node("Paren", {std::move(first)});
  }

  Node list_display() {
    expect("[");
    Node list("List");
    if (accept("]")) return list;
    Node first = fam_ == Family::Indent ? py_star_or_test() : expression();
    if (fam_ == Family::Indent && is("for")) {
      Node c("ListComp", {std::move(first), comprehension()});
      expect("]");
      return c;
    }
    list.children.push_back(std::move(first));
    while (accept(",")) {
      if (is("]")) break;
      list.children.push_back(fam_ == Family::Indent ? py_star_or_test() : expression());
    }
    expect("]");
    return list;
  }

  Node dict_display() {
    expect("{");
    if (accept("}")) return Node("Dict");
    auto item = [&]() -> Node {
      if (accept("**")) return Node("DoubleStarred", {py_test()});
      Node k = py_star_or_test();
      if (accept(":")) return Node("Pair", {std::move(k), py_test()});
      return k;
    };
    Node first = item();
    bool is_dict = first.label == "Pair" || first.label == "DoubleStarred";
    if (is("for")) {
      Node c(is_dict ? "DictComp" : "SetComp", {std::move(first), comprehension()});
      expect("}");
      return c;
    }
    Node d(is_dict ? "Dict" : "Set", {std::move(first)});
    while (accept(",")) {
      if (is("}")) break;
      d.children.push_back(item());
    }
    expect("}");
    return d;
  }

  // ---- python-specific expression forms ------------------------------------

  Node py_test() {
    if (is("lambda")) return py_lambda();
    Node body = binary(0);
    if (is("if")) {
      ++pos_;
      Node cond = binary(0);
      expect("else");
      Node orelse = py_test();
      return Node("Conditional", {std::move(cond), std::move(body), std::move(orelse)});
    }
    if (is(":=")) {
      ++pos_;
      return Node("NamedExpr", {std::move(body), py_test()});
    }
    return body;
  }

  Node py_star_or_test() {
    if (accept("*")) return Node("Starred", {binary(0)});
    return py_test();
  }

  Node py_test_or_yield() { return is("yield") ? py_yield() : py_test(); }

  Node py_yield() {
    expect("yield");
    if (accept("from")) return Node("YieldFrom", {py_test()});
    Node y("Yield");
    if (!is(")") && !is_kind(Tok::Newline) && !is_kind(Tok::End) && !is("=") && !is(";")) y.children.push_back(py_testlist());
    return y;
  }

  Node py_lambda() {
    expect("lambda");
    Node args("Arguments");
    while (!is(":")) {
      if (accept("*") || accept("**")) {
        if (is_kind(Tok::Ident)) ++pos_;
        args.children.push_back(leaf("VarArg"));
      } else {
        expect_ident();
        Node a("Arg");
        if (accept("=")) a.children.push_back(py_test());
        args.children.push_back(std::move(a));
      }
      if (!accept(",")) break;
    }
    expect(":");
    return Node("Lambda", {std::move(args), py_test()});
  }

  Node comprehension() {
    Node comp("Comprehension");
    while (is("for") || (is("async") && is("for", 1))) {
      if (is("async")) ++pos_;
      expect("for");
      Node target = py_target_list();
      expect("in");
      Node iter = binary(0);
      Node gen("For", {std::move(target), std::move(iter)});
      while (is("if")) {
        ++pos_;
        gen.children.push_back(Node("If", {binary(0)}));
      }
      comp.children.push_back(std::move(gen));
    }
    return comp;
  }

  Node py_target_list() {
    Node first = py_target();
    if (!is(",")) return first;
    Node tup("Tuple", {std::move(first)});
    while (accept(",")) {
      if (is("in") || is("=")) break;
      tup.children.push_back(py_target());
    }
    return tup;
  }

  Node py_target() {
    if (accept("*")) return Node("Starred", {py_target()});
    return postfix(primary());
  }

  Node py_testlist() {
    Node first = py_star_or_test();
    if (!is(",")) return first;
    Node tup("Tuple", {std::move(first)});
    while (accept(",")) {
      if (is_kind(Tok::Newline) || is_kind(Tok::End) || is("=") || is(")") || is(";") || is(":")) break;
      tup.children.push_back(py_star_or_test());
    }
    return tup;
  }

  std::vector<CodeToken> toks_;
  Family fam_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Brace family (C, C++, Java, C#, JavaScript subset)

class BraceParser : public ParserBase {
 public:
  explicit BraceParser(const std::vector<CodeToken>& toks) : ParserBase(toks, Family::Brace) {}

  Node unit() {
    Node mod("Module");
    while (!at_end()) mod.children.push_back(statement());
    return mod;
  }

 protected:
  Node block_hook() override { return block(); }

 private:
  Node block() {
    expect("{");
    Node b("Block");
    while (!is("}")) {
      if (at_end()) fail("unterminated block");
      b.children.push_back(statement());
    }
    expect("}");
    return b;
  }

  void end_statement() {
    if (accept(";")) return;
    if (at_end() || is("}")) return;  // tolerate a missing final semicolon
    fail("expected ';'");
  }

  Node paren_cond() {
    expect("(");
    Node e = expression();
    expect(")");
    return e;
  }

  bool modifier() const {
    static const std::set<std::string, std::less<>> mods = {
        "public", "private", "protected", "static", "final", "abstract", "synchronized",
        "native", "transient", "volatile", "const", "virtual", "inline"};
    return peek().kind == Tok::Keyword && mods.count(peek().text);
  }

  Node annotation() {
    expect("@");
    expect_ident();
    while (accept(".")) expect_ident();
    if (is("(")) call_args(")");
    return leaf("Annotation");
  }

  Node statement() {
    if (is("{")) return block();
    if (accept(";")) return leaf("Empty");
    if (is("if")) {
      ++pos_;
      Node n("If", {paren_cond(), statement()});
      if (accept("else")) n.children.push_back(Node("Else", {statement()}));
      return n;
    }
    if (is("while")) {
      ++pos_;
      Node c = paren_cond();
      return Node("While", {std::move(c), statement()});
    }
    if (is("do")) {
      ++pos_;
      Node body = statement();
      expect("while");
      Node c = paren_cond();
      end_statement();
      return Node("DoWhile", {std::move(body), std::move(c)});
    }
    if (is("for")) return for_stmt();
    if (is("return")) {
      ++pos_;
      Node r("Return");
      if (!is(";") && !is("}") && !at_end()) r.children.push_back(expression());
      end_statement();
      return r;
    }
    if (is("break") || is("continue")) {
      Node n(peek().text == "break" ? "Break" : "Continue");
      ++pos_;
      if (is_kind(Tok::Ident)) ++pos_;
      end_statement();
      return n;
    }
    if (is("throw")) {
      ++pos_;
      Node n("Throw", {expression()});
      end_statement();
      return n;
    }
    if (is("try")) return try_stmt();
    if (is("switch")) return switch_stmt();
    if (is("import") || is("package") || is("using")) {
      Node n(peek().text == "package" ? "Package" : "Import");
      ++pos_;
      accept("static");
      accept("namespace");
      expect_ident();
      while (accept(".") || accept("::")) {
        if (accept("*")) break;
        expect_ident();
      }
      end_statement();
      return n;
    }
    if (is("namespace")) {
      ++pos_;
      if (is_kind(Tok::Ident)) ++pos_;
      Node body = block();
      body.label = "Namespace";
      return body;
    }
    if (is_kind(Tok::Ident) && is(":", 1) && !is(":", 2)) {
      pos_ += 2;
      return Node("Labeled", {statement()});
    }
    if (is("function")) return js_function();
    if (is("var") || is("let") || (is("const") && is_kind(Tok::Ident, 1) && !is_kind(Tok::Ident, 2))) {
      ++pos_;
      Node decl("VarDecl");
      declarators(decl);
      end_statement();
      return decl;
    }
    if (auto decl = try_declaration()) return std::move(*decl);
    Node e("ExprStmt", {expression()});
    end_statement();
    return e;
  }

  void declarators(Node& decl) {
    do {
      expect_ident();
      Node d("Declarator", {leaf("Name")});
      while (is("[") && is("]", 1)) pos_ += 2;
      if (accept("=")) d.children.push_back(is("{") ? array_init() : expression());
      decl.children.push_back(std::move(d));
    } while (accept(","));
  }

  Node js_function() {
    expect("function");
    if (is_kind(Tok::Ident)) ++pos_;
    Node params = param_list();
    return Node("FunctionDef", {leaf("Name"), std::move(params), block()});
  }

  Node param_list() {
    expect("(");
    Node params("Params");
    while (!is(")")) {
      while (is("@")) annotation();
      while (modifier()) ++pos_;
      Node p("Param");
      if (is("...")) ++pos_;
      if (is_kind(Tok::Ident) && (is(",", 1) || is(")", 1) || is("=", 1))) {
        ++pos_;  // untyped (JavaScript)
      } else {
        p.children.push_back(type_ref());
        if (is_kind(Tok::Ident)) ++pos_;
        while (is("[") && is("]", 1)) pos_ += 2;
      }
      p.children.push_back(leaf("Name"));
      if (accept("=")) p.children.push_back(expression());
      params.children.push_back(std::move(p));
      if (!accept(",")) break;
    }
    expect(")");
    return params;
  }

  std::optional<Node> try_declaration() {
    std::size_t save = pos_;
    try {
      std::vector<Node> prefix;
      while (is("@")) prefix.push_back(annotation());
      while (modifier()) {
        ++pos_;
        prefix.push_back(leaf("Modifier"));
      }
      if (is("class") || is("interface") || is("enum") || is("struct")) return class_decl(std::move(prefix));
      if (is("<")) prefix.push_back(type_args());
      // constructor: Name ( params ) {
      if (is_kind(Tok::Ident) && is("(", 1)) {
        std::size_t inner = pos_;
        ++pos_;
        try {
          Node params = param_list();
          if (is("{") || is(":") || is("throws")) {
            skip_throws();
            if (accept(":")) {  // C++ member initializer list
              do {
                expect_ident();
                call_args(")");
              } while (accept(","));
            }
            Node fn("Constructor", std::move(prefix));
            fn.children.push_back(std::move(params));
            fn.children.push_back(block());
            return fn;
          }
        } catch (const ParseError&) {
        }
        pos_ = inner;
      }
      if (!is_kind(Tok::Ident)) {
        pos_ = save;
        return std::nullopt;
      }
      Node ty = type_ref();
      if (!is_kind(Tok::Ident)) {
        pos_ = save;
        return std::nullopt;
      }
      if (is("(", 1)) {
        ++pos_;
        Node params = param_list();
        skip_throws();
        Node fn("FunctionDef", std::move(prefix));
        fn.children.push_back(std::move(ty));
        fn.children.push_back(leaf("Name"));
        fn.children.push_back(std::move(params));
        if (is("{")) fn.children.push_back(block());
        else end_statement();
        return fn;
      }
      Node decl("VarDecl", std::move(prefix));
      decl.children.push_back(std::move(ty));
      declarators(decl);
      end_statement();
      return decl;
    } catch (const ParseError&) {
      pos_ = save;
      return std::nullopt;
    }
  }

  void skip_throws() {
    if (accept("throws")) {
      type_ref();
      while (accept(",")) type_ref();
    }
    while (is("const") || is("override") || is("noexcept")) ++pos_;
  }

  Node class_decl(std::vector<Node> prefix) {
    std::string kind = peek().text;
    ++pos_;
    expect_ident();
    Node cls(kind == "interface" ? "InterfaceDef" : kind == "enum" ? "EnumDef" : "ClassDef", std::move(prefix));
    if (is("<")) cls.children.push_back(type_args());
    if (accept("extends") || accept(":")) {
      accept("public");
      cls.children.push_back(Node("Extends", {type_ref()}));
      while (accept(",")) cls.children.push_back(Node("Extends", {type_ref()}));
    }
    if (accept("implements")) {
      cls.children.push_back(Node("Implements", {type_ref()}));
      while (accept(",")) cls.children.push_back(Node("Implements", {type_ref()}));
    }
    expect("{");
    Node body("ClassBody");
    if (kind == "enum") {
      while (is_kind(Tok::Ident)) {
        ++pos_;
        Node c("EnumConstant");
        if (is("(")) c.children.push_back(call_args(")"));
        body.children.push_back(std::move(c));
        if (!accept(",")) break;
      }
      accept(";");
    }
    while (!is("}")) {
      if (at_end()) fail("unterminated class body");
      if ((is("public") || is("private") || is("protected")) && is(":", 1)) {
        pos_ += 2;
        continue;
      }
      body.children.push_back(statement());
    }
    expect("}");
    accept(";");
    cls.children.push_back(std::move(body));
    return cls;
  }

  Node for_stmt() {
    expect("for");
    expect("(");
    // enhanced for: for (Type x : expr)
    {
      std::size_t save = pos_;
      try {
        while (modifier()) ++pos_;
        if (is("var") || is("let") || is("const")) ++pos_;
        Node ty = is_kind(Tok::Ident) && is_kind(Tok::Ident, 1) ? type_ref() : leaf("Type");
        expect_ident();
        if (accept(":") || accept("of") || (is_kind(Tok::Keyword) && peek().text == "in" && (++pos_, true))) {
          Node iter = expression();
          expect(")");
          return Node("ForEach", {std::move(ty), leaf("Name"), std::move(iter), statement()});
        }
      } catch (const ParseError&) {
      }
      pos_ = save;
    }
    Node init("ForInit");
    if (!is(";")) {
      if (is("var") || is("let")) {
        ++pos_;
        Node decl("VarDecl");
        declarators(decl);
        init.children.push_back(std::move(decl));
      } else if (auto decl = try_for_decl()) {
        init.children.push_back(std::move(*decl));
      } else {
        init.children.push_back(expression());
        while (accept(",")) init.children.push_back(expression());
      }
    }
    expect(";");
    Node cond("ForCond");
    if (!is(";")) cond.children.push_back(expression());
    expect(";");
    Node update("ForUpdate");
    if (!is(")")) {
      update.children.push_back(expression());
      while (accept(",")) update.children.push_back(expression());
    }
    expect(")");
    return Node("For", {std::move(init), std::move(cond), std::move(update), statement()});
  }

  std::optional<Node> try_for_decl() {
    std::size_t save = pos_;
    try {
      while (modifier()) ++pos_;
      Node ty = type_ref();
      if (!is_kind(Tok::Ident)) throw ParseError("not a declaration");
      Node decl("VarDecl", {std::move(ty)});
      declarators(decl);
      if (!is(";")) throw ParseError("not a declaration");
      return decl;
    } catch (const ParseError&) {
      pos_ = save;
      return std::nullopt;
    }
  }

  Node try_stmt() {
    expect("try");
    Node t("Try");
    if (is("(")) {
      ++pos_;
      Node res("Resources");
      while (!is(")")) {
        Node ty = type_ref();
        expect_ident();
        expect("=");
        res.children.push_back(Node("Resource", {std::move(ty), expression()}));
        if (!accept(";")) break;
      }
      expect(")");
      t.children.push_back(std::move(res));
    }
    t.children.push_back(block());
    while (accept("catch")) {
      Node c("Catch");
      if (accept("(")) {
        Node p("Param");
        while (modifier()) ++pos_;
        if (is("...")) {
          ++pos_;
        } else {
          p.children.push_back(type_ref());
          while (accept("|")) p.children.push_back(type_ref());
          if (is_kind(Tok::Ident)) ++pos_;
        }
        expect(")");
        c.children.push_back(std::move(p));
      }
      c.children.push_back(block());
      t.children.push_back(std::move(c));
    }
    if (accept("finally")) t.children.push_back(Node("Finally", {block()}));
    if (t.children.size() < 2) fail("try without catch/finally");
    return t;
  }

  Node switch_stmt() {
    expect("switch");
    Node sw("Switch", {paren_cond()});
    expect("{");
    Node* current = nullptr;
    while (!is("}")) {
      if (at_end()) fail("unterminated switch");
      if (accept("case")) {
        Node c("Case", {expression()});
        while (accept(",")) c.children.push_back(expression());
        if (!accept(":")) expect("->");
        sw.children.push_back(std::move(c));
        current = &sw.children.back();
      } else if (accept("default")) {
        if (!accept(":")) expect("->");
        sw.children.push_back(Node("Default"));
        current = &sw.children.back();
      } else {
        if (!current) fail("statement before case label");
        current->children.push_back(statement());
      }
    }
    expect("}");
    return sw;
  }
};

// ---------------------------------------------------------------------------
// Indentation family (Python subset)

class IndentParser : public ParserBase {
 public:
  explicit IndentParser(const std::vector<CodeToken>& toks) : ParserBase(toks, Family::Indent) {}

  Node unit() {
    Node mod("Module");
    while (!at_end()) {
      if (is_kind(Tok::Newline)) {
        ++pos_;
        continue;
      }
      append_statement(mod);
    }
    return mod;
  }

 private:
  void end_line() {
    if (is_kind(Tok::Newline)) {
      ++pos_;
      return;
    }
    if (at_end()) return;
    fail("expected end of line");
  }

  // Simple statements separated by ';' expand into siblings.
  void append_statement(Node& parent) {
    if (compound_start()) {
      parent.children.push_back(compound());
      return;
    }
    parent.children.push_back(small_stmt());
    while (accept(";")) {
      if (is_kind(Tok::Newline) || at_end()) break;
      parent.children.push_back(small_stmt());
    }
    end_line();
  }

  bool compound_start() const {
    return is("if") || is("while") || is("for") || is("try") || is("with") || is("def") || is("class") ||
           is("@") || (is("async") && (is("def", 1) || is("for", 1) || is("with", 1)));
  }

  Node suite() {
    expect(":");
    Node body("Body");
    if (is_kind(Tok::Newline)) {
      ++pos_;
      if (!is_kind(Tok::Indent)) fail("expected indented block");
      ++pos_;
      while (!is_kind(Tok::Dedent)) {
        if (at_end()) fail("unterminated block");
        if (is_kind(Tok::Newline)) {
          ++pos_;
          continue;
        }
        append_statement(body);
      }
      ++pos_;
      return body;
    }
    append_statement(body);
    return body;
  }

  Node compound() {
    if (is("@")) {
      std::vector<Node> decos;
      while (accept("@")) {
        decos.push_back(Node("Decorator", {py_test()}));
        end_line();
      }
      Node def = compound();
      def.children.insert(def.children.begin(), std::make_move_iterator(decos.begin()),
                          std::make_move_iterator(decos.end()));
      return def;
    }
    if (accept("async")) {
      Node n = compound();
      n.label = "Async" + n.label;
      return n;
    }
    if (accept("if")) return if_chain();
    if (accept("while")) {
      Node n("While", {py_test()});
      n.children.push_back(suite());
      if (is("else")) {
        ++pos_;
        n.children.push_back(Node("Else", {suite()}));
      }
      return n;
    }
    if (accept("for")) {
      Node target = py_target_list();
      expect("in");
      Node iter = py_testlist();
      Node n("For", {std::move(target), std::move(iter)});
      n.children.push_back(suite());
      if (is("else")) {
        ++pos_;
        n.children.push_back(Node("Else", {suite()}));
      }
      return n;
    }
    if (accept("try")) {
      Node t("Try", {suite()});
      while (accept("except")) {
        Node h("ExceptHandler");
        accept("*");
        if (!is(":")) {
          h.children.push_back(py_test());
          if (accept("as") || accept(",")) expect_ident();
        }
        h.children.push_back(suite());
        t.children.push_back(std::move(h));
      }
      if (accept("else")) t.children.push_back(Node("Else", {suite()}));
      if (accept("finally")) t.children.push_back(Node("Finally", {suite()}));
      if (t.children.size() < 2) fail("try without handlers");
      return t;
    }
    if (accept("with")) {
      Node w("With");
      bool parens = false;
      if (is("(") && !is(")", 1)) {
        // parenthesised with-items; fall back to expression parse if it is a tuple expression
        std::size_t save = pos_;
        ++pos_;
        try {
          with_items(w);
          expect(")");
          parens = is(":");
        } catch (const ParseError&) {
        }
        if (!parens) {
          pos_ = save;
          w.children.clear();
        }
      }
      if (!parens) with_items(w);
      w.children.push_back(suite());
      return w;
    }
    if (accept("def")) {
      expect_ident();
      Node fn("FunctionDef", {leaf("Name"), arguments()});
      if (accept("->")) fn.children.push_back(Node("Returns", {py_test()}));
      fn.children.push_back(suite());
      return fn;
    }
    if (accept("class")) {
      expect_ident();
      Node cls("ClassDef", {leaf("Name")});
      if (is("(")) {
        Node bases = call_args(")");
        bases.label = "Bases";
        cls.children.push_back(std::move(bases));
      }
      cls.children.push_back(suite());
      return cls;
    }
    fail("expected compound statement");
  }

  void with_items(Node& w) {
    do {
      if (is(")")) break;
      Node item("WithItem", {py_test()});
      if (accept("as")) item.children.push_back(py_target());
      w.children.push_back(std::move(item));
    } while (accept(","));
  }

  Node if_chain() {
    Node n("If", {py_test()});
    n.children.push_back(suite());
    if (accept("elif")) {
      n.children.push_back(if_chain());
    } else if (accept("else")) {
      n.children.push_back(Node("Else", {suite()}));
    }
    return n;
  }

  Node arguments() {
    expect("(");
    Node args("Arguments");
    while (!is(")")) {
      if (accept("/")) {
        args.children.push_back(leaf("PosOnly"));
      } else if (accept("**")) {
        expect_ident();
        Node a("KwArg");
        if (accept(":")) a.children.push_back(py_test());
        args.children.push_back(std::move(a));
      } else if (accept("*")) {
        Node a("VarArg");
        if (is_kind(Tok::Ident)) {
          ++pos_;
          if (accept(":")) a.children.push_back(py_test());
        }
        args.children.push_back(std::move(a));
      } else {
        expect_ident();
        Node a("Arg");
        if (accept(":")) a.children.push_back(Node("Annotation", {py_test()}));
        if (accept("=")) a.children.push_back(Node("Default", {py_test()}));
        args.children.push_back(std::move(a));
      }
      if (!accept(",")) break;
    }
    expect(")");
    return args;
  }

  Node small_stmt() {
    if (accept("pass")) return leaf("Pass");
    if (accept("break")) return leaf("Break");
    if (accept("continue")) return leaf("Continue");
    if (accept("return")) {
      Node r("Return");
      if (!is_kind(Tok::Newline) && !at_end() && !is(";")) r.children.push_back(py_testlist());
      return r;
    }
    if (accept("raise")) {
      Node r("Raise");
      if (!is_kind(Tok::Newline) && !at_end() && !is(";")) {
        r.children.push_back(py_test());
        if (accept("from")) r.children.push_back(py_test());
      }
      return r;
    }
    if (accept("import")) {
      Node imp("Import");
      do {
        dotted_name();
        Node alias("Alias");
        if (accept("as")) expect_ident();
        imp.children.push_back(std::move(alias));
      } while (accept(","));
      return imp;
    }
    if (accept("from")) {
      while (accept(".") || accept("...")) {
      }
      if (!is("import")) dotted_name();
      expect("import");
      Node imp("ImportFrom");
      if (accept("*")) {
        imp.children.push_back(leaf("Alias"));
        return imp;
      }
      bool parens = accept("(");
      do {
        if (parens && is(")")) break;
        expect_ident();
        if (accept("as")) expect_ident();
        imp.children.push_back(leaf("Alias"));
      } while (accept(","));
      if (parens) expect(")");
      return imp;
    }
    if (is("global") || is("nonlocal")) {
      Node g(peek().text == "global" ? "Global" : "Nonlocal");
      ++pos_;
      do expect_ident();
      while (accept(","));
      return g;
    }
    if (accept("del")) return Node("Delete", {py_testlist()});
    if (accept("assert")) {
      Node a("Assert", {py_test()});
      if (accept(",")) a.children.push_back(py_test());
      return a;
    }
    return expr_stmt();
  }

  void dotted_name() {
    expect_ident();
    while (accept(".")) expect_ident();
  }

  Node expr_stmt() {
    Node first = is("yield") ? py_yield() : py_testlist();
    if (is("=")) {
      Node assign("Assign", {std::move(first)});
      while (accept("=")) assign.children.push_back(is("yield") ? py_yield() : py_testlist());
      return assign;
    }
    if (peek().kind == Tok::Op) {
      auto it = kAugLabels.find(peek().text);
      if (it != kAugLabels.end()) {
        ++pos_;
        return Node("AugAssign", {std::move(first), Node(it->second), is("yield") ? py_yield() : py_testlist()});
      }
    }
    if (accept(":")) {
      Node ann("AnnAssign", {std::move(first), py_test()});
      if (accept("=")) ann.children.push_back(py_testlist());
      return ann;
    }
    return Node("Expr", {std::move(first)});
  }
};

}  // namespace

TreeNode parse_brace(const std::vector<CodeToken>& tokens) { return BraceParser(tokens).unit(); }
TreeNode parse_indent(const std::vector<CodeToken>& tokens) { return IndentParser(tokens).unit(); }

}  // namespace icr::detail
