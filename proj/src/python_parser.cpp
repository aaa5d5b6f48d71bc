#include <set>

#include "cgt/errors.hpp"
#include "cgt/python_codec.hpp"
#include "python_lexer.hpp"

namespace cgt {

namespace {

using detail::Tok;
using detail::Token;

const std::set<std::string, std::less<>> kKeywords = {
    "False", "None",   "True",    "and",      "as",       "assert", "async", "await",  "break",
    "class", "continue", "def",   "del",      "elif",     "else",   "except", "finally", "for",
    "from",  "global", "if",      "import",   "in",       "is",     "lambda", "nonlocal", "not",
    "or",    "pass",   "raise",   "return",   "try",      "while",  "with",   "yield"};

const std::map<std::string, std::string, std::less<>> kAugOps = {
    {"+=", "Add"},     {"-=", "Sub"},    {"*=", "Mult"},   {"/=", "Div"},    {"//=", "FloorDiv"}, {"%=", "Mod"},
    {"**=", "Pow"},    {"<<=", "LShift"}, {">>=", "RShift"}, {"|=", "BitOr"}, {"^=", "BitXor"},   {"&=", "BitAnd"}};

class Parser {
 public:
  Parser(std::vector<Token> toks, const Grammar& g) : toks_(std::move(toks)), g_(g) {}

  AstNode file() {
    std::vector<AstNode> body;
    while (!at(Tok::End)) {
      if (accept(Tok::Newline)) continue;
      statement(body);
    }
    AstNode module = node("Module", {list("stmt", std::move(body))});
    return node(g_.rule(g_.rules_for(g_.root_kind()).front()).label, {std::move(module)});
  }

 private:
  // ---- token helpers -------------------------------------------------------
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool at(Tok t) const { return peek().type == t; }
  bool at_op(std::string_view op) const { return peek().type == Tok::Op && peek().text == op; }
  bool at_kw(std::string_view kw) const { return peek().type == Tok::Name && peek().text == kw; }
  bool accept(Tok t) {
    if (!at(t)) return false;
    ++pos_;
    return true;
  }
  bool accept_op(std::string_view op) {
    if (!at_op(op)) return false;
    ++pos_;
    return true;
  }
  bool accept_kw(std::string_view kw) {
    if (!at_kw(kw)) return false;
    ++pos_;
    return true;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    throw SyntaxError(msg, t.line, t.col);
  }
  [[noreturn]] void unsupported(const std::string& what) const { fail("unsupported construct: " + what); }
  void expect_op(std::string_view op) {
    if (!accept_op(op)) fail("expected '" + std::string(op) + "'");
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) fail("expected '" + std::string(kw) + "'");
  }
  std::string expect_name() {
    if (!at(Tok::Name) || kKeywords.count(peek().text)) fail("expected identifier");
    return toks_[pos_++].text;
  }

  // ---- node helpers --------------------------------------------------------
  AstNode node(std::string_view label, std::vector<AstNode> children) {
    if (!g_.find(label)) unsupported(std::string(label));
    return make_node(g_, label, std::move(children));
  }
  AstNode leaf(std::string_view label) { return node(label, {}); }
  static AstNode list(const std::string& kind, std::vector<AstNode> elems) { return make_list(kind, std::move(elems)); }
  static AstNode opt(const std::string& kind, std::optional<AstNode> v) {
    std::vector<AstNode> e;
    if (v) e.push_back(std::move(*v));
    return make_list(kind, std::move(e), true);
  }
  static AstNode ident(std::string s) { return make_terminal("identifier", std::move(s)); }
  static AstNode opt_ident(std::optional<std::string> s) {
    std::vector<AstNode> e;
    if (s) e.push_back(ident(std::move(*s)));
    return make_list("identifier", std::move(e), true);
  }
  AstNode name_expr(std::string id) { return node("Name", {ident(std::move(id))}); }
  std::string label_of(const AstNode& n) const { return n.rule ? g_.rule(*n.rule).label : std::string(); }

  // ---- statements ----------------------------------------------------------
  void statement(std::vector<AstNode>& out) {
    if (at_kw("if")) return out.push_back(if_stmt());
    if (at_kw("while")) return out.push_back(while_stmt());
    if (at_kw("for")) return out.push_back(for_stmt());
    if (at_kw("def")) return out.push_back(funcdef({}));
    if (at_kw("class")) return out.push_back(classdef({}));
    if (at_op("@")) return out.push_back(decorated());
    if (at_kw("try") || at_kw("with") || at_kw("async")) unsupported(peek().text);
    simple_stmt(out);
  }

  void simple_stmt(std::vector<AstNode>& out) {
    out.push_back(small_stmt());
    while (accept_op(";")) {
      if (at(Tok::Newline)) break;
      out.push_back(small_stmt());
    }
    if (!accept(Tok::Newline)) fail("invalid syntax");
  }

  AstNode small_stmt() {
    if (accept_kw("pass")) return leaf("Pass");
    if (accept_kw("break")) return leaf("Break");
    if (accept_kw("continue")) return leaf("Continue");
    if (accept_kw("return")) {
      std::optional<AstNode> v;
      if (!at(Tok::Newline) && !at_op(";")) v = testlist_star();
      return node("Return", {opt("expr", std::move(v))});
    }
    if (accept_kw("del")) {
      AstNode targets = exprlist();
      std::vector<AstNode> items;
      if (label_of(targets) == "Tuple" && !paren_tuple_) {
        items = std::move(targets.children[0].children);
      } else {
        items.push_back(std::move(targets));
      }
      return node("Delete", {list("expr", std::move(items))});
    }
    if (accept_kw("raise")) {
      std::optional<AstNode> v;
      if (!at(Tok::Newline) && !at_op(";")) v = test();
      if (at_kw("from")) unsupported("raise from");
      return node("Raise", {opt("expr", std::move(v))});
    }
    if (accept_kw("global")) {
      std::vector<AstNode> names{ident(expect_name())};
      while (accept_op(",")) names.push_back(ident(expect_name()));
      return node("Global", {list("identifier", std::move(names))});
    }
    if (accept_kw("assert")) {
      AstNode t = test();
      std::optional<AstNode> msg;
      if (accept_op(",")) msg = test();
      return node("Assert", {std::move(t), opt("expr", std::move(msg))});
    }
    if (accept_kw("import")) {
      std::vector<AstNode> names{dotted_alias()};
      while (accept_op(",")) names.push_back(dotted_alias());
      return node("Import", {list("alias", std::move(names))});
    }
    if (accept_kw("from")) {
      if (at_op(".") || at_op("...")) unsupported("relative import");
      std::string module = dotted_name();
      expect_kw("import");
      std::vector<AstNode> names;
      if (accept_op("*")) {
        names.push_back(node("alias", {ident("*"), opt_ident(std::nullopt)}));
      } else {
        bool paren = accept_op("(");
        names.push_back(import_alias());
        while (accept_op(",")) {
          if (paren && at_op(")")) break;
          names.push_back(import_alias());
        }
        if (paren) expect_op(")");
      }
      return node("ImportFrom", {ident(module), list("alias", std::move(names))});
    }
    if (at_kw("nonlocal") || at_kw("yield")) unsupported(peek().text);
    return expr_stmt();
  }

  std::string dotted_name() {
    std::string name = expect_name();
    while (accept_op(".")) name += "." + expect_name();
    return name;
  }
  AstNode dotted_alias() {
    std::string name = dotted_name();
    std::optional<std::string> as;
    if (accept_kw("as")) as = expect_name();
    return node("alias", {ident(name), opt_ident(as)});
  }
  AstNode import_alias() {
    std::string name = expect_name();
    std::optional<std::string> as;
    if (accept_kw("as")) as = expect_name();
    return node("alias", {ident(name), opt_ident(as)});
  }

  AstNode expr_stmt() {
    AstNode first = testlist_star();
    if (at(Tok::Op)) {
      auto aug = kAugOps.find(peek().text);
      if (aug != kAugOps.end()) {
        ++pos_;
        check_target(first, true);
        AstNode value = testlist();
        return node("AugAssign", {std::move(first), leaf(aug->second), std::move(value)});
      }
      if (at_op("=")) {
        std::vector<AstNode> targets{std::move(first)};
        AstNode value;
        while (accept_op("=")) {
          value = testlist_star();
          if (at_op("=")) targets.push_back(std::move(value));
        }
        for (const auto& t : targets) check_target(t, false);
        return node("Assign", {list("expr", std::move(targets)), std::move(value)});
      }
      if (at_op(":")) unsupported("annotated assignment");
    }
    return node("Expr", {std::move(first)});
  }

  void check_target(const AstNode& t, bool aug) const {
    const std::string l = label_of(t);
    if (l == "Name" || l == "Attribute" || l == "Subscript") return;
    if (!aug && (l == "Tuple" || l == "List")) {
      for (const auto& e : t.children[0].children) check_target(e, false);
      return;
    }
    if (!aug && l == "Starred") return;
    fail("cannot assign to expression");
  }

  std::vector<AstNode> block() {
    std::vector<AstNode> body;
    if (!accept(Tok::Newline)) {
      simple_stmt(body);
      return body;
    }
    if (!accept(Tok::Indent)) fail("indentation error: expected an indented block");
    while (!accept(Tok::Dedent)) {
      if (at(Tok::End)) fail("unexpected EOF");
      statement(body);
    }
    return body;
  }

  AstNode if_stmt() {
    ++pos_;  // 'if' or 'elif'
    AstNode cond = namedexpr_test();
    expect_op(":");
    auto body = block();
    std::vector<AstNode> orelse;
    if (at_kw("elif")) {
      orelse.push_back(if_stmt());
    } else if (accept_kw("else")) {
      expect_op(":");
      orelse = block();
    }
    return node("If", {std::move(cond), list("stmt", std::move(body)), list("stmt", std::move(orelse))});
  }

  AstNode while_stmt() {
    expect_kw("while");
    AstNode cond = namedexpr_test();
    expect_op(":");
    auto body = block();
    std::vector<AstNode> orelse;
    if (accept_kw("else")) {
      expect_op(":");
      orelse = block();
    }
    return node("While", {std::move(cond), list("stmt", std::move(body)), list("stmt", std::move(orelse))});
  }

  AstNode for_stmt() {
    expect_kw("for");
    AstNode target = exprlist();
    check_target(target, false);
    expect_kw("in");
    AstNode iter = testlist();
    expect_op(":");
    auto body = block();
    std::vector<AstNode> orelse;
    if (accept_kw("else")) {
      expect_op(":");
      orelse = block();
    }
    return node("For", {std::move(target), std::move(iter), list("stmt", std::move(body)), list("stmt", std::move(orelse))});
  }

  AstNode decorated() {
    std::vector<AstNode> decorators;
    while (accept_op("@")) {
      decorators.push_back(namedexpr_test());
      if (!accept(Tok::Newline)) fail("invalid syntax");
    }
    if (at_kw("def")) return funcdef(std::move(decorators));
    if (at_kw("class")) return classdef(std::move(decorators));
    fail("invalid syntax");
  }

  AstNode funcdef(std::vector<AstNode> decorators) {
    expect_kw("def");
    std::string name = expect_name();
    expect_op("(");
    AstNode args = arguments(")");
    expect_op(")");
    if (at_op("->")) unsupported("return annotation");
    expect_op(":");
    auto body = block();
    return node("FunctionDef",
                {list("expr", std::move(decorators)), ident(name), std::move(args), list("stmt", std::move(body))});
  }

  AstNode classdef(std::vector<AstNode> decorators) {
    if (!decorators.empty()) unsupported("class decorator");
    expect_kw("class");
    std::string name = expect_name();
    std::vector<AstNode> bases;
    std::vector<AstNode> keywords;
    if (accept_op("(")) {
      call_arguments(bases, keywords);
      expect_op(")");
    }
    expect_op(":");
    auto body = block();
    return node("ClassDef", {ident(name), list("expr", std::move(bases)), list("keyword", std::move(keywords)),
                             list("stmt", std::move(body))});
  }

  // Parameter list for def (closer ")") and lambda (closer ":").
  AstNode arguments(std::string_view closer) {
    std::vector<AstNode> args;
    std::vector<AstNode> defaults;
    std::optional<AstNode> vararg;
    std::optional<AstNode> kwarg;
    while (!at_op(closer)) {
      if (at_op("/")) unsupported("positional-only parameters");
      if (accept_op("**")) {
        kwarg = node("arg", {ident(expect_name())});
        if (at_op(":") && closer == ")") unsupported("argument annotation");
      } else if (accept_op("*")) {
        if (vararg || kwarg) fail("invalid syntax");
        if (at_op(",") || at_op(closer)) unsupported("keyword-only arguments");
        vararg = node("arg", {ident(expect_name())});
        if (at_op(":") && closer == ")") unsupported("argument annotation");
      } else {
        if (vararg) unsupported("keyword-only arguments");
        if (kwarg) fail("invalid syntax");
        std::string n = expect_name();
        for (const auto& a : args) {
          if (*a.children[0].token == n) fail("duplicate argument '" + n + "' in function definition");
        }
        if (at_op(":") && closer == ")") unsupported("argument annotation");
        args.push_back(node("arg", {ident(n)}));
        if (accept_op("=")) {
          defaults.push_back(test());
        } else if (!defaults.empty()) {
          fail("non-default argument follows default argument");
        }
      }
      if (!accept_op(",")) break;
    }
    return node("arguments", {list("arg", std::move(args)), list("expr", std::move(defaults)), opt("arg", std::move(vararg)),
                              opt("arg", std::move(kwarg))});
  }

  // ---- expressions ---------------------------------------------------------
  AstNode namedexpr_test() {
    AstNode t = test();
    if (at_op(":=")) unsupported("assignment expression");
    return t;
  }

  AstNode test() {
    if (at_kw("lambda")) return lambdef();
    AstNode body = or_test();
    if (at_op(":=")) unsupported("assignment expression");
    if (accept_kw("if")) {
      AstNode cond = or_test();
      expect_kw("else");
      AstNode orelse = test();
      return node("IfExp", {std::move(cond), std::move(body), std::move(orelse)});
    }
    return body;
  }

  AstNode test_nocond() {
    if (at_kw("lambda")) return lambdef();
    return or_test();
  }

  AstNode lambdef() {
    expect_kw("lambda");
    AstNode args = arguments(":");
    expect_op(":");
    AstNode body = test();
    return node("Lambda", {std::move(args), std::move(body)});
  }

  AstNode bool_chain(std::string_view kw, std::string_view label, AstNode (Parser::*next)()) {
    AstNode first = (this->*next)();
    if (!at_kw(kw)) return first;
    std::vector<AstNode> values{std::move(first)};
    while (accept_kw(kw)) values.push_back((this->*next)());
    return node("BoolOp", {leaf(label), list("expr", std::move(values))});
  }
  AstNode or_test() { return bool_chain("or", "Or", &Parser::and_test); }
  AstNode and_test() { return bool_chain("and", "And", &Parser::not_test); }

  AstNode not_test() {
    if (accept_kw("not")) return node("UnaryOp", {leaf("Not"), not_test()});
    return comparison();
  }

  std::optional<std::string> comp_op() {
    static const std::map<std::string, std::string, std::less<>> ops = {
        {"<", "Lt"}, {">", "Gt"}, {"==", "Eq"}, {">=", "GtE"}, {"<=", "LtE"}, {"!=", "NotEq"}};
    if (at(Tok::Op)) {
      auto it = ops.find(peek().text);
      if (it != ops.end()) {
        ++pos_;
        return it->second;
      }
      return std::nullopt;
    }
    if (accept_kw("in")) return "In";
    if (at_kw("not") && peek(1).type == Tok::Name && peek(1).text == "in") {
      pos_ += 2;
      return "NotIn";
    }
    if (accept_kw("is")) return accept_kw("not") ? "IsNot" : "Is";
    return std::nullopt;
  }

  AstNode comparison() {
    AstNode left = bitor_expr();
    std::vector<AstNode> ops;
    std::vector<AstNode> comparators;
    while (auto op = comp_op()) {
      ops.push_back(leaf(*op));
      comparators.push_back(bitor_expr());
    }
    if (ops.empty()) return left;
    return node("Compare", {std::move(left), list("cmpop", std::move(ops)), list("expr", std::move(comparators))});
  }

  AstNode binary(const std::map<std::string, std::string, std::less<>>& ops, AstNode (Parser::*next)()) {
    AstNode left = (this->*next)();
    while (at(Tok::Op)) {
      auto it = ops.find(peek().text);
      if (it == ops.end()) break;
      ++pos_;
      AstNode right = (this->*next)();
      left = node("BinOp", {std::move(left), leaf(it->second), std::move(right)});
    }
    return left;
  }
  AstNode bitor_expr() {
    static const std::map<std::string, std::string, std::less<>> ops = {{"|", "BitOr"}};
    return binary(ops, &Parser::bitxor_expr);
  }
  AstNode bitxor_expr() {
    static const std::map<std::string, std::string, std::less<>> ops = {{"^", "BitXor"}};
    return binary(ops, &Parser::bitand_expr);
  }
  AstNode bitand_expr() {
    static const std::map<std::string, std::string, std::less<>> ops = {{"&", "BitAnd"}};
    return binary(ops, &Parser::shift_expr);
  }
  AstNode shift_expr() {
    static const std::map<std::string, std::string, std::less<>> ops = {{"<<", "LShift"}, {">>", "RShift"}};
    return binary(ops, &Parser::arith_expr);
  }
  AstNode arith_expr() {
    static const std::map<std::string, std::string, std::less<>> ops = {{"+", "Add"}, {"-", "Sub"}};
    return binary(ops, &Parser::term);
  }
  AstNode term() {
    static const std::map<std::string, std::string, std::less<>> ops = {
        {"*", "Mult"}, {"/", "Div"}, {"//", "FloorDiv"}, {"%", "Mod"}};
    if (at_op("@")) unsupported("matrix multiplication");
    return binary(ops, &Parser::factor);
  }

  AstNode factor() {
    if (accept_op("-")) return node("UnaryOp", {leaf("USub"), factor()});
    if (accept_op("+")) return node("UnaryOp", {leaf("UAdd"), factor()});
    if (accept_op("~")) return node("UnaryOp", {leaf("Invert"), factor()});
    return power();
  }

  AstNode power() {
    if (at_kw("await")) unsupported("await");
    AstNode base = atom_expr();
    if (accept_op("**")) {
      AstNode exp = factor();
      return node("BinOp", {std::move(base), leaf("Pow"), std::move(exp)});
    }
    return base;
  }

  AstNode atom_expr() {
    AstNode e = atom();
    while (true) {
      if (accept_op("(")) {
        std::vector<AstNode> args;
        std::vector<AstNode> keywords;
        call_arguments(args, keywords);
        expect_op(")");
        e = node("Call", {std::move(e), list("expr", std::move(args)), list("keyword", std::move(keywords))});
      } else if (accept_op("[")) {
        AstNode sl = subscript();
        expect_op("]");
        e = node("Subscript", {std::move(e), std::move(sl)});
      } else if (accept_op(".")) {
        std::string attr = expect_name();
        e = node("Attribute", {std::move(e), ident(attr)});
      } else {
        return e;
      }
    }
  }

  void call_arguments(std::vector<AstNode>& args, std::vector<AstNode>& keywords) {
    while (!at_op(")")) {
      if (accept_op("**")) {
        keywords.push_back(node("keyword", {opt_ident(std::nullopt), test()}));
      } else if (accept_op("*")) {
        if (!keywords.empty()) unsupported("starred argument after keyword");
        args.push_back(node("Starred", {test()}));
      } else if (at(Tok::Name) && peek(1).type == Tok::Op && peek(1).text == "=" && !kKeywords.count(peek().text)) {
        std::string k = expect_name();
        ++pos_;
        for (const auto& kw : keywords) {
          if (!kw.children[0].children.empty() && *kw.children[0].children[0].token == k) {
            fail("keyword argument repeated");
          }
        }
        keywords.push_back(node("keyword", {opt_ident(k), test()}));
      } else {
        AstNode a = test();
        if (at_kw("for")) {
          auto gens = comp_for();
          a = node("GeneratorExp", {std::move(a), list("comprehension", std::move(gens))});
          if (!args.empty() || !keywords.empty() || at_op(",")) {
            if (!at_op(")")) fail("Generator expression must be parenthesized");
          }
        }
        if (!keywords.empty()) fail("positional argument follows keyword argument");
        args.push_back(std::move(a));
      }
      if (!accept_op(",")) break;
    }
  }

  AstNode subscript() {
    std::optional<AstNode> lower;
    if (!at_op(":")) {
      AstNode first = test();
      if (at_op(",")) {
        std::vector<AstNode> elts{std::move(first)};
        while (accept_op(",")) {
          if (at_op("]")) break;
          if (at_op(":")) unsupported("extended slice");
          elts.push_back(test());
        }
        return node("Index", {node("Tuple", {list("expr", std::move(elts))})});
      }
      if (!at_op(":")) return node("Index", {std::move(first)});
      lower = std::move(first);
    }
    expect_op(":");
    std::optional<AstNode> upper;
    std::optional<AstNode> step;
    if (!at_op("]") && !at_op(":")) upper = test();
    if (accept_op(":")) {
      if (!at_op("]")) step = test();
    }
    if (at_op(",")) unsupported("extended slice");
    return node("Slice", {opt("expr", std::move(lower)), opt("expr", std::move(upper)), opt("expr", std::move(step))});
  }

  std::vector<AstNode> comp_for() {
    std::vector<AstNode> gens;
    while (accept_kw("for")) {
      AstNode target = exprlist();
      check_target(target, false);
      expect_kw("in");
      AstNode iter = or_test();
      std::vector<AstNode> ifs;
      while (accept_kw("if")) ifs.push_back(test_nocond());
      gens.push_back(node("comprehension", {std::move(target), std::move(iter), list("expr", std::move(ifs))}));
    }
    if (at_kw("async")) unsupported("async comprehension");
    return gens;
  }

  AstNode star_or_test() {
    if (accept_op("*")) return node("Starred", {bitor_expr()});
    return test();
  }

  // testlist_star_expr / testlist: tuple when a comma appears.
  AstNode testlist_star() { return sequence(&Parser::star_or_test, {"=", ")", "]", "}", ":", ";"}); }
  AstNode testlist() { return sequence(&Parser::test, {"=", ")", "]", "}", ":", ";"}); }
  AstNode exprlist() {
    return sequence(&Parser::star_or_bitor, {"=", ")", "]", "}", ":", ";"}, true);
  }
  AstNode star_or_bitor() {
    if (accept_op("*")) return node("Starred", {bitor_expr()});
    return bitor_expr();
  }

  AstNode sequence(AstNode (Parser::*item)(), std::initializer_list<std::string_view> stops, bool stop_in = false) {
    paren_tuple_ = false;
    AstNode first = (this->*item)();
    if (!at_op(",")) return first;
    std::vector<AstNode> elts{std::move(first)};
    while (accept_op(",")) {
      if (at(Tok::Newline) || at(Tok::End) || (stop_in && at_kw("in"))) break;
      bool stop = false;
      for (auto s : stops) stop = stop || at_op(s);
      if (stop) break;
      elts.push_back((this->*item)());
    }
    paren_tuple_ = false;
    return node("Tuple", {list("expr", std::move(elts))});
  }

  AstNode atom() {
    const Token& t = peek();
    switch (t.type) {
      case Tok::Number:
        ++pos_;
        return node("Num", {make_terminal("number", t.text)});
      case Tok::String: {
        std::string value;
        bool bytes = false;
        bool first = true;
        while (at(Tok::String)) {
          bool b = toks_[pos_].text.find_first_of("bB") != std::string::npos;
          if (!first && b != bytes) fail("cannot mix bytes and nonbytes literals");
          bytes = b;
          first = false;
          value += toks_[pos_++].value;
        }
        if (bytes) unsupported("bytes literal");
        return node("Str", {make_terminal("string", value)});
      }
      case Tok::Name: {
        if (t.text == "True" || t.text == "False" || t.text == "None") {
          ++pos_;
          return leaf(t.text);
        }
        if (t.text == "yield" || t.text == "await") unsupported(t.text);
        if (kKeywords.count(t.text)) fail("invalid syntax");
        ++pos_;
        return name_expr(t.text);
      }
      case Tok::Op:
        break;
      default:
        fail(t.type == Tok::Indent ? "indentation error: unexpected indent" : "invalid syntax");
    }
    if (accept_op("(")) {
      if (accept_op(")")) return node("Tuple", {list("expr", {})});
      AstNode first = star_or_test();
      if (at_kw("for")) {
        auto gens = comp_for();
        expect_op(")");
        return node("GeneratorExp", {std::move(first), list("comprehension", std::move(gens))});
      }
      if (accept_op(")")) {
        if (label_of(first) == "Starred") fail("can't use starred expression here");
        return first;
      }
      std::vector<AstNode> elts{std::move(first)};
      while (accept_op(",")) {
        if (at_op(")")) break;
        elts.push_back(star_or_test());
      }
      expect_op(")");
      paren_tuple_ = true;
      return node("Tuple", {list("expr", std::move(elts))});
    }
    if (accept_op("[")) {
      std::vector<AstNode> elts;
      if (accept_op("]")) return node("List", {list("expr", {})});
      AstNode first = star_or_test();
      if (at_kw("for")) {
        auto gens = comp_for();
        expect_op("]");
        return node("ListComp", {std::move(first), list("comprehension", std::move(gens))});
      }
      elts.push_back(std::move(first));
      while (accept_op(",")) {
        if (at_op("]")) break;
        elts.push_back(star_or_test());
      }
      expect_op("]");
      return node("List", {list("expr", std::move(elts))});
    }
    if (accept_op("{")) {
      std::vector<AstNode> keys;
      std::vector<AstNode> values;
      while (!at_op("}")) {
        if (at_op("**")) unsupported("dict unpacking");
        keys.push_back(test());
        if (!accept_op(":")) unsupported("set literal");
        values.push_back(test());
        if (at_kw("for")) unsupported("dict comprehension");
        if (!accept_op(",")) break;
      }
      expect_op("}");
      return node("Dict", {list("expr", std::move(keys)), list("expr", std::move(values))});
    }
    if (at_op("...")) unsupported("Ellipsis");
    fail("invalid syntax");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const Grammar& g_;
  bool paren_tuple_ = false;
};

}  // namespace

bool is_python_keyword(std::string_view word) { return kKeywords.count(word) > 0; }

AstNode parse_to_ast(std::string_view source, const Grammar& grammar) {
  return Parser(detail::lex_python(source), grammar).file();
}

}  // namespace cgt
