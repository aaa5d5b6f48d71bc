#include <cctype>
#include <map>
#include <sstream>

#include "cgt/errors.hpp"
#include "cgt/python_codec.hpp"
#include "python_lexer.hpp"

namespace cgt {

namespace {

enum Prec {
  kTuple = 0,
  kLambda = 1,
  kTest = kLambda,
  kIfExp = 2,
  kOr = 3,
  kAnd = 4,
  kNot = 5,
  kCmp = 6,
  kBitOr = 7,
  kBitXor = 8,
  kBitAnd = 9,
  kShift = 10,
  kArith = 11,
  kTerm = 12,
  kUnary = 13,
  kPower = 14,
  kAtom = 16,
};

const std::map<std::string, std::pair<std::string, int>, std::less<>> kBinOps = {
    {"Add", {"+", kArith}},     {"Sub", {"-", kArith}},     {"Mult", {"*", kTerm}},     {"Div", {"/", kTerm}},
    {"FloorDiv", {"//", kTerm}}, {"Mod", {"%", kTerm}},      {"Pow", {"**", kPower}},    {"LShift", {"<<", kShift}},
    {"RShift", {">>", kShift}}, {"BitOr", {"|", kBitOr}},   {"BitXor", {"^", kBitXor}}, {"BitAnd", {"&", kBitAnd}}};

const std::map<std::string, std::string, std::less<>> kCmpOps = {
    {"Eq", "=="}, {"NotEq", "!="}, {"Lt", "<"},      {"LtE", "<="}, {"Gt", ">"},
    {"GtE", ">="}, {"Is", "is"},   {"IsNot", "is not"}, {"In", "in"}, {"NotIn", "not in"}};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20 || c == 0x7f) {
          static const char* hex = "0123456789abcdef";
          out += "\\x";
          out += hex[c >> 4];
          out += hex[c & 15];
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + "\"";
}

class Printer {
 public:
  explicit Printer(const Grammar& g) : g_(g) {}

  std::string module(const AstNode& root) {
    const AstNode* mod = &root;
    if (label(*mod) != "Module") mod = &root.children.at(0);
    if (label(*mod) != "Module") throw IncompleteTree("tree has no Module");
    block(mod->children.at(0), 0, true);
    return out_.str();
  }

 private:
  std::string label(const AstNode& n) const {
    if (n.is_list()) {
      if (!n.closed) throw IncompleteTree("open list of kind " + n.kind);
      return {};
    }
    if (g_.is_terminal(n.kind)) {
      if (!n.token) throw IncompleteTree("unfilled terminal of kind " + n.kind);
      return {};
    }
    if (!n.rule) throw IncompleteTree("unexpanded node of kind " + n.kind);
    return g_.rule(*n.rule).label;
  }

  static const AstNode& child(const AstNode& n, int i) { return n.children.at(static_cast<std::size_t>(i)); }
  const std::string& token(const AstNode& n) const {
    label(n);
    return *n.token;
  }
  const std::vector<AstNode>& elems(const AstNode& list) const {
    label(list);
    return list.children;
  }
  const AstNode* optional(const AstNode& list) const {
    const auto& e = elems(list);
    return e.empty() ? nullptr : &e.front();
  }

  // ---- statements ----------------------------------------------------------
  void line(int indent, const std::string& text) { out_ << std::string(static_cast<std::size_t>(indent) * 4, ' ') << text << '\n'; }

  void block(const AstNode& stmts, int indent, bool top = false) {
    const auto& body = elems(stmts);
    if (body.empty()) {
      if (!top) line(indent, "pass");
      return;
    }
    bool prev_def = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      const std::string l = label(body[i]);
      const bool is_def = l == "FunctionDef" || l == "ClassDef";
      if (i > 0 && (is_def || prev_def)) out_ << '\n';
      statement(body[i], indent);
      prev_def = is_def;
    }
  }

  void statement(const AstNode& s, int indent) {
    const std::string l = label(s);
    if (l == "FunctionDef") {
      for (const auto& d : elems(child(s, 0))) line(indent, "@" + expr(d, kTest));
      line(indent, "def " + token(child(s, 1)) + "(" + arguments(child(s, 2)) + "):");
      block(child(s, 3), indent + 1);
    } else if (l == "ClassDef") {
      std::string head = "class " + token(child(s, 0));
      std::vector<std::string> parts;
      for (const auto& b : elems(child(s, 1))) parts.push_back(expr(b, kTest));
      for (const auto& k : elems(child(s, 2))) parts.push_back(keyword(k));
      if (!parts.empty()) head += "(" + join(parts, ", ") + ")";
      line(indent, head + ":");
      block(child(s, 3), indent + 1);
    } else if (l == "If") {
      if_chain(s, indent, "if ");
    } else if (l == "While") {
      line(indent, "while " + expr(child(s, 0), kTest) + ":");
      block(child(s, 1), indent + 1);
      else_block(child(s, 2), indent);
    } else if (l == "For") {
      line(indent, "for " + target_list(child(s, 0)) + " in " + tuple_or_expr(child(s, 1)) + ":");
      block(child(s, 2), indent + 1);
      else_block(child(s, 3), indent);
    } else {
      line(indent, simple(s, l));
    }
  }

  void if_chain(const AstNode& s, int indent, const std::string& kw) {
    line(indent, kw + expr(child(s, 0), kTest) + ":");
    block(child(s, 1), indent + 1);
    const auto& orelse = elems(child(s, 2));
    if (orelse.size() == 1 && label(orelse[0]) == "If") {
      if_chain(orelse[0], indent, "elif ");
    } else {
      else_block(child(s, 2), indent);
    }
  }

  void else_block(const AstNode& stmts, int indent) {
    if (elems(stmts).empty()) return;
    line(indent, "else:");
    block(stmts, indent + 1);
  }

  std::string simple(const AstNode& s, const std::string& l) {
    if (l == "Pass") return "pass";
    if (l == "Break") return "break";
    if (l == "Continue") return "continue";
    if (l == "Expr") return tuple_or_expr(child(s, 0), true);
    if (l == "Return") {
      const AstNode* v = optional(child(s, 0));
      return v ? "return " + tuple_or_expr(*v, true) : "return";
    }
    if (l == "Raise") {
      const AstNode* v = optional(child(s, 0));
      return v ? "raise " + expr(*v, kTest) : "raise";
    }
    if (l == "Assign") {
      std::string text;
      for (const auto& t : elems(child(s, 0))) text += target_list(t) + " = ";
      return text + tuple_or_expr(child(s, 1), true);
    }
    if (l == "AugAssign") {
      const std::string op = kBinOps.at(label(child(s, 1))).first;
      return expr(child(s, 0), kTest) + " " + op + "= " + tuple_or_expr(child(s, 2));
    }
    if (l == "Delete") {
      std::vector<std::string> parts;
      for (const auto& t : elems(child(s, 0))) parts.push_back(expr(t, kTest));
      return "del " + join(parts, ", ");
    }
    if (l == "Assert") {
      std::string text = "assert " + expr(child(s, 0), kTest);
      if (const AstNode* m = optional(child(s, 1))) text += ", " + expr(*m, kTest);
      return text;
    }
    if (l == "Global") {
      std::vector<std::string> parts;
      for (const auto& n : elems(child(s, 0))) parts.push_back(token(n));
      return "global " + join(parts, ", ");
    }
    if (l == "Import") return "import " + aliases(child(s, 0));
    if (l == "ImportFrom") return "from " + token(child(s, 0)) + " import " + aliases(child(s, 1));
    throw IncompleteTree("not a statement: " + l);
  }

  std::string aliases(const AstNode& list) {
    std::vector<std::string> parts;
    for (const auto& a : elems(list)) {
      std::string text = token(child(a, 0));
      if (const AstNode* as = optional(child(a, 1))) text += " as " + token(*as);
      parts.push_back(text);
    }
    return join(parts, ", ");
  }

  std::string arguments(const AstNode& a) {
    std::vector<std::string> parts;
    const auto& args = elems(child(a, 0));
    const auto& defaults = elems(child(a, 1));
    const std::size_t first_default = args.size() >= defaults.size() ? args.size() - defaults.size() : 0;
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string text = token(child(args[i], 0));
      if (i >= first_default) text += "=" + expr(defaults[i - first_default], kTest);
      parts.push_back(text);
    }
    if (const AstNode* v = optional(child(a, 2))) parts.push_back("*" + token(child(*v, 0)));
    if (const AstNode* k = optional(child(a, 3))) parts.push_back("**" + token(child(*k, 0)));
    return join(parts, ", ");
  }

  std::string keyword(const AstNode& k) {
    if (const AstNode* name = optional(child(k, 0))) return token(*name) + "=" + expr(child(k, 1), kTest);
    return "**" + expr(child(k, 1), kTest);
  }

  // Bare tuple where the grammar allows one (assignment targets, for, return).
  std::string target_list(const AstNode& e) { return tuple_or_expr(e); }
  std::string tuple_or_expr(const AstNode& e, bool allow_star = false) {
    (void)allow_star;
    if (label(e) == "Tuple" && elems(child(e, 0)).size() > 1) return tuple_items(e);
    return expr(e, kTest);
  }
  std::string tuple_items(const AstNode& e) {
    const auto& items = elems(child(e, 0));
    std::vector<std::string> parts;
    for (const auto& x : items) parts.push_back(expr(x, kTest));
    std::string text = join(parts, ", ");
    if (items.size() == 1) text += ",";
    return text;
  }

  // ---- expressions ---------------------------------------------------------
  static std::string paren(const std::string& s, bool wrap) { return wrap ? "(" + s + ")" : s; }

  std::string expr(const AstNode& e, int need) {
    const std::string l = label(e);
    if (l == "Name") return token(child(e, 0));
    if (l == "Num") return token(child(e, 0));
    if (l == "Str") return quote(token(child(e, 0)));
    if (l == "True" || l == "False" || l == "None") return l;
    if (l == "Tuple") return "(" + tuple_items(e) + ")";
    if (l == "List") {
      std::vector<std::string> parts;
      for (const auto& x : elems(child(e, 0))) parts.push_back(expr(x, kTest));
      return "[" + join(parts, ", ") + "]";
    }
    if (l == "Dict") {
      const auto& keys = elems(child(e, 0));
      const auto& values = elems(child(e, 1));
      std::vector<std::string> parts;
      for (std::size_t i = 0; i < keys.size() && i < values.size(); ++i) {
        parts.push_back(expr(keys[i], kTest) + ": " + expr(values[i], kTest));
      }
      return "{" + join(parts, ", ") + "}";
    }
    if (l == "ListComp") return "[" + expr(child(e, 0), kTest) + comprehensions(child(e, 1)) + "]";
    if (l == "GeneratorExp") return "(" + expr(child(e, 0), kTest) + comprehensions(child(e, 1)) + ")";
    if (l == "Starred") return "*" + expr(child(e, 0), kBitOr);
    if (l == "Attribute") return trailer_base(child(e, 0)) + "." + token(child(e, 1));
    if (l == "Subscript") return trailer_base(child(e, 0)) + "[" + slice(child(e, 1)) + "]";
    if (l == "Call") {
      std::vector<std::string> parts;
      const auto& args = elems(child(e, 1));
      const auto& kws = elems(child(e, 2));
      for (const auto& a : args) {
        if (label(a) == "GeneratorExp" && args.size() == 1 && kws.empty()) {
          parts.push_back(expr(child(a, 0), kTest) + comprehensions(child(a, 1)));
        } else {
          parts.push_back(expr(a, kTest));
        }
      }
      for (const auto& k : kws) parts.push_back(keyword(k));
      return trailer_base(child(e, 0)) + "(" + join(parts, ", ") + ")";
    }
    if (l == "Lambda") {
      std::string args = arguments(child(e, 0));
      std::string text = "lambda" + (args.empty() ? std::string() : " " + args) + ": " + expr(child(e, 1), kTest);
      return paren(text, need > kLambda);
    }
    if (l == "IfExp") {
      std::string text = expr(child(e, 1), kOr) + " if " + expr(child(e, 0), kOr) + " else " + expr(child(e, 2), kTest);
      return paren(text, need > kIfExp);
    }
    if (l == "BoolOp") {
      const bool is_or = label(child(e, 0)) == "Or";
      const int p = is_or ? kOr : kAnd;
      std::vector<std::string> parts;
      for (const auto& v : elems(child(e, 1))) parts.push_back(expr(v, p + 1));
      return paren(join(parts, is_or ? " or " : " and "), need > p);
    }
    if (l == "UnaryOp") {
      const std::string op = label(child(e, 0));
      if (op == "Not") return paren("not " + expr(child(e, 1), kNot), need > kNot);
      const std::string sym = op == "USub" ? "-" : op == "UAdd" ? "+" : "~";
      return paren(sym + expr(child(e, 1), kUnary), need > kUnary);
    }
    if (l == "Compare") {
      std::string text = expr(child(e, 0), kCmp + 1);
      const auto& ops = elems(child(e, 1));
      const auto& rhs = elems(child(e, 2));
      for (std::size_t i = 0; i < ops.size() && i < rhs.size(); ++i) {
        text += " " + kCmpOps.at(label(ops[i])) + " " + expr(rhs[i], kCmp + 1);
      }
      return paren(text, need > kCmp);
    }
    if (l == "BinOp") {
      const auto& [sym, p] = kBinOps.at(label(child(e, 1)));
      std::string text;
      if (p == kPower) {
        text = expr(child(e, 0), kAtom - 1) + " ** " + expr(child(e, 2), kUnary);
      } else {
        text = expr(child(e, 0), p) + " " + sym + " " + expr(child(e, 2), p + 1);
      }
      return paren(text, need > p);
    }
    throw IncompleteTree("not an expression: " + l);
  }

  // Primary for attribute/subscript/call: atoms and other trailers only.
  std::string trailer_base(const AstNode& e) {
    const std::string l = label(e);
    if (l == "Num") return "(" + expr(e, kAtom) + ")";
    return expr(e, kAtom - 1);
  }

  std::string slice(const AstNode& s) {
    if (label(s) == "Index") {
      const AstNode& v = child(s, 0);
      if (label(v) == "Tuple" && !elems(child(v, 0)).empty()) return tuple_items(v);
      return expr(v, kTest);
    }
    std::string text;
    if (const AstNode* lo = optional(child(s, 0))) text += expr(*lo, kTest);
    text += ":";
    if (const AstNode* hi = optional(child(s, 1))) text += expr(*hi, kTest);
    if (const AstNode* st = optional(child(s, 2))) text += ":" + expr(*st, kTest);
    return text;
  }

  std::string comprehensions(const AstNode& gens) {
    std::string text;
    for (const auto& c : elems(gens)) {
      text += " for " + comp_target(child(c, 0)) + " in " + expr(child(c, 1), kOr);
      for (const auto& cond : elems(child(c, 2))) text += " if " + expr(cond, kOr);
    }
    return text;
  }
  std::string comp_target(const AstNode& t) {
    if (label(t) == "Tuple" && !elems(child(t, 0)).empty()) return tuple_items(t);
    return expr(t, kBitOr);
  }

  static std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i) out += sep;
      out += parts[i];
    }
    return out;
  }

  const Grammar& g_;
  std::ostringstream out_;
};

bool valid_identifier(std::string_view t) {
  if (t.empty() || is_python_keyword(t)) return false;
  auto c0 = static_cast<unsigned char>(t[0]);
  if (!(std::isalpha(c0) || c0 == '_' || c0 >= 0x80)) return false;
  for (unsigned char c : t) {
    if (!(std::isalnum(c) || c == '_' || c >= 0x80)) return false;
  }
  return true;
}

bool valid_number(std::string_view t) {
  if (t.empty() || !(std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '.')) return false;
  try {
    auto toks = detail::lex_python(t);
    return toks.size() == 3 && toks[0].type == detail::Tok::Number && toks[0].text == t;
  } catch (const SyntaxError&) {
    return false;
  }
}

}  // namespace

std::string ast_to_code(const AstNode& tree, const Grammar& grammar) { return Printer(grammar).module(tree); }

bool valid_terminal(std::string_view kind, std::string_view token) {
  if (kind == "identifier") {
    if (token == "*") return true;
    std::size_t start = 0;
    while (true) {
      std::size_t dot = token.find('.', start);
      if (!valid_identifier(token.substr(start, dot - start))) return false;
      if (dot == std::string_view::npos) return true;
      start = dot + 1;
    }
  }
  if (kind == "number") return valid_number(token);
  if (kind == "string") return true;
  return false;
}

std::string normalize_whitespace(std::string_view code) {
  std::string out;
  bool space = false;
  for (char c : code) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
    } else {
      if (space) out += ' ';
      space = false;
      out += c;
    }
  }
  return out;
}

}  // namespace cgt
