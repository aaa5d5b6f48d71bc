#include <algorithm>
#include <map>
#include <memory>
#include <random>
#include <set>

#include "cgt/corpus.hpp"
#include "cgt/errors.hpp"
#include "cgt/python_codec.hpp"

namespace cgt {

namespace {

const std::vector<std::string> kFunctionNames = {"compute", "combine", "scale", "shift", "blend",
                                                 "mix",     "measure", "adjust", "score", "merge"};
const std::vector<std::string> kParamNames = {"a", "b", "c", "x", "y", "n", "m", "k"};
const std::vector<std::string> kLocalNames = {"t", "u", "total", "acc"};

struct Expr {
  enum class Kind { Var, Const, Add, Sub, Mul };
  Kind kind = Kind::Const;
  std::string name;
  long value = 0;
  std::unique_ptr<Expr> lhs;
  std::unique_ptr<Expr> rhs;
};

struct Program {
  std::string name;
  std::vector<std::string> params;
  std::string local;
  std::unique_ptr<Expr> local_value;
  std::unique_ptr<Expr> cond_lhs;
  std::string cond_op;  // "<", ">", "=="
  std::unique_ptr<Expr> cond_rhs;
  std::unique_ptr<Expr> early;
  std::unique_ptr<Expr> result;
};

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::unique_ptr<Expr> leaf(Rng& rng, const std::vector<std::string>& vars) {
  auto e = std::make_unique<Expr>();
  if (!vars.empty() && pick(rng, 3) != 0) {
    e->kind = Expr::Kind::Var;
    e->name = vars[pick(rng, vars.size())];
  } else {
    e->kind = Expr::Kind::Const;
    e->value = static_cast<long>(1 + pick(rng, 9));
  }
  return e;
}

std::unique_ptr<Expr> random_expr(Rng& rng, const std::vector<std::string>& vars, int depth) {
  if (depth == 0 || pick(rng, 3) == 0) return leaf(rng, vars);
  auto e = std::make_unique<Expr>();
  static const Expr::Kind ops[] = {Expr::Kind::Add, Expr::Kind::Sub, Expr::Kind::Mul};
  e->kind = ops[pick(rng, 3)];
  e->lhs = random_expr(rng, vars, depth - 1);
  e->rhs = random_expr(rng, vars, depth - 1);
  return e;
}

long eval(const Expr& e, const std::map<std::string, long>& env) {
  switch (e.kind) {
    case Expr::Kind::Var: return env.at(e.name);
    case Expr::Kind::Const: return e.value;
    case Expr::Kind::Add: return eval(*e.lhs, env) + eval(*e.rhs, env);
    case Expr::Kind::Sub: return eval(*e.lhs, env) - eval(*e.rhs, env);
    case Expr::Kind::Mul: return eval(*e.lhs, env) * eval(*e.rhs, env);
  }
  return 0;
}

long run(const Program& p, const std::vector<long>& args) {
  std::map<std::string, long> env;
  for (std::size_t i = 0; i < p.params.size(); ++i) env[p.params[i]] = args[i];
  if (p.local_value) env[p.local] = eval(*p.local_value, env);
  if (p.cond_lhs) {
    long l = eval(*p.cond_lhs, env);
    long r = eval(*p.cond_rhs, env);
    bool taken = p.cond_op == "<" ? l < r : p.cond_op == ">" ? l > r : l == r;
    if (taken) return eval(*p.early, env);
  }
  return eval(*p.result, env);
}

// Fully parenthesized source; the canonical printer removes redundant parentheses.
std::string source(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Var: return e.name;
    case Expr::Kind::Const: return std::to_string(e.value);
    case Expr::Kind::Add: return "(" + source(*e.lhs) + " + " + source(*e.rhs) + ")";
    case Expr::Kind::Sub: return "(" + source(*e.lhs) + " - " + source(*e.rhs) + ")";
    case Expr::Kind::Mul: return "(" + source(*e.lhs) + " * " + source(*e.rhs) + ")";
  }
  return {};
}

std::string words(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Var: return e.name;
    case Expr::Kind::Const: return std::to_string(e.value);
    case Expr::Kind::Add: return "the sum of " + words(*e.lhs) + " and " + words(*e.rhs);
    case Expr::Kind::Sub: return "the difference of " + words(*e.lhs) + " and " + words(*e.rhs);
    case Expr::Kind::Mul: return "the product of " + words(*e.lhs) + " and " + words(*e.rhs);
  }
  return {};
}

std::string join_words(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : " , ";
    out += items[i];
  }
  return out;
}

Program random_program(Rng& rng) {
  Program p;
  p.name = kFunctionNames[pick(rng, kFunctionNames.size())];
  std::vector<std::string> pool = kParamNames;
  std::shuffle(pool.begin(), pool.end(), rng);
  p.params.assign(pool.begin(), pool.begin() + static_cast<long>(1 + pick(rng, 3)));
  std::vector<std::string> vars = p.params;
  if (pick(rng, 2) == 0) {
    p.local = kLocalNames[pick(rng, kLocalNames.size())];
    p.local_value = random_expr(rng, vars, 2);
    vars.push_back(p.local);
  }
  if (pick(rng, 2) == 0) {
    static const char* ops[] = {"<", ">", "=="};
    p.cond_op = ops[pick(rng, 3)];
    p.cond_lhs = leaf(rng, vars);
    p.cond_rhs = leaf(rng, vars);
    p.early = random_expr(rng, vars, 1);
  }
  p.result = random_expr(rng, vars, 2);
  return p;
}

std::string program_source(const Program& p) {
  std::string params;
  for (std::size_t i = 0; i < p.params.size(); ++i) params += (i ? ", " : "") + p.params[i];
  std::string src = "def " + p.name + "(" + params + "):\n";
  if (p.local_value) src += "    " + p.local + " = " + source(*p.local_value) + "\n";
  if (p.cond_lhs) {
    src += "    if " + source(*p.cond_lhs) + " " + p.cond_op + " " + source(*p.cond_rhs) + ":\n";
    src += "        return " + source(*p.early) + "\n";
  }
  src += "    return " + source(*p.result) + "\n";
  return src;
}

std::string describe(const Program& p) {
  std::string d = "define " + p.name + " with " + (p.params.size() == 1 ? "parameter " : "parameters ") +
                  join_words(p.params) + " .";
  if (p.local_value) d += " let " + p.local + " be " + words(*p.local_value) + " .";
  if (p.cond_lhs) {
    static const std::map<std::string, std::string> cmp = {
        {"<", "is less than"}, {">", "is greater than"}, {"==", "equals"}};
    d += " if " + words(*p.cond_lhs) + " " + cmp.at(p.cond_op) + " " + words(*p.cond_rhs) + " , return " +
         words(*p.early) + " .";
  }
  d += " return " + words(*p.result) + " .";
  return d;
}

std::string test_program(const Program& p, Rng& rng) {
  std::string out;
  for (int call = 0; call < 3; ++call) {
    std::vector<long> args;
    std::string arg_text;
    for (std::size_t i = 0; i < p.params.size(); ++i) {
      args.push_back(static_cast<long>(pick(rng, 10)));
      arg_text += (i ? ", " : "") + std::to_string(args.back());
    }
    const std::string expected = std::to_string(run(p, args));
    out += "_r = " + p.name + "(" + arg_text + ")\n";
    out += "assert _r == " + expected + ", \"%r != %r\" % (_r, " + expected + ")\n";
  }
  return out;
}

}  // namespace

Corpus generate_synthetic_corpus(const Grammar& grammar, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("synthetic corpus size must be at least 1");
  Rng rng(seed);
  Corpus c;
  c.split = "synthetic";
  std::set<std::string> seen;
  int attempts = 0;
  while (static_cast<int>(c.samples.size()) < n) {
    Program p = random_program(rng);
    const std::string code = ast_to_code(parse_to_ast(program_source(p), grammar), grammar);
    if (!seen.insert(code).second && ++attempts < 100 * n) continue;
    RawSample s;
    s.id = "syn-" + std::to_string(c.samples.size());
    s.nl = describe(p);
    s.code = code;
    s.test_unit.kind = TestUnitSpec::Kind::Assertions;
    s.test_unit.payload = test_program(p, rng);
    c.samples.push_back(std::move(s));
  }
  return c;
}

}  // namespace cgt
