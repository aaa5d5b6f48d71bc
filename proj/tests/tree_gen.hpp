#pragma once

// Grammar-driven random tree generator used as a test oracle.

#include <random>
#include <string>
#include <vector>

#include "cgt/ast.hpp"
#include "cgt/grammar.hpp"

namespace testing_support {

inline std::string random_token(const std::string& kind, std::mt19937_64& rng) {
  static const std::vector<std::string> names = {"x", "y", "foo", "Minion", "self", "player", "damage"};
  static const std::vector<std::string> strings = {"", "a b", "quote\"d", "line\nbreak", "tab\there"};
  if (kind == "number") return std::to_string(rng() % 1000);
  if (kind == "string") return strings[rng() % strings.size()];
  return names[rng() % names.size()];
}

inline cgt::AstNode random_tree_of(const cgt::Grammar& g, const std::string& kind, int depth, std::mt19937_64& rng) {
  if (g.is_terminal(kind)) return cgt::make_terminal(kind, random_token(kind, rng));
  const auto& candidates = g.rules_for(kind);
  std::vector<int> pool;
  for (int id : candidates) {
    bool leafy = true;
    for (const auto& c : g.rule(id).children) {
      if (c.cardinality == cgt::Cardinality::One && g.is_nonterminal(c.kind)) leafy = false;
    }
    if (depth < 6 || leafy) pool.push_back(id);
  }
  if (pool.empty()) pool = candidates;
  const cgt::Rule& rule = g.rule(pool[rng() % pool.size()]);
  std::vector<cgt::AstNode> children;
  for (const auto& c : rule.children) {
    if (c.cardinality == cgt::Cardinality::One) {
      children.push_back(random_tree_of(g, c.kind, depth + 1, rng));
      continue;
    }
    const int max_elems = c.cardinality == cgt::Cardinality::Optional ? 1 : (depth < 5 ? 3 : 1);
    const int n = static_cast<int>(rng() % static_cast<unsigned>(max_elems + 1));
    std::vector<cgt::AstNode> elems;
    for (int i = 0; i < n; ++i) elems.push_back(random_tree_of(g, c.kind, depth + 1, rng));
    children.push_back(cgt::make_list(c.kind, std::move(elems), c.cardinality == cgt::Cardinality::Optional));
  }
  return cgt::make_node(g, rule.label, std::move(children));
}

inline cgt::AstNode random_tree(const cgt::Grammar& g, std::mt19937_64& rng) {
  return random_tree_of(g, g.root_kind(), 0, rng);
}

inline void collect_refs(const cgt::AstNode& n, cgt::NodeRef at, std::vector<cgt::NodeRef>& out) {
  out.push_back(at);
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    cgt::NodeRef next = at;
    next.push_back(static_cast<int>(i));
    collect_refs(n.children[i], next, out);
  }
}

}  // namespace testing_support
