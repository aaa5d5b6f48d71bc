#include "cgt/ast.hpp"

#include <sstream>

#include "cgt/errors.hpp"

namespace cgt {

AstNode make_slot(const std::string& kind) {
  AstNode n;
  n.kind = kind;
  return n;
}

namespace {

std::string escape_token(const std::string& tok) {
  std::string out;
  for (char c : tok) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_token(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    switch (s[++i]) {
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 't': out += '\t'; break;
      default: out += s[i];
    }
  }
  return out;
}

AstNode expanded(const Rule& rule) {
  AstNode n;
  n.kind = rule.head;
  n.rule = rule.id;
  n.children.reserve(rule.children.size());
  for (const auto& c : rule.children) n.children.push_back(make_slot(c.slot_kind()));
  return n;
}

bool search_frontier(const AstNode& n, NodeRef& path) {
  if (n.is_list()) {
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      path.push_back(static_cast<int>(i));
      if (search_frontier(n.children[i], path)) return true;
      path.pop_back();
    }
    return !n.closed;
  }
  if (n.token) return false;
  if (!n.rule) return true;
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    if (search_frontier(n.children[i], path)) return true;
    path.pop_back();
  }
  return false;
}

void serialize(const AstNode& n, int end_rule, std::vector<Action>& out) {
  if (n.is_list()) {
    if (!n.closed) throw IncompleteTree("open list node '" + n.kind + "'");
    for (const auto& c : n.children) serialize(c, end_rule, out);
    out.push_back(Action::apply(end_rule));
    return;
  }
  if (n.token) {
    out.push_back(Action::fill(*n.token));
    return;
  }
  if (!n.rule) throw IncompleteTree("unexpanded node '" + n.kind + "'");
  out.push_back(Action::apply(*n.rule));
  for (const auto& c : n.children) serialize(c, end_rule, out);
}

}  // namespace

std::string format_rule_sequence(const RuleSequence& seq) {
  std::string out;
  for (const auto& a : seq.actions) {
    out += a.is_rule() ? "R" + std::to_string(a.rule) : "T" + escape_token(a.token);
    out += '\n';
  }
  return out;
}

RuleSequence parse_rule_sequence(const std::string& text) {
  RuleSequence seq;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == 'R') {
      try {
        seq.actions.push_back(Action::apply(std::stoi(line.substr(1))));
      } catch (const std::exception&) {
        throw GrammarFormatError("bad rule action '" + line + "'");
      }
    } else if (line[0] == 'T') {
      seq.actions.push_back(Action::fill(unescape_token(std::string_view(line).substr(1))));
    } else {
      throw GrammarFormatError("bad action line '" + line + "'");
    }
  }
  return seq;
}

std::vector<std::string> TreePath::labels() const {
  std::vector<std::string> out;
  for (const auto& n : nodes) out.push_back(n.label);
  return out;
}

std::vector<int> TreePath::symbols() const {
  std::vector<int> out;
  for (const auto& n : nodes) out.push_back(n.symbol);
  return out;
}

const AstNode& node_at(const AstNode& root, const NodeRef& ref) {
  const AstNode* n = &root;
  for (int i : ref) n = &n->children.at(static_cast<std::size_t>(i));
  return *n;
}

AstNode& node_at(AstNode& root, const NodeRef& ref) {
  AstNode* n = &root;
  for (int i : ref) n = &n->children.at(static_cast<std::size_t>(i));
  return *n;
}

std::optional<NodeRef> find_frontier(const AstNode& tree) {
  NodeRef path;
  if (search_frontier(tree, path)) return path;
  return std::nullopt;
}

NodeRef frontier(const AstNode& tree) {
  auto f = find_frontier(tree);
  if (!f) throw NoFrontier("tree is complete");
  return *f;
}

bool is_complete(const AstNode& tree) { return !find_frontier(tree).has_value(); }

TreePath tree_path(const AstNode& tree, const NodeRef& node, const Grammar& grammar) {
  TreePath path;
  const AstNode* cur = &tree;
  // Slot info for the current node: (rule that owns it, child index) of the
  // nearest non-list ancestor.
  int owner_rule = -1;
  int owner_child = 0;

  auto describe = [&](const AstNode& n, int child_index) {
    PathNode p;
    p.kind = n.kind;
    p.child_index = child_index;
    if (!n.is_list() && n.rule) {
      p.label = grammar.rule(*n.rule).label;
      p.symbol = *n.rule;
    } else if (owner_rule >= 0) {
      p.label = grammar.rule(owner_rule).children.at(static_cast<std::size_t>(owner_child)).field;
      p.symbol = grammar.slot_symbol(owner_rule, owner_child);
    } else {
      p.label = n.kind;
      p.symbol = grammar.root_symbol();
    }
    return p;
  };

  path.nodes.push_back(describe(*cur, 0));
  for (int idx : node) {
    if (!cur->is_list()) {
      if (!cur->rule) throw IllegalExpansion("path descends through an unexpanded node");
      owner_rule = *cur->rule;
      owner_child = idx;
    }
    cur = &cur->children.at(static_cast<std::size_t>(idx));
    path.nodes.push_back(describe(*cur, idx));
  }
  return path;
}

RuleSequence ast_to_rules(const AstNode& tree, const Grammar& grammar) {
  RuleSequence seq;
  serialize(tree, grammar.end_rule_id(), seq.actions);
  return seq;
}

TreeReplayer::TreeReplayer(const Grammar& grammar) : grammar_(&grammar), tree_(make_slot(grammar.root_kind())) {
  frontier_ = NodeRef{};
}

const std::string& TreeReplayer::frontier_kind() const {
  if (!frontier_) throw NoFrontier("tree is complete");
  return node_at(tree_, *frontier_).kind;
}

bool TreeReplayer::can_apply(const Action& action) const {
  if (!frontier_) return false;
  const AstNode& f = node_at(tree_, *frontier_);
  const Grammar& g = *grammar_;
  if (f.is_list()) {
    const std::string elem = f.element_kind();
    if (action.is_rule() && action.rule == g.end_rule_id()) return true;
    if (f.is_optional() && !f.children.empty()) return false;
    if (action.is_rule()) {
      return action.rule >= 0 && action.rule < g.size() && g.rule(action.rule).head == elem;
    }
    return g.is_terminal(elem);
  }
  if (g.is_terminal(f.kind)) return !action.is_rule();
  return action.is_rule() && action.rule >= 0 && action.rule < g.size() && g.rule(action.rule).head == f.kind;
}

void TreeReplayer::apply(const Action& action) {
  if (!frontier_) throw IllegalExpansion("tree is already complete");
  if (!can_apply(action)) {
    const AstNode& f = node_at(tree_, *frontier_);
    std::string what = action.is_rule()
                           ? (action.rule >= 0 && action.rule < grammar_->size() ? "rule '" + grammar_->rule(action.rule).label + "'"
                              : action.rule == grammar_->end_rule_id()           ? std::string("end rule")
                                                                                 : "rule id " + std::to_string(action.rule))
                           : "terminal '" + action.token + "'";
    throw IllegalExpansion(what + " cannot expand frontier of kind '" + f.kind + "'");
  }
  AstNode& f = node_at(tree_, *frontier_);
  if (f.is_list()) {
    if (action.is_rule() && action.rule == grammar_->end_rule_id()) {
      f.closed = true;
    } else if (action.is_rule()) {
      f.children.push_back(expanded(grammar_->rule(action.rule)));
    } else {
      f.children.push_back(make_terminal(f.element_kind(), action.token));
    }
  } else if (action.is_rule()) {
    f = expanded(grammar_->rule(action.rule));
  } else {
    f.token = action.token;
  }
  frontier_ = find_frontier(tree_);
}

AstNode rules_to_ast(const RuleSequence& rules, const Grammar& grammar) {
  TreeReplayer replay(grammar);
  for (const auto& a : rules.actions) replay.apply(a);
  return std::move(replay).take();
}

AstNode make_node(const Grammar& grammar, std::string_view label, std::vector<AstNode> children) {
  const Rule& r = grammar.rule(grammar.require(label));
  if (children.size() != r.children.size()) {
    throw IllegalExpansion("rule '" + r.label + "' expects " + std::to_string(r.children.size()) + " children, got " +
                           std::to_string(children.size()));
  }
  for (std::size_t i = 0; i < children.size(); ++i) {
    const auto expected = r.children[i].slot_kind();
    if (children[i].kind != expected) {
      throw IllegalExpansion("rule '" + r.label + "' child '" + r.children[i].field + "' expects kind '" + expected +
                             "', got '" + children[i].kind + "'");
    }
  }
  AstNode n;
  n.kind = r.head;
  n.rule = r.id;
  n.children = std::move(children);
  return n;
}

AstNode make_list(const std::string& elem_kind, std::vector<AstNode> elems, bool optional) {
  AstNode n;
  n.kind = elem_kind + (optional ? "?" : "*");
  n.closed = true;
  n.children = std::move(elems);
  return n;
}

AstNode make_terminal(const std::string& kind, std::string token) {
  AstNode n;
  n.kind = kind;
  n.token = std::move(token);
  return n;
}

namespace {
void dump(const AstNode& n, const Grammar& g, int depth, std::ostringstream& out) {
  out << std::string(static_cast<std::size_t>(depth) * 2, ' ') << n.kind;
  if (n.rule) out << " [" << g.rule(*n.rule).label << "]";
  if (n.token) out << " = '" << *n.token << "'";
  if (n.is_list() && !n.closed) out << " (open)";
  if (!n.is_list() && !n.rule && !n.token) out << " (unexpanded)";
  out << '\n';
  for (const auto& c : n.children) dump(c, g, depth + 1, out);
}
}  // namespace

std::string debug_string(const AstNode& tree, const Grammar& grammar) {
  std::ostringstream out;
  dump(tree, grammar, 0, out);
  return out.str();
}

}  // namespace cgt
