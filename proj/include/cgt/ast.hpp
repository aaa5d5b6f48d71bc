#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cgt/grammar.hpp"

namespace cgt {

/// A node of a (possibly partial) abstract syntax tree.
///
/// Three shapes share this struct:
///  - non-terminal node: `kind` is a non-terminal; `rule` is set once expanded.
///  - terminal leaf: `kind` is a terminal kind; `token` is set once filled.
///  - list node: `kind` ends in `*` or `?`; holds the elements and is
///    `closed` once the end rule has been applied.
struct AstNode {
  std::string kind;
  std::optional<int> rule;
  std::optional<std::string> token;
  std::vector<AstNode> children;
  bool closed = false;

  bool is_list() const { return !kind.empty() && (kind.back() == '*' || kind.back() == '?'); }
  bool is_optional() const { return !kind.empty() && kind.back() == '?'; }
  std::string element_kind() const { return is_list() ? kind.substr(0, kind.size() - 1) : kind; }

  bool operator==(const AstNode&) const = default;
};

/// An unexpanded node created by `kind` slot (unexpanded non-terminal,
/// unfilled terminal or open list).
AstNode make_slot(const std::string& kind);

struct Action {
  enum class Type { ApplyRule, FillTerminal };
  Type type = Type::ApplyRule;
  int rule = 0;
  std::string token;

  static Action apply(int rule_id) { return {Type::ApplyRule, rule_id, {}}; }
  static Action fill(std::string tok) { return {Type::FillTerminal, 0, std::move(tok)}; }
  bool is_rule() const { return type == Type::ApplyRule; }
  bool operator==(const Action&) const = default;
};

struct RuleSequence {
  std::vector<Action> actions;
  bool partial = false;

  std::size_t size() const { return actions.size(); }
  bool empty() const { return actions.empty(); }
  bool operator==(const RuleSequence&) const = default;
};

/// One line per action: `R<id>` or `T<escaped token>`.
std::string format_rule_sequence(const RuleSequence& seq);
RuleSequence parse_rule_sequence(const std::string& text);

/// Child-index path from the root to a node.
using NodeRef = std::vector<int>;

struct PathNode {
  std::string kind;
  int child_index = 0;
  std::string label;
  int symbol = 0;
  bool operator==(const PathNode&) const = default;
};

struct TreePath {
  std::vector<PathNode> nodes;

  std::size_t size() const { return nodes.size(); }
  std::vector<std::string> labels() const;
  std::vector<int> symbols() const;
};

const AstNode& node_at(const AstNode& root, const NodeRef& ref);
AstNode& node_at(AstNode& root, const NodeRef& ref);

/// Leftmost depth-first unexpanded node, or nullopt for a complete tree.
std::optional<NodeRef> find_frontier(const AstNode& tree);
/// Same as find_frontier but throws NoFrontier when the tree is complete.
NodeRef frontier(const AstNode& tree);
bool is_complete(const AstNode& tree);

TreePath tree_path(const AstNode& tree, const NodeRef& node, const Grammar& grammar);

/// Pre-order serialization. Throws IncompleteTree for partial trees.
RuleSequence ast_to_rules(const AstNode& tree, const Grammar& grammar);

/// Incremental replay of actions onto a partial tree.
class TreeReplayer {
 public:
  explicit TreeReplayer(const Grammar& grammar);

  /// Throws IllegalExpansion when the action does not fit the frontier.
  void apply(const Action& action);
  bool can_apply(const Action& action) const;

  const AstNode& tree() const { return tree_; }
  AstNode take() && { return std::move(tree_); }
  bool complete() const { return !frontier_.has_value(); }
  const std::optional<NodeRef>& frontier() const { return frontier_; }
  /// Kind of the frontier node (`expr`, `stmt*`, `identifier`).
  const std::string& frontier_kind() const;

 private:
  const Grammar* grammar_;
  AstNode tree_;
  std::optional<NodeRef> frontier_;
};

/// Replays `rules` from a root slot. Partial sequences produce a partial
/// tree (check with is_complete / find_frontier).
AstNode rules_to_ast(const RuleSequence& rules, const Grammar& grammar);

/// Builds a node expanded by the rule named `label`, checking child shapes.
AstNode make_node(const Grammar& grammar, std::string_view label, std::vector<AstNode> children);
AstNode make_list(const std::string& elem_kind, std::vector<AstNode> elems, bool optional = false);
AstNode make_terminal(const std::string& kind, std::string token);

/// Human-readable indented dump, mainly for diagnostics.
std::string debug_string(const AstNode& tree, const Grammar& grammar);

}  // namespace cgt
