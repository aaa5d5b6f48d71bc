#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cgt {

enum class Cardinality { One, List, Optional };

struct ChildSpec {
  std::string kind;
  Cardinality cardinality = Cardinality::One;
  std::string field;

  /// Kind of the tree node that holds this child: `expr`, `expr*` or `expr?`.
  std::string slot_kind() const;
};

struct Rule {
  int id = 0;
  std::string label;
  std::string head;
  std::vector<ChildSpec> children;
};

/// Production rules of an object language.
///
/// Rules are densely numbered 0..size()-1 in declaration order. One extra
/// pseudo-rule id, end_rule_id(), closes list and optional children; it is
/// not part of rules().
class Grammar {
 public:
  /// Parses the plain-text grammar format:
  ///
  ///     %root root
  ///     %terminal identifier number string
  ///     [Label :] Head -> kind[*|?] [field], ...
  ///
  /// Throws GrammarFormatError, DuplicateRule or UnknownKind.
  static Grammar parse(std::string_view text);
  static Grammar load(const std::string& path);

  const std::vector<Rule>& rules() const { return rules_; }
  const Rule& rule(int id) const;
  int size() const { return static_cast<int>(rules_.size()); }

  int end_rule_id() const { return size(); }
  /// Number of rule-valued decoder outputs (rules plus the end rule).
  int rule_output_count() const { return size() + 1; }

  const std::string& root_kind() const { return root_kind_; }
  const std::set<std::string>& node_kinds() const { return node_kinds_; }
  const std::set<std::string>& terminal_kinds() const { return terminal_kinds_; }
  bool is_terminal(std::string_view kind) const;
  bool is_nonterminal(std::string_view kind) const;

  /// Rules whose head is `kind`, in id order.
  const std::vector<int>& rules_for(std::string_view kind) const;
  std::optional<int> find(std::string_view label) const;
  int require(std::string_view label) const;

  /// Symbols name tree-path positions for the decoder: one per rule (an
  /// expanded node), one per (rule, child) slot, plus the unexpanded root.
  int symbol_count() const { return symbol_count_; }
  int slot_symbol(int rule_id, int child_index) const;
  int root_symbol() const { return symbol_count_ - 1; }

  /// Text in the same format accepted by parse().
  std::string to_text() const;

 private:
  std::vector<Rule> rules_;
  std::string root_kind_;
  std::set<std::string> node_kinds_;
  std::set<std::string> terminal_kinds_;
  std::map<std::string, std::vector<int>, std::less<>> by_head_;
  std::map<std::string, int, std::less<>> by_label_;
  std::vector<int> slot_offset_;
  int symbol_count_ = 0;
};

/// The bundled Python-subset grammar.
const Grammar& python_grammar();
std::string_view python_grammar_text();

}  // namespace cgt
