#include "cgt/grammar.hpp"

#include <fstream>
#include <sstream>

#include "cgt/errors.hpp"

namespace cgt {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

}  // namespace

std::string ChildSpec::slot_kind() const {
  switch (cardinality) {
    case Cardinality::List:
      return kind + "*";
    case Cardinality::Optional:
      return kind + "?";
    case Cardinality::One:
      break;
  }
  return kind;
}

Grammar Grammar::parse(std::string_view text) {
  Grammar g;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw GrammarFormatError("grammar line " + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '%') {
      auto words = split_ws(line);
      if (words[0] == "%root" && words.size() == 2) {
        g.root_kind_ = words[1];
      } else if (words[0] == "%terminal") {
        for (std::size_t i = 1; i < words.size(); ++i) g.terminal_kinds_.insert(words[i]);
      } else {
        fail("unknown directive '" + words[0] + "'");
      }
      continue;
    }

    const auto arrow = line.find("->");
    if (arrow == std::string_view::npos) fail("missing '->'");
    std::string_view lhs = trim(line.substr(0, arrow));
    std::string_view rhs = trim(line.substr(arrow + 2));

    Rule rule;
    rule.id = static_cast<int>(g.rules_.size());
    if (auto colon = lhs.find(':'); colon != std::string_view::npos) {
      rule.label = std::string(trim(lhs.substr(0, colon)));
      rule.head = std::string(trim(lhs.substr(colon + 1)));
    } else {
      rule.head = std::string(lhs);
      rule.label = rule.head;
    }
    if (!valid_name(rule.head)) fail("bad head kind '" + rule.head + "'");
    if (!valid_name(rule.label)) fail("bad rule label '" + rule.label + "'");

    if (!rhs.empty()) {
      std::size_t start = 0;
      while (start <= rhs.size()) {
        auto comma = rhs.find(',', start);
        std::string_view item = trim(rhs.substr(start, comma == std::string_view::npos ? rhs.npos : comma - start));
        if (item.empty()) fail("empty child specification");
        auto words = split_ws(item);
        if (words.size() > 2) fail("child specification '" + std::string(item) + "'");
        ChildSpec child;
        std::string kind = words[0];
        if (kind.back() == '*') {
          child.cardinality = Cardinality::List;
          kind.pop_back();
        } else if (kind.back() == '?') {
          child.cardinality = Cardinality::Optional;
          kind.pop_back();
        }
        if (!valid_name(kind)) fail("bad child kind '" + kind + "'");
        child.kind = kind;
        child.field = words.size() == 2 ? words[1] : kind;
        rule.children.push_back(std::move(child));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
    }

    if (g.by_label_.count(rule.label)) throw DuplicateRule("duplicate rule '" + rule.label + "'");
    g.by_label_[rule.label] = rule.id;
    g.by_head_[rule.head].push_back(rule.id);
    g.node_kinds_.insert(rule.head);
    g.rules_.push_back(std::move(rule));
  }

  if (g.rules_.empty() && g.terminal_kinds_.empty()) throw GrammarFormatError("grammar has no rules");
  if (g.root_kind_.empty()) {
    if (g.rules_.empty()) throw GrammarFormatError("grammar without rules needs %root");
    g.root_kind_ = g.rules_.front().head;
  }
  for (const auto& k : g.node_kinds_) {
    if (g.terminal_kinds_.count(k)) throw GrammarFormatError("kind '" + k + "' is both terminal and non-terminal");
  }
  if (!g.is_nonterminal(g.root_kind_) && !g.is_terminal(g.root_kind_)) {
    throw UnknownKind("root kind '" + g.root_kind_ + "' is never defined");
  }
  for (const auto& r : g.rules_) {
    for (const auto& c : r.children) {
      if (!g.is_nonterminal(c.kind) && !g.is_terminal(c.kind)) {
        throw UnknownKind("rule '" + r.label + "' uses undefined kind '" + c.kind + "'");
      }
    }
  }

  int next = g.rule_output_count();
  g.slot_offset_.reserve(g.rules_.size());
  for (const auto& r : g.rules_) {
    g.slot_offset_.push_back(next);
    next += static_cast<int>(r.children.size());
  }
  g.symbol_count_ = next + 1;
  return g;
}

Grammar Grammar::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GrammarFormatError("cannot open grammar file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const Rule& Grammar::rule(int id) const {
  if (id < 0 || id >= size()) throw IllegalExpansion("rule id " + std::to_string(id) + " out of range");
  return rules_[static_cast<std::size_t>(id)];
}

bool Grammar::is_terminal(std::string_view kind) const { return terminal_kinds_.count(std::string(kind)) > 0; }

bool Grammar::is_nonterminal(std::string_view kind) const { return by_head_.find(kind) != by_head_.end(); }

const std::vector<int>& Grammar::rules_for(std::string_view kind) const {
  static const std::vector<int> none;
  auto it = by_head_.find(kind);
  return it == by_head_.end() ? none : it->second;
}

std::optional<int> Grammar::find(std::string_view label) const {
  auto it = by_label_.find(label);
  if (it == by_label_.end()) return std::nullopt;
  return it->second;
}

int Grammar::require(std::string_view label) const {
  auto id = find(label);
  if (!id) throw UnknownKind("grammar has no rule '" + std::string(label) + "'");
  return *id;
}

int Grammar::slot_symbol(int rule_id, int child_index) const {
  return slot_offset_.at(static_cast<std::size_t>(rule_id)) + child_index;
}

std::string Grammar::to_text() const {
  std::ostringstream out;
  out << "%root " << root_kind_ << "\n";
  if (!terminal_kinds_.empty()) {
    out << "%terminal";
    for (const auto& t : terminal_kinds_) out << ' ' << t;
    out << "\n";
  }
  for (const auto& r : rules_) {
    if (r.label != r.head) out << r.label << " : ";
    out << r.head << " ->";
    for (std::size_t i = 0; i < r.children.size(); ++i) {
      const auto& c = r.children[i];
      out << (i ? ", " : " ") << c.slot_kind() << ' ' << c.field;
    }
    out << "\n";
  }
  return out.str();
}

const Grammar& python_grammar() {
  static const Grammar g = Grammar::parse(python_grammar_text());
  return g;
}

}  // namespace cgt
