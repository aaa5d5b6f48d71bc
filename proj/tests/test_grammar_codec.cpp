#include <gtest/gtest.h>

#include <random>

#include "cgt/ast.hpp"
#include "cgt/errors.hpp"
#include "cgt/grammar.hpp"
#include "cgt/python_codec.hpp"
#include "tree_gen.hpp"

namespace {

using namespace cgt;

const Grammar& g() { return python_grammar(); }

std::vector<std::string> rule_labels(const RuleSequence& seq) {
  std::vector<std::string> out;
  for (const auto& a : seq.actions) {
    if (!a.is_rule()) {
      out.push_back("T:" + a.token);
    } else if (a.rule == g().end_rule_id()) {
      out.push_back("End");
    } else {
      out.push_back(g().rule(a.rule).label);
    }
  }
  return out;
}

TEST(Grammar, BundledGrammarInvariants) {
  const Grammar& gr = g();
  for (int i = 0; i < gr.size(); ++i) {
    EXPECT_EQ(gr.rule(i).id, i);
    EXPECT_TRUE(gr.node_kinds().count(gr.rule(i).head)) << gr.rule(i).label;
  }
  EXPECT_EQ(gr.root_kind(), "root");
  EXPECT_TRUE(gr.is_terminal("identifier"));
  EXPECT_EQ(gr.end_rule_id(), gr.size());
}

TEST(Grammar, MinimalSpecHasOneRule) {
  Grammar gr = Grammar::parse("%root s\n%terminal word\ns -> word w\n");
  EXPECT_EQ(gr.size(), 1);
  EXPECT_EQ(gr.rule(0).head, "s");
}

TEST(Grammar, DuplicateLabelRejected) {
  EXPECT_THROW(Grammar::parse("%root s\nA : s ->\nA : s ->\n"), DuplicateRule);
}

TEST(Grammar, UndefinedChildKindRejected) {
  EXPECT_THROW(Grammar::parse("%root s\ns -> thing x\n"), UnknownKind);
}

TEST(Grammar, MalformedLineRejected) {
  EXPECT_THROW(Grammar::parse("%root s\ns = x\n"), GrammarFormatError);
}

TEST(Grammar, TextRoundTrip) {
  Grammar again = Grammar::parse(g().to_text());
  ASSERT_EQ(again.size(), g().size());
  for (int i = 0; i < g().size(); ++i) {
    EXPECT_EQ(again.rule(i).label, g().rule(i).label);
    EXPECT_EQ(again.rule(i).children.size(), g().rule(i).children.size());
  }
}

TEST(Codec, ListAssignmentSequence) {
  AstNode tree = parse_to_ast("mylist = [0]\n");
  RuleSequence seq = ast_to_rules(tree, g());
  std::vector<std::string> expected = {"root", "Module", "Assign", "Name", "T:mylist", "End",
                                       "List", "Num",    "T:0",    "End",  "End"};
  EXPECT_EQ(rule_labels(seq), expected);
  EXPECT_EQ(rules_to_ast(seq, g()), tree);
  EXPECT_EQ(ast_to_code(tree), "mylist = [0]\n");
}

TEST(Codec, EmptyModule) {
  AstNode tree = parse_to_ast("");
  EXPECT_TRUE(is_complete(tree));
  EXPECT_EQ(rule_labels(ast_to_rules(tree, g())), (std::vector<std::string>{"root", "Module", "End"}));
  EXPECT_EQ(ast_to_code(tree), "");
}

TEST(Codec, TerminalOnlyGrammar) {
  Grammar toy = Grammar::parse("%root word\n%terminal word\n");
  AstNode leaf = make_terminal("word", "hello");
  RuleSequence seq = ast_to_rules(leaf, toy);
  ASSERT_EQ(seq.size(), 1u);
  EXPECT_FALSE(seq.actions[0].is_rule());
  EXPECT_EQ(rules_to_ast(seq, toy), leaf);
}

TEST(Codec, SyntaxErrorCarriesLocation) {
  try {
    parse_to_ast("x = (1,\ny = 2\n");
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_GE(e.line(), 1);
  }
  EXPECT_THROW(parse_to_ast("x =\n"), SyntaxError);
  EXPECT_THROW(parse_to_ast("def f(:\n"), SyntaxError);
  EXPECT_THROW(parse_to_ast("  x = 1\n"), SyntaxError);
}

TEST(Codec, UnsupportedConstructsRejected) {
  EXPECT_THROW(parse_to_ast("try:\n    pass\nexcept E:\n    pass\n"), SyntaxError);
  EXPECT_THROW(parse_to_ast("x = {1, 2}\n"), SyntaxError);
  EXPECT_THROW(parse_to_ast("with a as b:\n    pass\n"), SyntaxError);
}

TEST(Codec, IncompleteTreeRejected) {
  RuleSequence seq;
  seq.actions = {Action::apply(g().require("root")), Action::apply(g().require("Module"))};
  AstNode partial = rules_to_ast(seq, g());
  EXPECT_THROW(ast_to_rules(partial, g()), IncompleteTree);
  EXPECT_THROW(ast_to_code(partial), IncompleteTree);
}

TEST(Codec, CardStyleProgramRoundTrip) {
  const std::string src =
      "class AcidicSwampOoze(MinionCard):\n"
      "    def __init__(self):\n"
      "        super().__init__(\"Acidic Swamp Ooze\", 2, CHARACTER_CLASS.ALL, CARD_RARITY.COMMON,"
      " battlecry=Battlecry(Destroy(), WeaponSelector(EnemyPlayer())))\n"
      "\n"
      "    def create_minion(self, player):\n"
      "        return Minion(3, 2)\n";
  AstNode tree = parse_to_ast(src);
  EXPECT_EQ(ast_to_code(tree), src);
  EXPECT_EQ(rules_to_ast(ast_to_rules(tree, g()), g()), tree);
}

struct Snippet {
  const char* source;
  const char* canonical;
};

class Canonical : public ::testing::TestWithParam<Snippet> {};

TEST_P(Canonical, ReprintsAndReparses) {
  AstNode tree = parse_to_ast(GetParam().source);
  const std::string code = ast_to_code(tree);
  EXPECT_EQ(code, GetParam().canonical);
  EXPECT_EQ(parse_to_ast(code), tree);
}

INSTANTIATE_TEST_SUITE_P(
    Snippets, Canonical,
    ::testing::Values(
        Snippet{"x=(1+2)*3\n", "x = (1 + 2) * 3\n"}, Snippet{"x = 1 - (2 - 3)\n", "x = 1 - (2 - 3)\n"},
        Snippet{"x = (1 - 2) - 3\n", "x = 1 - 2 - 3\n"}, Snippet{"x = 2 ** 3 ** 2\n", "x = 2 ** 3 ** 2\n"},
        Snippet{"x = (2 ** 3) ** 2\n", "x = (2 ** 3) ** 2\n"}, Snippet{"x = -2 ** 2\n", "x = -2 ** 2\n"},
        Snippet{"x = (-2) ** 2\n", "x = (-2) ** 2\n"}, Snippet{"x = not a == b\n", "x = not a == b\n"},
        Snippet{"x = (a or b) and c\n", "x = (a or b) and c\n"}, Snippet{"x = a < b < c\n", "x = a < b < c\n"},
        Snippet{"x = (a < b) < c\n", "x = (a < b) < c\n"}, Snippet{"x = a if b else c\n", "x = a if b else c\n"},
        Snippet{"x = (a if b else c) if d else e\n", "x = (a if b else c) if d else e\n"},
        Snippet{"f(lambda: 1, k=lambda y: y)\n", "f(lambda: 1, k=lambda y: y)\n"},
        Snippet{"x = 'it\\'s'\n", "x = \"it's\"\n"}, Snippet{"x = 'a' 'b'\n", "x = \"ab\"\n"},
        Snippet{"x = (1).real\n", "x = (1).real\n"}, Snippet{"x = a[1, 3]\n", "x = a[1, 3]\n"},
        Snippet{"x = a[::2]\n", "x = a[::2]\n"}, Snippet{"x = a[1,]\n", "x = a[1,]\n"},
        Snippet{"x = (1,)\n", "x = (1,)\n"}, Snippet{"a, b = b, a\n", "a, b = b, a\n"},
        Snippet{"for i, j in pairs: pass\n", "for i, j in pairs:\n    pass\n"},
        Snippet{"x = [i * 2 for i in range(3) if i if i > 0]\n", "x = [i * 2 for i in range(3) if i if i > 0]\n"},
        Snippet{"x = sum(i for i in y)\n", "x = sum(i for i in y)\n"},
        Snippet{"x = {'a': 1, 2: [3]}\n", "x = {\"a\": 1, 2: [3]}\n"},
        Snippet{"if a:\n  x = 1\nelif b:\n  x = 2\nelse:\n  x = 3\n",
                "if a:\n    x = 1\nelif b:\n    x = 2\nelse:\n    x = 3\n"},
        Snippet{"while x: x -= 1\n", "while x:\n    x -= 1\n"},
        Snippet{"import a.b as c, d\nfrom e import (f, g as h)\nfrom i import *\n",
                "import a.b as c, d\nfrom e import f, g as h\nfrom i import *\n"},
        Snippet{"def f(a, b=1, *args, **kw):\n    global z\n    del a, b\n    assert a, 'm'\n    raise E(1)\n",
                "def f(a, b=1, *args, **kw):\n    global z\n    del a, b\n    assert a, \"m\"\n    raise E(1)\n"},
        Snippet{"@dec\ndef f(): return\nclass C(B, metaclass=M): pass\n",
                "@dec\ndef f():\n    return\n\nclass C(B, metaclass=M):\n    pass\n"},
        Snippet{"x = f(*a, **k)\n", "x = f(*a, **k)\n"}, Snippet{"x = ~a & b | c ^ d << 1\n", "x = ~a & b | c ^ d << 1\n"},
        Snippet{"x = a is not None and b not in c\n", "x = a is not None and b not in c\n"},
        Snippet{"x = 1; y = 2\n", "x = 1\ny = 2\n"}, Snippet{"x = y = 0\n", "x = y = 0\n"},
        Snippet{"x = (yield_)\n", "x = yield_\n"}, Snippet{"x = 0x1F + 1.5e3 + 2j\n", "x = 0x1F + 1.5e3 + 2j\n"}));

TEST(Frontier, RootOnlyTree) {
  AstNode root = rules_to_ast({}, g());
  EXPECT_EQ(frontier(root), NodeRef{});
  EXPECT_EQ(tree_path(root, {}, g()).labels(), std::vector<std::string>{"root"});
}

TEST(Frontier, CompleteTreeHasNone) {
  EXPECT_THROW(frontier(parse_to_ast("x = 1\n")), NoFrontier);
}

TEST(Frontier, ValueAfterTargets) {
  // root, Module, Assign, Name, T(mylist), End closes targets; value is next.
  RuleSequence full = ast_to_rules(parse_to_ast("mylist = [0]\n"), g());
  RuleSequence prefix;
  prefix.actions.assign(full.actions.begin(), full.actions.begin() + 6);
  AstNode partial = rules_to_ast(prefix, g());
  NodeRef f = frontier(partial);
  EXPECT_EQ(f, (NodeRef{0, 0, 0, 1}));
  EXPECT_EQ(node_at(partial, f).kind, "expr");
  EXPECT_EQ(tree_path(partial, f, g()).labels().back(), "value");
}

TEST(Frontier, PathToAssignment) {
  RuleSequence seq;
  seq.actions = {Action::apply(g().require("root")), Action::apply(g().require("Module")),
                 Action::apply(g().require("Assign"))};
  AstNode partial = rules_to_ast(seq, g());
  TreePath p = tree_path(partial, {0, 0, 0}, g());
  EXPECT_EQ(p.labels(), (std::vector<std::string>{"root", "Module", "body", "Assign"}));
  EXPECT_EQ(p.nodes.front().kind, "root");
}

TEST(Frontier, IllegalExpansionRejected) {
  TreeReplayer r(g());
  EXPECT_THROW(r.apply(Action::apply(g().require("Assign"))), IllegalExpansion);
  EXPECT_THROW(r.apply(Action::fill("x")), IllegalExpansion);
  RuleSequence bad;
  bad.actions = {Action::apply(g().require("Name"))};
  EXPECT_THROW(rules_to_ast(bad, g()), IllegalExpansion);
}

TEST(RuleFile, FormatRoundTrip) {
  RuleSequence seq;
  seq.actions = {Action::apply(3), Action::fill("a b\\c\nd\t"), Action::fill(""), Action::apply(0)};
  EXPECT_EQ(parse_rule_sequence(format_rule_sequence(seq)), seq);
  EXPECT_EQ(format_rule_sequence(seq).substr(0, 3), "R3\n");
}

TEST(Property, RandomTreesRoundTripThroughRules) {
  std::mt19937_64 rng(20240601);
  for (int i = 0; i < 500; ++i) {
    AstNode t = testing_support::random_tree(g(), rng);
    ASSERT_TRUE(is_complete(t));
    RuleSequence seq = ast_to_rules(t, g());
    ASSERT_EQ(rules_to_ast(seq, g()), t) << "tree " << i;
    EXPECT_EQ(ast_to_rules(t, g()), seq);
  }
}

TEST(Property, EveryPrefixIsAValidPartialTree) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 60; ++i) {
    AstNode t = testing_support::random_tree(g(), rng);
    RuleSequence seq = ast_to_rules(t, g());
    TreeReplayer r(g());
    for (std::size_t k = 0; k < seq.size(); ++k) {
      ASSERT_FALSE(r.complete());
      ASSERT_TRUE(r.can_apply(seq.actions[k]));
      r.apply(seq.actions[k]);
      if (!r.complete()) {
        NodeRef f = *r.frontier();
        EXPECT_EQ(tree_path(r.tree(), f, g()).size(), f.size() + 1);
      }
    }
    EXPECT_TRUE(r.complete());
    EXPECT_EQ(r.tree(), t);
  }
}

TEST(Property, PathLengthIsDepthPlusOne) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 40; ++i) {
    AstNode t = testing_support::random_tree(g(), rng);
    std::vector<NodeRef> refs;
    testing_support::collect_refs(t, {}, refs);
    for (const auto& ref : refs) {
      // Independent depth oracle: count parent hops back to the root.
      NodeRef walk = ref;
      std::size_t depth = 0;
      while (!walk.empty()) {
        walk.pop_back();
        ++depth;
      }
      EXPECT_EQ(tree_path(t, ref, g()).size(), depth + 1);
    }
  }
}

}  // namespace
