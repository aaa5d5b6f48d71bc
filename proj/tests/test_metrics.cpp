#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cgt/errors.hpp"
#include "cgt/metrics.hpp"
#include "cgt/python_codec.hpp"
#include "metric_fixtures.hpp"
#include "model_support.hpp"

using namespace cgt;
using testing_support::bleu_cases;

namespace {

TestResult result(bool passed) {
  TestResult r;
  r.passed = passed;
  r.category = passed ? Category::OK : Category::AssertionError;
  return r;
}

}  // namespace

TEST(TestAcc, AllPass) {
  EXPECT_EQ(test_acc({result(true), result(true)}), (Fraction{2, 2}));
  EXPECT_EQ(test_acc({result(true), result(true)}).value(), 1.0);
}

TEST(TestAcc, ThreeOfEight) {
  std::vector<TestResult> rs;
  for (int i = 0; i < 8; ++i) rs.push_back(result(i == 1 || i == 4 || i == 6));
  const Fraction f = test_acc(rs);
  EXPECT_EQ(f, (Fraction{3, 8}));
  EXPECT_EQ(f.value(), 0.375);
}

TEST(TestAcc, PublishedSplitArithmetic) {
  std::vector<TestResult> rs;
  for (int i = 0; i < 66; ++i) rs.push_back(result(i < 29));
  const Fraction f = test_acc(rs);
  EXPECT_EQ(f, (Fraction{29, 66}));
  EXPECT_NEAR(100.0 * f.value(), 43.9, 0.05);
}

TEST(TestAcc, EmptyListThrows) { EXPECT_THROW(test_acc({}), ShapeError); }

TEST(Bleu, IdenticalIsHundred) {
  EXPECT_DOUBLE_EQ(bleu("def f(x):\n    return x + 1\n", "def f(x):\n    return x + 1\n"), 100.0);
  EXPECT_DOUBLE_EQ(bleu("x", "x"), 100.0);
}

TEST(Bleu, DisjointIsZero) { EXPECT_EQ(bleu("a b c d", "e f g h"), 0.0); }

TEST(Bleu, EmptyCandidateIsZero) { EXPECT_EQ(bleu("", "a b c d"), 0.0); }

TEST(Bleu, BrevityPenalty) {
  // Every n-gram of the candidate matches; only the length differs.
  EXPECT_NEAR(bleu("a b c d", "a b c d e f g h"), 100.0 * std::exp(1.0 - 8.0 / 4.0), 1e-12);
  // Longer candidate: no penalty, precisions 4/8, 3/7, 2/6, 1/5.
  const double geo = std::exp((std::log(4.0 / 8) + std::log(3.0 / 7) + std::log(2.0 / 6) + std::log(1.0 / 5)) / 4);
  EXPECT_NEAR(bleu("a b c d e f g h", "a b c d"), 100.0 * geo, 1e-12);
}

TEST(Bleu, SentenceScoresMatchReferenceImplementation) {
  for (const auto& c : bleu_cases()) {
    EXPECT_NEAR(bleu(c.candidate, c.reference), c.sentence_bleu, 0.1) << c.candidate;
  }
}

TEST(Bleu, CorpusScoreMatchesReferenceImplementation) {
  std::vector<std::string> cands, refs;
  for (const auto& c : bleu_cases()) {
    cands.push_back(c.candidate);
    refs.push_back(c.reference);
  }
  EXPECT_NEAR(bleu(cands, refs), testing_support::kBleuCorpusReference, 0.1);
}

TEST(Bleu, CodeTokensSplitPunctuation) {
  EXPECT_EQ(code_tokens("self.health-=2"), (std::vector<std::string>{"self", ".", "health", "-", "=", "2"}));
  EXPECT_EQ(code_tokens("Wisp"), (std::vector<std::string>{"Wisp"}));
}

TEST(RougeL, HandComputedLcs) {
  EXPECT_EQ(lcs_length({"a", "b", "c"}, {"a", "c"}), 2u);
  // P = 2/3, R = 1, F = 2PR / (P + R) = 0.8
  EXPECT_NEAR(rouge_l("a b c", "a c"), 80.0, 1e-12);
  EXPECT_NEAR(rouge_l("a c", "a b c"), 80.0, 1e-12);
}

TEST(RougeL, Extremes) {
  EXPECT_DOUBLE_EQ(rouge_l("return x", "return x"), 100.0);
  EXPECT_EQ(rouge_l("", "return x"), 0.0);
  EXPECT_EQ(rouge_l("a", "b"), 0.0);
}

TEST(RougeL, CorpusIsMeanOfPairs) {
  EXPECT_NEAR(rouge_l(std::vector<std::string>{"a b c", "x"}, std::vector<std::string>{"a c", "x"}), 90.0, 1e-12);
}

TEST(StrAcc, WhitespaceInsensitive) {
  EXPECT_TRUE(str_match("x  =  1\n", "x = 1"));
  EXPECT_FALSE(str_match("y = 1", "x = 1"));
}

TEST(StrAcc, HandCounted) {
  std::vector<std::string> cands = {"x = 1", "y = 2", "return  a", "def f(b):\n  return b"};
  std::vector<std::string> refs = {"x = 1", "y = 3", "return a", "def f(a):\n  return a"};
  EXPECT_DOUBLE_EQ(str_acc(cands, refs), 0.5);
  EXPECT_THROW(str_acc(cands, {"x"}), ShapeError);
}

TEST(AccPlus, RenamedVariablesMatch) {
  const std::string ref = "def f(a1, b):\n    a1 = a1 + b\n    return a1\n";
  const std::string cand = "def f(a2, b):\n    a2 = a2 + b\n    return a2\n";
  EXPECT_FALSE(str_match(cand, ref));
  EXPECT_TRUE(acc_plus_match(cand, ref));
}

TEST(AccPlus, ReorderedStatementsDoNotMatch) {
  const std::string ref = "def f(a, b):\n    x = a\n    y = b\n    return x + y\n";
  const std::string cand = "def f(a, b):\n    y = b\n    x = a\n    return x + y\n";
  EXPECT_FALSE(acc_plus_match(cand, ref));
}

TEST(AccPlus, AttributesAndFunctionNamesAreKept) {
  EXPECT_FALSE(acc_plus_match("def f(a):\n    return a.x\n", "def f(a):\n    return a.y\n"));
  EXPECT_FALSE(acc_plus_match("def f(a):\n    return a\n", "def g(a):\n    return a\n"));
  // Free names are not bound, so renaming them is a difference.
  EXPECT_FALSE(acc_plus_match("def f():\n    return p\n", "def f():\n    return q\n"));
}

TEST(AccPlus, InconsistentRenamingDoesNotMatch) {
  EXPECT_FALSE(acc_plus_match("def f(a, b):\n    return a\n", "def f(a, b):\n    return b\n"));
}

TEST(AccPlus, TargetsInLoopsAndTuples) {
  EXPECT_TRUE(acc_plus_match("for i in range(3):\n    s, t = i, i\n", "for k in range(3):\n    u, w = k, k\n"));
}

TEST(AccPlus, UnparseableSidesOnlyMatchAsStrings) {
  EXPECT_FALSE(acc_plus_match("x =", "y ="));
  EXPECT_TRUE(acc_plus_match("x =", "x  ="));
}

TEST(AccPlus, CanonicalNamesInFirstUseOrder) {
  AstNode t = alpha_rename(parse_to_ast("def f(p, q):\n    r = q\n    return p\n"));
  EXPECT_EQ(ast_to_code(t), "def f(v0, v1):\n    v2 = v1\n    return v0\n");
}

TEST(AccPlus, NeverBelowStrAccOnPerturbedCorpus) {
  auto toy = testing_support::make_toy(40, 13);
  std::mt19937 rng(5);
  std::vector<std::string> cands, refs;
  for (const auto& s : toy.corpus.samples) {
    refs.push_back(s.code);
    std::string c = s.code;
    switch (rng() % 4) {
      case 0: break;
      case 1: c += "\n"; break;
      case 2: {
        std::string::size_type p = c.find("return");
        if (p != std::string::npos) c.insert(p + 6, "  ");
        break;
      }
      default: c = "pass\n" + c;
    }
    cands.push_back(c);
  }
  EXPECT_GE(acc_plus_auto(cands, refs), str_acc(cands, refs));
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (str_match(cands[i], refs[i])) EXPECT_TRUE(acc_plus_match(cands[i], refs[i]));
  }
}

TEST(Report, IdenticalPairs) {
  std::vector<std::string> code = {"def f(x):\n    return x + 1\n", "y = f(2)\n"};
  MetricReport r = evaluate(code, code, {result(true), result(true)});
  EXPECT_DOUBLE_EQ(r.bleu, 100.0);
  EXPECT_DOUBLE_EQ(r.rouge_l, 100.0);
  EXPECT_DOUBLE_EQ(r.str_acc, 1.0);
  EXPECT_DOUBLE_EQ(r.acc_plus_auto, 1.0);
  EXPECT_EQ(r.M, 2);
  EXPECT_EQ(r.N_pass, 2);
}

TEST(Report, RoundTripsExactly) {
  MetricReport r;
  r.test_acc = 1.0 / 3.0;
  r.bleu = 59.55152770823;
  r.rouge_l = 0.1 + 0.2;
  r.str_acc = 0.25;
  r.acc_plus_auto = 0.5;
  r.M = 3;
  r.N_pass = 1;
  EXPECT_EQ(parse_report(format_report(r)), r);
  EXPECT_THROW(parse_report("bleu = 1\n"), ConfigError);
}

TEST(Report, TestAccEqualsRatio) {
  std::vector<std::string> c = {"a", "b", "c"};
  MetricReport r = evaluate(c, c, {result(false), result(true), result(false)});
  EXPECT_EQ(r.test_acc, static_cast<double>(r.N_pass) / static_cast<double>(r.M));
  EXPECT_EQ(r.N_pass, 1);
}
