#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cgt/ast.hpp"
#include "cgt/config.hpp"
#include "cgt/harness.hpp"

namespace cgt {

/// Exact fraction num/den; den > 0.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Fraction&) const = default;
};

/// Passing results over all results. Throws ShapeError on an empty list.
Fraction test_acc(const std::vector<TestResult>& results);

/// Tokens used by BLEU and ROUGE-L: the description tokenizer without
/// lowercasing.
std::vector<std::string> code_tokens(std::string_view code);

/// Corpus BLEU-4 with brevity penalty and no smoothing, in [0, 100].
double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references);
double bleu(std::string_view candidate, std::string_view reference);

/// Longest common subsequence length of two token lists.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// LCS F1 over tokens, in [0, 100].
double rouge_l(std::string_view candidate, std::string_view reference);
/// Mean of the per-pair scores.
double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::string>& references);

/// Exact match after whitespace normalization.
bool str_match(std::string_view candidate, std::string_view reference);
double str_acc(const std::vector<std::string>& candidates, const std::vector<std::string>& references);

/// Renames every bound name (parameters and assignment, loop and
/// comprehension targets) to v0, v1, ... in order of first appearance.
/// Attribute names, keyword names and definition names keep their text.
AstNode alpha_rename(const AstNode& tree, const Grammar& grammar = python_grammar());

/// String match, or structural equality after alpha_rename when both sides
/// parse.
bool acc_plus_match(std::string_view candidate, std::string_view reference);
double acc_plus_auto(const std::vector<std::string>& candidates, const std::vector<std::string>& references);

struct MetricReport {
  double test_acc = 0.0;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double str_acc = 0.0;
  double acc_plus_auto = 0.0;
  std::int64_t M = 0;
  std::int64_t N_pass = 0;

  bool operator==(const MetricReport&) const = default;
};

/// All metrics over aligned candidate/reference/result lists.
MetricReport evaluate(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                      const std::vector<TestResult>& results);

/// Flat key = value record, doubles written with round-trip precision.
std::string format_report(const MetricReport& report);
MetricReport parse_report(const std::string& text);

}  // namespace cgt
