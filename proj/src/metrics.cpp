#include "cgt/metrics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "cgt/errors.hpp"
#include "cgt/python_codec.hpp"
#include "cgt/text.hpp"

namespace cgt {

namespace {

void require_aligned(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("candidate and reference lists differ in length");
  if (a == 0) throw ShapeError("metrics need at least one pair");
}

using Ngrams = std::map<std::vector<std::string>, int>;

Ngrams ngrams(const std::vector<std::string>& toks, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                   toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---- alpha renaming ---------------------------------------------------------

class Renamer {
 public:
  explicit Renamer(const Grammar& g) : g_(g) {}

  AstNode run(const AstNode& tree) {
    collect(tree, false);
    AstNode out = tree;
    rename(out);
    return out;
  }

 private:
  const std::string& label(const AstNode& n) const { return g_.rule(*n.rule).label; }

  bool expands(const AstNode& n) const { return n.rule && *n.rule < g_.size(); }

  // Bound names: parameters and names in target position.
  void collect(const AstNode& n, bool target) {
    if (!expands(n)) {
      for (const auto& c : n.children) collect(c, target);
      return;
    }
    const Rule& r = g_.rule(*n.rule);
    if (r.label == "Name") {
      if (target && n.children[0].token) bound_.insert(*n.children[0].token);
      return;
    }
    if (r.label == "arg") {
      if (n.children[0].token) bound_.insert(*n.children[0].token);
      return;
    }
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const std::string& field = r.children[i].field;
      bool child_target = false;
      if (r.label == "Assign" || r.label == "Delete") child_target = field == "targets";
      if (r.label == "AugAssign" || r.label == "For" || r.label == "comprehension") child_target = field == "target";
      if (r.label == "Tuple" || r.label == "List" || r.label == "Starred") child_target = target;
      collect(n.children[i], child_target);
    }
  }

  void rename(AstNode& n) {
    if (expands(n) && (label(n) == "Name" || label(n) == "arg")) {
      auto& leaf = n.children[0];
      if (leaf.token && bound_.count(*leaf.token)) {
        auto [it, fresh] = names_.try_emplace(*leaf.token, "");
        if (fresh) it->second = "v" + std::to_string(names_.size() - 1);
        leaf.token = it->second;
      }
      return;
    }
    for (auto& c : n.children) rename(c);
  }

  const Grammar& g_;
  std::set<std::string> bound_;
  std::map<std::string, std::string> names_;
};

}  // namespace

Fraction test_acc(const std::vector<TestResult>& results) {
  if (results.empty()) throw ShapeError("test_acc needs at least one result");
  Fraction f;
  f.den = static_cast<std::int64_t>(results.size());
  for (const auto& r : results) f.num += r.passed ? 1 : 0;
  return f;
}

std::vector<std::string> code_tokens(std::string_view code) { return split_tokens(code, false); }

double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  require_aligned(candidates.size(), references.size());
  constexpr int kOrder = 4;
  std::array<long, kOrder> matches{}, totals{};
  long cand_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto c = code_tokens(candidates[s]);
    const auto r = code_tokens(references[s]);
    cand_len += static_cast<long>(c.size());
    ref_len += static_cast<long>(r.size());
    for (int n = 1; n <= kOrder; ++n) {
      const Ngrams cn = ngrams(c, static_cast<std::size_t>(n));
      const Ngrams rn = ngrams(r, static_cast<std::size_t>(n));
      for (const auto& [gram, count] : cn) {
        totals[static_cast<std::size_t>(n - 1)] += count;
        auto it = rn.find(gram);
        if (it != rn.end()) matches[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
      }
    }
  }
  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 0; n < kOrder; ++n) {
    // Orders longer than every candidate carry no evidence either way.
    if (totals[static_cast<std::size_t>(n)] == 0) continue;
    if (matches[static_cast<std::size_t>(n)] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matches[static_cast<std::size_t>(n)]) /
                        static_cast<double>(totals[static_cast<std::size_t>(n)]));
    ++orders;
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / cand_len);
  return 100.0 * bp * std::exp(log_sum / orders);
}

double bleu(std::string_view candidate, std::string_view reference) {
  return bleu(std::vector<std::string>{std::string(candidate)}, std::vector<std::string>{std::string(reference)});
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = code_tokens(candidate);
  const auto r = code_tokens(reference);
  if (c.empty() || r.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(c, r));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(c.size());
  const double rec = lcs / static_cast<double>(r.size());
  return 100.0 * 2.0 * p * rec / (p + rec);
}

double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  require_aligned(candidates.size(), references.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) sum += rouge_l(candidates[i], references[i]);
  return sum / static_cast<double>(candidates.size());
}

bool str_match(std::string_view candidate, std::string_view reference) {
  return normalize_whitespace(candidate) == normalize_whitespace(reference);
}

double str_acc(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  require_aligned(candidates.size(), references.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) hits += str_match(candidates[i], references[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(candidates.size());
}

AstNode alpha_rename(const AstNode& tree, const Grammar& grammar) { return Renamer(grammar).run(tree); }

bool acc_plus_match(std::string_view candidate, std::string_view reference) {
  if (str_match(candidate, reference)) return true;
  try {
    return alpha_rename(parse_to_ast(candidate)) == alpha_rename(parse_to_ast(reference));
  } catch (const Error&) {
    return false;
  }
}

double acc_plus_auto(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  require_aligned(candidates.size(), references.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) hits += acc_plus_match(candidates[i], references[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(candidates.size());
}

MetricReport evaluate(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                      const std::vector<TestResult>& results) {
  require_aligned(candidates.size(), references.size());
  if (results.size() != candidates.size()) throw ShapeError("test results differ in number from candidates");
  MetricReport m;
  const Fraction acc = test_acc(results);
  m.M = acc.den;
  m.N_pass = acc.num;
  m.test_acc = acc.value();
  m.bleu = bleu(candidates, references);
  m.rouge_l = rouge_l(candidates, references);
  m.str_acc = str_acc(candidates, references);
  m.acc_plus_auto = acc_plus_auto(candidates, references);
  return m;
}

std::string format_report(const MetricReport& r) {
  KeyValues kv;
  kv["test_acc"] = format_double(r.test_acc);
  kv["bleu"] = format_double(r.bleu);
  kv["rouge_l"] = format_double(r.rouge_l);
  kv["str_acc"] = format_double(r.str_acc);
  kv["acc_plus_auto"] = format_double(r.acc_plus_auto);
  kv["M"] = std::to_string(r.M);
  kv["N_pass"] = std::to_string(r.N_pass);
  return format_key_values(kv);
}

MetricReport parse_report(const std::string& text) {
  const KeyValues kv = parse_key_values(text);
  for (const char* key : {"test_acc", "bleu", "rouge_l", "str_acc", "acc_plus_auto", "M", "N_pass"}) {
    if (!kv.count(key)) throw ConfigError(std::string("metric record lacks ") + key);
  }
  MetricReport r;
  r.test_acc = get_double(kv, "test_acc", 0.0);
  r.bleu = get_double(kv, "bleu", 0.0);
  r.rouge_l = get_double(kv, "rouge_l", 0.0);
  r.str_acc = get_double(kv, "str_acc", 0.0);
  r.acc_plus_auto = get_double(kv, "acc_plus_auto", 0.0);
  r.M = get_int(kv, "M", 0);
  r.N_pass = get_int(kv, "N_pass", 0);
  return r;
}

}  // namespace cgt
