#pragma once

#include <string>
#include <vector>

#include "cgt/ast.hpp"
#include "cgt/corpus.hpp"
#include "cgt/grammar.hpp"
#include "cgt/text.hpp"

namespace cgt {

struct VocabOptions {
  int min_freq_words = 2;
  int min_freq_terminals = 1;
  int max_chars = kDefaultMaxChars;
  /// Extra text whose lowercased tokens always enter the word vocabulary.
  std::vector<std::string> extra_text;
};

/// Vocabularies shared by every encoder and the decoder.
struct Vocabs {
  Vocab words;      // description and test-information tokens
  Vocab chars;      // characters of those tokens
  Vocab terminals;  // terminal tokens the decoder can generate
  int max_chars = kDefaultMaxChars;
};

/// Words come from the descriptions and the lowercased reference code (test
/// information quotes code); terminals from the reference rule sequences.
Vocabs build_vocabs(const Corpus& train, const Grammar& grammar, const VocabOptions& opts = {});

/// Actions share one index space: rule ids (end rule included) first, then
/// terminal vocabulary ids shifted by rule_output_count().
int action_space_size(const Grammar& grammar, const Vocabs& vocabs);
int action_index(const Action& action, const Grammar& grammar, const Vocabs& vocabs);
Action action_from_index(int index, const Grammar& grammar, const Vocabs& vocabs);

struct EncodedText {
  TokenizedText text;
  std::vector<int> ids;
  std::vector<std::vector<int>> char_ids;

  std::size_t size() const { return ids.size(); }
};

EncodedText encode_text(const std::string& raw, const Vocabs& vocabs);

struct EncodedSample {
  std::string id;
  EncodedText nl;
  EncodedText test_info;
  RuleSequence last_rules;
  RuleSequence target_rules;
  /// For each target action, the NL positions whose token equals the
  /// terminal it fills (empty for rule actions).
  std::vector<std::vector<int>> copy_map;
};

/// Throws UnparseableReference when the reference code does not parse.
EncodedSample encode_sample(const RawSample& raw, const Vocabs& vocabs, const Grammar& grammar,
                            const std::string& test_info = {}, const RuleSequence& last_rules = {});

/// NL positions whose token equals `terminal` exactly.
std::vector<int> copy_positions(const TokenizedText& nl, const std::string& terminal);

}  // namespace cgt
