#include "cgt/encoding.hpp"

#include <algorithm>

#include "cgt/errors.hpp"
#include "cgt/python_codec.hpp"

namespace cgt {

Vocabs build_vocabs(const Corpus& train, const Grammar& grammar, const VocabOptions& opts) {
  if (train.samples.empty()) throw EmptyCorpus("cannot build vocabularies from an empty training split");
  std::vector<std::vector<std::string>> words;
  std::vector<std::vector<std::string>> terminals;
  for (const auto& s : train.samples) {
    words.push_back(split_tokens(s.nl, true));
    words.push_back(split_tokens(s.code, true));
    std::vector<std::string> terms;
    try {
      for (const auto& a : ast_to_rules(parse_to_ast(s.code, grammar), grammar).actions) {
        if (!a.is_rule()) terms.push_back(a.token);
      }
    } catch (const SyntaxError& e) {
      throw UnparseableReference(s.id + ": " + e.what());
    }
    terminals.push_back(std::move(terms));
  }
  for (const auto& text : opts.extra_text) {
    for (int i = 0; i < std::max(1, opts.min_freq_words); ++i) words.push_back(split_tokens(text, true));
  }
  Vocabs v;
  v.max_chars = opts.max_chars;
  v.words = Vocab::build(words, opts.min_freq_words);
  std::vector<std::vector<std::string>> chars;
  for (const auto& seq : words) {
    for (const auto& w : seq) chars.push_back(split_chars(w, opts.max_chars));
  }
  v.chars = Vocab::build(chars, 1);
  bool any_terminal = false;
  for (const auto& t : terminals) any_terminal = any_terminal || !t.empty();
  v.terminals = any_terminal ? Vocab::build(terminals, opts.min_freq_terminals) : Vocab();
  return v;
}

int action_space_size(const Grammar& grammar, const Vocabs& vocabs) {
  return grammar.rule_output_count() + vocabs.terminals.size();
}

int action_index(const Action& action, const Grammar& grammar, const Vocabs& vocabs) {
  if (action.is_rule()) return action.rule;
  return grammar.rule_output_count() + vocabs.terminals.id(action.token);
}

Action action_from_index(int index, const Grammar& grammar, const Vocabs& vocabs) {
  if (index < 0 || index >= action_space_size(grammar, vocabs)) {
    throw ShapeError("action index out of range: " + std::to_string(index));
  }
  if (index < grammar.rule_output_count()) return Action::apply(index);
  return Action::fill(vocabs.terminals.token(index - grammar.rule_output_count()));
}

EncodedText encode_text(const std::string& raw, const Vocabs& vocabs) {
  EncodedText e;
  e.text = tokenize(raw, vocabs.max_chars);
  for (std::size_t i = 0; i < e.text.size(); ++i) {
    e.ids.push_back(vocabs.words.id(e.text.tokens[i]));
    std::vector<int> cs;
    for (const auto& c : e.text.chars[i]) cs.push_back(vocabs.chars.id(c));
    e.char_ids.push_back(std::move(cs));
  }
  return e;
}

std::vector<int> copy_positions(const TokenizedText& nl, const std::string& terminal) {
  std::vector<int> out;
  for (std::size_t i = 0; i < nl.tokens.size(); ++i) {
    if (nl.tokens[i] == terminal) out.push_back(static_cast<int>(i));
  }
  return out;
}

EncodedSample encode_sample(const RawSample& raw, const Vocabs& vocabs, const Grammar& grammar,
                            const std::string& test_info, const RuleSequence& last_rules) {
  EncodedSample s;
  s.id = raw.id;
  s.nl = encode_text(raw.nl, vocabs);
  s.test_info = encode_text(test_info, vocabs);
  s.last_rules = last_rules;
  try {
    s.target_rules = ast_to_rules(parse_to_ast(raw.code, grammar), grammar);
  } catch (const SyntaxError& e) {
    throw UnparseableReference(raw.id + ": " + e.what());
  }
  for (const auto& a : s.target_rules.actions) {
    s.copy_map.push_back(a.is_rule() ? std::vector<int>{} : copy_positions(s.nl.text, a.token));
  }
  return s;
}

}  // namespace cgt
