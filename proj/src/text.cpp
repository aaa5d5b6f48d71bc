#include "cgt/text.hpp"

#include <algorithm>
#include <cctype>

#include "cgt/errors.hpp"

namespace cgt {

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

std::string TokenizedText::joined() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view text, bool lowercase) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (word_byte(c)) {
      word += lowercase ? static_cast<char>(std::tolower(c)) : ch;
    } else {
      flush();
      out.emplace_back(1, ch);
    }
  }
  flush();
  return out;
}

TokenizedText tokenize(std::string_view text, int max_chars) {
  TokenizedText t;
  t.tokens = split_tokens(text, true);
  for (const auto& tok : t.tokens) t.chars.push_back(split_chars(tok, max_chars));
  return t;
}

std::vector<std::string> split_chars(std::string_view token, int max_chars) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < token.size() && (max_chars <= 0 || static_cast<int>(out.size()) < max_chars)) {
    std::size_t n = std::min(utf8_length(static_cast<unsigned char>(token[i])), token.size() - i);
    out.emplace_back(token.substr(i, n));
    i += n;
  }
  return out;
}

Vocab::Vocab() {
  add("<pad>");
  add("<unk>");
  add("<copy>");
}

void Vocab::add(const std::string& token) {
  if (ids_.count(token)) return;
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& corpus, int min_freq) {
  if (min_freq < 1) throw ConfigError("min_freq must be at least 1");
  std::map<std::string, long> counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) ++counts[t];
  }
  if (counts.empty()) throw EmptyCorpus("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_freq) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : kept) v.add(tok);
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (std::size_t i = kReserved; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw ShapeError("vocabulary id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return ids_.count(token) > 0; }

}  // namespace cgt
