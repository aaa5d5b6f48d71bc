#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cgt {

constexpr int kDefaultMaxChars = 16;

/// Tokens of a description or test message, each with its characters.
struct TokenizedText {
  std::vector<std::string> tokens;
  std::vector<std::vector<std::string>> chars;  // per token, at most S_max code points

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  std::string joined() const;
};

/// Whitespace split, then every character that is not a letter, digit,
/// underscore or non-ASCII byte becomes its own token.
std::vector<std::string> split_tokens(std::string_view text, bool lowercase);

/// Lowercased tokenization used for descriptions and test information.
TokenizedText tokenize(std::string_view text, int max_chars = kDefaultMaxChars);

/// UTF-8 code points of `token`, truncated to `max_chars` (no cap when <= 0).
std::vector<std::string> split_chars(std::string_view token, int max_chars = kDefaultMaxChars);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCopy = 2;
  static constexpr int kReserved = 3;

  Vocab();

  /// Tokens seen at least `min_freq` times, ordered by descending count then
  /// lexicographically. Throws EmptyCorpus when `corpus` has no token at all.
  static Vocab build(const std::vector<std::vector<std::string>>& corpus, int min_freq);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static Vocab from_tokens(const std::vector<std::string>& tokens);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

}  // namespace cgt
