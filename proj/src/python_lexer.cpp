#include "python_lexer.hpp"

#include <array>
#include <cctype>
#include <cstring>

#include "cgt/errors.hpp"

namespace cgt::detail {

namespace {

constexpr std::array<std::string_view, 26> kThreeTwoCharOps = {
    "**=", "//=", ">>=", "<<=", "...", "->", "**", "//", "<<", ">>", "<=", ">=", "==",
    "!=",  "+=",  "-=",  "*=",  "/=",  "%=", "&=", "|=", "^=", "@=", ":=", "<>", "!"};

constexpr std::string_view kSingleOps = "+-*/%@&|^~<>()[]{},:.;=";

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

bool is_name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    indents_.push_back(0);
    while (pos_ < src_.size()) {
      if (at_line_start_ && depth_ == 0) {
        if (!handle_indentation()) continue;
      }
      char c = src_[pos_];
      if (c == '\n') {
        newline();
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
        ++pos_;
        ++col_;
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        continue;
      }
      if (c == '\\') {
        std::size_t p = pos_ + 1;
        if (p < src_.size() && src_[p] == '\r') ++p;
        if (p < src_.size() && src_[p] == '\n') {
          pos_ = p + 1;
          ++line_;
          col_ = 1;
          continue;
        }
        fail("unexpected character after line continuation character");
      }
      lex_token();
    }
    if (depth_ > 0) fail("unexpected EOF while parsing (unclosed bracket)");
    if (!tokens_.empty() && tokens_.back().type != Tok::Newline && tokens_.back().type != Tok::Dedent &&
        tokens_.back().type != Tok::Indent) {
      push(Tok::Newline, "");
    }
    while (indents_.size() > 1) {
      indents_.pop_back();
      push(Tok::Dedent, "");
    }
    push(Tok::End, "");
    return std::move(tokens_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, line_, col_); }

  void push(Tok t, std::string text, std::string value = {}) {
    tokens_.push_back(Token{t, std::move(text), std::move(value), tok_line_, tok_col_});
  }

  void newline() {
    ++pos_;
    if (depth_ == 0 && !tokens_.empty() && tokens_.back().type != Tok::Newline && tokens_.back().type != Tok::Indent &&
        tokens_.back().type != Tok::Dedent) {
      tok_line_ = line_;
      tok_col_ = col_;
      push(Tok::Newline, "");
    }
    ++line_;
    col_ = 1;
    if (depth_ == 0) at_line_start_ = true;
  }

  // Returns false if the line was blank/comment-only and consumed.
  bool handle_indentation() {
    int width = 0;
    std::size_t p = pos_;
    while (p < src_.size() && (src_[p] == ' ' || src_[p] == '\t' || src_[p] == '\f')) {
      if (src_[p] == '\t') {
        width = (width / 8 + 1) * 8;
      } else if (src_[p] == ' ') {
        ++width;
      }
      ++p;
    }
    if (p < src_.size() && src_[p] == '\r') ++p;
    if (p >= src_.size() || src_[p] == '\n' || src_[p] == '#') {
      while (p < src_.size() && src_[p] != '\n') ++p;
      pos_ = p;
      if (pos_ < src_.size()) {
        ++pos_;
        ++line_;
        col_ = 1;
      }
      return false;
    }
    col_ += static_cast<int>(p - pos_);
    pos_ = p;
    at_line_start_ = false;
    tok_line_ = line_;
    tok_col_ = col_;
    if (width > indents_.back()) {
      if (tokens_.empty() || tokens_.back().type != Tok::Newline) fail("indentation error: unexpected indent");
      indents_.push_back(width);
      push(Tok::Indent, "");
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        push(Tok::Dedent, "");
      }
      if (width != indents_.back()) fail("indentation error: unindent does not match any outer indentation level");
    }
    return true;
  }

  void lex_token() {
    tok_line_ = line_;
    tok_col_ = col_;
    const auto c = static_cast<unsigned char>(src_[pos_]);

    if (is_name_start(c)) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      std::string word(src_.substr(start, pos_ - start));
      if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'') && word.size() <= 2 && is_prefix(word)) {
        col_ += static_cast<int>(pos_ - start);
        lex_string(word);
        return;
      }
      col_ += static_cast<int>(pos_ - start);
      push(Tok::Name, std::move(word));
      return;
    }
    if (std::isdigit(c) || (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      lex_number();
      return;
    }
    if (c == '"' || c == '\'') {
      lex_string("");
      return;
    }
    for (auto op : kThreeTwoCharOps) {
      if (src_.substr(pos_, op.size()) == op) {
        if (op == "!" || op == "<>") fail("invalid syntax");
        pos_ += op.size();
        col_ += static_cast<int>(op.size());
        push(Tok::Op, std::string(op));
        return;
      }
    }
    if (kSingleOps.find(static_cast<char>(c)) != std::string_view::npos) {
      if (c == '(' || c == '[' || c == '{') ++depth_;
      if (c == ')' || c == ']' || c == '}') {
        if (depth_ == 0) fail("unmatched '" + std::string(1, static_cast<char>(c)) + "'");
        --depth_;
      }
      ++pos_;
      ++col_;
      push(Tok::Op, std::string(1, static_cast<char>(c)));
      return;
    }
    fail(std::string("invalid character '") + static_cast<char>(c) + "'");
  }

  static bool is_prefix(const std::string& w) {
    for (char ch : w) {
      char l = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (l != 'r' && l != 'b' && l != 'u' && l != 'f') return false;
    }
    return true;
  }

  void lex_number() {
    std::size_t start = pos_;
    auto digits = [&](auto pred) {
      while (pos_ < src_.size() && (pred(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    };
    auto is_dec = [](unsigned char ch) { return std::isdigit(ch) != 0; };
    if (src_[pos_] == '0' && pos_ + 1 < src_.size() && std::strchr("xXoObB", src_[pos_ + 1]) && src_[pos_ + 1] != '\0') {
      pos_ += 2;
      digits([](unsigned char ch) { return std::isxdigit(ch) != 0; });
    } else {
      digits(is_dec);
      if (pos_ < src_.size() && src_[pos_] == '.') {
        ++pos_;
        digits(is_dec);
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t save = pos_;
        ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
        if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          digits(is_dec);
        } else {
          pos_ = save;
        }
      }
      if (pos_ < src_.size() && (src_[pos_] == 'j' || src_[pos_] == 'J')) ++pos_;
    }
    if (pos_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[pos_]))) fail("invalid decimal literal");
    col_ += static_cast<int>(pos_ - start);
    push(Tok::Number, std::string(src_.substr(start, pos_ - start)));
  }

  void lex_string(const std::string& prefix) {
    bool raw = false;
    for (char ch : prefix) {
      char l = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (l == 'r') raw = true;
      if (l == 'f') fail("unsupported construct: f-string");
    }
    const char quote = src_[pos_];
    const bool triple = src_.substr(pos_, 3) == std::string(3, quote);
    const std::size_t qlen = triple ? 3 : 1;
    pos_ += qlen;
    col_ += static_cast<int>(qlen);
    std::string value;
    while (true) {
      if (pos_ >= src_.size()) fail("EOF while scanning string literal");
      char ch = src_[pos_];
      if (triple ? src_.substr(pos_, 3) == std::string(3, quote) : ch == quote) {
        pos_ += qlen;
        col_ += static_cast<int>(qlen);
        break;
      }
      if (ch == '\n') {
        if (!triple) fail("EOL while scanning string literal");
        value += '\n';
        ++pos_;
        ++line_;
        col_ = 1;
        continue;
      }
      if (ch == '\\' && pos_ + 1 < src_.size()) {
        char e = src_[pos_ + 1];
        if (raw) {
          value += ch;
          value += e;
          if (e == '\n') {
            ++line_;
            col_ = 0;
          }
          pos_ += 2;
          col_ += 2;
          continue;
        }
        pos_ += 2;
        col_ += 2;
        switch (e) {
          case '\n': ++line_; col_ = 1; break;
          case '\\': value += '\\'; break;
          case '\'': value += '\''; break;
          case '"': value += '"'; break;
          case 'n': value += '\n'; break;
          case 't': value += '\t'; break;
          case 'r': value += '\r'; break;
          case 'a': value += '\a'; break;
          case 'b': value += '\b'; break;
          case 'f': value += '\f'; break;
          case 'v': value += '\v'; break;
          case 'x': append_utf8(value, read_hex(2)); break;
          case 'u': append_utf8(value, read_hex(4)); break;
          case 'U': append_utf8(value, read_hex(8)); break;
          default:
            if (e >= '0' && e <= '7') {
              unsigned long v = static_cast<unsigned long>(e - '0');
              for (int k = 0; k < 2 && pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '7'; ++k) {
                v = v * 8 + static_cast<unsigned long>(src_[pos_++] - '0');
                ++col_;
              }
              append_utf8(value, v);
            } else {
              value += '\\';
              value += e;
            }
        }
        continue;
      }
      value += ch;
      ++pos_;
      ++col_;
    }
    push(Tok::String, prefix, std::move(value));
  }

  unsigned long read_hex(int n) {
    unsigned long v = 0;
    for (int k = 0; k < n; ++k) {
      if (pos_ >= src_.size() || !std::isxdigit(static_cast<unsigned char>(src_[pos_]))) fail("truncated escape sequence");
      char h = src_[pos_++];
      ++col_;
      v = v * 16 + static_cast<unsigned long>(std::isdigit(static_cast<unsigned char>(h)) ? h - '0' : std::tolower(h) - 'a' + 10);
    }
    return v;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  int tok_line_ = 1;
  int tok_col_ = 1;
  int depth_ = 0;
  bool at_line_start_ = true;
  std::vector<int> indents_;
  std::vector<Token> tokens_;
};

}  // namespace

std::vector<Token> lex_python(std::string_view src) { return Lexer(src).run(); }

}  // namespace cgt::detail
