#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cgt::detail {

enum class Tok { Name, Number, String, Op, Newline, Indent, Dedent, End };

struct Token {
  Tok type;
  std::string text;   // source spelling (operators, names, numbers)
  std::string value;  // decoded contents for strings
  int line = 0;
  int col = 0;
};

/// Throws SyntaxError (including IndentationError-class problems, which are
/// reported with an "indentation" message).
std::vector<Token> lex_python(std::string_view src);

}  // namespace cgt::detail
