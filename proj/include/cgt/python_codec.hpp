#pragma once

#include <string>
#include <string_view>

#include "cgt/ast.hpp"
#include "cgt/grammar.hpp"

namespace cgt {

/// Parses Python source (the subset described by the grammar) into a
/// complete AST. Throws SyntaxError with a location on failure, including
/// for valid Python that the subset does not cover.
AstNode parse_to_ast(std::string_view source, const Grammar& grammar = python_grammar());

/// Canonical reprint of a complete tree (4-space indentation, minimal
/// parentheses, double-quoted strings). Throws IncompleteTree.
std::string ast_to_code(const AstNode& tree, const Grammar& grammar = python_grammar());

/// Lexical check used when filling terminals: can `token` stand as a
/// terminal of `kind` (identifier, number, string) in printed code?
bool valid_terminal(std::string_view kind, std::string_view token);

bool is_python_keyword(std::string_view word);

/// Collapses whitespace runs to one space and trims.
std::string normalize_whitespace(std::string_view code);

}  // namespace cgt
