#pragma once

#include <stdexcept>
#include <string>

namespace cgt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CGT_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

// grammar_codec
CGT_DEFINE_ERROR(GrammarFormatError);
CGT_DEFINE_ERROR(DuplicateRule);
CGT_DEFINE_ERROR(UnknownKind);
CGT_DEFINE_ERROR(IncompleteTree);
CGT_DEFINE_ERROR(IllegalExpansion);
CGT_DEFINE_ERROR(NoFrontier);

// text_pipeline
CGT_DEFINE_ERROR(EmptyCorpus);
CGT_DEFINE_ERROR(UnparseableReference);
CGT_DEFINE_ERROR(MissingSplit);
CGT_DEFINE_ERROR(CountMismatch);

// neural_core / model
CGT_DEFINE_ERROR(ShapeError);
CGT_DEFINE_ERROR(ConfigError);
CGT_DEFINE_ERROR(CheckpointError);

// pipeline
CGT_DEFINE_ERROR(EmptySubset);

#undef CGT_DEFINE_ERROR

/// Source text does not parse. Carries a 1-based line/column location.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, int line, int column)
      : Error("line " + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace cgt
