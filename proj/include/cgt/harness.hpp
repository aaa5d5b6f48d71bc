#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "cgt/corpus.hpp"
#include "cgt/text.hpp"

namespace cgt {

enum class Category { OK, AssertionError, AttributeError, SyntaxError, NameError, TypeError, IndentationError };

constexpr std::array<Category, 7> kAllCategories = {Category::OK,        Category::AssertionError,
                                                    Category::AttributeError, Category::SyntaxError,
                                                    Category::NameError, Category::TypeError,
                                                    Category::IndentationError};

std::string to_string(Category c);
/// Throws ConfigError on an unknown name.
Category category_from_string(std::string_view name);

struct TestResult {
  Category category = Category::OK;
  std::string raw_output;
  bool passed = true;
  bool timed_out = false;
  int exit_code = 0;

  bool operator==(const TestResult&) const = default;
};

struct TestInfo {
  std::string failing_fragment;
  std::string error_message;
  TokenizedText tokens;

  bool empty() const { return failing_fragment.empty() && error_message.empty(); }
  /// Fragment and message on separate lines; the text fed to the model.
  std::string text() const;
};

struct HarnessOptions {
  /// Interpreter used for assertion test units, looked up on PATH.
  std::string python = "python3";
  /// Output beyond this many bytes is dropped.
  std::size_t max_output = 1 << 20;
  /// Largest file the program may write.
  std::int64_t max_file_size = 16LL << 20;
};

/// Exception name on a traceback's terminal line ("ValueError: bad" gives
/// "ValueError"), or empty when the line is not one.
std::string error_name(std::string_view line);

/// Category of a failure output. Only the first error block counts. Text
/// without any error line classifies as OK.
Category classify_error(std::string_view raw_output);

/// Runs `code` against `spec` in a child process with CPU, memory and file
/// size limits, a fresh temporary working directory and (where the kernel
/// allows it) no network. Misbehaving code never makes this throw; only
/// failures to set up the run do.
TestResult run_tests(const std::string& code, const TestUnitSpec& spec, const HarnessOptions& opts = {});

/// Frame source lines and terminal line of the first error in `raw_output`.
/// `code` supplies source lines the traceback omits.
TestInfo extract_test_info(std::string_view raw_output, std::string_view code);
/// Empty for passing results.
TestInfo extract_test_info(const TestResult& result, std::string_view code);

struct SweepResult {
  std::vector<TestResult> results;
  /// Percentage of results per category, in kAllCategories order.
  std::array<double, 7> histogram{};
  std::array<int, 7> counts{};
};

/// Runs every (code, spec) pair with up to `parallelism` concurrent
/// executions. Results keep the input order.
SweepResult corpus_test_sweep(const std::vector<std::string>& codes, const std::vector<TestUnitSpec>& specs,
                              int parallelism, const HarnessOptions& opts = {});

}  // namespace cgt
