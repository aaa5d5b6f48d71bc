#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgt/grammar.hpp"

namespace cgt {

/// Executable check attached to a sample.
struct TestUnitSpec {
  enum class Kind { Assertions, Simulator };
  Kind kind = Kind::Assertions;
  /// Assertion program appended after the code, or the simulator command.
  std::string payload;
  double time_limit = 5.0;
  std::int64_t memory_limit = 256LL << 20;

  bool operator==(const TestUnitSpec&) const = default;
};

std::string to_string(TestUnitSpec::Kind kind);
TestUnitSpec::Kind test_kind_from_string(const std::string& s);

struct RawSample {
  std::string id;
  std::string nl;
  std::string code;
  TestUnitSpec test_unit;

  bool operator==(const RawSample&) const = default;
};

struct Corpus {
  std::string split;
  std::vector<RawSample> samples;

  std::size_t size() const { return samples.size(); }
};

/// One JSON object per line: {id, nl, code, test_unit:{kind, payload, time_limit, memory_limit}}.
void save_jsonl(const Corpus& corpus, const std::string& path);
Corpus load_jsonl(const std::string& path, const std::string& split = "");

struct HearthstoneOptions {
  /// Require the 533/66/66 benchmark split sizes.
  bool strict_counts = true;
  /// Simulator command recorded in each sample's test unit (may be empty).
  std::string simulator;
};

/// Reads {train,dev,test}_hs.{in,out} from `dir`. The newline marker used in
/// the .out files is detected from the files. Throws MissingSplit or
/// CountMismatch.
std::map<std::string, Corpus> load_hearthstone(const std::string& dir, const HearthstoneOptions& opts = {});

/// Writes the corpus back in the benchmark layout using `newline_marker`.
void save_hearthstone(const std::map<std::string, Corpus>& splits, const std::string& dir,
                      const std::string& newline_marker = "§");

/// Newline marker found in benchmark code lines ("§", "NEWLINE" or "\\n").
std::string detect_newline_marker(const std::vector<std::string>& code_lines);

/// Small Python functions over integer arithmetic, each with a description
/// verbalized from its tree and an assertion test unit computed by an
/// independent evaluator. Deterministic in `seed`; every program parses
/// under `grammar`. Throws ConfigError when n < 1.
Corpus generate_synthetic_corpus(const Grammar& grammar, int n, std::uint64_t seed);

}  // namespace cgt
