#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>

#include "cgt/errors.hpp"
#include "cgt/harness.hpp"
#include "harness_fixtures.hpp"
#include "model_support.hpp"

using namespace cgt;
using testing_support::assertions;
using testing_support::harness_battery;

namespace {

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST(Categories, NamesRoundTrip) {
  for (Category c : kAllCategories) EXPECT_EQ(category_from_string(to_string(c)), c);
  EXPECT_THROW(category_from_string("Timeout"), ConfigError);
}

TEST(ErrorName, TerminalLines) {
  EXPECT_EQ(error_name("ValueError: invalid literal"), "ValueError");
  EXPECT_EQ(error_name("AssertionError"), "AssertionError");
  EXPECT_EQ(error_name("json.decoder.JSONDecodeError: x"), "JSONDecodeError");
  EXPECT_EQ(error_name("  ValueError: indented"), "");
  EXPECT_EQ(error_name("note: nothing wrong"), "");
  EXPECT_EQ(error_name("Traceback (most recent call last):"), "");
}

TEST(Classify, LowercaseMessage) { EXPECT_EQ(classify_error("assertionerror: 3 != 1"), Category::AssertionError); }

TEST(Classify, EmptyOutputIsOk) { EXPECT_EQ(classify_error(""), Category::OK); }

TEST(Classify, UnrecognizedKindsFollowTheFallbackRule) {
  auto tb = [](const std::string& last) {
    return "Traceback (most recent call last):\n  File \"candidate.py\", line 2, in <module>\n    f()\n" + last;
  };
  EXPECT_EQ(classify_error(tb("ValueError: bad")), Category::TypeError);
  EXPECT_EQ(classify_error(tb("ZeroDivisionError: division by zero")), Category::TypeError);
  EXPECT_EQ(classify_error(tb("KeyError: 'x'")), Category::TypeError);
  EXPECT_EQ(classify_error(tb("RecursionError: maximum recursion depth exceeded")), Category::AssertionError);
  EXPECT_EQ(classify_error(tb("MemoryError")), Category::AssertionError);
  EXPECT_EQ(classify_error(tb("UnboundLocalError: local variable 'x'")), Category::NameError);
  EXPECT_EQ(classify_error("  File \"candidate.py\", line 1\n    x = \t1\nTabError: inconsistent use of tabs"),
            Category::IndentationError);
  // Compile-time report without a traceback header.
  EXPECT_EQ(classify_error("  File \"candidate.py\", line 4\n    x = 1\nCustomCompileError: nope"),
            Category::SyntaxError);
}

TEST(Classify, FirstErrorDecides) {
  const std::string out =
      "Traceback (most recent call last):\n  File \"a.py\", line 1, in <module>\n    f()\nNameError: name 'f' is "
      "not defined\nTraceback (most recent call last):\n  File \"a.py\", line 2, in <module>\n    g()\nTypeError: "
      "bad\n";
  EXPECT_EQ(classify_error(out), Category::NameError);
}

TEST(RunTests, SyntaxErrorOnIncompleteAssignment) {
  TestResult r = run_tests("x =", assertions(""));
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.category, Category::SyntaxError);
}

TEST(RunTests, ReportsAreIndependentOfTheScratchDirectory) {
  const std::string code = "def f():\n    return g\n";
  TestResult a = run_tests(code, assertions("f()"));
  TestResult b = run_tests(code, assertions("f()"));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.raw_output.find("cgt-run-"), std::string::npos);
  EXPECT_NE(a.raw_output.find("File \"candidate.py\", line 2, in f"), std::string::npos) << a.raw_output;
}

TEST(RunTests, PassingProgram) {
  TestResult r = run_tests("print('hello')\n", assertions("pass"));
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.category, Category::OK);
  EXPECT_EQ(r.raw_output, "hello");
}

TEST(RunTests, FixtureBatteryCategories) {
  for (const auto& f : harness_battery()) {
    TestResult r = run_tests(f.code, assertions(f.payload));
    EXPECT_EQ(r.category, f.expected) << f.name << "\n" << r.raw_output;
    EXPECT_EQ(r.passed, f.expected == Category::OK) << f.name;
  }
}

TEST(RunTests, InfiniteLoopHitsTheCpuLimit) {
  const auto start = std::chrono::steady_clock::now();
  TestResult r = run_tests("while True:\n    pass\n", assertions(""));
  EXPECT_TRUE(r.timed_out);
  EXPECT_EQ(r.category, Category::AssertionError);
  EXPECT_TRUE(contains(r.raw_output, "Timeout"));
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
}

TEST(RunTests, SleepingProgramHitsTheWallClock) {
  TestResult r = run_tests("import time\ntime.sleep(60)\n", assertions("", 0.5));
  EXPECT_TRUE(r.timed_out);
  EXPECT_EQ(r.category, Category::AssertionError);
}

TEST(RunTests, WritesStayInTheScratchDirectory) {
  TestResult r = run_tests("open('scratch.txt', 'w').write('x')\nimport os\n",
                           assertions("assert os.path.exists('scratch.txt')\nassert os.getcwd() != '/'\n"));
  EXPECT_TRUE(r.passed) << r.raw_output;
}

TEST(RunTests, OversizedFileIsStopped) {
  TestResult r = run_tests("with open('big', 'wb') as f:\n    while True:\n        f.write(b'0' * 65536)\n",
                           assertions(""));
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.category, Category::AssertionError);
}

TEST(RunTests, NonzeroExitWithoutTraceback) {
  TestResult r = run_tests("import sys\nsys.exit(3)\n", assertions(""));
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_EQ(r.category, Category::AssertionError);
}

TEST(RunTests, ForgedSentinelDoesNotPass) {
  TestResult r = run_tests("print('cgt-done-0')\nimport os\nos._exit(0)\n", assertions(""));
  EXPECT_FALSE(r.passed);
}

TEST(RunTests, RejectsInvalidSpecs) {
  EXPECT_THROW(run_tests("", assertions("", 0.0)), ConfigError);
  TestUnitSpec s = assertions("");
  s.memory_limit = 0;
  EXPECT_THROW(run_tests("", s), ConfigError);
}

TEST(RunTests, SimulatorAdapter) {
  TestUnitSpec s;
  s.kind = TestUnitSpec::Kind::Simulator;
  s.payload = "grep -q 'attack = 3'";
  EXPECT_TRUE(run_tests("attack = 3\n", s).passed);
  TestResult bad = run_tests("attack = 2\n", s);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.category, Category::AssertionError);

  s.payload = "sh -c 'echo \"AttributeError: card has no attribute cost\" >&2; exit 1' x";
  TestResult err = run_tests("x = 1\n", s);
  EXPECT_EQ(err.category, Category::AttributeError);
}

TEST(TestInfoExtraction, PassingResultIsEmpty) {
  TestResult r = run_tests("x = 1\n", assertions("assert x == 1"));
  ASSERT_TRUE(r.passed);
  TestInfo info = extract_test_info(r, "x = 1\n");
  EXPECT_TRUE(info.empty());
  EXPECT_TRUE(info.tokens.empty());
}

TEST(TestInfoExtraction, SingleAssertionFrame) {
  const std::string code = "def total(a, b):\n    return a - b\n";
  TestResult r = run_tests(code, assertions("assert total(2, 1) == 3, '1 != 3'\n"));
  ASSERT_EQ(r.category, Category::AssertionError);
  TestInfo info = extract_test_info(r, code);
  EXPECT_EQ(info.failing_fragment, "assert total(2, 1) == 3, '1 != 3'");
  EXPECT_EQ(info.error_message, "AssertionError: 1 != 3");
  EXPECT_EQ(info.tokens.tokens.back(), "3");
}

TEST(TestInfoExtraction, KnownTraceback) {
  const std::string out =
      "Traceback (most recent call last):\n"
      "  File \"/tmp/x/candidate.py\", line 5, in <module>\n"
      "    assert area(2) == 4\n"
      "  File \"/usr/lib/python3/shapes.py\", line 9, in helper\n"
      "    return w\n"
      "  File \"/tmp/x/candidate.py\", line 2, in area\n"
      "NameError: name 'height' is not defined\n";
  TestInfo info = extract_test_info(out, "def area(w):\n    return w * height\n");
  EXPECT_EQ(info.failing_fragment, "assert area(2) == 4\nreturn w * height");
  EXPECT_EQ(info.error_message, "NameError: name 'height' is not defined");
}

TEST(TestInfoExtraction, SyntaxErrorKeepsTheSourceLine) {
  TestResult r = run_tests("def f(:\n    return 1\n", assertions(""));
  ASSERT_EQ(r.category, Category::SyntaxError);
  TestInfo info = extract_test_info(r, "def f(:\n    return 1\n");
  EXPECT_EQ(info.failing_fragment, "def f(:");
  EXPECT_TRUE(contains(info.error_message, "SyntaxError"));
}

TEST(TestInfoExtraction, OnlyTheFirstError) {
  testing_support::TwoErrorFixture f;
  TestResult r = run_tests(f.code, assertions(f.payload));
  ASSERT_EQ(r.category, Category::AttributeError) << r.raw_output;
  ASSERT_TRUE(contains(r.raw_output, f.second_fragment_line));
  TestInfo info = extract_test_info(r, f.code);
  EXPECT_EQ(info.error_message, f.first_message);
  EXPECT_TRUE(contains(info.failing_fragment, f.first_fragment_line));
  EXPECT_FALSE(contains(info.text(), f.second_fragment_line));
  const auto& toks = info.tokens.tokens;
  EXPECT_EQ(std::find(toks.begin(), toks.end(), f.second_message_word), toks.end());
}

TEST(TestInfoExtraction, TimeoutMessage) {
  TestResult r = run_tests("while True:\n    pass\n", assertions(""));
  TestInfo info = extract_test_info(r, "while True:\n    pass\n");
  EXPECT_TRUE(contains(info.error_message, "Timeout"));
}

TEST(Sweep, MixedFixturesHandCounted) {
  std::vector<std::string> codes = {"x = 1\n", "x = 2\n", "x = 1\n", "y\n", "x =\n",
                                    "x = 1 + '1'\n", "x = 1\n", "[].nope\n", "def f():\nreturn 1\n", "x = 3\n"};
  std::vector<TestUnitSpec> specs(codes.size(), assertions("assert x == 1\n"));
  SweepResult s = corpus_test_sweep(codes, specs, 4);
  // 3 OK, 2 AssertionError, 1 each of the other five.
  const std::array<int, 7> counts = {3, 2, 1, 1, 1, 1, 1};
  EXPECT_EQ(s.counts, counts);
  EXPECT_DOUBLE_EQ(s.histogram[0], 30.0);
  EXPECT_DOUBLE_EQ(s.histogram[1], 20.0);
  EXPECT_EQ(s.results[3].category, Category::NameError);
  EXPECT_EQ(s.results[7].category, Category::AttributeError);
}

TEST(Sweep, OrderDoesNotDependOnParallelism) {
  std::vector<std::string> codes;
  for (int i = 0; i < 8; ++i) codes.push_back(i % 3 ? "x = 1\n" : "x = (\n");
  std::vector<TestUnitSpec> specs(codes.size(), assertions("assert x == 1\n"));
  SweepResult a = corpus_test_sweep(codes, specs, 1);
  SweepResult b = corpus_test_sweep(codes, specs, 5);
  for (std::size_t i = 0; i < codes.size(); ++i) EXPECT_EQ(a.results[i].category, b.results[i].category);
  EXPECT_EQ(a.counts, b.counts);
}

TEST(Sweep, MisalignedInputs) {
  EXPECT_THROW(corpus_test_sweep({"x = 1"}, {}, 1), ShapeError);
}

TEST(Sweep, SyntheticReferencesPassTheirOwnTests) {
  auto toy = testing_support::make_toy(50, 7);
  std::vector<std::string> codes;
  std::vector<TestUnitSpec> specs;
  for (const auto& s : toy.corpus.samples) {
    codes.push_back(s.code);
    specs.push_back(s.test_unit);
  }
  SweepResult r = corpus_test_sweep(codes, specs, 4);
  EXPECT_DOUBLE_EQ(r.histogram[0], 100.0);
  for (std::size_t i = 0; i < r.results.size(); ++i) EXPECT_TRUE(r.results[i].passed) << codes[i] << r.results[i].raw_output;
}
