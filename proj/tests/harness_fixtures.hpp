#pragma once

#include <string>
#include <vector>

#include "cgt/harness.hpp"

namespace testing_support {

struct HarnessFixture {
  std::string name;
  std::string code;
  std::string payload;
  cgt::Category expected;
};

inline cgt::TestUnitSpec assertions(const std::string& payload, double seconds = 1.0) {
  cgt::TestUnitSpec s;
  s.payload = payload;
  s.time_limit = seconds;
  return s;
}

/// One snippet per category plus misbehaving programs.
inline std::vector<HarnessFixture> harness_battery() {
  using cgt::Category;
  return {
      {"passes", "def inc(x):\n    return x + 1\n", "assert inc(1) == 2\n", Category::OK},
      {"wrong_value", "def total(a, b):\n    return a - b\n",
       "_r = total(2, 1)\nassert _r == 3, \"%r != %r\" % (_r, 3)\n", Category::AssertionError},
      {"missing_method", "def grow(xs):\n    xs.push(1)\n    return xs\n", "assert grow([]) == [1]\n",
       Category::AttributeError},
      {"incomplete_statement", "x =\n", "assert x == 1\n", Category::SyntaxError},
      {"duplicate_parameter", "def f(a, a):\n    return a\n", "assert f(1, 2) == 1\n", Category::SyntaxError},
      {"undefined_name", "def area(w):\n    return w * height\n", "assert area(2) == 4\n", Category::NameError},
      {"bad_operand", "def label(n):\n    return 'card ' + n\n", "assert label(3) == 'card 3'\n",
       Category::TypeError},
      {"bad_indent", "def cost():\nreturn 3\n", "assert cost() == 3\n", Category::IndentationError},
      {"bad_literal", "def parse(s):\n    return int(s)\n", "assert parse('three') == 3\n", Category::TypeError},
      {"infinite_loop", "def spin():\n    while True:\n        pass\n", "spin()\n", Category::AssertionError},
      {"unbounded_memory", "def hoard():\n    return [0] * (10 ** 10)\n", "assert len(hoard()) > 0\n",
       Category::AssertionError},
      {"early_exit", "import os\nos._exit(0)\n", "assert False\n", Category::AssertionError},
  };
}

/// A program whose test unit plays two rounds and reports a traceback for
/// each failing one.
struct TwoErrorFixture {
  std::string code =
      "class Minion:\n"
      "    def __init__(self, attack):\n"
      "        self.attack = attack\n"
      "\n"
      "def play(board):\n"
      "    board.append(Minion(2))\n"
      "    return board[0].health\n";
  std::string payload =
      "import sys, traceback\n"
      "failed = False\n"
      "for turn in range(2):\n"
      "    try:\n"
      "        play([] if turn == 0 else None)\n"
      "    except Exception:\n"
      "        traceback.print_exc()\n"
      "        failed = True\n"
      "sys.exit(1 if failed else 0)\n";
  std::string first_fragment_line = "return board[0].health";
  std::string first_message = "AttributeError: 'Minion' object has no attribute 'health'";
  std::string second_fragment_line = "board.append(Minion(2))";
  std::string second_message_word = "nonetype";
};

}  // namespace testing_support
