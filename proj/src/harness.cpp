#include "cgt/harness.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "cgt/errors.hpp"

namespace cgt {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCandidateFile = "candidate.py";

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

bool is_traceback_header(std::string_view line) { return starts_with(line, "Traceback (most recent call last)"); }

struct Frame {
  std::string file;
  int line = 0;
  std::string source;
};

// `  File "x.py", line 3, in f`
bool parse_frame_header(std::string_view line, Frame& frame) {
  const std::string t = trim(line);
  if (!starts_with(t, "File \"")) return false;
  const std::size_t close = t.find('"', 6);
  if (close == std::string::npos) return false;
  frame.file = t.substr(6, close - 6);
  const std::size_t at = t.find("line ", close);
  if (at == std::string::npos) return false;
  frame.line = std::atoi(t.c_str() + at + 5);
  return true;
}

bool is_marker_line(std::string_view line) {
  const std::string t = trim(line);
  return !t.empty() && t.find_first_not_of("^~ ") == std::string::npos;
}

struct ErrorBlock {
  bool has_traceback = false;
  std::vector<Frame> frames;
  std::string terminal;  // empty when the output ends inside the block
};

// The first error block, or nullopt when the output holds none.
std::optional<ErrorBlock> first_error_block(std::string_view raw) {
  const auto lines = split_lines(raw);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Frame probe;
    const bool header = is_traceback_header(lines[i]);
    const bool frame_start = !header && parse_frame_header(lines[i], probe);
    if (!header && !frame_start && error_name(lines[i]).empty()) continue;

    ErrorBlock block;
    block.has_traceback = header;
    std::size_t j = header ? i + 1 : i;
    for (; j < lines.size(); ++j) {
      const std::string& line = lines[j];
      Frame f;
      if (parse_frame_header(line, f)) {
        block.frames.push_back(f);
        continue;
      }
      if (!line.empty() && !std::isspace(static_cast<unsigned char>(line[0])) && !error_name(line).empty()) {
        block.terminal = line;
        break;
      }
      if (!block.frames.empty() && block.frames.back().source.empty() && !trim(line).empty() &&
          !is_marker_line(line) && std::isspace(static_cast<unsigned char>(line[0]))) {
        block.frames.back().source = trim(line);
      }
    }
    return block;
  }
  return std::nullopt;
}

const std::set<std::string>& value_kind_errors() {
  static const std::set<std::string> names = {
      "ValueError",          "UnicodeError",       "UnicodeDecodeError", "UnicodeEncodeError",
      "UnicodeTranslateError", "ArithmeticError",  "ZeroDivisionError",  "OverflowError",
      "FloatingPointError",  "LookupError",        "IndexError",         "KeyError"};
  return names;
}

Category category_of_name(const std::string& name, bool parse_time) {
  const std::string l = lower(name);
  for (Category c : kAllCategories) {
    if (c != Category::OK && l == lower(to_string(c))) return c;
  }
  if (l == "taberror") return Category::IndentationError;
  if (l == "unboundlocalerror") return Category::NameError;
  for (const auto& v : value_kind_errors()) {
    if (l == lower(v)) return Category::TypeError;
  }
  if (parse_time) return Category::SyntaxError;
  return Category::AssertionError;
}

std::string find_on_path(const std::string& program) {
  if (program.find('/') != std::string::npos) return program;
  const char* path = std::getenv("PATH");
  std::stringstream ss(path ? path : "/usr/local/bin:/usr/bin:/bin");
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    if (dir.empty()) continue;
    fs::path p = fs::path(dir) / program;
    if (::access(p.c_str(), X_OK) == 0) return p.string();
  }
  throw ConfigError("cannot find " + program + " on PATH");
}

std::string make_nonce() {
  std::random_device rd;
  std::ostringstream os;
  os << "cgt-done-" << std::hex << rd() << rd() << rd();
  return os.str();
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "cgt-run-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw ConfigError("cannot create a temporary directory");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct ChildOutcome {
  std::string output;
  int status = 0;
  bool wall_timeout = false;
};

ChildOutcome run_child(const std::vector<std::string>& argv, const fs::path& workdir, const TestUnitSpec& spec,
                       const HarnessOptions& opts) {
  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  const std::string home = "HOME=" + workdir.string();
  const char* parent_path = std::getenv("PATH");
  const std::string path = std::string("PATH=") + (parent_path ? parent_path : "/usr/bin:/bin");
  std::vector<std::string> env = {path, home, "LANG=C.UTF-8", "PYTHONHASHSEED=0", "PYTHONDONTWRITEBYTECODE=1"};
  std::vector<char*> cenv;
  for (const auto& e : env) cenv.push_back(const_cast<char*>(e.c_str()));
  cenv.push_back(nullptr);
  const std::string dir = workdir.string();

  const rlim_t cpu = static_cast<rlim_t>(std::max(1.0, std::ceil(spec.time_limit)));
  const rlim_t mem = static_cast<rlim_t>(spec.memory_limit);
  const rlim_t fsize = static_cast<rlim_t>(opts.max_file_size);

  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw ConfigError("cannot create a pipe");
  const int devnull = ::open("/dev/null", O_RDONLY | O_CLOEXEC);

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    if (devnull >= 0) ::close(devnull);
    throw ConfigError("cannot fork");
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    if (devnull >= 0) ::dup2(devnull, 0);
    ::dup2(fds[1], 1);
    ::dup2(fds[1], 2);
    if (::chdir(dir.c_str()) != 0) ::_exit(126);
    struct rlimit rl;
    rl.rlim_cur = cpu;
    rl.rlim_max = cpu + 1;
    ::setrlimit(RLIMIT_CPU, &rl);
    rl.rlim_cur = rl.rlim_max = mem;
    ::setrlimit(RLIMIT_AS, &rl);
    rl.rlim_cur = rl.rlim_max = fsize;
    ::setrlimit(RLIMIT_FSIZE, &rl);
    rl.rlim_cur = rl.rlim_max = 0;
    ::setrlimit(RLIMIT_CORE, &rl);
    ::unshare(CLONE_NEWNET);
    ::execve(cargv[0], cargv.data(), cenv.data());
    static const char msg[] = "cannot start the test program\n";
    [[maybe_unused]] auto n = ::write(2, msg, sizeof msg - 1);
    ::_exit(127);
  }
  ::close(fds[1]);
  if (devnull >= 0) ::close(devnull);

  ChildOutcome out;
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(static_cast<long>(spec.time_limit * 2000 + 1000));
  bool exited = false;
  bool open = true;
  char buf[8192];
  while (open) {
    struct pollfd p {fds[0], POLLIN, 0};
    const int ready = ::poll(&p, 1, 50);
    if (ready > 0) {
      const ssize_t n = ::read(fds[0], buf, sizeof buf);
      if (n > 0) {
        if (out.output.size() < opts.max_output) {
          out.output.append(buf, static_cast<std::size_t>(
                                     std::min<ssize_t>(n, static_cast<ssize_t>(opts.max_output - out.output.size()))));
        }
        continue;
      }
      if (n == 0 || errno != EINTR) open = false;
    }
    if (!exited && ::waitpid(pid, &out.status, WNOHANG) == pid) {
      exited = true;
      // Stragglers in the group would otherwise hold the pipe open.
      ::kill(-pid, SIGKILL);
    }
    if (!exited && std::chrono::steady_clock::now() > deadline) {
      out.wall_timeout = true;
      ::kill(-pid, SIGKILL);
    }
  }
  ::close(fds[0]);
  if (!exited) ::waitpid(pid, &out.status, 0);
  return out;
}

std::string strip_sentinel(const std::string& output, const std::string& nonce, bool& seen) {
  seen = false;
  std::string out;
  for (const auto& line : split_lines(output)) {
    if (line == nonce) {
      seen = true;
      continue;
    }
    out += line;
    out += '\n';
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

/// Removes every occurrence of `prefix`.
void strip_prefix(std::string& text, const std::string& prefix) {
  for (auto pos = text.find(prefix); pos != std::string::npos; pos = text.find(prefix, pos)) {
    text.erase(pos, prefix.size());
  }
}

}  // namespace

std::string to_string(Category c) {
  switch (c) {
    case Category::OK: return "OK";
    case Category::AssertionError: return "AssertionError";
    case Category::AttributeError: return "AttributeError";
    case Category::SyntaxError: return "SyntaxError";
    case Category::NameError: return "NameError";
    case Category::TypeError: return "TypeError";
    case Category::IndentationError: return "IndentationError";
  }
  return "OK";
}

Category category_from_string(std::string_view name) {
  for (Category c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown test category: " + std::string(name));
}

std::string TestInfo::text() const {
  if (failing_fragment.empty()) return error_message;
  if (error_message.empty()) return failing_fragment;
  return failing_fragment + "\n" + error_message;
}

std::string error_name(std::string_view line) {
  if (line.empty() || std::isspace(static_cast<unsigned char>(line[0]))) return {};
  std::size_t end = 0;
  while (end < line.size() && (std::isalnum(static_cast<unsigned char>(line[end])) || line[end] == '_' ||
                               line[end] == '.')) {
    ++end;
  }
  if (end == 0 || (end < line.size() && line[end] != ':')) return {};
  std::string name(line.substr(0, end));
  if (const auto dot = name.rfind('.'); dot != std::string::npos) name = name.substr(dot + 1);
  const std::string l = lower(name);
  auto ends = [&](std::string_view suffix) {
    return l.size() > suffix.size() && l.compare(l.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends("error") || ends("exception") || l == "keyboardinterrupt" || l == "systemexit" ||
      l == "stopiteration") {
    return name;
  }
  return {};
}

Category classify_error(std::string_view raw_output) {
  const auto block = first_error_block(raw_output);
  if (!block) return Category::OK;
  if (block->terminal.empty()) return block->has_traceback ? Category::AssertionError : Category::SyntaxError;
  const bool parse_time = !block->has_traceback && !block->frames.empty();
  return category_of_name(error_name(block->terminal), parse_time);
}

TestResult run_tests(const std::string& code, const TestUnitSpec& spec, const HarnessOptions& opts) {
  if (!(spec.time_limit > 0)) throw ConfigError("time_limit must be positive");
  if (spec.memory_limit <= 0) throw ConfigError("memory_limit must be positive");
  TempDir dir;
  const fs::path file = dir.path() / kCandidateFile;
  const std::string nonce = make_nonce();
  std::vector<std::string> argv;
  {
    std::ofstream out(file, std::ios::binary);
    out << code;
    if (spec.kind == TestUnitSpec::Kind::Assertions) {
      out << "\n\n" << spec.payload << "\n";
      out << "__import__('os').write(1, b'\\n" << nonce << "\\n')\n";
    }
    if (!out) throw ConfigError("cannot write the test program");
  }
  if (spec.kind == TestUnitSpec::Kind::Assertions) {
    argv = {find_on_path(opts.python), "-I", "-B", "-u", kCandidateFile};
  } else {
    if (trim(spec.payload).empty()) throw ConfigError("simulator test unit has no command");
    argv = {"/bin/sh", "-c", spec.payload + " \"$1\"", "sh", file.string()};
  }

  const ChildOutcome child = run_child(argv, dir.path(), spec, opts);
  TestResult r;
  bool seen = false;
  r.raw_output = strip_sentinel(child.output, nonce, seen);
  strip_prefix(r.raw_output, dir.path().string() + "/");
  const bool signaled = WIFSIGNALED(child.status);
  r.exit_code = signaled ? 128 + WTERMSIG(child.status) : WEXITSTATUS(child.status);
  r.timed_out = child.wall_timeout ||
                (signaled && (WTERMSIG(child.status) == SIGXCPU || WTERMSIG(child.status) == SIGKILL));
  const bool completed = spec.kind == TestUnitSpec::Kind::Simulator || seen;
  r.passed = !r.timed_out && r.exit_code == 0 && completed;
  if (r.passed) {
    r.category = Category::OK;
    return r;
  }
  if (r.timed_out) {
    if (!r.raw_output.empty()) r.raw_output += '\n';
    r.raw_output += "Timeout: exceeded the " + std::to_string(spec.time_limit) + " s limit";
    r.category = Category::AssertionError;
    return r;
  }
  if (signaled) {
    if (!r.raw_output.empty()) r.raw_output += '\n';
    r.raw_output += "Terminated by signal " + std::to_string(WTERMSIG(child.status));
  } else if (r.exit_code == 0 && !completed) {
    if (!r.raw_output.empty()) r.raw_output += '\n';
    r.raw_output += "Exited before the test unit finished";
  }
  r.category = classify_error(r.raw_output);
  if (r.category == Category::OK) r.category = Category::AssertionError;
  return r;
}

TestInfo extract_test_info(std::string_view raw_output, std::string_view code) {
  TestInfo info;
  const auto block = first_error_block(raw_output);
  if (!block) {
    for (const auto& line : split_lines(raw_output)) {
      if (!trim(line).empty()) info.error_message = trim(line);
    }
  } else {
    const auto code_lines = split_lines(code);
    bool any_candidate = false;
    for (const auto& f : block->frames) any_candidate |= fs::path(f.file).filename() == kCandidateFile;
    std::vector<std::string> fragment;
    for (const auto& f : block->frames) {
      const bool candidate = fs::path(f.file).filename() == kCandidateFile;
      if (any_candidate && !candidate) continue;
      std::string src = f.source;
      if (src.empty() && candidate && f.line >= 1 && f.line <= static_cast<int>(code_lines.size())) {
        src = trim(code_lines[static_cast<std::size_t>(f.line - 1)]);
      }
      if (!src.empty()) fragment.push_back(src);
    }
    for (std::size_t i = 0; i < fragment.size(); ++i) {
      if (i) info.failing_fragment += '\n';
      info.failing_fragment += fragment[i];
    }
    info.error_message = trim(block->terminal);
  }
  info.tokens = tokenize(info.text());
  return info;
}

TestInfo extract_test_info(const TestResult& result, std::string_view code) {
  if (result.passed) return {};
  return extract_test_info(result.raw_output, code);
}

SweepResult corpus_test_sweep(const std::vector<std::string>& codes, const std::vector<TestUnitSpec>& specs,
                              int parallelism, const HarnessOptions& opts) {
  if (codes.size() != specs.size()) throw ShapeError("codes and test units differ in number");
  SweepResult sweep;
  sweep.results.resize(codes.size());
  const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(codes.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto work = [&](int w) {
    try {
      for (std::size_t i = next++; i < codes.size(); i = next++) sweep.results[i] = run_tests(codes[i], specs[i], opts);
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (int w = 1; w < workers; ++w) threads.emplace_back(work, w);
  work(0);
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& r : sweep.results) ++sweep.counts[static_cast<std::size_t>(r.category)];
  if (!codes.empty()) {
    for (std::size_t c = 0; c < kAllCategories.size(); ++c) {
      sweep.histogram[c] = 100.0 * sweep.counts[c] / static_cast<double>(codes.size());
    }
  }
  return sweep;
}

}  // namespace cgt
