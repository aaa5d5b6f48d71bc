#include "cgt/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "cgt/errors.hpp"

namespace cgt {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(TestUnitSpec::Kind kind) {
  return kind == TestUnitSpec::Kind::Assertions ? "assertions" : "simulator";
}

TestUnitSpec::Kind test_kind_from_string(const std::string& s) {
  if (s == "assertions") return TestUnitSpec::Kind::Assertions;
  if (s == "simulator") return TestUnitSpec::Kind::Simulator;
  throw ConfigError("unknown test unit kind: " + s);
}

namespace {

json to_json(const RawSample& s) {
  return json{{"id", s.id},
              {"nl", s.nl},
              {"code", s.code},
              {"test_unit",
               {{"kind", to_string(s.test_unit.kind)},
                {"payload", s.test_unit.payload},
                {"time_limit", s.test_unit.time_limit},
                {"memory_limit", s.test_unit.memory_limit}}}};
}

RawSample from_json(const json& j) {
  RawSample s;
  s.id = j.at("id").get<std::string>();
  s.nl = j.at("nl").get<std::string>();
  s.code = j.at("code").get<std::string>();
  if (j.contains("test_unit")) {
    const json& t = j.at("test_unit");
    s.test_unit.kind = test_kind_from_string(t.value("kind", "assertions"));
    s.test_unit.payload = t.value("payload", "");
    s.test_unit.time_limit = t.value("time_limit", 5.0);
    s.test_unit.memory_limit = t.value("memory_limit", static_cast<std::int64_t>(256LL << 20));
  }
  return s;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingSplit("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

const std::map<std::string, std::size_t> kHearthstoneSizes = {{"train", 533}, {"dev", 66}, {"test", 66}};

}  // namespace

void save_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& s : corpus.samples) out << to_json(s).dump() << '\n';
}

Corpus load_jsonl(const std::string& path, const std::string& split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingSplit("cannot read " + path);
  Corpus c;
  c.split = split.empty() ? fs::path(path).stem().string() : split;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      c.samples.push_back(from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

std::string detect_newline_marker(const std::vector<std::string>& code_lines) {
  static const std::vector<std::string> candidates = {"§", "NEWLINE", "\\n"};
  std::string best = candidates.front();
  std::size_t best_count = 0;
  for (const auto& m : candidates) {
    std::size_t count = 0;
    for (const auto& l : code_lines) count += l.find(m) != std::string::npos;
    if (count > best_count) {
      best = m;
      best_count = count;
    }
  }
  return best;
}

std::map<std::string, Corpus> load_hearthstone(const std::string& dir, const HearthstoneOptions& opts) {
  std::map<std::string, Corpus> out;
  for (const auto& [split, expected] : kHearthstoneSizes) {
    const fs::path in_path = fs::path(dir) / (split + "_hs.in");
    const fs::path out_path = fs::path(dir) / (split + "_hs.out");
    if (!fs::exists(in_path) || !fs::exists(out_path)) {
      throw MissingSplit("split '" + split + "' not found in " + dir);
    }
    auto descriptions = read_lines(in_path);
    auto codes = read_lines(out_path);
    if (descriptions.size() != codes.size()) {
      throw CountMismatch(split + ": " + std::to_string(descriptions.size()) + " descriptions but " +
                          std::to_string(codes.size()) + " programs");
    }
    if (opts.strict_counts && descriptions.size() != expected) {
      throw CountMismatch(split + ": expected " + std::to_string(expected) + " samples, found " +
                          std::to_string(descriptions.size()));
    }
    const std::string marker = detect_newline_marker(codes);
    Corpus c;
    c.split = split;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      RawSample s;
      s.id = split + "-" + std::to_string(i);
      s.nl = descriptions[i];
      s.code = replace_all(codes[i], marker, "\n");
      if (s.code.empty() || s.code.back() != '\n') s.code += '\n';
      s.test_unit.kind = TestUnitSpec::Kind::Simulator;
      s.test_unit.payload = opts.simulator;
      c.samples.push_back(std::move(s));
    }
    out.emplace(split, std::move(c));
  }
  return out;
}

void save_hearthstone(const std::map<std::string, Corpus>& splits, const std::string& dir,
                      const std::string& newline_marker) {
  fs::create_directories(dir);
  for (const auto& [split, corpus] : splits) {
    std::ofstream in(fs::path(dir) / (split + "_hs.in"), std::ios::binary);
    std::ofstream out(fs::path(dir) / (split + "_hs.out"), std::ios::binary);
    for (const auto& s : corpus.samples) {
      std::string code = s.code;
      if (!code.empty() && code.back() == '\n') code.pop_back();
      in << s.nl << '\n';
      out << replace_all(code, "\n", newline_marker) << '\n';
    }
  }
}

}  // namespace cgt
