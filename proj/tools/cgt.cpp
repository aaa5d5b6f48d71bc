// cgt: data preparation, training, generation, testing and evaluation.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "cgt/errors.hpp"
#include "cgt/pipeline.hpp"
#include "cgt/python_codec.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cgt;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

struct UsageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string run_dir;
  std::string seed;
  std::vector<std::string> sets;
  bool quiet = false;
  bool json_out = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Key-value configuration file")->envname("CGT_CONFIG");
  cmd->add_option("--seed", c.seed, "Random seed")->envname("CGT_SEED");
  cmd->add_option("--run-dir", c.run_dir, "Run directory")->envname("CGT_RUN_DIR");
  cmd->add_option("--set", c.sets, "Override one configuration key (key=value)");
  cmd->add_flag("--quiet", c.quiet, "No progress messages");
  cmd->add_flag("--json", c.json_out, "Machine-readable output");
}

/// CGT_ plus the key upper-cased, with dots as underscores.
std::string env_name(const std::string& key) {
  std::string n = "CGT_";
  for (char ch : key) n += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return n;
}

/// Defaults, then the config file, then CGT_ variables, then --set, then --seed.
PipelineConfig resolve_config(const Common& c, const KeyValues& forced = {}) {
  const KeyValues known = to_key_values(PipelineConfig{});
  auto check = [&](const std::string& key) {
    if (!known.count(key)) throw ConfigError("unknown configuration key: " + key);
  };
  KeyValues kv;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw UsageFailure("config file not found: " + c.config);
    kv = load_key_values(c.config);
    for (const auto& [k, v] : kv) check(k);
  }
  for (const auto& [k, v] : known) {
    if (const char* e = std::getenv(env_name(k).c_str())) kv[k] = e;
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageFailure("--set expects key=value, got " + s);
    const std::string key = s.substr(0, eq);
    check(key);
    kv[key] = s.substr(eq + 1);
  }
  for (const auto& [k, v] : forced) kv[k] = v;
  if (!c.seed.empty()) kv["seed"] = c.seed;
  PipelineConfig pc = pipeline_config_from(kv);
  pc.validate();
  if (!c.quiet) pc.on_progress = [](const std::string& m) { std::cerr << m << '\n'; };
  return pc;
}

Dataset read_dataset(const std::string& dir, const HearthstoneOptions& hs = {}) {
  if (!fs::is_directory(dir)) throw DataFailure("data directory not found: " + dir);
  try {
    return load_dataset(dir, hs);
  } catch (const Error& e) {
    throw DataFailure(e.what());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFailure("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string require_run_dir(const Common& c) {
  if (c.run_dir.empty()) throw UsageFailure("--run-dir is required");
  return c.run_dir;
}

json report_json(const MetricReport& r) {
  return json{{"test_acc", r.test_acc}, {"bleu", r.bleu},     {"rouge_l", r.rouge_l}, {"str_acc", r.str_acc},
              {"acc_plus_auto", r.acc_plus_auto}, {"M", r.M}, {"N_pass", r.N_pass}};
}

void print_report_header(std::ostream& out) {
  out << std::left << std::setw(6) << "round" << std::setw(7) << "split" << std::right << std::setw(10) << "pass"
      << std::setw(10) << "Test-Acc" << std::setw(8) << "BLEU" << std::setw(9) << "ROUGE-L" << std::setw(8)
      << "StrAcc" << std::setw(8) << "Acc+" << '\n';
}

void print_report_row(std::ostream& out, int round, const std::string& split, const MetricReport& m) {
  std::ostringstream pass;
  pass << m.N_pass << "/" << m.M;
  out << std::left << std::setw(6) << round << std::setw(7) << split << std::right << std::setw(10) << pass.str()
      << std::fixed << std::setprecision(1) << std::setw(10) << 100.0 * m.test_acc << std::setw(8) << m.bleu
      << std::setw(9) << m.rouge_l << std::setw(8) << 100.0 * m.str_acc << std::setw(8) << 100.0 * m.acc_plus_auto
      << '\n';
}

// ---- prepare-data -------------------------------------------------------------

struct PrepareArgs {
  std::string input;
  std::string format = "hearthstone";
  std::string out;
  int n = 50;
  int dev = 0;
  int test = 0;
  bool lenient = false;
  std::string simulator;
};

int cmd_prepare_data(const Common& c, const PrepareArgs& a) {
  const PipelineConfig pc = resolve_config(c);
  Dataset d;
  const bool single_file = ends_with(a.out, ".jsonl");
  if (a.format == "synthetic") {
    d = synthetic_dataset(a.n, single_file ? 0 : a.dev, single_file ? 0 : a.test, pc.seed);
  } else {
    if (a.input.empty()) throw UsageFailure("--input is required for --format hearthstone");
    HearthstoneOptions hs;
    hs.strict_counts = !a.lenient;
    hs.simulator = a.simulator;
    d = read_dataset(a.input, hs);
  }
  if (single_file) {
    Corpus all;
    for (const Corpus* s : {&d.train, &d.dev, &d.test}) {
      all.samples.insert(all.samples.end(), s->samples.begin(), s->samples.end());
    }
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    save_jsonl(all, a.out);
  } else {
    save_dataset(d, a.out);
  }
  if (c.json_out) {
    std::cout << json{{"out", a.out}, {"train", d.train.size()}, {"dev", d.dev.size()}, {"test", d.test.size()}}.dump()
              << '\n';
  } else {
    std::cout << "train " << d.train.size() << "\ndev " << d.dev.size() << "\ntest " << d.test.size() << '\n';
  }
  return kOk;
}

// ---- pipeline / ablate ----------------------------------------------------------

struct PipelineArgs {
  std::string data;
  int rounds = 0;
  bool no_test_info = false;
  bool no_code = false;
};

KeyValues forced_keys(const PipelineArgs& a) {
  KeyValues kv;
  if (a.rounds > 0) kv["N_iterations"] = std::to_string(a.rounds);
  if (a.no_test_info) kv["test_info_encoder"] = "false";
  if (a.no_code) kv["code_encoder"] = "false";
  return kv;
}

int cmd_pipeline(const Common& c, const PipelineArgs& a) {
  const std::string run_dir = require_run_dir(c);
  const PipelineConfig pc = resolve_config(c, forced_keys(a));
  const Dataset d = read_dataset(a.data);
  const PipelineResult r = run_pipeline(d, pc, run_dir);
  if (c.json_out) {
    std::cout << read_text((fs::path(run_dir) / "manifest.json").string());
    return kOk;
  }
  print_report_header(std::cout);
  for (const auto& state : r.rounds) {
    for (const char* split : {"train", "dev", "test"}) {
      const auto it = state.splits.find(split);
      if (it != state.splits.end()) print_report_row(std::cout, state.round, split, it->second.metrics);
    }
  }
  std::cout << "selected round " << r.selected_round << (r.stopped_early ? " (stopped early)" : "") << '\n';
  return kOk;
}

int cmd_ablate(const Common& c, const PipelineArgs& a) {
  const PipelineConfig pc = resolve_config(c, forced_keys(a));
  const Dataset d = read_dataset(a.data);
  const auto rows = ablation_grid(d, pc, c.run_dir);
  if (c.json_out) {
    json arr = json::array();
    for (const auto& row : rows) {
      arr.push_back({{"variant", row.variant.label()},
                     {"round", row.round},
                     {"test", report_json(row.test)},
                     {"dev", report_json(row.dev)}});
    }
    std::cout << arr.dump(2) << '\n';
  } else {
    std::cout << format_ablation_grid(rows);
  }
  return kOk;
}

// ---- train ----------------------------------------------------------------------

int cmd_train(const Common& c, const PipelineArgs& a) {
  const fs::path run_dir = require_run_dir(c);
  const PipelineConfig pc = resolve_config(c, forced_keys(a));
  const Dataset d = read_dataset(a.data);
  if (d.train.samples.empty()) throw DataFailure("the training split is empty");
  const Vocabs vocabs = pipeline_vocabs(d.train, pc);
  Model model(pc.model, python_grammar(), vocabs, pc.seed);
  std::vector<EncodedSample> inputs;
  for (const auto& s : d.train.samples) inputs.push_back(round_input(s, vocabs, nullptr, pc.ablation, pc.model.L_max));
  const TrainLog log = train_round(model, inputs, pc, 1);
  fs::create_directories(run_dir);
  write_text(run_dir / "config.txt", format_key_values(to_key_values(pc)));
  model.save((run_dir / "checkpoint.bin").string());
  std::ostringstream losses;
  losses.precision(17);
  for (std::size_t i = 0; i < log.epoch_losses.size(); ++i) losses << i + 1 << ' ' << log.epoch_losses[i] << '\n';
  write_text(run_dir / "train-log.txt", losses.str());
  const double last = log.epoch_losses.empty() ? 0.0 : log.epoch_losses.back();
  if (c.json_out) {
    std::cout << json{{"checkpoint", (run_dir / "checkpoint.bin").string()},
                      {"samples", inputs.size()},
                      {"epochs", log.epoch_losses.size()},
                      {"final_loss", last}}
                     .dump()
              << '\n';
  } else {
    std::cout << "trained on " << inputs.size() << " samples, final epoch loss " << last << '\n'
              << "checkpoint " << (run_dir / "checkpoint.bin").string() << '\n';
  }
  return kOk;
}

// ---- generate -------------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint;
  int round = 1;
  std::string nl;
  std::string input;
  std::string out_dir;
  std::string rules_out;
  std::string test_info;
  std::string last_code;
  int beam = 0;
  int max_actions = 0;
};

EncodedSample description_input(const Model& m, const std::string& nl, const std::string& test_info,
                                const RuleSequence& last_rules) {
  EncodedSample s;
  s.nl = encode_text(nl, m.vocabs());
  if (!test_info.empty()) s.test_info = encode_text(test_info, m.vocabs());
  s.last_rules = last_rules;
  return s;
}

std::string file_stem(const std::string& id) {
  std::string s = id;
  for (char& ch : s) {
    if (ch == '/' || ch == '\\' || ch == ':') ch = '_';
  }
  return s;
}

int cmd_generate(const Common& c, const GenerateArgs& a) {
  const PipelineConfig pc = resolve_config(c);
  std::string ckpt = a.checkpoint;
  if (ckpt.empty()) {
    if (c.run_dir.empty()) throw UsageFailure("give --checkpoint or --run-dir with --round");
    ckpt = (fs::path(c.run_dir) / ("round-" + std::to_string(a.round)) / "checkpoint.bin").string();
  }
  if (!fs::exists(ckpt)) throw DataFailure("checkpoint not found: " + ckpt);
  if (a.nl.empty() == a.input.empty()) throw UsageFailure("give exactly one of --nl and --input");
  const Model model = Model::load(ckpt);
  GenerationLimits limits = pc.limits;
  if (a.beam > 0) limits.beam_width = a.beam;
  if (a.max_actions > 0) limits.max_actions = a.max_actions;
  limits.validate();

  RuleSequence last_rules;
  if (!a.last_code.empty()) {
    try {
      last_rules = ast_to_rules(parse_to_ast(read_text(a.last_code)), python_grammar());
    } catch (const Error& e) {
      throw DataFailure(a.last_code + ": " + e.what());
    }
  }

  if (!a.nl.empty()) {
    const GenerationResult g = model.generate(description_input(model, a.nl, a.test_info, last_rules), limits);
    if (!a.rules_out.empty()) write_text(a.rules_out, format_rule_sequence(g.rules));
    if (c.json_out) {
      std::cout << json{{"code", g.code},
                        {"rules", format_rule_sequence(g.rules)},
                        {"complete", g.complete()},
                        {"limit_exceeded", g.limit_exceeded},
                        {"log_prob", g.log_prob}}
                       .dump()
                << '\n';
      return g.complete() ? kOk : kRuntime;
    }
    if (!g.complete()) {
      std::cerr << "cgt: generation did not complete" << (g.limit_exceeded ? " (action limit)" : "")
                << (g.error.empty() ? "" : ": " + g.error) << '\n';
      return kRuntime;
    }
    std::cout << g.code;
    return kOk;
  }

  if (a.out_dir.empty()) throw UsageFailure("--input needs --out-dir");
  Corpus corpus;
  try {
    corpus = load_jsonl(a.input);
  } catch (const Error& e) {
    throw DataFailure(e.what());
  }
  fs::create_directories(a.out_dir);
  int complete = 0;
  for (const auto& s : corpus.samples) {
    const GenerationResult g = model.generate(description_input(model, s.nl, a.test_info, last_rules), limits);
    const fs::path base = fs::path(a.out_dir) / file_stem(s.id);
    write_text(base.string() + ".py", g.code);
    write_text(base.string() + ".rules", format_rule_sequence(g.rules));
    complete += g.complete() ? 1 : 0;
    if (c.json_out) {
      std::cout << json{{"id", s.id}, {"complete", g.complete()}, {"limit_exceeded", g.limit_exceeded}}.dump() << '\n';
    } else {
      std::cout << s.id << ' ' << (g.complete() ? "complete" : "incomplete") << '\n';
    }
  }
  if (!c.json_out) std::cout << complete << "/" << corpus.size() << " complete\n";
  return kOk;
}

// ---- test -----------------------------------------------------------------------

struct TestArgs {
  std::string code;
  std::string tests;
  std::string kind = "assertions";
  double time_limit = 5.0;
  double memory_mb = 256.0;
};

int cmd_test(const Common& c, const TestArgs& a) {
  const PipelineConfig pc = resolve_config(c);
  TestUnitSpec spec;
  spec.kind = test_kind_from_string(a.kind);
  spec.payload = spec.kind == TestUnitSpec::Kind::Simulator && !fs::exists(a.tests) ? a.tests : read_text(a.tests);
  spec.time_limit = a.time_limit;
  spec.memory_limit = static_cast<std::int64_t>(a.memory_mb * 1024.0 * 1024.0);
  const std::string code = read_text(a.code);
  const TestResult r = run_tests(code, spec, pc.harness);
  const TestInfo info = extract_test_info(r, code);
  if (c.json_out) {
    std::cout << json{{"category", to_string(r.category)},
                      {"passed", r.passed},
                      {"timed_out", r.timed_out},
                      {"exit_code", r.exit_code},
                      {"failing_fragment", info.failing_fragment},
                      {"error_message", info.error_message},
                      {"raw_output", r.raw_output}}
                     .dump()
              << '\n';
    return kOk;
  }
  std::cout << to_string(r.category) << '\n';
  if (!r.passed) {
    if (!info.failing_fragment.empty()) std::cout << "fragment: " << info.failing_fragment << '\n';
    if (!info.error_message.empty()) std::cout << "message: " << info.error_message << '\n';
  }
  return kOk;
}

// ---- evaluate -------------------------------------------------------------------

struct EvaluateArgs {
  int round = 0;
  std::string split = "test";
  std::string data;
};

int cmd_evaluate(const Common& c, const EvaluateArgs& a) {
  const fs::path run_dir = require_run_dir(c);
  int round = a.round;
  if (round <= 0) {
    const fs::path manifest = run_dir / "manifest.json";
    if (!fs::exists(manifest)) throw DataFailure("no manifest in " + run_dir.string());
    round = json::parse(read_text(manifest.string())).at("selected_round").get<int>();
  }
  const fs::path rd = run_dir / ("round-" + std::to_string(round));
  if (!fs::is_directory(rd)) throw DataFailure("round not found: " + rd.string());

  std::vector<std::string> splits;
  if (a.split == "all") {
    splits = {"train", "dev", "test"};
  } else if (a.split == "train" || a.split == "dev" || a.split == "test") {
    splits = {a.split};
  } else {
    throw UsageFailure("--split must be train, dev, test or all");
  }

  std::optional<Dataset> data;
  if (!a.data.empty()) data = read_dataset(a.data);
  json out = json::object();
  if (!c.json_out) print_report_header(std::cout);
  for (const auto& split : splits) {
    const fs::path stored = rd / ("metrics-" + split + ".txt");
    if (!fs::exists(stored)) {
      if (a.split == "all") continue;
      throw DataFailure("no " + split + " metrics in " + rd.string());
    }
    MetricReport m;
    try {
      m = parse_report(read_text(stored.string()));
    } catch (const ConfigError& e) {
      throw DataFailure(stored.string() + ": " + e.what());
    }
    if (data) {
      SplitOutputs outputs;
      try {
        outputs = parse_outputs_jsonl(read_text((rd / ("outputs-" + split + ".jsonl")).string()));
      } catch (const ConfigError& e) {
        throw DataFailure(e.what());
      }
      const Corpus& corpus = split == "train" ? data->train : split == "dev" ? data->dev : data->test;
      score_outputs(outputs, corpus);
      m = outputs.metrics;
    }
    if (c.json_out) {
      out[split] = report_json(m);
    } else {
      print_report_row(std::cout, round, split, m);
    }
  }
  if (c.json_out) std::cout << json{{"round", round}, {"metrics", out}}.dump(2) << '\n';
  return kOk;
}

int guarded(const std::function<int()>& f) {
  try {
    return f();
  } catch (const UsageFailure& e) {
    std::cerr << "cgt: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "cgt: configuration: " << e.what() << '\n';
    return kUsage;
  } catch (const DataFailure& e) {
    std::cerr << "cgt: data: " << e.what() << '\n';
    return kData;
  } catch (const MissingSplit& e) {
    std::cerr << "cgt: data: " << e.what() << '\n';
    return kData;
  } catch (const CountMismatch& e) {
    std::cerr << "cgt: data: " << e.what() << '\n';
    return kData;
  } catch (const EmptyCorpus& e) {
    std::cerr << "cgt: data: " << e.what() << '\n';
    return kData;
  } catch (const UnparseableReference& e) {
    std::cerr << "cgt: data: " << e.what() << '\n';
    return kData;
  } catch (const CheckpointError& e) {
    std::cerr << "cgt: data: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "cgt: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grammar-based code generation with test feedback"};
  app.require_subcommand(1);

  Common common;
  PrepareArgs prep;
  PipelineArgs pipe;
  GenerateArgs gen;
  TestArgs test;
  EvaluateArgs eval;

  auto* prepare = app.add_subcommand("prepare-data", "Normalize a corpus into jsonl records");
  add_common(prepare, common);
  prepare->add_option("--input", prep.input, "HearthStone directory");
  prepare->add_option("--format", prep.format)->check(CLI::IsMember({"hearthstone", "synthetic"}));
  prepare->add_option("--out", prep.out, "A .jsonl file, or a directory for train/dev/test.jsonl")->required();
  prepare->add_option("--n", prep.n, "Synthetic sample count (training split in directory mode)");
  prepare->add_option("--dev", prep.dev, "Synthetic dev samples in directory mode");
  prepare->add_option("--test", prep.test, "Synthetic test samples in directory mode");
  prepare->add_flag("--lenient", prep.lenient, "Accept HearthStone split sizes other than 533/66/66");
  prepare->add_option("--simulator", prep.simulator, "Simulator command recorded in HearthStone test units");

  auto* pipeline = app.add_subcommand("pipeline", "Run the iterative train/generate/test loop");
  add_common(pipeline, common);
  pipeline->add_option("--data", pipe.data, "Dataset directory")->required();
  pipeline->add_option("--rounds", pipe.rounds, "Number of rounds");
  pipeline->add_flag("--no-test-info", pipe.no_test_info, "Disable the test-information encoder");
  pipeline->add_flag("--no-code", pipe.no_code, "Disable the code encoder");

  auto* train = app.add_subcommand("train", "Train a first-round model");
  add_common(train, common);
  train->add_option("--data", pipe.data, "Dataset directory")->required();

  auto* generate = app.add_subcommand("generate", "Generate code from descriptions");
  add_common(generate, common);
  generate->add_option("--checkpoint", gen.checkpoint);
  generate->add_option("--round", gen.round, "Round under --run-dir");
  generate->add_option("--nl", gen.nl, "One description");
  generate->add_option("--input", gen.input, "jsonl records whose descriptions are used");
  generate->add_option("--out-dir", gen.out_dir, "Receives <id>.py and <id>.rules for --input");
  generate->add_option("--rules-out", gen.rules_out, "Rule sequence file for --nl");
  generate->add_option("--test-info", gen.test_info, "Test information from a previous attempt");
  generate->add_option("--last-code", gen.last_code, "Code file of a previous attempt");
  generate->add_option("--beam", gen.beam, "Beam width");
  generate->add_option("--max-actions", gen.max_actions, "Action limit");

  auto* test_cmd = app.add_subcommand("test", "Run a code file against a test unit");
  add_common(test_cmd, common);
  test_cmd->add_option("--code", test.code, "Code file")->required();
  test_cmd->add_option("--tests", test.tests, "Assertion file, or simulator command")->required();
  test_cmd->add_option("--kind", test.kind)->check(CLI::IsMember({"assertions", "simulator"}));
  test_cmd->add_option("--time-limit", test.time_limit, "Seconds")->check(CLI::PositiveNumber);
  test_cmd->add_option("--memory-limit", test.memory_mb, "MiB")->check(CLI::PositiveNumber);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Print the metrics of a finished round");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--run", common.run_dir, "Run directory");
  evaluate_cmd->add_option("--round", eval.round, "Round (default: the selected round)");
  evaluate_cmd->add_option("--split", eval.split, "train, dev, test or all");
  evaluate_cmd->add_option("--data", eval.data, "Recompute the metrics against this dataset");

  auto* ablate = app.add_subcommand("ablate", "Run the four encoder variants");
  add_common(ablate, common);
  ablate->add_option("--data", pipe.data, "Dataset directory")->required();
  ablate->add_option("--rounds", pipe.rounds, "Number of rounds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  if (*prepare) return guarded([&] { return cmd_prepare_data(common, prep); });
  if (*pipeline) return guarded([&] { return cmd_pipeline(common, pipe); });
  if (*train) return guarded([&] { return cmd_train(common, pipe); });
  if (*generate) return guarded([&] { return cmd_generate(common, gen); });
  if (*test_cmd) return guarded([&] { return cmd_test(common, test); });
  if (*evaluate_cmd) return guarded([&] { return cmd_evaluate(common, eval); });
  if (*ablate) return guarded([&] { return cmd_ablate(common, pipe); });
  return kUsage;
}
