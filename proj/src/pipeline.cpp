#include "cgt/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <random>
#include <sstream>

#include "cgt/errors.hpp"
#include "cgt/python_codec.hpp"

namespace cgt {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const char* const kSplits[] = {"train", "dev", "test"};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void progress(const PipelineConfig& config, const std::string& msg) {
  if (config.on_progress) config.on_progress(msg);
}

const Corpus& split_of(const Dataset& data, const std::string& name) {
  if (name == "train") return data.train;
  if (name == "dev") return data.dev;
  return data.test;
}

// Reference code as the printer writes it.
std::string canonical(const std::string& code) {
  try {
    return ast_to_code(parse_to_ast(code));
  } catch (const Error&) {
    return code;
  }
}

json report_json(const MetricReport& r) {
  return json{{"test_acc", r.test_acc}, {"bleu", r.bleu},     {"rouge_l", r.rouge_l}, {"str_acc", r.str_acc},
              {"acc_plus_auto", r.acc_plus_auto}, {"M", r.M}, {"N_pass", r.N_pass}};
}

std::string format_categories(const std::array<int, 7>& counts) {
  KeyValues kv;
  for (std::size_t c = 0; c < kAllCategories.size(); ++c) kv[to_string(kAllCategories[c])] = std::to_string(counts[c]);
  return format_key_values(kv);
}

void save_round(const RoundState& state, const Model& model, const fs::path& dir) {
  fs::create_directories(dir);
  model.save((dir / "checkpoint.bin").string());
  std::ostringstream losses;
  losses << std::setprecision(17);
  for (double l : state.step_losses) losses << l << '\n';
  write_file(dir / "train-log.txt", losses.str());
  std::string subset;
  for (const auto& id : state.train_subset) subset += id + "\n";
  write_file(dir / "train-subset.txt", subset);
  for (const auto& [name, out] : state.splits) {
    write_file(dir / ("outputs-" + name + ".jsonl"), format_outputs_jsonl(out));
    write_file(dir / ("metrics-" + name + ".txt"), format_report(out.metrics));
    write_file(dir / ("test-results-" + name + ".txt"), format_categories(out.categories));
  }
}

void save_manifest(const PipelineResult& result, const PipelineConfig& config, const Vocabs& vocabs,
                   const fs::path& dir) {
  json rounds = json::array();
  for (const auto& r : result.rounds) {
    json metrics = json::object();
    for (const auto& [name, out] : r.splits) metrics[name] = report_json(out.metrics);
    rounds.push_back({{"round", r.round},
                      {"dir", "round-" + std::to_string(r.round)},
                      {"train_subset_size", r.train_subset.size()},
                      {"metrics", metrics}});
  }
  json m = {{"name", config.name},
            {"seed", config.seed},
            {"ablation", config.ablation.label()},
            {"rounds_requested", config.model.N_iterations},
            {"rounds", rounds},
            {"stopped_early", result.stopped_early},
            {"selected_round", result.selected_round},
            {"vocab", {{"words", vocabs.words.size()}, {"chars", vocabs.chars.size()},
                       {"terminals", vocabs.terminals.size()}}}};
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

std::uint64_t round_seed(std::uint64_t seed, int round) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

// ---- data -------------------------------------------------------------------

Dataset load_dataset(const std::string& dir, const HearthstoneOptions& hs) {
  Dataset d;
  if (fs::exists(fs::path(dir) / "train.jsonl")) {
    d.train = load_jsonl((fs::path(dir) / "train.jsonl").string(), "train");
    d.dev = load_jsonl((fs::path(dir) / "dev.jsonl").string(), "dev");
    d.test = load_jsonl((fs::path(dir) / "test.jsonl").string(), "test");
    return d;
  }
  auto splits = load_hearthstone(dir, hs);
  d.train = splits.at("train");
  d.dev = splits.at("dev");
  d.test = splits.at("test");
  return d;
}

void save_dataset(const Dataset& data, const std::string& dir) {
  fs::create_directories(dir);
  save_jsonl(data.train, (fs::path(dir) / "train.jsonl").string());
  save_jsonl(data.dev, (fs::path(dir) / "dev.jsonl").string());
  save_jsonl(data.test, (fs::path(dir) / "test.jsonl").string());
}

const std::vector<std::string>& test_report_lexicon() {
  static const std::vector<std::string> words = {
      "OK AssertionError AttributeError SyntaxError NameError TypeError IndentationError TabError ValueError",
      "Traceback most recent call last File line in module",
      "object has no attribute name is not defined invalid syntax unexpected indent expected an indented block",
      "unsupported operand type types for can only concatenate str not int to argument arguments positional",
      "missing required takes but were given got multiple values keyword unexpected unindent does match any",
      "outer indentation level Timeout exceeded the limit Exited before test unit finished Terminated by signal",
      "callable subscriptable iterable NoneType list dict tuple float bool",
  };
  return words;
}

Dataset synthetic_dataset(int train, int dev, int test, std::uint64_t seed) {
  if (train < 1 || dev < 0 || test < 0) throw ConfigError("synthetic split sizes must be positive");
  Corpus all = generate_synthetic_corpus(python_grammar(), train + dev + test, seed);
  Dataset d;
  d.train.split = "train";
  d.dev.split = "dev";
  d.test.split = "test";
  for (int i = 0; i < static_cast<int>(all.samples.size()); ++i) {
    Corpus& target = i < train ? d.train : (i < train + dev ? d.dev : d.test);
    target.samples.push_back(all.samples[static_cast<std::size_t>(i)]);
  }
  return d;
}

// ---- configuration ----------------------------------------------------------

std::string Ablation::label() const {
  if (test_info_encoder && code_encoder) return "full";
  if (!test_info_encoder && !code_encoder) return "no-test-info-no-code";
  return test_info_encoder ? "no-code" : "no-test-info";
}

void PipelineConfig::validate() const {
  model.validate();
  if (model.N_iterations < 1) throw ConfigError("N_iterations must be at least 1");
  if (epochs < 1 || finetune_epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (threads < 1 || test_parallelism < 1) throw ConfigError("thread counts must be at least 1");
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("run name must be a plain file name");
  limits.validate();
}

PipelineConfig pipeline_config_from(const KeyValues& kv, PipelineConfig base) {
  PipelineConfig c = std::move(base);
  c.model = model_config_from(kv, c.model);
  c.name = get_string(kv, "name", c.name);
  if (kv.count("seed")) {
    try {
      c.seed = std::stoull(kv.at("seed"));
    } catch (const std::logic_error&) {
      throw ConfigError("seed: not an unsigned integer: " + kv.at("seed"));
    }
  }
  c.epochs = get_int(kv, "epochs", c.epochs);
  c.finetune_epochs = get_int(kv, "finetune_epochs", c.finetune_epochs);
  c.batch_size = get_int(kv, "batch_size", c.batch_size);
  c.threads = get_int(kv, "threads", c.threads);
  c.fresh_each_round = get_bool(kv, "fresh_each_round", c.fresh_each_round);
  c.limits.max_actions = get_int(kv, "max_actions", c.limits.max_actions);
  c.limits.beam_width = get_int(kv, "beam_width", c.limits.beam_width);
  c.test_parallelism = get_int(kv, "test_parallelism", c.test_parallelism);
  c.harness.python = get_string(kv, "python", c.harness.python);
  c.ablation.test_info_encoder = get_bool(kv, "test_info_encoder", c.ablation.test_info_encoder);
  c.ablation.code_encoder = get_bool(kv, "code_encoder", c.ablation.code_encoder);
  c.vocab.min_freq_words = get_int(kv, "min_freq_words", c.vocab.min_freq_words);
  c.vocab.min_freq_terminals = get_int(kv, "min_freq_terminals", c.vocab.min_freq_terminals);
  return c;
}

KeyValues to_key_values(const PipelineConfig& c) {
  KeyValues kv = to_key_values(c.model);
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv["name"] = c.name;
  kv["seed"] = std::to_string(c.seed);
  kv["epochs"] = std::to_string(c.epochs);
  kv["finetune_epochs"] = std::to_string(c.finetune_epochs);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["threads"] = std::to_string(c.threads);
  kv["fresh_each_round"] = b(c.fresh_each_round);
  kv["max_actions"] = std::to_string(c.limits.max_actions);
  kv["beam_width"] = std::to_string(c.limits.beam_width);
  kv["test_parallelism"] = std::to_string(c.test_parallelism);
  kv["python"] = c.harness.python;
  kv["test_info_encoder"] = b(c.ablation.test_info_encoder);
  kv["code_encoder"] = b(c.ablation.code_encoder);
  kv["min_freq_words"] = std::to_string(c.vocab.min_freq_words);
  kv["min_freq_terminals"] = std::to_string(c.vocab.min_freq_terminals);
  return kv;
}

// ---- rounds -----------------------------------------------------------------

std::vector<std::string> SplitOutputs::failing_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : samples) {
    if (!s.result.passed) ids.push_back(s.id);
  }
  return ids;
}

EncodedSample round_input(const RawSample& sample, const Vocabs& vocabs, const SampleOutput* previous,
                          const Ablation& ablation, int max_tokens) {
  std::string info;
  RuleSequence last;
  if (previous) {
    if (ablation.test_info_encoder && !previous->result.passed) info = previous->info.text();
    if (ablation.code_encoder) last = previous->rules;
  }
  EncodedSample s = encode_sample(sample, vocabs, python_grammar(), info, last);
  const auto cap = static_cast<std::size_t>(std::max(0, max_tokens));
  if (s.test_info.size() > cap) {
    s.test_info.ids.resize(cap);
    s.test_info.char_ids.resize(cap);
    s.test_info.text.tokens.resize(cap);
    s.test_info.text.chars.resize(cap);
  }
  if (s.last_rules.size() > cap) {
    s.last_rules.actions.resize(cap);
    s.last_rules.partial = true;
  }
  return s;
}

TrainLog train_round(Model& model, const std::vector<EncodedSample>& inputs, const PipelineConfig& config,
                     int round) {
  if (inputs.empty()) throw EmptySubset("round " + std::to_string(round) + " has no training samples");
  TrainOptions opts;
  opts.epochs = round == 1 ? config.epochs : config.finetune_epochs;
  opts.batch_size = config.batch_size;
  opts.threads = config.threads;
  opts.seed = round_seed(config.seed, round);
  return train(model, inputs, opts);
}

SplitOutputs infer_round(const Model& model, const Corpus& corpus, const Vocabs& vocabs,
                         const SplitOutputs* previous, const PipelineConfig& config) {
  if (previous && previous->samples.size() != corpus.samples.size()) {
    throw ShapeError("previous round covers a different number of samples");
  }
  SplitOutputs out;
  out.samples.resize(corpus.samples.size());
  std::vector<std::size_t> fresh;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const RawSample& raw = corpus.samples[i];
    const SampleOutput* prev = previous ? &previous->samples[i] : nullptr;
    if (prev && prev->id != raw.id) throw ShapeError("previous round is ordered differently");
    SampleOutput& o = out.samples[i];
    if (prev && prev->result.passed) {
      o = *prev;
      o.copied = true;
      continue;
    }
    o.id = raw.id;
    const EncodedSample input = round_input(raw, vocabs, prev, config.ablation, config.model.L_max);
    GenerationResult g = model.generate(input, config.limits);
    o.code = g.code;
    o.rules = g.rules;
    o.limit_exceeded = g.limit_exceeded;
    o.error = g.error;
    fresh.push_back(i);
  }

  std::vector<std::string> codes;
  std::vector<TestUnitSpec> specs;
  for (std::size_t i : fresh) {
    codes.push_back(out.samples[i].code);
    specs.push_back(corpus.samples[i].test_unit);
  }
  SweepResult sweep = corpus_test_sweep(codes, specs, config.test_parallelism, config.harness);
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    SampleOutput& o = out.samples[fresh[k]];
    o.result = sweep.results[k];
    o.info = extract_test_info(o.result, o.code);
  }

  score_outputs(out, corpus);
  return out;
}

void score_outputs(SplitOutputs& outputs, const Corpus& corpus) {
  if (outputs.samples.size() != corpus.samples.size()) throw ShapeError("outputs and corpus differ in size");
  std::vector<std::string> candidates, references;
  std::vector<TestResult> results;
  outputs.categories = {};
  for (std::size_t i = 0; i < outputs.samples.size(); ++i) {
    if (outputs.samples[i].id != corpus.samples[i].id) throw ShapeError("outputs are ordered differently");
    candidates.push_back(outputs.samples[i].code);
    references.push_back(canonical(corpus.samples[i].code));
    results.push_back(outputs.samples[i].result);
    ++outputs.categories[static_cast<std::size_t>(outputs.samples[i].result.category)];
  }
  if (!outputs.samples.empty()) outputs.metrics = evaluate(candidates, references, results);
}

Vocabs pipeline_vocabs(const Corpus& train, const PipelineConfig& config) {
  VocabOptions vopts = config.vocab;
  vopts.max_chars = config.model.S_max;
  vopts.extra_text.insert(vopts.extra_text.end(), test_report_lexicon().begin(), test_report_lexicon().end());
  return build_vocabs(train, python_grammar(), vopts);
}

PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config, const std::string& run_dir) {
  config.validate();
  if (data.train.samples.empty()) throw EmptyCorpus("the training split is empty");
  const Vocabs vocabs = pipeline_vocabs(data.train, config);
  Model model(config.model, python_grammar(), vocabs, config.seed);

  const fs::path dir(run_dir);
  if (!run_dir.empty()) {
    fs::create_directories(dir);
    write_file(dir / "config.txt", format_key_values(to_key_values(config)));
  }

  PipelineResult result;
  for (int r = 1; r <= config.model.N_iterations; ++r) {
    const RoundState* prev = result.rounds.empty() ? nullptr : &result.rounds.back();
    RoundState state;
    state.round = r;
    std::vector<EncodedSample> inputs;
    for (std::size_t i = 0; i < data.train.samples.size(); ++i) {
      const SampleOutput* p = prev ? &prev->splits.at("train").samples[i] : nullptr;
      if (p && p->result.passed) continue;
      state.train_subset.push_back(data.train.samples[i].id);
      inputs.push_back(round_input(data.train.samples[i], vocabs, p, config.ablation, config.model.L_max));
    }
    if (r > 1 && config.fresh_each_round) model = Model(config.model, python_grammar(), vocabs, config.seed);
    progress(config, "round " + std::to_string(r) + ": training on " + std::to_string(inputs.size()) + " samples");
    try {
      state.step_losses = train_round(model, inputs, config, r).step_losses;
    } catch (const EmptySubset&) {
      progress(config, "round " + std::to_string(r) + ": no failing training samples, stopping");
      result.stopped_early = true;
      break;
    }

    for (const char* name : kSplits) {
      const Corpus& corpus = split_of(data, name);
      if (corpus.samples.empty()) continue;
      const SplitOutputs* p = prev ? &prev->splits.at(name) : nullptr;
      state.splits[name] = infer_round(model, corpus, vocabs, p, config);
      const MetricReport& m = state.splits[name].metrics;
      std::ostringstream msg;
      msg << "round " << r << " " << name << ": Test-Acc " << m.N_pass << "/" << m.M << " BLEU " << std::fixed
          << std::setprecision(1) << m.bleu;
      progress(config, msg.str());
    }
    if (!run_dir.empty()) save_round(state, model, dir / ("round-" + std::to_string(r)));
    result.rounds.push_back(std::move(state));
  }
  result.selected_round = select_round(result.rounds);
  if (!run_dir.empty()) save_manifest(result, config, vocabs, dir);
  return result;
}

int select_round(const std::vector<RoundState>& rounds) {
  int best = 0;
  for (std::size_t i = 1; i < rounds.size(); ++i) {
    auto score = [&](std::size_t k) {
      auto it = rounds[k].splits.find("dev");
      if (it == rounds[k].splits.end()) return std::pair<double, double>{0.0, 0.0};
      return std::pair<double, double>{it->second.metrics.test_acc, it->second.metrics.bleu};
    };
    if (score(i) > score(static_cast<std::size_t>(best))) best = static_cast<int>(i);
  }
  return rounds.empty() ? 1 : rounds[static_cast<std::size_t>(best)].round;
}

// ---- ablations --------------------------------------------------------------

std::vector<AblationRow> ablation_grid(const Dataset& data, const PipelineConfig& config, const std::string& run_dir) {
  std::vector<AblationRow> rows;
  for (Ablation a : {Ablation{true, true}, Ablation{false, true}, Ablation{true, false}, Ablation{false, false}}) {
    PipelineConfig c = config;
    c.ablation = a;
    c.name = config.name + "-" + a.label();
    const std::string sub = run_dir.empty() ? "" : (fs::path(run_dir) / a.label()).string();
    PipelineResult res = run_pipeline(data, c, sub);
    for (int r = 1; r <= config.model.N_iterations; ++r) {
      const RoundState& s = res.rounds[static_cast<std::size_t>(std::min<int>(r, static_cast<int>(res.rounds.size())) - 1)];
      AblationRow row;
      row.variant = a;
      row.round = r;
      if (s.splits.count("test")) row.test = s.splits.at("test").metrics;
      if (s.splits.count("dev")) row.dev = s.splits.at("dev").metrics;
      rows.push_back(row);
    }
  }
  if (!run_dir.empty()) write_file(fs::path(run_dir) / "ablation.tsv", format_ablation_grid(rows));
  return rows;
}

std::string format_ablation_grid(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant\tround\ttest_acc\tbleu\trouge_l\tstr_acc\tacc_plus_auto\tN_pass\tM\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << r.variant.label() << '\t' << r.round << '\t' << r.test.test_acc << '\t' << r.test.bleu << '\t'
       << r.test.rouge_l << '\t' << r.test.str_acc << '\t' << r.test.acc_plus_auto << '\t' << r.test.N_pass << '\t'
       << r.test.M << '\n';
  }
  return os.str();
}

// ---- records ----------------------------------------------------------------

std::string format_outputs_jsonl(const SplitOutputs& outputs) {
  std::string text;
  for (const auto& s : outputs.samples) {
    json j = {{"id", s.id},
              {"code", s.code},
              {"rules", format_rule_sequence(s.rules)},
              {"partial", s.rules.partial},
              {"category", to_string(s.result.category)},
              {"passed", s.result.passed},
              {"timed_out", s.result.timed_out},
              {"exit_code", s.result.exit_code},
              {"raw_output", s.result.raw_output},
              {"failing_fragment", s.info.failing_fragment},
              {"error_message", s.info.error_message},
              {"copied", s.copied},
              {"limit_exceeded", s.limit_exceeded},
              {"error", s.error}};
    text += j.dump() + "\n";
  }
  return text;
}

SplitOutputs parse_outputs_jsonl(const std::string& text) {
  SplitOutputs out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      SampleOutput s;
      s.id = j.at("id").get<std::string>();
      s.code = j.at("code").get<std::string>();
      s.rules = parse_rule_sequence(j.at("rules").get<std::string>());
      s.rules.partial = j.at("partial").get<bool>();
      s.result.category = category_from_string(j.at("category").get<std::string>());
      s.result.passed = j.at("passed").get<bool>();
      s.result.timed_out = j.at("timed_out").get<bool>();
      s.result.exit_code = j.at("exit_code").get<int>();
      s.result.raw_output = j.at("raw_output").get<std::string>();
      s.info.failing_fragment = j.at("failing_fragment").get<std::string>();
      s.info.error_message = j.at("error_message").get<std::string>();
      s.info.tokens = tokenize(s.info.text());
      s.copied = j.at("copied").get<bool>();
      s.limit_exceeded = j.at("limit_exceeded").get<bool>();
      s.error = j.at("error").get<std::string>();
      ++out.categories[static_cast<std::size_t>(s.result.category)];
      out.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed output record: ") + e.what());
    }
  }
  return out;
}

}  // namespace cgt
