#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgt/config.hpp"
#include "cgt/corpus.hpp"
#include "cgt/encoding.hpp"
#include "cgt/harness.hpp"
#include "cgt/metrics.hpp"
#include "cgt/model.hpp"
#include "cgt/training.hpp"

namespace cgt {

struct Dataset {
  Corpus train, dev, test;
};

/// `train.jsonl`, `dev.jsonl` and `test.jsonl` when present, otherwise the
/// HearthStone file layout. Throws MissingSplit.
Dataset load_dataset(const std::string& dir, const HearthstoneOptions& hs = {});
void save_dataset(const Dataset& data, const std::string& dir);

/// Words of test reports (category names, traceback and common message
/// words) added to every word vocabulary built by the pipeline.
const std::vector<std::string>& test_report_lexicon();

/// Synthetic train/dev/test splits from one generator stream.
Dataset synthetic_dataset(int train, int dev, int test, std::uint64_t seed);

struct Ablation {
  bool test_info_encoder = true;
  bool code_encoder = true;

  std::string label() const;
  bool operator==(const Ablation&) const = default;
};

struct PipelineConfig {
  std::string name = "run";
  ModelConfig model;
  std::uint64_t seed = 1;
  int epochs = 10;
  /// Epochs for rounds after the first.
  int finetune_epochs = 5;
  int batch_size = 8;
  int threads = 4;
  /// Train each round from freshly initialized parameters instead of
  /// continuing from the previous round.
  bool fresh_each_round = false;
  GenerationLimits limits;
  int test_parallelism = 4;
  HarnessOptions harness;
  Ablation ablation;
  VocabOptions vocab;
  /// Progress messages; not part of the persisted configuration.
  std::function<void(const std::string&)> on_progress;

  void validate() const;
};

/// Recognized pipeline keys plus every model key.
PipelineConfig pipeline_config_from(const KeyValues& kv, PipelineConfig base = {});
KeyValues to_key_values(const PipelineConfig& config);

/// Generated code and its test outcome for one sample in one round.
struct SampleOutput {
  std::string id;
  std::string code;
  RuleSequence rules;
  TestResult result;
  TestInfo info;
  /// Carried over unchanged from the previous round because it passed.
  bool copied = false;
  bool limit_exceeded = false;
  std::string error;
};

struct SplitOutputs {
  std::vector<SampleOutput> samples;
  MetricReport metrics;
  std::array<int, 7> categories{};

  std::vector<std::string> failing_ids() const;
};

struct RoundState {
  int round = 1;
  std::vector<std::string> train_subset;
  std::map<std::string, SplitOutputs> splits;  // "train", "dev", "test"
  std::vector<double> step_losses;
};

struct PipelineResult {
  std::vector<RoundState> rounds;
  /// Set when a round had no failing training samples left.
  bool stopped_early = false;
  /// select_round over `rounds`.
  int selected_round = 1;
};

/// Vocabularies of `train` under config.vocab, with S_max from the model
/// and the test-report lexicon added.
Vocabs pipeline_vocabs(const Corpus& train, const PipelineConfig& config);

/// Input of `sample` for the next round: description plus the previous
/// round's test information and rule sequence, filtered by `ablation`.
/// Test information longer than `max_tokens` is truncated.
EncodedSample round_input(const RawSample& sample, const Vocabs& vocabs, const SampleOutput* previous,
                          const Ablation& ablation, int max_tokens);

/// Trains `model` on `inputs` (targets are their references). Throws
/// EmptySubset when `inputs` is empty.
TrainLog train_round(Model& model, const std::vector<EncodedSample>& inputs, const PipelineConfig& config, int round);

/// Copies passing outputs of `previous` and regenerates the rest, then tests
/// the regenerated code.
SplitOutputs infer_round(const Model& model, const Corpus& corpus, const Vocabs& vocabs,
                         const SplitOutputs* previous, const PipelineConfig& config);

/// Fills `outputs.metrics` and `outputs.categories` against the references
/// of `corpus`, in the same order. Throws ShapeError on misalignment.
void score_outputs(SplitOutputs& outputs, const Corpus& corpus);

/// Round with the best dev Test-Acc, ties broken by dev BLEU then by the
/// earlier round.
int select_round(const std::vector<RoundState>& rounds);

/// Runs up to config.model.N_iterations rounds. With a non-empty `run_dir`
/// every round is persisted under run_dir/round-<r>/ together with a
/// manifest.
PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config, const std::string& run_dir = "");

/// One row of an ablation grid.
struct AblationRow {
  Ablation variant;
  int round = 1;
  MetricReport test;
  MetricReport dev;
};

/// Full model, without Test-Info Encoder, without Code Encoder and without
/// both, each run for config.model.N_iterations rounds. Missing rounds after
/// an early stop repeat the last completed round.
std::vector<AblationRow> ablation_grid(const Dataset& data, const PipelineConfig& config,
                                       const std::string& run_dir = "");
std::string format_ablation_grid(const std::vector<AblationRow>& rows);

// Persisted records -------------------------------------------------------

std::string format_outputs_jsonl(const SplitOutputs& outputs);
SplitOutputs parse_outputs_jsonl(const std::string& text);

}  // namespace cgt
