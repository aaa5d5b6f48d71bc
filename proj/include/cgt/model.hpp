#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgt/ast.hpp"
#include "cgt/config.hpp"
#include "cgt/encoding.hpp"
#include "cgt/grammar.hpp"
#include "cgt/layers.hpp"

namespace cgt {

/// Decoder-side view of one action: the frontier it expands.
struct StepContext {
  TreePath path;
  std::string frontier_kind;
  bool optional_filled = false;  // `x?` slot that already holds its element
  /// Terminal kind a FillTerminal would produce here, empty when none can.
  std::string terminal_kind;
};

/// Contexts before each action of `actions` (replayed from an empty tree).
std::vector<StepContext> step_contexts(const RuleSequence& actions, const Grammar& grammar);
StepContext step_context(const TreeReplayer& replay, const Grammar& grammar);

/// Encoder memories; zero-row matrices stand for empty sequences.
struct EncoderOutputs {
  nn::Var nl;
  nn::Var ast;
  nn::Var test_info;
  nn::Var code;
};

struct RulePrediction {
  Eigen::VectorXd rule_dist;  // over the action space
  Eigen::VectorXd copy_dist;  // over NL positions (all zero when copying is impossible)
  double copy_gate = 0.0;
};

struct GenerationLimits {
  int max_actions = 512;
  int beam_width = 1;
  void validate() const;
};

struct GenerationResult {
  std::string code;  // empty unless the tree is complete
  RuleSequence rules;
  bool limit_exceeded = false;
  std::string error;  // set when generation stopped early for another reason
  double log_prob = 0.0;
  bool complete() const { return !rules.partial; }
};

/// Token with the highest mixed probability copy_gate * copy_dist (summed
/// over positions holding the token) + (1 - copy_gate) * generation
/// probability. Tokens with zero probability never win; ties go to the
/// lexicographically smaller token. Throws ShapeError when nothing has
/// positive probability.
std::string terminal_fill(const RulePrediction& pred, const std::vector<std::string>& nl_tokens,
                          const Vocab& terminals, int terminal_offset);
/// The full mixed distribution terminal_fill maximizes.
std::map<std::string, double> terminal_distribution(const RulePrediction& pred,
                                                    const std::vector<std::string>& nl_tokens,
                                                    const Vocab& terminals, int terminal_offset);

class Model {
 public:
  Model(const ModelConfig& config, const Grammar& grammar, Vocabs vocabs, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Grammar& grammar() const { return grammar_; }
  const Vocabs& vocabs() const { return vocabs_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }
  int action_count() const { return action_count_; }

  // Encoders. `valid` (optional, one flag per token) masks padded positions.
  nn::Var encode_nl(nn::Graph& g, const EncodedText& text, const nn::Mode& mode,
                    const std::vector<char>& valid = {}) const;
  nn::Var encode_test_info(nn::Graph& g, const EncodedText& text, const nn::Mode& mode,
                           const std::vector<char>& valid = {}) const;
  /// One row per applied action; row j only sees actions 0..j.
  nn::Var encode_ast(nn::Graph& g, const RuleSequence& prefix, const std::vector<StepContext>& contexts,
                     const nn::Mode& mode) const;
  nn::Var encode_code(nn::Graph& g, const RuleSequence& last_rules, nn::Var y_test, const nn::Mode& mode) const;

  /// Path queries, one row per step.
  nn::Var embed_tree_paths(nn::Graph& g, const std::vector<TreePath>& paths) const;

  struct DecoderOutput {
    nn::Var probs;      // steps x actions, legality-masked softmax
    nn::Var copy;       // steps x NL length (zero-width when NL is empty)
    nn::Var gate;       // steps x 1, already forced to 0/1 where copying or generating is impossible
    nn::Matrix copy_valid;  // steps x NL length
  };
  /// Decodes every step of `contexts`; step i attends AST rows j < i.
  DecoderOutput decode(nn::Graph& g, const std::vector<StepContext>& contexts, const EncoderOutputs& memory,
                       const EncodedText& nl, const nn::Mode& mode) const;

  EncoderOutputs encode_inputs(nn::Graph& g, const EncodedSample& sample, const nn::Mode& mode) const;

  /// Mean teacher-forced negative log-likelihood of the target actions.
  /// Steps whose terminal can neither be generated nor copied are skipped.
  nn::Var loss(nn::Graph& g, const EncodedSample& sample, const nn::Mode& mode, int* counted = nullptr) const;

  /// Next-action prediction after `prefix` (used by generation and tests).
  RulePrediction predict(const EncodedSample& input, const RuleSequence& prefix) const;

  /// Greedy (beam_width 1) or beam search with grammar masking. Uses
  /// input.nl / input.test_info / input.last_rules only.
  GenerationResult generate(const EncodedSample& input, const GenerationLimits& limits = {}) const;

  /// Legality mask row for a frontier (1 = allowed action).
  const std::vector<char>& legal_actions(const StepContext& ctx) const;

  void save(const std::string& path) const;
  static Model load(const std::string& path);

  /// Identical parameter names, shapes and values.
  bool same_parameters(const Model& other) const;

 private:
  struct ReaderBlock {
    nn::LayerNorm ln_self, ln_gate, ln_conv;
    nn::Attention self_attn;
    nn::Gating gate;
    nn::ConvStack conv;
  };
  struct AstBlock {
    nn::LayerNorm ln_self, ln_conv;
    nn::Attention self_attn;
    nn::ConvStack conv;
  };
  struct CodeBlock {
    nn::LayerNorm ln_self, ln_test, ln_conv;
    nn::Attention self_attn, test_attn;
    nn::ConvStack conv;
  };
  struct DecoderBlock {
    nn::LayerNorm ln_self, ln_ast, ln_nl, ln_test, ln_code, ln_ast2, ln_nl2, ln_ff;
    nn::Attention self_attn, ast_attn, nl_attn, test_attn, code_attn, ast2_attn, nl2_attn;
    nn::FeedForward ff;
  };

  void build(std::uint64_t seed);
  void build_masks();
  int embed_action_id(const Action& a) const;
  nn::Var read_text(nn::Graph& g, const std::vector<ReaderBlock>& blocks, const nn::LayerNorm& final_norm,
                    const EncodedText& text, const nn::Mode& mode, const std::vector<char>& valid) const;
  RulePrediction predict_last(const EncodedSample& input, const nn::Matrix& nl_mem, const nn::Matrix& test_mem,
                              const nn::Matrix& code_mem, const RuleSequence& prefix,
                              const std::vector<StepContext>& contexts) const;

  ModelConfig config_;
  Grammar grammar_;
  Vocabs vocabs_;
  nn::ParameterStore store_;
  int action_count_ = 0;

  int word_emb_ = -1, char_emb_ = -1, action_emb_ = -1, symbol_emb_ = -1, ast_symbol_emb_ = -1;
  int path_w_ = -1, path_b_ = -1;
  std::vector<ReaderBlock> nl_blocks_, test_blocks_;
  std::vector<AstBlock> ast_blocks_;
  std::vector<CodeBlock> code_blocks_;
  std::vector<DecoderBlock> dec_blocks_;
  nn::LayerNorm nl_final_, test_final_, ast_final_, code_final_, dec_final_;
  int out_w_ = -1, out_b_ = -1;
  int copy_q_ = -1, copy_k_ = -1, gate_w_ = -1, gate_b_ = -1;

  std::map<std::string, std::vector<char>> masks_;
  std::map<std::string, std::vector<char>> terminal_ok_;  // per terminal kind, over vocab ids
};

}  // namespace cgt
