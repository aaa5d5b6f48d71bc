#include "cgt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "cgt/errors.hpp"
#include "cgt/python_codec.hpp"

namespace cgt {

using nn::Graph;
using nn::Matrix;
using nn::Mode;
using nn::Var;

namespace {

constexpr const char* kCheckpointHeader = "codegen-test-ckpt-v1";

std::string mask_key(const std::string& kind, bool filled) { return filled ? kind + "|filled" : kind; }

Var empty_sequence(Graph& g, int d) { return g.constant(Matrix(0, d)); }

// Row i may look at keys j < i.
Matrix strictly_causal(int queries, int keys) {
  Matrix m = Matrix::Zero(queries, keys);
  for (int i = 0; i < queries; ++i) {
    for (int j = 0; j < std::min(i, keys); ++j) m(i, j) = 1.0;
  }
  return m;
}

Matrix column(const std::vector<char>& flags) {
  Matrix m(static_cast<Eigen::Index>(flags.size()), 1);
  for (std::size_t i = 0; i < flags.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = flags[i] ? 1.0 : 0.0;
  return m;
}

}  // namespace

// ---- step contexts ----------------------------------------------------------

StepContext step_context(const TreeReplayer& replay, const Grammar& grammar) {
  if (!replay.frontier()) throw NoFrontier("tree is complete");
  const AstNode& f = node_at(replay.tree(), *replay.frontier());
  StepContext ctx;
  ctx.path = tree_path(replay.tree(), *replay.frontier(), grammar);
  ctx.frontier_kind = f.kind;
  ctx.optional_filled = f.is_optional() && !f.children.empty();
  if (f.is_list()) {
    if (!ctx.optional_filled && grammar.is_terminal(f.element_kind())) ctx.terminal_kind = f.element_kind();
  } else if (grammar.is_terminal(f.kind)) {
    ctx.terminal_kind = f.kind;
  }
  return ctx;
}

std::vector<StepContext> step_contexts(const RuleSequence& actions, const Grammar& grammar) {
  TreeReplayer replay(grammar);
  std::vector<StepContext> out;
  out.reserve(actions.size());
  for (const auto& a : actions.actions) {
    out.push_back(step_context(replay, grammar));
    replay.apply(a);
  }
  return out;
}

void GenerationLimits::validate() const {
  if (max_actions < 1) throw ConfigError("max_actions must be at least 1");
  if (beam_width < 1) throw ConfigError("beam_width must be at least 1");
}

// ---- terminal selection -----------------------------------------------------

std::map<std::string, double> terminal_distribution(const RulePrediction& pred,
                                                    const std::vector<std::string>& nl_tokens,
                                                    const Vocab& terminals, int terminal_offset) {
  std::map<std::string, double> dist;
  const double gate = pred.copy_gate;
  for (int t = Vocab::kReserved; t < terminals.size(); ++t) {
    const Eigen::Index a = terminal_offset + t;
    if (a >= pred.rule_dist.size()) break;
    const double p = (1.0 - gate) * pred.rule_dist(a);
    if (p > 0.0) dist[terminals.token(t)] += p;
  }
  for (Eigen::Index j = 0; j < pred.copy_dist.size() && j < static_cast<Eigen::Index>(nl_tokens.size()); ++j) {
    const double p = gate * pred.copy_dist(j);
    if (p > 0.0) dist[nl_tokens[static_cast<std::size_t>(j)]] += p;
  }
  return dist;
}

std::string terminal_fill(const RulePrediction& pred, const std::vector<std::string>& nl_tokens,
                          const Vocab& terminals, int terminal_offset) {
  auto dist = terminal_distribution(pred, nl_tokens, terminals, terminal_offset);
  const std::string* best = nullptr;
  double best_p = 0.0;
  for (const auto& [tok, p] : dist) {
    if (p > best_p) {
      best = &tok;
      best_p = p;
    }
  }
  if (!best) throw ShapeError("no terminal has positive probability");
  return *best;
}

// ---- construction -----------------------------------------------------------

Model::Model(const ModelConfig& config, const Grammar& grammar, Vocabs vocabs, std::uint64_t seed)
    : config_(config), grammar_(grammar), vocabs_(std::move(vocabs)) {
  config_.validate();
  if (vocabs_.max_chars != config_.S_max) throw ConfigError("vocabulary character cap differs from S_max");
  action_count_ = action_space_size(grammar_, vocabs_);
  build(seed);
  build_masks();
}

void Model::build(std::uint64_t seed) {
  nn::Rng rng(seed);
  const int d = config_.d;
  const int H = config_.heads;
  const int k = config_.k_window;
  const int cl = config_.conv_layers;
  const int char_width = config_.S_max * config_.char_dim;
  auto& s = store_;
  using nn::Init;

  word_emb_ = s.create("embed.words", vocabs_.words.size(), d, Init::Embedding, rng);
  char_emb_ = s.create("embed.chars", vocabs_.chars.size(), config_.char_dim, Init::Embedding, rng);
  action_emb_ = s.create("embed.actions", action_count_, d, Init::Embedding, rng);
  symbol_emb_ = s.create("embed.path_symbols", grammar_.symbol_count(), d, Init::Embedding, rng);
  ast_symbol_emb_ = s.create("embed.ast_symbols", grammar_.symbol_count(), d, Init::Embedding, rng);

  auto reader = [&](const std::string& name, int count, std::vector<ReaderBlock>& out) {
    for (int b = 0; b < count; ++b) {
      const std::string p = name + ".block" + std::to_string(b);
      ReaderBlock blk;
      blk.ln_self = nn::LayerNorm::create(s, p + ".self_attn.norm", d, rng);
      blk.self_attn = nn::Attention::create(s, p + ".self_attn", d, H, rng);
      blk.ln_gate = nn::LayerNorm::create(s, p + ".gating.norm", d, rng);
      blk.gate = nn::Gating::create(s, p + ".gating", d, char_width, H, rng);
      blk.ln_conv = nn::LayerNorm::create(s, p + ".conv.norm", d, rng);
      blk.conv = nn::ConvStack::create(s, p + ".conv", d, k, cl, false, rng);
      out.push_back(blk);
    }
  };
  reader("nl", config_.blocks.nl, nl_blocks_);
  nl_final_ = nn::LayerNorm::create(s, "nl.final_norm", d, rng);

  for (int b = 0; b < config_.blocks.ast; ++b) {
    const std::string p = "ast.block" + std::to_string(b);
    AstBlock blk;
    blk.ln_self = nn::LayerNorm::create(s, p + ".self_attn.norm", d, rng);
    blk.self_attn = nn::Attention::create(s, p + ".self_attn", d, H, rng);
    blk.ln_conv = nn::LayerNorm::create(s, p + ".conv.norm", d, rng);
    blk.conv = nn::ConvStack::create(s, p + ".conv", d, k, cl, true, rng);
    ast_blocks_.push_back(blk);
  }
  ast_final_ = nn::LayerNorm::create(s, "ast.final_norm", d, rng);

  reader("test_info", config_.blocks.test_info, test_blocks_);
  test_final_ = nn::LayerNorm::create(s, "test_info.final_norm", d, rng);

  for (int b = 0; b < config_.blocks.code; ++b) {
    const std::string p = "code.block" + std::to_string(b);
    CodeBlock blk;
    blk.ln_self = nn::LayerNorm::create(s, p + ".self_attn.norm", d, rng);
    blk.self_attn = nn::Attention::create(s, p + ".self_attn", d, H, rng);
    blk.ln_test = nn::LayerNorm::create(s, p + ".test_attn.norm", d, rng);
    blk.test_attn = nn::Attention::create(s, p + ".test_attn", d, H, rng);
    blk.ln_conv = nn::LayerNorm::create(s, p + ".conv.norm", d, rng);
    blk.conv = nn::ConvStack::create(s, p + ".conv", d, k, cl, false, rng);
    code_blocks_.push_back(blk);
  }
  code_final_ = nn::LayerNorm::create(s, "code.final_norm", d, rng);

  path_w_ = s.create("decoder.path.w", d, d, Init::Uniform, rng);
  path_b_ = s.create("decoder.path.b", 1, d, Init::Zeros, rng);
  for (int b = 0; b < config_.blocks.decoder; ++b) {
    const std::string p = "decoder.block" + std::to_string(b);
    DecoderBlock blk;
    auto att = [&](nn::LayerNorm& ln, nn::Attention& a, const std::string& name) {
      ln = nn::LayerNorm::create(s, p + "." + name + ".norm", d, rng);
      a = nn::Attention::create(s, p + "." + name, d, H, rng);
    };
    att(blk.ln_self, blk.self_attn, "self_attn");
    att(blk.ln_ast, blk.ast_attn, "ast_attn");
    att(blk.ln_nl, blk.nl_attn, "nl_attn");
    att(blk.ln_test, blk.test_attn, "test_attn");
    att(blk.ln_code, blk.code_attn, "code_attn");
    att(blk.ln_ast2, blk.ast2_attn, "ast2_attn");
    att(blk.ln_nl2, blk.nl2_attn, "nl2_attn");
    blk.ln_ff = nn::LayerNorm::create(s, p + ".ff.norm", d, rng);
    blk.ff = nn::FeedForward::create(s, p + ".ff", d, config_.ff_first, rng);
    dec_blocks_.push_back(blk);
  }
  dec_final_ = nn::LayerNorm::create(s, "decoder.final_norm", d, rng);
  out_w_ = s.create("decoder.output.w", d, action_count_, Init::Uniform, rng);
  out_b_ = s.create("decoder.output.b", 1, action_count_, Init::Zeros, rng);
  copy_q_ = s.create("decoder.copy.wq", d, d, Init::Uniform, rng);
  copy_k_ = s.create("decoder.copy.wk", d, d, Init::Uniform, rng);
  gate_w_ = s.create("decoder.copy_gate.w", d, 1, Init::Uniform, rng);
  gate_b_ = s.create("decoder.copy_gate.b", 1, 1, Init::Zeros, rng);
}

void Model::build_masks() {
  for (const auto& kind : grammar_.terminal_kinds()) {
    std::vector<char> ok(static_cast<std::size_t>(vocabs_.terminals.size()), 0);
    for (int t = Vocab::kReserved; t < vocabs_.terminals.size(); ++t) {
      ok[static_cast<std::size_t>(t)] = valid_terminal(kind, vocabs_.terminals.token(t)) ? 1 : 0;
    }
    terminal_ok_[kind] = std::move(ok);
  }
  const int offset = grammar_.rule_output_count();
  auto allow_terminals = [&](std::vector<char>& m, const std::string& kind) {
    const auto& ok = terminal_ok_.at(kind);
    for (std::size_t t = 0; t < ok.size(); ++t) {
      if (ok[t]) m[static_cast<std::size_t>(offset) + t] = 1;
    }
  };
  auto allow_rules = [&](std::vector<char>& m, const std::string& kind) {
    for (int r : grammar_.rules_for(kind)) m[static_cast<std::size_t>(r)] = 1;
  };
  std::set<std::string> kinds{grammar_.root_kind()};
  for (const auto& r : grammar_.rules()) {
    for (const auto& c : r.children) kinds.insert(c.slot_kind());
  }
  for (const auto& kind : kinds) {
    const AstNode probe = make_slot(kind);
    for (bool filled : {false, true}) {
      if (filled && !probe.is_optional()) continue;
      std::vector<char> m(static_cast<std::size_t>(action_count_), 0);
      if (probe.is_list()) {
        m[static_cast<std::size_t>(grammar_.end_rule_id())] = 1;
        if (!filled) {
          const std::string elem = probe.element_kind();
          if (grammar_.is_terminal(elem)) {
            allow_terminals(m, elem);
          } else {
            allow_rules(m, elem);
          }
        }
      } else if (grammar_.is_terminal(kind)) {
        allow_terminals(m, kind);
      } else {
        allow_rules(m, kind);
      }
      masks_[mask_key(kind, filled)] = std::move(m);
    }
  }
}

const std::vector<char>& Model::legal_actions(const StepContext& ctx) const {
  auto it = masks_.find(mask_key(ctx.frontier_kind, ctx.optional_filled));
  if (it == masks_.end()) throw UnknownKind("no legality mask for frontier kind '" + ctx.frontier_kind + "'");
  return it->second;
}

int Model::embed_action_id(const Action& a) const {
  if (a.is_rule()) return a.rule;
  return grammar_.rule_output_count() + vocabs_.terminals.id(a.token);
}

// ---- encoders ---------------------------------------------------------------

Var Model::read_text(Graph& g, const std::vector<ReaderBlock>& blocks, const nn::LayerNorm& final_norm,
                     const EncodedText& text, const Mode& mode, const std::vector<char>& valid) const {
  const int d = config_.d;
  const int L = static_cast<int>(text.size());
  if (L == 0) return empty_sequence(g, d);
  if (L > config_.L_max) throw ShapeError("sequence of length " + std::to_string(L) + " exceeds L_max");
  if (!valid.empty() && static_cast<int>(valid.size()) != L) throw ShapeError("validity mask length");
  Matrix self_mask;
  Var keep;
  if (!valid.empty()) {
    self_mask = nn::attention_mask(L, L, false, valid);
    keep = g.constant(column(valid));
  }
  const Matrix* mask = valid.empty() ? nullptr : &self_mask;
  auto zero_pads = [&](Var x) { return valid.empty() ? x : g.mul_col(x, keep); };

  Var x = g.scale(g.embedding(g.param(word_emb_), text.ids), std::sqrt(static_cast<double>(d)));
  Var chars = g.char_features(g.param(char_emb_), text.char_ids, config_.S_max);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    x = g.add(x, g.constant(nn::positional_encodings(static_cast<int>(b), L, d)));
    x = zero_pads(nn::residual(g, x, blk.ln_self, [&](Var v) { return blk.self_attn(g, v, v, mask); }, mode));
    x = zero_pads(nn::residual(g, x, blk.ln_gate, [&](Var v) { return blk.gate(g, v, chars); }, mode));
    x = zero_pads(nn::residual(g, x, blk.ln_conv, [&](Var v) { return blk.conv(g, v, valid.empty() ? nullptr : &keep); }, mode));
  }
  return zero_pads(final_norm(g, x));
}

Var Model::encode_nl(Graph& g, const EncodedText& text, const Mode& mode, const std::vector<char>& valid) const {
  return read_text(g, nl_blocks_, nl_final_, text, mode, valid);
}

Var Model::encode_test_info(Graph& g, const EncodedText& text, const Mode& mode,
                            const std::vector<char>& valid) const {
  return read_text(g, test_blocks_, test_final_, text, mode, valid);
}

Var Model::encode_ast(Graph& g, const RuleSequence& prefix, const std::vector<StepContext>& contexts,
                      const Mode& mode) const {
  const int d = config_.d;
  const int n = static_cast<int>(prefix.size());
  if (n == 0) return empty_sequence(g, d);
  if (static_cast<int>(contexts.size()) < n) throw ShapeError("missing step contexts for the AST prefix");
  std::vector<int> actions, symbols;
  for (int j = 0; j < n; ++j) {
    actions.push_back(embed_action_id(prefix.actions[static_cast<std::size_t>(j)]));
    symbols.push_back(contexts[static_cast<std::size_t>(j)].path.nodes.back().symbol);
  }
  const double scale = std::sqrt(static_cast<double>(d));
  Var x = g.scale(g.add(g.embedding(g.param(action_emb_), actions), g.embedding(g.param(ast_symbol_emb_), symbols)),
                  scale);
  const Matrix mask = nn::attention_mask(n, n, true);
  for (std::size_t b = 0; b < ast_blocks_.size(); ++b) {
    const auto& blk = ast_blocks_[b];
    x = g.add(x, g.constant(nn::positional_encodings(static_cast<int>(b), n, d)));
    x = nn::residual(g, x, blk.ln_self, [&](Var v) { return blk.self_attn(g, v, v, &mask); }, mode);
    x = nn::residual(g, x, blk.ln_conv, [&](Var v) { return blk.conv(g, v); }, mode);
  }
  return ast_final_(g, x);
}

Var Model::encode_code(Graph& g, const RuleSequence& last_rules, Var y_test, const Mode& mode) const {
  const int d = config_.d;
  const int p = static_cast<int>(last_rules.size());
  if (p == 0) return empty_sequence(g, d);
  if (p > config_.L_max) throw ShapeError("rule sequence of length " + std::to_string(p) + " exceeds L_max");
  std::vector<int> actions;
  for (const auto& a : last_rules.actions) actions.push_back(embed_action_id(a));
  Var x = g.scale(g.embedding(g.param(action_emb_), actions), std::sqrt(static_cast<double>(d)));
  const bool has_test = y_test.valid() && g.rows(y_test) > 0;
  for (std::size_t b = 0; b < code_blocks_.size(); ++b) {
    const auto& blk = code_blocks_[b];
    x = g.add(x, g.constant(nn::positional_encodings(static_cast<int>(b), p, d)));
    x = nn::residual(g, x, blk.ln_self, [&](Var v) { return blk.self_attn(g, v, v); }, mode);
    if (has_test) {
      x = nn::residual(g, x, blk.ln_test, [&](Var v) { return blk.test_attn(g, v, y_test); }, mode);
    }
    x = nn::residual(g, x, blk.ln_conv, [&](Var v) { return blk.conv(g, v); }, mode);
  }
  return code_final_(g, x);
}

EncoderOutputs Model::encode_inputs(Graph& g, const EncodedSample& sample, const Mode& mode) const {
  EncoderOutputs m;
  m.nl = encode_nl(g, sample.nl, mode);
  m.test_info = encode_test_info(g, sample.test_info, mode);
  m.code = encode_code(g, sample.last_rules, m.test_info, mode);
  return m;
}

// ---- decoder ----------------------------------------------------------------

Var Model::embed_tree_paths(Graph& g, const std::vector<TreePath>& paths) const {
  const int d = config_.d;
  std::vector<int> symbols;
  std::vector<int> offsets{0};
  std::vector<int> depths;
  for (const auto& p : paths) {
    if (p.nodes.empty()) throw ShapeError("empty tree path");
    for (std::size_t k = 0; k < p.nodes.size(); ++k) {
      symbols.push_back(p.nodes[k].symbol);
      depths.push_back(static_cast<int>(k));
    }
    offsets.push_back(static_cast<int>(symbols.size()));
  }
  Matrix pe(static_cast<Eigen::Index>(depths.size()), d);
  for (std::size_t r = 0; r < depths.size(); ++r) pe.row(static_cast<Eigen::Index>(r)) = nn::positional_encoding(0, depths[r], d);
  Var e = g.add(g.scale(g.embedding(g.param(symbol_emb_), symbols), std::sqrt(static_cast<double>(d))), g.constant(pe));
  Var h = g.tanh(g.linear(e, g.param(path_w_), g.param(path_b_)));
  return g.segment_mean(h, offsets);
}

Model::DecoderOutput Model::decode(Graph& g, const std::vector<StepContext>& contexts, const EncoderOutputs& memory,
                                   const EncodedText& nl, const Mode& mode) const {
  const int d = config_.d;
  const int T = static_cast<int>(contexts.size());
  if (T == 0) throw ShapeError("decode needs at least one step");
  std::vector<TreePath> paths;
  for (const auto& c : contexts) paths.push_back(c.path);
  Var x = embed_tree_paths(g, paths);

  auto rows = [&](Var v) { return v.valid() ? g.rows(v) : 0; };
  const Matrix self_mask = nn::attention_mask(T, T, true);
  const Matrix ast_mask = strictly_causal(T, rows(memory.ast));
  for (std::size_t b = 0; b < dec_blocks_.size(); ++b) {
    const auto& blk = dec_blocks_[b];
    x = g.add(x, g.constant(nn::positional_encodings(static_cast<int>(b), T, d)));
    x = nn::residual(g, x, blk.ln_self, [&](Var v) { return blk.self_attn(g, v, v, &self_mask); }, mode);
    auto cross = [&](const nn::LayerNorm& ln, const nn::Attention& att, Var mem, const Matrix* mask) {
      if (rows(mem) == 0) return;
      x = nn::residual(g, x, ln, [&](Var v) { return att(g, v, mem, mask); }, mode);
    };
    cross(blk.ln_ast, blk.ast_attn, memory.ast, &ast_mask);
    cross(blk.ln_nl, blk.nl_attn, memory.nl, nullptr);
    cross(blk.ln_test, blk.test_attn, memory.test_info, nullptr);
    cross(blk.ln_code, blk.code_attn, memory.code, nullptr);
    cross(blk.ln_ast2, blk.ast2_attn, memory.ast, &ast_mask);
    cross(blk.ln_nl2, blk.nl2_attn, memory.nl, nullptr);
    x = nn::residual(g, x, blk.ln_ff, [&](Var v) { return blk.ff(g, v); }, mode);
  }
  x = dec_final_(g, x);

  DecoderOutput out;
  Matrix legal(T, action_count_);
  std::vector<char> has_gen(static_cast<std::size_t>(T), 0);
  for (int i = 0; i < T; ++i) {
    const auto& m = legal_actions(contexts[static_cast<std::size_t>(i)]);
    for (int a = 0; a < action_count_; ++a) {
      legal(i, a) = m[static_cast<std::size_t>(a)] ? 1.0 : 0.0;
      if (m[static_cast<std::size_t>(a)]) has_gen[static_cast<std::size_t>(i)] = 1;
    }
  }
  out.probs = g.softmax_rows(g.linear(x, g.param(out_w_), g.param(out_b_)), &legal);

  const int Lnl = rows(memory.nl);
  out.copy_valid = Matrix::Zero(T, Lnl);
  std::vector<char> has_copy(static_cast<std::size_t>(T), 0);
  for (int i = 0; i < T; ++i) {
    const auto& kind = contexts[static_cast<std::size_t>(i)].terminal_kind;
    if (kind.empty()) continue;
    for (int j = 0; j < Lnl && j < static_cast<int>(nl.text.size()); ++j) {
      if (valid_terminal(kind, nl.text.tokens[static_cast<std::size_t>(j)])) {
        out.copy_valid(i, j) = 1.0;
        has_copy[static_cast<std::size_t>(i)] = 1;
      }
    }
  }
  if (Lnl > 0) {
    Var q = g.matmul(x, g.param(copy_q_));
    Var k = g.matmul(memory.nl, g.param(copy_k_));
    out.copy = g.softmax_rows(g.scale(g.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d))), &out.copy_valid);
  } else {
    out.copy = g.constant(Matrix(T, 0));
  }
  Matrix learned(T, 1), forced(T, 1);
  for (int i = 0; i < T; ++i) {
    const bool c = has_copy[static_cast<std::size_t>(i)] != 0;
    const bool gen = has_gen[static_cast<std::size_t>(i)] != 0;
    learned(i, 0) = c && gen ? 1.0 : 0.0;
    forced(i, 0) = c && !gen ? 1.0 : 0.0;
  }
  Var raw = g.sigmoid(g.linear(x, g.param(gate_w_), g.param(gate_b_)));
  out.gate = g.add(g.mul_col(raw, g.constant(learned)), g.constant(forced));
  return out;
}

Var Model::loss(Graph& g, const EncodedSample& sample, const Mode& mode, int* counted) const {
  const auto& target = sample.target_rules;
  if (target.empty()) throw ShapeError("sample " + sample.id + " has no target actions");
  const auto contexts = step_contexts(target, grammar_);
  EncoderOutputs mem = encode_inputs(g, sample, mode);
  mem.ast = encode_ast(g, target, contexts, mode);
  DecoderOutput out = decode(g, contexts, mem, sample.nl, mode);

  const int T = static_cast<int>(target.size());
  const int Lnl = g.cols(out.copy);
  Matrix gen_target = Matrix::Zero(T, action_count_);
  Matrix copy_target = Matrix::Zero(T, Lnl);
  std::vector<int> rows;
  for (int i = 0; i < T; ++i) {
    const auto& a = target.actions[static_cast<std::size_t>(i)];
    const auto& legal = legal_actions(contexts[static_cast<std::size_t>(i)]);
    bool any = false;
    if (a.is_rule()) {
      gen_target(i, a.rule) = 1.0;
      any = true;
    } else {
      const int id = vocabs_.terminals.id(a.token);
      const int idx = grammar_.rule_output_count() + id;
      if (id >= Vocab::kReserved && legal[static_cast<std::size_t>(idx)]) {
        gen_target(i, idx) = 1.0;
        any = true;
      }
      if (static_cast<std::size_t>(i) < sample.copy_map.size()) {
        for (int j : sample.copy_map[static_cast<std::size_t>(i)]) {
          if (j < Lnl && out.copy_valid(i, j) != 0.0) {
            copy_target(i, j) = 1.0;
            any = true;
          }
        }
      }
    }
    if (any) rows.push_back(i);
  }
  if (counted) *counted = static_cast<int>(rows.size());
  if (rows.empty()) return g.constant(Matrix::Zero(1, 1));
  Var gen_sel = g.masked_row_sum(out.probs, gen_target);
  Var mix;
  if (Lnl > 0) {
    Var copy_sel = g.masked_row_sum(out.copy, copy_target);
    mix = g.add(g.mul(out.gate, copy_sel), g.mul(g.affine(out.gate, -1.0, 1.0), gen_sel));
  } else {
    mix = g.mul(g.affine(out.gate, -1.0, 1.0), gen_sel);
  }
  Var picked = g.gather_rows(mix, rows);
  return g.scale(g.sum(g.log(picked)), -1.0 / static_cast<double>(rows.size()));
}

// ---- inference --------------------------------------------------------------

RulePrediction Model::predict_last(const EncodedSample& input, const Matrix& nl_mem, const Matrix& test_mem,
                                   const Matrix& code_mem, const RuleSequence& prefix,
                                   const std::vector<StepContext>& contexts) const {
  Graph g(&store_);
  const Mode mode;
  EncoderOutputs mem;
  mem.nl = g.constant(nl_mem);
  mem.test_info = g.constant(test_mem);
  mem.code = g.constant(code_mem);
  mem.ast = encode_ast(g, prefix, contexts, mode);
  DecoderOutput out = decode(g, contexts, mem, input.nl, mode);
  const int last = static_cast<int>(contexts.size()) - 1;
  RulePrediction pred;
  pred.rule_dist = g.value(out.probs).row(last).transpose();
  pred.copy_dist = g.value(out.copy).row(last).transpose();
  pred.copy_gate = g.value(out.gate)(last, 0);
  return pred;
}

RulePrediction Model::predict(const EncodedSample& input, const RuleSequence& prefix) const {
  Graph g(&store_);
  EncoderOutputs mem = encode_inputs(g, input, Mode{});
  TreeReplayer replay(grammar_);
  std::vector<StepContext> contexts;
  for (const auto& a : prefix.actions) {
    contexts.push_back(step_context(replay, grammar_));
    replay.apply(a);
  }
  contexts.push_back(step_context(replay, grammar_));
  return predict_last(input, g.value(mem.nl), g.value(mem.test_info), g.value(mem.code), prefix, contexts);
}

namespace {

struct Hypothesis {
  TreeReplayer replay;
  RuleSequence actions;
  std::vector<StepContext> contexts;
  double score = 0.0;
};

struct Candidate {
  std::size_t hyp = 0;
  Action action;
  double score = 0.0;
};

}  // namespace

GenerationResult Model::generate(const EncodedSample& input, const GenerationLimits& limits) const {
  limits.validate();
  Graph g(&store_);
  EncoderOutputs mem = encode_inputs(g, input, Mode{});
  const Matrix nl_mem = g.value(mem.nl);
  const Matrix test_mem = g.value(mem.test_info);
  const Matrix code_mem = g.value(mem.code);
  const std::size_t width = static_cast<std::size_t>(limits.beam_width);
  const int offset = grammar_.rule_output_count();

  std::vector<Hypothesis> live{Hypothesis{TreeReplayer(grammar_), {}, {}, 0.0}};
  std::vector<Hypothesis> finished;
  std::string error;
  for (int step = 0; step < limits.max_actions && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      Hypothesis& hyp = live[h];
      hyp.contexts.push_back(step_context(hyp.replay, grammar_));
      const StepContext& ctx = hyp.contexts.back();
      const RulePrediction pred = predict_last(input, nl_mem, test_mem, code_mem, hyp.actions, hyp.contexts);
      std::vector<Candidate> mine;
      const auto& legal = legal_actions(ctx);
      for (int r = 0; r < offset; ++r) {
        const double p = (1.0 - pred.copy_gate) * pred.rule_dist(r);
        if (legal[static_cast<std::size_t>(r)] && p > 0.0) mine.push_back({h, Action::apply(r), hyp.score + std::log(p)});
      }
      if (!ctx.terminal_kind.empty()) {
        for (const auto& [tok, p] : terminal_distribution(pred, input.nl.text.tokens, vocabs_.terminals, offset)) {
          mine.push_back({h, Action::fill(tok), hyp.score + std::log(p)});
        }
      }
      std::stable_sort(mine.begin(), mine.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
      if (mine.size() > width) mine.resize(width);
      cands.insert(cands.end(), mine.begin(), mine.end());
    }
    if (cands.empty()) {
      error = "no legal action has positive probability";
      break;
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Hypothesis> next;
    std::size_t taken = 0;
    for (const auto& c : cands) {
      if (taken++ >= width) break;
      Hypothesis h = live[c.hyp];
      h.replay.apply(c.action);
      h.actions.actions.push_back(c.action);
      h.score = c.score;
      if (h.replay.complete()) {
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (finished.size() >= width) break;
    if (!finished.empty() && !live.empty()) {
      double best_done = finished.front().score;
      for (const auto& f : finished) best_done = std::max(best_done, f.score);
      double best_live = live.front().score;
      for (const auto& l : live) best_live = std::max(best_live, l.score);
      if (best_done >= best_live) break;
    }
  }

  GenerationResult res;
  const Hypothesis* best = nullptr;
  for (const auto& f : finished) {
    if (!best || f.score > best->score) best = &f;
  }
  if (best) {
    res.rules = best->actions;
    res.log_prob = best->score;
    try {
      res.code = ast_to_code(best->replay.tree(), grammar_);
    } catch (const Error& e) {
      res.error = std::string("cannot print tree: ") + e.what();
    }
    return res;
  }
  for (const auto& l : live) {
    if (!best || l.score > best->score) best = &l;
  }
  if (best) {
    res.rules = best->actions;
    res.log_prob = best->score;
  }
  res.rules.partial = true;
  res.error = error;
  res.limit_exceeded = error.empty();
  return res;
}

// ---- checkpoints ------------------------------------------------------------

void Model::save(const std::string& path) const {
  nlohmann::json meta;
  meta["config"] = to_key_values(config_);
  meta["grammar"] = grammar_.to_text();
  meta["vocabs"] = {{"words", vocabs_.words.tokens()},
                    {"chars", vocabs_.chars.tokens()},
                    {"terminals", vocabs_.terminals.tokens()},
                    {"max_chars", vocabs_.max_chars}};
  nlohmann::json params = nlohmann::json::array();
  for (int i = 0; i < store_.size(); ++i) {
    const auto& p = store_.at(i);
    params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  meta["parameters"] = params;
  const std::string text = meta.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out << kCheckpointHeader << '\n' << text.size() << '\n' << text;
  for (int i = 0; i < store_.size(); ++i) {
    const auto& v = store_.at(i).value;
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint: " + path);
  std::string header;
  std::getline(in, header);
  if (header != kCheckpointHeader) throw CheckpointError("not a checkpoint (bad header): " + path);
  std::string len_line;
  std::getline(in, len_line);
  std::size_t len = 0;
  try {
    len = std::stoul(len_line);
  } catch (const std::exception&) {
    throw CheckpointError("corrupt checkpoint metadata length");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated checkpoint metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  try {
    ModelConfig config = model_config_from(meta.at("config").get<KeyValues>());
    Grammar grammar = Grammar::parse(meta.at("grammar").get<std::string>());
    Vocabs v;
    v.words = Vocab::from_tokens(meta.at("vocabs").at("words").get<std::vector<std::string>>());
    v.chars = Vocab::from_tokens(meta.at("vocabs").at("chars").get<std::vector<std::string>>());
    v.terminals = Vocab::from_tokens(meta.at("vocabs").at("terminals").get<std::vector<std::string>>());
    v.max_chars = meta.at("vocabs").at("max_chars").get<int>();
    Model m(config, grammar, std::move(v), 0);
    const auto& params = meta.at("parameters");
    if (static_cast<int>(params.size()) != m.store_.size()) throw CheckpointError("parameter count mismatch");
    for (int i = 0; i < m.store_.size(); ++i) {
      auto& p = m.store_.at(i);
      const auto& rec = params.at(static_cast<std::size_t>(i));
      if (rec.at("name").get<std::string>() != p.name || rec.at("rows").get<Eigen::Index>() != p.value.rows() ||
          rec.at("cols").get<Eigen::Index>() != p.value.cols()) {
        throw CheckpointError("parameter layout mismatch at " + p.name);
      }
      in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
      if (!in) throw CheckpointError("truncated checkpoint data at " + p.name);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
}

bool Model::same_parameters(const Model& other) const {
  if (store_.size() != other.store_.size()) return false;
  for (int i = 0; i < store_.size(); ++i) {
    const auto& a = store_.at(i);
    const auto& b = other.store_.at(i);
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
    if (std::memcmp(a.value.data(), b.value.data(), static_cast<std::size_t>(a.value.size()) * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace cgt
