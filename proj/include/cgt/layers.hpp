#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cgt/autodiff.hpp"

namespace cgt::nn {

/// Sinusoidal encoding of `position` inside block `block` (both 0-based):
/// entry 2j is sin((i+b)/10000^(2j/d)), entry 2j+1 the matching cos.
Eigen::RowVectorXd positional_encoding(int block, int position, int d);
/// Rows 0..length-1 of positional_encoding for one block.
Matrix positional_encodings(int block, int length, int d);

/// Forward-pass switches. Dropout only fires when `training` is set.
struct Mode {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  double rate() const { return training && rng ? dropout : 0.0; }
};

/// Allowed (query, key) pairs: 1 where attention may look, 0 elsewhere.
/// `key_valid` may be empty (all keys valid).
Matrix attention_mask(int queries, int keys, bool causal, const std::vector<char>& key_valid = {});

struct LayerNorm {
  int gamma = -1;
  int beta = -1;

  static LayerNorm create(ParameterStore& store, const std::string& prefix, int d, Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

struct Attention {
  int wq = -1, wk = -1, wv = -1, wh = -1;
  int heads = 1;

  static Attention create(ParameterStore& store, const std::string& prefix, int d, int heads, Rng& rng);
  /// Multi-head attention of `query` rows over `memory` rows. Rows of `mask`
  /// with no allowed key produce zeros. When `weights` is given it receives
  /// one (queries x keys) attention matrix per head.
  Var operator()(Graph& g, Var query, Var memory, const Matrix* mask = nullptr,
                 std::vector<Var>* weights = nullptr) const;
};

/// Mixes word features with character features per token and per head.
struct Gating {
  int w1 = -1, w2 = -1, w3 = -1, w4 = -1, w5 = -1, wc = -1, wh = -1;
  int heads = 1;

  static Gating create(ParameterStore& store, const std::string& prefix, int d, int char_width, int heads,
                       Rng& rng);
  /// `chars` is the tokens x char_width concatenation of character
  /// embeddings. `alphas` receives the word-side weight (L x 1) per head.
  Var operator()(Graph& g, Var y, Var chars, std::vector<Var>* alphas = nullptr) const;
};

/// y_i = W [y_{i-w}; ...; y_{i+w}] with zero rows outside the sequence.
/// Causal windows cover [i-k+1, i] instead.
Var conv_layer(Graph& g, Var y, Var kernel, int k, bool causal);

/// `layers` convolutions with GELU between consecutive layers. With `keep`
/// (an L x 1 column of 0/1) every layer input is multiplied by it.
struct ConvStack {
  std::vector<int> kernels;
  int k = 3;
  bool causal = false;

  static ConvStack create(ParameterStore& store, const std::string& prefix, int d, int k, int layers, bool causal,
                          Rng& rng);
  Var operator()(Graph& g, Var y, const Var* keep = nullptr) const;
};

struct FeedForward {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;

  static FeedForward create(ParameterStore& store, const std::string& prefix, int d, int hidden, Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

/// x + dropout(f(norm(x))).
Var residual(Graph& g, Var x, const LayerNorm& norm, const std::function<Var(Var)>& f, const Mode& mode);

/// Central-difference check of every parameter touched by `loss` and every
/// input. Returns the largest |analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-6). With `max_entries` > 0 only that many evenly spaced
/// entries of each parameter are probed.
double grad_check(ParameterStore& store, const std::vector<Matrix>& inputs,
                  const std::function<Var(Graph&, const std::vector<Var>&)>& loss, double epsilon = 1e-5,
                  int max_entries = 0);

}  // namespace cgt::nn
