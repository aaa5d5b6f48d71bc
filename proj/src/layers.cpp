#include "cgt/layers.hpp"

#include <algorithm>
#include <cmath>

#include "cgt/errors.hpp"

namespace cgt::nn {

Eigen::RowVectorXd positional_encoding(int block, int position, int d) {
  if (block < 0 || position < 0 || d <= 0) throw ShapeError("positional_encoding needs b, i >= 0 and d > 0");
  Eigen::RowVectorXd pe(d);
  const double pos = static_cast<double>(position) + static_cast<double>(block);
  for (int e = 0; e < d; ++e) {
    const int j = e / 2;
    const double angle = pos / std::pow(10000.0, 2.0 * j / d);
    pe(e) = e % 2 == 0 ? std::sin(angle) : std::cos(angle);
  }
  return pe;
}

Matrix positional_encodings(int block, int length, int d) {
  Matrix m(length, d);
  for (int i = 0; i < length; ++i) m.row(i) = positional_encoding(block, i, d);
  return m;
}

Matrix attention_mask(int queries, int keys, bool causal, const std::vector<char>& key_valid) {
  if (!key_valid.empty() && static_cast<int>(key_valid.size()) != keys) throw ShapeError("key mask length");
  Matrix m = Matrix::Ones(queries, keys);
  for (int i = 0; i < queries; ++i) {
    for (int j = 0; j < keys; ++j) {
      if ((causal && j > i) || (!key_valid.empty() && !key_valid[static_cast<std::size_t>(j)])) m(i, j) = 0.0;
    }
  }
  return m;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& prefix, int d, Rng& rng) {
  LayerNorm n;
  n.gamma = store.create(prefix + ".gamma", 1, d, Init::Ones, rng);
  n.beta = store.create(prefix + ".beta", 1, d, Init::Zeros, rng);
  return n;
}

Var LayerNorm::operator()(Graph& g, Var x) const { return g.layer_norm(x, g.param(gamma), g.param(beta)); }

Attention Attention::create(ParameterStore& store, const std::string& prefix, int d, int heads, Rng& rng) {
  if (heads < 1 || d % heads != 0) throw ConfigError("model width must be divisible by the head count");
  Attention a;
  a.heads = heads;
  a.wq = store.create(prefix + ".wq", d, d, Init::Uniform, rng);
  a.wk = store.create(prefix + ".wk", d, d, Init::Uniform, rng);
  a.wv = store.create(prefix + ".wv", d, d, Init::Uniform, rng);
  a.wh = store.create(prefix + ".wh", d, d, Init::Uniform, rng);
  return a;
}

Var Attention::operator()(Graph& g, Var query, Var memory, const Matrix* mask, std::vector<Var>* weights) const {
  const int d = g.cols(query);
  if (g.cols(memory) != d) throw ShapeError("attention memory width differs from query width");
  const int dk = d / heads;
  Var q = g.matmul(query, g.param(wq));
  Var k = g.matmul(memory, g.param(wk));
  Var v = g.matmul(memory, g.param(wv));
  std::vector<Var> outs;
  for (int t = 0; t < heads; ++t) {
    Var scores = g.scale(g.matmul_nt(g.slice_cols(q, t * dk, dk), g.slice_cols(k, t * dk, dk)), 1.0 / std::sqrt(dk));
    Var p = g.softmax_rows(scores, mask);
    if (weights) weights->push_back(p);
    outs.push_back(g.matmul(p, g.slice_cols(v, t * dk, dk)));
  }
  Var h = heads == 1 ? outs[0] : g.concat_cols(outs);
  return g.matmul(h, g.param(wh));
}

Gating Gating::create(ParameterStore& store, const std::string& prefix, int d, int char_width, int heads, Rng& rng) {
  if (heads < 1 || d % heads != 0) throw ConfigError("model width must be divisible by the head count");
  Gating m;
  m.heads = heads;
  m.wc = store.create(prefix + ".wc", char_width, d, Init::Uniform, rng);
  m.w1 = store.create(prefix + ".w1", d, d, Init::Uniform, rng);
  m.w2 = store.create(prefix + ".w2", d, d, Init::Uniform, rng);
  m.w3 = store.create(prefix + ".w3", d, d, Init::Uniform, rng);
  m.w4 = store.create(prefix + ".w4", d, d, Init::Uniform, rng);
  m.w5 = store.create(prefix + ".w5", d, d, Init::Uniform, rng);
  m.wh = store.create(prefix + ".wh", d, d, Init::Uniform, rng);
  return m;
}

Var Gating::operator()(Graph& g, Var y, Var chars, std::vector<Var>* alphas) const {
  if (g.rows(y) != g.rows(chars)) throw ShapeError("gating inputs differ in length");
  const int d = g.cols(y);
  const int dk = d / heads;
  Var n = g.matmul(chars, g.param(wc));
  Var q = g.matmul(y, g.param(w1));
  Var ky = g.matmul(y, g.param(w2));
  Var kc = g.matmul(n, g.param(w3));
  Var vy = g.matmul(y, g.param(w4));
  Var vc = g.matmul(n, g.param(w5));
  std::vector<Var> outs;
  for (int t = 0; t < heads; ++t) {
    Var qt = g.slice_cols(q, t * dk, dk);
    Var sy = g.row_dot(qt, g.slice_cols(ky, t * dk, dk));
    Var sc = g.row_dot(qt, g.slice_cols(kc, t * dk, dk));
    // softmax over the pair {sy, sc}
    Var alpha = g.sigmoid(g.sub(sy, sc));
    if (alphas) alphas->push_back(alpha);
    Var beta = g.affine(alpha, -1.0, 1.0);
    outs.push_back(g.add(g.mul_col(g.slice_cols(vy, t * dk, dk), alpha), g.mul_col(g.slice_cols(vc, t * dk, dk), beta)));
  }
  Var h = heads == 1 ? outs[0] : g.concat_cols(outs);
  return g.matmul(h, g.param(wh));
}

Var conv_layer(Graph& g, Var y, Var kernel, int k, bool causal) {
  if (g.rows(kernel) != k * g.cols(y)) throw ShapeError("convolution kernel does not match window and width");
  return g.matmul(g.unfold(y, k, causal), kernel);
}

ConvStack ConvStack::create(ParameterStore& store, const std::string& prefix, int d, int k, int layers, bool causal,
                            Rng& rng) {
  if (k < 1 || (!causal && k % 2 == 0)) throw ConfigError("convolution window must be odd");
  ConvStack c;
  c.k = k;
  c.causal = causal;
  for (int l = 0; l < layers; ++l) {
    c.kernels.push_back(store.create(prefix + ".conv" + std::to_string(l), k * d, d, Init::Uniform, rng));
  }
  return c;
}

Var ConvStack::operator()(Graph& g, Var y, const Var* keep) const {
  for (std::size_t l = 0; l < kernels.size(); ++l) {
    if (l > 0) y = g.gelu(y);
    if (keep) y = g.mul_col(y, *keep);
    y = conv_layer(g, y, g.param(kernels[l]), k, causal);
  }
  return y;
}

FeedForward FeedForward::create(ParameterStore& store, const std::string& prefix, int d, int hidden, Rng& rng) {
  FeedForward f;
  f.w1 = store.create(prefix + ".w1", d, hidden, Init::Uniform, rng);
  f.b1 = store.create(prefix + ".b1", 1, hidden, Init::Zeros, rng);
  f.w2 = store.create(prefix + ".w2", hidden, d, Init::Uniform, rng);
  f.b2 = store.create(prefix + ".b2", 1, d, Init::Zeros, rng);
  return f;
}

Var FeedForward::operator()(Graph& g, Var x) const {
  Var h = g.gelu(g.linear(x, g.param(w1), g.param(b1)));
  return g.linear(h, g.param(w2), g.param(b2));
}

Var residual(Graph& g, Var x, const LayerNorm& norm, const std::function<Var(Var)>& f, const Mode& mode) {
  Var out = f(norm(g, x));
  if (mode.rate() > 0.0) out = g.dropout(out, mode.rate(), *mode.rng);
  return g.add(x, out);
}

namespace {

double loss_value(const ParameterStore& store, const std::vector<Matrix>& inputs,
                  const std::function<Var(Graph&, const std::vector<Var>&)>& loss) {
  Graph g(&store);
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(g.constant(m));
  return g.value(loss(g, vars))(0, 0);
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

}  // namespace

double grad_check(ParameterStore& store, const std::vector<Matrix>& inputs,
                  const std::function<Var(Graph&, const std::vector<Var>&)>& loss, double epsilon, int max_entries) {
  Gradients grads(store);
  std::vector<Matrix> input_grads;
  {
    Graph g(&store, &grads);
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(g.input(m));
    g.backward(loss(g, vars));
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const Matrix& gr = g.grad(vars[i]);
      input_grads.push_back(gr.size() ? gr : Matrix::Zero(inputs[i].rows(), inputs[i].cols()));
    }
  }
  double worst = 0.0;
  for (int p = 0; p < store.size(); ++p) {
    if (!grads.touched(p)) continue;
    Matrix& value = store.at(p).value;
    const Eigen::Index stride =
        max_entries > 0 ? std::max<Eigen::Index>(1, (value.size() + max_entries - 1) / max_entries) : 1;
    for (Eigen::Index e = 0; e < value.size(); e += stride) {
      const double saved = value.data()[e];
      value.data()[e] = saved + epsilon;
      const double up = loss_value(store, inputs, loss);
      value.data()[e] = saved - epsilon;
      const double down = loss_value(store, inputs, loss);
      value.data()[e] = saved;
      worst = std::max(worst, rel_error(grads.at(p).data()[e], (up - down) / (2 * epsilon)));
    }
  }
  std::vector<Matrix> probe = inputs;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (Eigen::Index e = 0; e < probe[i].size(); ++e) {
      const double saved = probe[i].data()[e];
      probe[i].data()[e] = saved + epsilon;
      const double up = loss_value(store, probe, loss);
      probe[i].data()[e] = saved - epsilon;
      const double down = loss_value(store, probe, loss);
      probe[i].data()[e] = saved;
      worst = std::max(worst, rel_error(input_grads[i].data()[e], (up - down) / (2 * epsilon)));
    }
  }
  return worst;
}

}  // namespace cgt::nn
