#include <gtest/gtest.h>

#include <cmath>

#include "cgt/errors.hpp"
#include "cgt/layers.hpp"

using namespace cgt::nn;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Weighted sum so every output entry gets a distinct, non-trivial gradient.
Var weighted_loss(Graph& g, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return g.sum(g.mul(out, g.constant(random_matrix(g.rows(out), g.cols(out), rng))));
}

void set_identity(ParameterStore& store, int index) {
  Matrix& m = store.at(index).value;
  m.setIdentity();
}

}  // namespace

TEST(PositionalEncoding, OriginIsSinZeroCosZero) {
  auto pe = positional_encoding(0, 0, 8);
  for (int j = 0; j < 4; ++j) {
    EXPECT_EQ(pe(2 * j), 0.0);
    EXPECT_EQ(pe(2 * j + 1), 1.0);
  }
}

TEST(PositionalEncoding, BlockShiftsPosition) {
  auto pe = positional_encoding(1, 2, 4);
  EXPECT_DOUBLE_EQ(pe(0), std::sin(3.0));
  EXPECT_DOUBLE_EQ(pe(1), std::cos(3.0));
  EXPECT_DOUBLE_EQ(pe(2), std::sin(3.0 / 100.0));
  EXPECT_DOUBLE_EQ(pe(3), std::cos(3.0 / 100.0));
}

TEST(PositionalEncoding, PairsHaveUnitNorm) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 * std::uniform_int_distribution<int>(1, 32)(rng);
    const int b = std::uniform_int_distribution<int>(0, 10)(rng);
    const int i = std::uniform_int_distribution<int>(0, 200)(rng);
    auto pe = positional_encoding(b, i, d);
    for (int j = 0; j < d / 2; ++j) EXPECT_NEAR(pe(2 * j) * pe(2 * j) + pe(2 * j + 1) * pe(2 * j + 1), 1.0, 1e-12);
  }
}

TEST(PositionalEncoding, RowsMatchPointwise) {
  Matrix m = positional_encodings(2, 5, 6);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(m.row(i).isApprox(positional_encoding(2, i, 6)));
  EXPECT_THROW(positional_encoding(-1, 0, 4), cgt::ShapeError);
}

TEST(ParameterStore, InitBoundsAndDuplicates) {
  ParameterStore store;
  Rng rng(1);
  int w = store.create("w", 16, 4, Init::Uniform, rng);
  int e = store.create("e", 100, 64, Init::Embedding, rng);
  int z = store.create("z", 2, 2, Init::Zeros, rng);
  EXPECT_LE(store.at(w).value.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_LE(store.at(e).value.cwiseAbs().maxCoeff(), 0.125);
  EXPECT_EQ(store.at(z).value.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(store.scalar_count(), 16u * 4 + 100 * 64 + 4);
  EXPECT_TRUE(store.all_finite());
  EXPECT_THROW(store.create("w", 1, 1, Init::Zeros, rng), cgt::ConfigError);
  EXPECT_EQ(store.index("e"), e);
}

TEST(Attention, RowsAreStochastic) {
  ParameterStore store;
  Rng rng(7);
  for (int heads : {1, 2, 4}) {
    auto att = Attention::create(store, "a" + std::to_string(heads), 8, heads, rng);
    Graph g(&store);
    std::vector<Var> weights;
    att(g, g.constant(random_matrix(5, 8, rng)), g.constant(random_matrix(6, 8, rng)), nullptr, &weights);
    ASSERT_EQ(weights.size(), static_cast<std::size_t>(heads));
    for (Var w : weights) {
      for (int i = 0; i < 5; ++i) EXPECT_NEAR(g.value(w).row(i).sum(), 1.0, 1e-6);
    }
  }
}

TEST(Attention, SingleKeyReturnsProjectedValue) {
  ParameterStore store;
  Rng rng(8);
  auto att = Attention::create(store, "a", 8, 2, rng);
  Matrix x = random_matrix(1, 8, rng);
  Graph g(&store);
  Var out = att(g, g.constant(x), g.constant(x));
  Matrix expected = x * store.at(att.wv).value * store.at(att.wh).value;
  EXPECT_TRUE(g.value(out).isApprox(expected, 1e-12));
}

TEST(Attention, IdentityProjectionsMatchScalarOracle) {
  ParameterStore store;
  Rng rng(9);
  const int d = 6;
  auto att = Attention::create(store, "a", d, 1, rng);
  for (int p : {att.wq, att.wk, att.wv, att.wh}) set_identity(store, p);
  Matrix x = random_matrix(3, d, rng);
  Graph g(&store);
  Matrix out = g.value(att(g, g.constant(x), g.constant(x)));
  for (int i = 0; i < 3; ++i) {
    double s[3];
    double total = 0.0;
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += x(i, c) * x(j, c);
      s[j] = std::exp(dot / std::sqrt(static_cast<double>(d)));
      total += s[j];
    }
    for (int c = 0; c < d; ++c) {
      double v = 0.0;
      for (int j = 0; j < 3; ++j) v += s[j] / total * x(j, c);
      EXPECT_NEAR(out(i, c), v, 1e-12);
    }
  }
}

TEST(Attention, MaskedKeysGetNoWeight) {
  ParameterStore store;
  Rng rng(10);
  auto att = Attention::create(store, "a", 4, 1, rng);
  Matrix mask = attention_mask(3, 3, true);
  Graph g(&store);
  std::vector<Var> w;
  Matrix x = random_matrix(3, 4, rng);
  att(g, g.constant(x), g.constant(x), &mask, &w);
  const Matrix& p = g.value(w[0]);
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(1, 2), 0.0);
  EXPECT_NEAR(p.row(2).sum(), 1.0, 1e-12);

  Matrix none = Matrix::Zero(2, 3);
  Graph g2(&store);
  Var out = att(g2, g2.constant(random_matrix(2, 4, rng)), g2.constant(x), &none);
  EXPECT_EQ(g2.value(out).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Attention, RejectsIndivisibleHeads) {
  ParameterStore store;
  Rng rng(1);
  EXPECT_THROW(Attention::create(store, "a", 6, 4, rng), cgt::ConfigError);
}

TEST(Gating, AlphaPairsSumToOne) {
  ParameterStore store;
  Rng rng(11);
  auto gate = Gating::create(store, "g", 8, 12, 2, rng);
  Graph g(&store);
  std::vector<Var> alphas;
  gate(g, g.constant(random_matrix(40, 8, rng)), g.constant(random_matrix(40, 12, rng)), &alphas);
  ASSERT_EQ(alphas.size(), 2u);
  for (Var a : alphas) {
    for (int i = 0; i < 40; ++i) {
      const double ay = g.value(a)(i, 0);
      const double ac = 1.0 - ay;
      EXPECT_GE(ay, 0.0);
      EXPECT_GE(ac, 0.0);
      EXPECT_NEAR(ay + ac, 1.0, 1e-6);
    }
  }
}

TEST(Gating, EqualScoresGiveMean) {
  ParameterStore store;
  Rng rng(12);
  const int d = 4;
  auto gate = Gating::create(store, "g", d, d, 1, rng);
  set_identity(store, gate.wc);
  set_identity(store, gate.wh);
  store.at(gate.w3).value = store.at(gate.w2).value;
  Matrix y = random_matrix(3, d, rng);
  Graph g(&store);
  std::vector<Var> alphas;
  Var h = gate(g, g.constant(y), g.constant(y), &alphas);
  Matrix vy = y * store.at(gate.w4).value;
  Matrix vc = y * store.at(gate.w5).value;
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g.value(alphas[0])(i, 0), 0.5);
  EXPECT_TRUE(g.value(h).isApprox(0.5 * (vy + vc), 1e-12));
}

TEST(Gating, OutputIsConvexCombination) {
  ParameterStore store;
  Rng rng(13);
  const int d = 8;
  const int heads = 2;
  auto gate = Gating::create(store, "g", d, 10, heads, rng);
  set_identity(store, gate.wh);
  Matrix y = random_matrix(5, d, rng);
  Matrix c = random_matrix(5, 10, rng);
  Graph g(&store);
  std::vector<Var> alphas;
  Matrix h = g.value(gate(g, g.constant(y), g.constant(c), &alphas));
  Matrix n = c * store.at(gate.wc).value;
  Matrix vy = y * store.at(gate.w4).value;
  Matrix vc = n * store.at(gate.w5).value;
  Matrix q = y * store.at(gate.w1).value;
  Matrix ky = y * store.at(gate.w2).value;
  Matrix kc = n * store.at(gate.w3).value;
  const int dk = d / heads;
  for (int t = 0; t < heads; ++t) {
    for (int i = 0; i < 5; ++i) {
      const double sy = q.row(i).segment(t * dk, dk).dot(ky.row(i).segment(t * dk, dk));
      const double sc = q.row(i).segment(t * dk, dk).dot(kc.row(i).segment(t * dk, dk));
      const double a = std::exp(sy) / (std::exp(sy) + std::exp(sc));
      EXPECT_NEAR(g.value(alphas[static_cast<std::size_t>(t)])(i, 0), a, 1e-12);
      for (int c2 = t * dk; c2 < (t + 1) * dk; ++c2) {
        EXPECT_NEAR(h(i, c2), a * vy(i, c2) + (1 - a) * vc(i, c2), 1e-12);
        EXPECT_GE(h(i, c2), std::min(vy(i, c2), vc(i, c2)) - 1e-12);
        EXPECT_LE(h(i, c2), std::max(vy(i, c2), vc(i, c2)) + 1e-12);
      }
    }
  }
}

TEST(Conv, WindowOfOneIsPositionwise) {
  Rng rng(14);
  Matrix y = random_matrix(4, 3, rng);
  Matrix w = random_matrix(3, 3, rng);
  Graph g;
  Var out = conv_layer(g, g.constant(y), g.constant(w), 1, false);
  EXPECT_TRUE(g.value(out).isApprox(y * w, 1e-12));
}

TEST(Conv, SinglePositionUsesMiddleSlice) {
  Rng rng(15);
  Matrix y = random_matrix(1, 4, rng);
  Matrix w = random_matrix(12, 4, rng);
  Graph g;
  Var out = conv_layer(g, g.constant(y), g.constant(w), 3, false);
  EXPECT_TRUE(g.value(out).isApprox(y * w.middleRows(4, 4), 1e-12));
}

TEST(Conv, MatchesSlidingWindowLoop) {
  Rng rng(16);
  const int L = 5, d = 3, k = 3, w = 1;
  Matrix y = random_matrix(L, d, rng);
  Matrix kernel = random_matrix(k * d, d, rng);
  for (bool causal : {false, true}) {
    Graph g;
    Matrix out = g.value(conv_layer(g, g.constant(y), g.constant(kernel), k, causal));
    for (int i = 0; i < L; ++i) {
      for (int o = 0; o < d; ++o) {
        double acc = 0.0;
        for (int s = 0; s < k; ++s) {
          const int src = causal ? i - (k - 1) + s : i - w + s;
          if (src < 0 || src >= L) continue;
          for (int c = 0; c < d; ++c) acc += kernel(s * d + c, o) * y(src, c);
        }
        EXPECT_NEAR(out(i, o), acc, 1e-12);
      }
    }
  }
}

TEST(Conv, EvenCenteredWindowRejected) {
  ParameterStore store;
  Rng rng(1);
  EXPECT_THROW(ConvStack::create(store, "c", 4, 2, 1, false, rng), cgt::ConfigError);
}

TEST(LayerNorm, NormalizesRows) {
  ParameterStore store;
  Rng rng(17);
  auto ln = LayerNorm::create(store, "ln", 6, rng);
  Matrix x = random_matrix(3, 6, rng, 5.0);
  x.row(2).setConstant(4.0);
  Graph g(&store);
  Matrix out = g.value(ln(g, g.constant(x)));
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(out.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR((out.row(i).array() - out.row(i).mean()).square().mean(), 1.0, 1e-4);
  }
  EXPECT_EQ(out.row(2).cwiseAbs().maxCoeff(), 0.0);
  store.at(ln.beta).value.setConstant(0.5);
  Graph g2(&store);
  EXPECT_TRUE(g2.value(ln(g2, g2.constant(x))).row(2).isApproxToConstant(0.5));
}

TEST(Residual, ZeroSublayerIsIdentity) {
  ParameterStore store;
  Rng rng(18);
  auto ln = LayerNorm::create(store, "ln", 4, rng);
  Matrix x = random_matrix(3, 4, rng);
  Graph g(&store);
  Var out = residual(g, g.constant(x), ln, [&](Var v) { return g.scale(v, 0.0); }, Mode{});
  EXPECT_EQ(g.value(out), x);
}

TEST(Dropout, SeededAndTrainingOnly) {
  Rng a(5), b(5);
  Matrix x = Matrix::Ones(20, 20);
  Graph g;
  Matrix da = g.value(g.dropout(g.constant(x), 0.5, a));
  Matrix db = g.value(g.dropout(g.constant(x), 0.5, b));
  EXPECT_EQ(da, db);
  EXPECT_GT((da.array() == 0.0).count(), 100);
  EXPECT_TRUE(((da.array() == 0.0) || (da.array() == 2.0)).all());
  Mode eval{false, 0.5, &a};
  EXPECT_EQ(eval.rate(), 0.0);
}

TEST(Autodiff, ShapeErrors) {
  Graph g;
  Var a = g.constant(Matrix::Ones(2, 3));
  Var b = g.constant(Matrix::Ones(2, 3));
  EXPECT_THROW(g.matmul(a, b), cgt::ShapeError);
  EXPECT_THROW(g.backward(a), cgt::ShapeError);
  EXPECT_THROW(g.slice_cols(a, 2, 2), cgt::ShapeError);
}

TEST(Autodiff, SharedParameterAccumulates) {
  ParameterStore store;
  Rng rng(1);
  int w = store.create("w", 1, 1, Init::Ones, rng);
  store.at(w).value(0, 0) = 3.0;
  Gradients grads(store);
  Graph g(&store, &grads);
  Var p1 = g.param(w);
  Var p2 = g.param("w");
  g.backward(g.sum(g.mul(p1, p2)));
  EXPECT_DOUBLE_EQ(grads.at(w)(0, 0), 6.0);
}

class GradCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradCheck, Attention) {
  const int heads = GetParam();
  ParameterStore store;
  Rng rng(100 + heads);
  auto att = Attention::create(store, "a", 8, heads, rng);
  Matrix mask = attention_mask(4, 5, false, {1, 1, 0, 1, 1});
  double err = grad_check(store, {random_matrix(4, 8, rng), random_matrix(5, 8, rng)},
                          [&](Graph& g, const std::vector<Var>& in) {
                            return weighted_loss(g, att(g, in[0], in[1], &mask), 1);
                          });
  EXPECT_LT(err, 1e-4);
}

TEST_P(GradCheck, CausalSelfAttention) {
  const int heads = GetParam();
  ParameterStore store;
  Rng rng(200 + heads);
  auto att = Attention::create(store, "a", 6, heads, rng);
  Matrix mask = attention_mask(6, 6, true);
  double err = grad_check(store, {random_matrix(6, 6, rng)}, [&](Graph& g, const std::vector<Var>& in) {
    return weighted_loss(g, att(g, in[0], in[0], &mask), 2);
  });
  EXPECT_LT(err, 1e-4);
}

TEST_P(GradCheck, Gating) {
  const int heads = GetParam();
  ParameterStore store;
  Rng rng(300 + heads);
  auto gate = Gating::create(store, "g", 8, 6, heads, rng);
  double err = grad_check(store, {random_matrix(5, 8, rng), random_matrix(5, 6, rng)},
                          [&](Graph& g, const std::vector<Var>& in) {
                            return weighted_loss(g, gate(g, in[0], in[1]), 3);
                          });
  EXPECT_LT(err, 1e-4);
}

TEST_P(GradCheck, ConvStack) {
  ParameterStore store;
  Rng rng(400 + GetParam());
  auto conv = ConvStack::create(store, "c", 4, 3, 2, GetParam() == 2, rng);
  double err = grad_check(store, {random_matrix(6, 4, rng)}, [&](Graph& g, const std::vector<Var>& in) {
    return weighted_loss(g, conv(g, in[0]), 4);
  });
  EXPECT_LT(err, 1e-4);
}

TEST_P(GradCheck, ResidualBlock) {
  const int heads = GetParam();
  ParameterStore store;
  Rng rng(500 + heads);
  const int d = 8;
  auto ln1 = LayerNorm::create(store, "ln1", d, rng);
  auto ln2 = LayerNorm::create(store, "ln2", d, rng);
  auto ln3 = LayerNorm::create(store, "ln3", d, rng);
  auto att = Attention::create(store, "a", d, heads, rng);
  auto gate = Gating::create(store, "g", d, 6, heads, rng);
  auto conv = ConvStack::create(store, "c", d, 3, 2, false, rng);
  for (int p : {ln1.gamma, ln1.beta, ln2.gamma, ln3.beta}) store.at(p).value = random_matrix(1, d, rng);
  double err = grad_check(store, {random_matrix(5, d, rng), random_matrix(5, 6, rng)},
                          [&](Graph& g, const std::vector<Var>& in) {
                            Var x = g.add(in[0], g.constant(positional_encodings(0, 5, d)));
                            x = residual(g, x, ln1, [&](Var v) { return att(g, v, v); }, Mode{});
                            x = residual(g, x, ln2, [&](Var v) { return gate(g, v, in[1]); }, Mode{});
                            x = residual(g, x, ln3, [&](Var v) { return conv(g, v); }, Mode{});
                            return weighted_loss(g, x, 5);
                          });
  EXPECT_LT(err, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Heads, GradCheck, ::testing::Values(1, 2));

TEST(GradCheckOps, LookupsAndReductions) {
  ParameterStore store;
  Rng rng(600);
  int table = store.create("emb", 6, 4, Init::Embedding, rng);
  int chars = store.create("chars", 5, 2, Init::Embedding, rng);
  int w = store.create("w", 4, 3, Init::Uniform, rng);
  int b = store.create("b", 1, 3, Init::Uniform, rng);
  double err = grad_check(store, {random_matrix(3, 1, rng)}, [&](Graph& g, const std::vector<Var>& in) {
    Var e = g.embedding(g.param(table), {1, 3, 3, 5});
    Var c = g.char_features(g.param(chars), {{1, 2}, {3, 0}, {4}, {}}, 2);
    Var h = g.tanh(g.linear(e, g.param(w), g.param(b)));
    Var m = g.segment_mean(h, {0, 1, 4});
    Var s = g.softmax_rows(g.concat_rows({m, g.slice_rows(h, 2, 1)}));
    Var picked = g.gather_elements(s, {{0, 1}, {1, 2}, {2, 0}});
    Var gated = g.mul(g.sigmoid(in[0]), picked);
    Var cf = g.masked_row_sum(g.gelu(c), Matrix::Ones(4, 4));
    return g.add(g.sum(g.log(g.affine(gated, 1.0, 0.5))), g.sum(g.row_dot(cf, cf)));
  });
  EXPECT_LT(err, 1e-4);
}
