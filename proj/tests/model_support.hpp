#pragma once

#include <vector>

#include "cgt/corpus.hpp"
#include "cgt/encoding.hpp"
#include "cgt/model.hpp"
#include "cgt/python_codec.hpp"

namespace testing_support {

inline cgt::ModelConfig tiny_config() {
  cgt::ModelConfig c;
  c.d = 16;
  c.heads = 2;
  c.blocks = {1, 1, 1, 1, 1};
  c.ff_first = 32;
  c.char_dim = 4;
  c.dropout_rate = 0.0;
  return c;
}

struct Toy {
  cgt::Corpus corpus;
  cgt::Vocabs vocabs;
  std::vector<cgt::EncodedSample> samples;
};

inline Toy make_toy(int n, std::uint64_t seed = 7) {
  Toy t;
  t.corpus = cgt::generate_synthetic_corpus(cgt::python_grammar(), n, seed);
  t.vocabs = cgt::build_vocabs(t.corpus, cgt::python_grammar());
  for (const auto& s : t.corpus.samples) t.samples.push_back(cgt::encode_sample(s, t.vocabs, cgt::python_grammar()));
  return t;
}

}  // namespace testing_support
