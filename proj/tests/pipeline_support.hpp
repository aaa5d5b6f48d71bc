#pragma once

#include "cgt/pipeline.hpp"
#include "model_support.hpp"

namespace testing_support {

inline cgt::PipelineConfig toy_pipeline_config(std::uint64_t seed, int rounds = 3) {
  cgt::PipelineConfig c;
  c.name = "toy";
  c.model = tiny_config();
  c.model.d = 32;
  c.model.N_iterations = rounds;
  c.seed = seed;
  c.epochs = 20;
  c.finetune_epochs = 20;
  c.batch_size = 4;
  c.threads = 2;
  c.test_parallelism = 4;
  c.limits.max_actions = 120;
  c.vocab.min_freq_words = 1;
  return c;
}

inline cgt::Dataset toy_dataset(std::uint64_t seed, int train = 12, int dev = 4, int test = 4) {
  return cgt::synthetic_dataset(train, dev, test, seed);
}

}  // namespace testing_support
