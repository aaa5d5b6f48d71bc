#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cgt/autodiff.hpp"
#include "cgt/encoding.hpp"
#include "cgt/model.hpp"

namespace cgt {

struct AdafactorOptions {
  double eps1 = 1e-30;
  double eps2 = 1e-3;
  double clip_threshold = 1.0;
  double decay_rate = 0.8;
  /// Fixed step size; 0 selects the relative step min(1e-2, 1/sqrt(t)).
  double learning_rate = 0.0;
  bool scale_parameter = true;
};

/// Factored second-moment optimizer without momentum. Matrices keep row and
/// column statistics; vectors (one row or one column) keep a full estimate.
/// Parameters without a gradient in a step are left untouched.
class Adafactor {
 public:
  explicit Adafactor(AdafactorOptions opts = {}) : opts_(opts) {}

  void step(nn::ParameterStore& store, nn::Gradients& grads);
  int steps() const { return t_; }

 private:
  struct State {
    Eigen::VectorXd row, col;  // factored
    nn::Matrix full;           // vectors
    bool init = false;
  };

  AdafactorOptions opts_;
  int t_ = 0;
  std::vector<State> state_;
};

struct TrainOptions {
  int epochs = 10;
  int batch_size = 8;
  int threads = 4;
  std::uint64_t seed = 1;
  AdafactorOptions optimizer;
  /// Called after every step with (step, mean batch loss); return false to stop.
  std::function<bool(int, double)> on_step;
};

struct TrainLog {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;
};

/// Teacher-forced training with dropout. Batches are split over a fixed
/// number of worker threads and their gradients summed in worker order, so
/// results depend only on the options, not on scheduling.
TrainLog train(Model& model, const std::vector<EncodedSample>& samples, const TrainOptions& opts);

/// Mean teacher-forced loss without dropout.
double evaluate_loss(const Model& model, const std::vector<EncodedSample>& samples);

}  // namespace cgt
