#include "cgt/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "cgt/errors.hpp"

namespace cgt {

namespace {

double rms(const nn::Matrix& m) { return m.size() ? std::sqrt(m.squaredNorm() / static_cast<double>(m.size())) : 0.0; }

nn::Rng sample_rng(std::uint64_t seed, int step, int sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(sample)};
  return nn::Rng(seq);
}

}  // namespace

void Adafactor::step(nn::ParameterStore& store, nn::Gradients& grads) {
  ++t_;
  if (state_.size() < static_cast<std::size_t>(store.size())) state_.resize(static_cast<std::size_t>(store.size()));
  const double t = static_cast<double>(t_);
  const double beta2 = 1.0 - std::pow(t, -opts_.decay_rate);
  const double rho = opts_.learning_rate > 0.0 ? opts_.learning_rate : std::min(1e-2, 1.0 / std::sqrt(t));
  for (int i = 0; i < store.size(); ++i) {
    if (!grads.touched(i)) continue;
    nn::Matrix& x = store.at(i).value;
    const nn::Matrix& g = grads.at(i);
    State& s = state_[static_cast<std::size_t>(i)];
    const nn::Matrix g2 = g.array().square() + opts_.eps1;
    nn::Matrix update;
    const bool factored = x.rows() > 1 && x.cols() > 1;
    if (factored) {
      if (!s.init) {
        s.row = Eigen::VectorXd::Zero(x.rows());
        s.col = Eigen::VectorXd::Zero(x.cols());
      }
      s.row = beta2 * s.row + (1.0 - beta2) * g2.rowwise().mean();
      s.col = beta2 * s.col + (1.0 - beta2) * g2.colwise().mean().transpose();
      const Eigen::VectorXd r = s.row / s.row.mean();
      update.resize(x.rows(), x.cols());
      for (Eigen::Index a = 0; a < x.rows(); ++a) {
        for (Eigen::Index b = 0; b < x.cols(); ++b) update(a, b) = g(a, b) / std::sqrt(r(a) * s.col(b));
      }
    } else {
      if (!s.init) s.full = nn::Matrix::Zero(x.rows(), x.cols());
      s.full = beta2 * s.full + (1.0 - beta2) * g2;
      update = g.array() / s.full.array().sqrt();
    }
    s.init = true;
    update /= std::max(1.0, rms(update) / opts_.clip_threshold);
    const double alpha = opts_.scale_parameter ? std::max(opts_.eps2, rms(x)) * rho : rho;
    x -= alpha * update;
  }
}

TrainLog train(Model& model, const std::vector<EncodedSample>& samples, const TrainOptions& opts) {
  if (samples.empty()) throw EmptySubset("no training samples");
  if (opts.batch_size < 1 || opts.threads < 1 || opts.epochs < 0) throw ConfigError("invalid training options");
  TrainLog log;
  Adafactor optimizer(opts.optimizer);
  nn::ParameterStore& store = model.params();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  nn::Rng shuffle_rng(opts.seed);
  int step = 0;
  const double rate = model.config().dropout_rate;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_total = 0.0;
    int epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
      const int n = static_cast<int>(end - start);
      const int workers = std::min(opts.threads, n);
      std::vector<nn::Gradients> grads(static_cast<std::size_t>(workers), nn::Gradients(store));
      std::vector<double> losses(static_cast<std::size_t>(workers), 0.0);
      std::vector<std::string> errors(static_cast<std::size_t>(workers));
      auto work = [&](int w) {
        try {
          for (int k = w; k < n; k += workers) {
            const std::size_t idx = order[start + static_cast<std::size_t>(k)];
            nn::Rng rng = sample_rng(opts.seed, step, static_cast<int>(idx));
            nn::Mode mode{true, rate, &rng};
            nn::Graph g(&store, &grads[static_cast<std::size_t>(w)]);
            nn::Var l = model.loss(g, samples[idx], mode);
            losses[static_cast<std::size_t>(w)] += g.value(l)(0, 0);
            g.backward(l);
          }
        } catch (const std::exception& e) {
          errors[static_cast<std::size_t>(w)] = e.what();
        }
      };
      std::vector<std::thread> pool;
      for (int w = 1; w < workers; ++w) pool.emplace_back(work, w);
      work(0);
      for (auto& th : pool) th.join();
      for (const auto& e : errors) {
        if (!e.empty()) throw ShapeError("training step failed: " + e);
      }
      for (int w = 1; w < workers; ++w) grads[0].add(grads[static_cast<std::size_t>(w)]);
      grads[0].scale(1.0 / n);
      optimizer.step(store, grads[0]);
      const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
      log.step_losses.push_back(mean);
      epoch_total += mean;
      ++epoch_batches;
      ++step;
      if (opts.on_step && !opts.on_step(step, mean)) {
        log.epoch_losses.push_back(epoch_total / epoch_batches);
        return log;
      }
    }
    log.epoch_losses.push_back(epoch_total / epoch_batches);
  }
  return log;
}

double evaluate_loss(const Model& model, const std::vector<EncodedSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    nn::Graph g(&model.params());
    total += g.value(model.loss(g, s, nn::Mode{}))(0, 0);
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace cgt
