// Copyright 2026 The glyphemb Authors. Apache 2.0 License.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "glyphemb/optim.hpp"
#include "glyphemb/random.hpp"

namespace glyphemb {

struct TrainOptions {
  std::size_t batch_size = 32;
  AdamOptions adam{};
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: no cap
  double clip_norm = 5.0;     // <= 0 disables clipping
  bool jitter = false;
  std::uint64_t seed = 1;
  double dev_fraction = 0.1;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;  // cumulative
  double train_loss = 0;  // mean over the epoch's steps
  double dev_metric = std::numeric_limits<double>::quiet_NaN();
};

struct TrainLog {
  std::vector<double> step_losses;
  std::vector<EpochLog> epochs;
  double best_dev_metric = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Generic minibatch loop.
///
/// `step_loss(batch_indices)` must run forward + backward for the batch and
/// return the loss; gradients are expected in the parameters' grad buffers.
/// After every epoch `dev_metric()` (if set) is evaluated and the best
/// parameters are restored at the end.
template <typename T>
TrainLog run_training(std::span<Parameter<T>* const> params, std::size_t n_train,
                      const TrainOptions& opts, Rng& shuffle_rng,
                      const std::function<double(std::span<const std::size_t>)>& step_loss,
                      const std::function<double()>& dev_metric, bool higher_is_better,
                      const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (n_train == 0) throw std::invalid_argument("training set is empty");
  if (opts.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  AdamState<T> adam(params, opts.adam);
  TrainLog log;
  std::vector<Tensor<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (auto* p : params) best.push_back(p->value);
  };
  std::vector<std::size_t> order(n_train);
  std::size_t steps = 0;
  bool done = false;
  for (std::size_t epoch = 1; epoch <= opts.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < n_train; start += opts.batch_size) {
      const std::size_t end = std::min(n_train, start + opts.batch_size);
      zero_grads(params);
      double loss;
      try {
        loss = step_loss(std::span<const std::size_t>(order).subspan(start, end - start));
      } catch (const NonFiniteError& e) {
        throw TrainingError("non-finite value at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(steps + 1) + ": " + e.what());
      }
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(steps + 1));
      clip_grad_norm(params, opts.clip_norm);
      try {
        adam.step(params);
      } catch (const NonFiniteError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(steps + 1) + ": " + e.what());
      }
      log.step_losses.push_back(loss);
      epoch_loss += loss;
      ++epoch_steps;
      ++steps;
      if (opts.max_steps && steps >= opts.max_steps) {
        done = true;
        break;
      }
    }
    EpochLog e{epoch, steps, epoch_loss / static_cast<double>(epoch_steps)};
    if (dev_metric) {
      e.dev_metric = dev_metric();
      const bool better = std::isnan(log.best_dev_metric) ||
                          (higher_is_better ? e.dev_metric > log.best_dev_metric
                                            : e.dev_metric < log.best_dev_metric);
      if (better) {
        log.best_dev_metric = e.dev_metric;
        log.best_epoch = epoch;
        snapshot();
      }
    }
    log.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  zero_grads(params);
  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return log;
}

}  // namespace glyphemb
