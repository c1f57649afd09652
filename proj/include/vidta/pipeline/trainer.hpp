// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Mini-batch training with a step learning-rate schedule, early
//!       stopping on validation MSE, k-fold cross-validation and batch inference.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vidta/error.hpp"
#include "vidta/metrics.hpp"
#include "vidta/model/vidta_model.hpp"
#include "vidta/pipeline/checkpoint.hpp"
#include "vidta/pipeline/dataset.hpp"
#include "vidta/pipeline/kfold.hpp"

namespace vidta::pipeline {

struct TrainConfig {
  double lr_initial = 3e-4;
  double lr_after_100_epochs = 1e-4;
  std::size_t lr_decay_epoch = 100;  // epochs run at lr_initial
  std::size_t batch_size = 128;
  std::size_t max_epochs = 1000;
  std::size_t early_stop_patience = 200;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // featurization and evaluation only

  double learning_rate(std::size_t epoch) const { return epoch <= lr_decay_epoch ? lr_initial : lr_after_100_epochs; }

  void validate() const {
    if (!(lr_initial > 0.0) || !(lr_after_100_epochs > 0.0)) throw Error("learning rates must be positive");
    if (batch_size == 0 || max_epochs == 0) throw Error("batch_size and max_epochs must be positive");
    if (folds < 2) throw Error("folds must be at least 2");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_mse = 0.0;  // eval-mode MSE over the training split after the epoch
  double valid_mse = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  double seconds = 0.0;
};

inline std::string epoch_log_header() { return "epoch,train_mse,valid_mse,lr,seconds"; }

inline std::string to_csv_row(const EpochLog& e) {
  std::ostringstream out;
  out.precision(17);
  out << e.epoch << ',' << e.train_mse << ',' << e.valid_mse << ',' << e.lr << ',';
  out.precision(6);
  out << e.seconds;
  return out.str();
}

struct TrainResult {
  Checkpoint best;  // state after the best-scoring epoch
  std::vector<EpochLog> log;
};

inline std::vector<double> targets_of(const std::vector<DatasetRecord>& records) {
  std::vector<double> y;
  y.reserve(records.size());
  for (const auto& r : records) y.push_back(r.target());
  return y;
}

inline std::vector<double> predict_samples(model::VidtaModel<float>& m, const std::vector<model::Sample>& samples,
                                           std::size_t workers) {
  const auto raw = m.predict(std::span<const model::Sample>(samples), workers);
  return {raw.begin(), raw.end()};
}

//! Trains one model. Selection and early stopping use validation MSE, or
//! training MSE when `valid` is empty. `on_epoch` sees every log line.
inline TrainResult train(const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& valid_set,
                         const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() < 2) throw TooFewRecords("training needs at least 2 records");
  FeatureCache cache(model_cfg);
  cache.add(train_set, cfg.workers);
  cache.add(valid_set, cfg.workers);
  const auto train_samples = cache.samples(train_set);
  const auto valid_samples = cache.samples(valid_set);
  const auto train_y = targets_of(train_set);
  const auto valid_y = targets_of(valid_set);

  Rng rng(cfg.seed);
  model::VidtaModel<float> m(model_cfg, cfg.seed);
  Adam<float> adam;
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = cfg.learning_rate(epoch);
    shuffle(order, rng);
    std::size_t n_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    // A trailing batch of one has no batch statistics; fold it into its predecessor.
    if (n_batches > 1 && order.size() % cfg.batch_size == 1) --n_batches;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = b + 1 == n_batches ? order.size() : lo + cfg.batch_size;
      std::vector<model::Sample> batch;
      Tensor<float> target(Shape{hi - lo});
      for (std::size_t i = lo; i < hi; ++i) {
        batch.push_back(train_samples[order[i]]);
        target[i - lo] = static_cast<float>(train_y[order[i]]);
      }
      Tape<float> tape;
      m.params().zero_grad();
      const auto p = m.params().bind(tape);
      Var<float> pred = m.forward(tape, p, std::span<const model::Sample>(batch), {true, &rng});
      tape.backward(mse_loss(pred, tape.constant(std::move(target))));
      adam.step(m.params(), lr);
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_mse = metrics::mse(predict_samples(m, train_samples, cfg.workers), train_y);
    if (!valid_samples.empty()) log.valid_mse = metrics::mse(predict_samples(m, valid_samples, cfg.workers), valid_y);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    const double score = valid_samples.empty() ? log.train_mse : log.valid_mse;
    if (score < best) {
      best = score;
      since_best = 0;
      result.best = make_checkpoint(m, &adam, epoch, best, rng_state(rng));
    } else if (++since_best > cfg.early_stop_patience) {
      break;
    }
  }
  if (result.best.arrays.empty()) result.best = make_checkpoint(m, &adam, result.log.size(), best, rng_state(rng));
  return result;
}

struct FoldResult {
  std::size_t fold = 0;
  TrainResult training;
  std::optional<metrics::MetricsReport> valid_metrics;
};

struct Predictions {
  std::vector<double> values;
  std::optional<metrics::MetricsReport> metrics;  // when at least two truths allow it
};

//! Eval-mode predictions for `records` from a checkpoint. Records carry
//! affinities, so metrics are attached whenever they are defined.
inline Predictions predict_batch(const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
                                 std::size_t workers = 1) {
  check_compatible(ckpt);
  Predictions out;
  if (records.empty()) return out;
  model::VidtaModel<float> m = restore_model(ckpt);
  FeatureCache cache(ckpt.config);
  cache.add(records, workers);
  out.values = predict_samples(m, cache.samples(records), workers);
  if (records.size() >= 2) {
    try {
      out.metrics = metrics::evaluate(out.values, targets_of(records));
    } catch (const DegenerateInput&) {
    } catch (const NoComparablePairs&) {
    }
  }
  return out;
}

template <typename Item>
std::vector<Item> pick(const std::vector<Item>& items, const std::vector<std::size_t>& indices) {
  std::vector<Item> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(items.at(i));
  return out;
}

//! k-fold cross-validation; fold k trains with seed `cfg.seed + k`.
inline std::vector<FoldResult> cross_validate(const std::vector<DatasetRecord>& records,
                                              const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                                              const std::function<void(std::size_t, const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  const auto folds = kfold_split(records.size(), cfg.folds, cfg.seed);
  std::vector<FoldResult> out;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + k;
    const auto train_set = pick(records, folds[k].train);
    const auto valid_set = pick(records, folds[k].valid);
    FoldResult r;
    r.fold = k;
    r.training = train(train_set, valid_set, model_cfg, fold_cfg, [&](const EpochLog& e) {
      if (on_epoch) on_epoch(k, e);
    });
    r.valid_metrics = predict_batch(r.training.best, valid_set, cfg.workers).metrics;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vidta::pipeline
