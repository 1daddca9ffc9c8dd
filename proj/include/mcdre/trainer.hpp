#pragma once

// Mini-batch training with Adam and early stopping on a dev score.
//
// A batch is a set of per-sentence graphs on one tape; the loss is
//   sum over tasks of w_task * (sum of token cross-entropies) / (tokens in batch)
// which equals padded batching with padding masked out of the loss.

#include <array>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "mcdre/autodiff.hpp"
#include "mcdre/model.hpp"
#include "mcdre/optimizer.hpp"
#include "mcdre/pipeline.hpp"
#include "mcdre/rng.hpp"

namespace mcdre {

struct TrainOptions {
  double lr = 4e-4;
  std::size_t batch_size = 32;
  std::size_t patience = 10;
  std::size_t max_epochs = 300;
  double clip_norm = 10.0;
  std::array<double, 3> loss_weights{1.0, 1.0, 1.0};
  std::uint64_t seed = 1;

  static TrainOptions from(const RunConfig& c) {
    return {c.lr, c.batch_size, c.patience, c.max_epochs, c.clip_norm, c.loss_weights, c.seed};
  }
};

struct EpochLog {
  std::size_t epoch = 0;   // 1-based
  double loss = 0.0;       // token-weighted mean joint loss over the epoch
  std::optional<double> dev_f;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::optional<double> best_dev_f;
  std::size_t steps = 0;
};

/// Returning false from the callback stops training after that epoch.
using EpochCallback = std::function<bool(const EpochLog&)>;
using DevScore = std::function<double()>;

/// Joint loss of one batch, already divided by the batch's token count.
template <class T>
Var<T> batch_loss(Tape<T>& tape, const MultiAspectModel<T>& model, std::span<const EncodedSentence* const> batch,
                  const std::array<double, 3>& weights, bool training, DropoutStreams* streams,
                  std::size_t* tokens_out = nullptr) {
  std::array<std::optional<Var<T>>, 3> sums;
  std::size_t tokens = 0;
  for (const auto* s : batch) {
    if (s->ids.empty()) continue;
    tokens += s->ids.size();
    const auto r = model.forward(tape, s->ids, training, streams);
    const auto per_task = task_loss_sums(r, s->gold_columns());
    for (Aspect a : kAspects) {
      if (!per_task[index(a)]) continue;
      auto& acc = sums[index(a)];
      acc = acc ? ad::add(*acc, *per_task[index(a)]) : *per_task[index(a)];
    }
  }
  if (tokens_out != nullptr) *tokens_out = tokens;
  std::optional<Var<T>> total;
  for (Aspect a : kAspects) {
    if (!sums[index(a)]) continue;
    const T scale = static_cast<T>(weights[index(a)] / static_cast<double>(tokens));
    const Var<T> term = ad::scale(*sums[index(a)], scale);
    total = total ? ad::add(*total, term) : term;
  }
  if (!total) return tape.constant(Matrix<T>(1, 1));
  return *total;
}

template <class T>
TrainResult train(MultiAspectModel<T>& model, std::span<const EncodedSentence> data, const TrainOptions& opts,
                  const DevScore& dev_score = {}, const EpochCallback& on_epoch = {}) {
  if (opts.batch_size == 0) throw ConfigError("batch_size must be positive");
  for (const auto& s : data) {
    for (Aspect a : kAspects) {
      if (model.config().aspects.contains(a) && s.gold[index(a)].size() != s.ids.size()) {
        throw ConfigError("training sentence lacks gold labels for active aspect " + std::string(aspect_name(a)));
      }
    }
  }
  Adam<T> adam(model.params(), {opts.lr});
  DropoutStreams streams = DropoutStreams::from_seed(opts.seed);
  Rng order_rng = Rng::derive(opts.seed, "batch.order");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::vector<Matrix<T>> best;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t token_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<const EncodedSentence*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
      Tape<T> tape;
      std::size_t tokens = 0;
      const Var<T> loss = batch_loss<T>(tape, model, batch, opts.loss_weights, true, &streams, &tokens);
      if (tokens == 0) continue;
      model.params().zero_grad();
      tape.backward(loss);
      clip_grad_norm(model.params(), opts.clip_norm);
      adam.step();
      ++result.steps;
      loss_sum += static_cast<double>(loss.value()(0, 0)) * static_cast<double>(tokens);
      token_sum += tokens;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = token_sum == 0 ? 0.0 : loss_sum / static_cast<double>(token_sum);
    if (dev_score) {
      log.dev_f = dev_score();
      if (!result.best_dev_f || *log.dev_f > *result.best_dev_f) {
        result.best_dev_f = log.dev_f;
        result.best_epoch = epoch;
        log.improved = true;
        since_best = 0;
        best.clear();
        for (std::size_t i = 0; i < model.params().size(); ++i) best.push_back(model.params()[i].value);
      } else {
        ++since_best;
      }
    } else {
      result.best_epoch = epoch;
    }
    result.log.push_back(log);
    const bool keep_going = on_epoch ? on_epoch(log) : true;
    if (!keep_going) break;
    if (dev_score && since_best >= opts.patience) break;
  }
  if (!best.empty()) {
    for (std::size_t i = 0; i < model.params().size(); ++i) model.params()[i].value = best[i];
  }
  return result;
}

/// Trains a tagger on a dataset, early-stopping on strict F over `dev` when
/// it is non-empty.
inline TrainResult train_tagger(Tagger& t, const Dataset& train_data, const Dataset& dev,
                                const EpochCallback& on_epoch = {}) {
  const auto encoded = encode_dataset(t.config, t.vocab, train_data);
  DevScore score;
  if (!dev.empty()) score = [&] { return t.evaluate(dev, MatchMode::Strict).all.micro.f(); };
  return train<float>(*t.model, encoded, TrainOptions::from(t.config), score, on_epoch);
}

}  // namespace mcdre
