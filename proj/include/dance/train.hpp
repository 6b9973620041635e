#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dance/autodiff.hpp"
#include "dance/dataset.hpp"
#include "dance/log.hpp"
#include "dance/model.hpp"
#include "dance/serialize.hpp"

namespace dance {

struct TrainConfig {
  double lr = 0.1;
  int epochs = 20;
  int batch = 16;
  uint64_t seed = 0;
};

struct EpochLog {
  int epoch;
  double loss;
  double accuracy;
};

struct TrainResult {
  Weights weights;
  std::vector<EpochLog> log;
};

inline double accuracy(const Model& model, const Dataset& ds) {
  if (ds.size() == 0) throw ConfigError("empty dataset");
  int hits = 0;
  for (size_t i = 0; i < ds.size(); ++i)
    if (predict(model, ds.images[i]).second == ds.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

// Plain SGD, fixed learning rate, seeded shuffling, cross-entropy on the
// softmax output. Deterministic given (spec, dataset, config).
inline TrainResult train(const ModelSpec& spec, const Dataset& ds, const TrainConfig& cfg) {
  validate_spec(spec);
  ds.validate();
  if (ds.classes != spec.classes) throw ConfigError("dataset class count does not match model");
  if (cfg.epochs < 0 || cfg.batch < 1) throw ConfigError("bad training config");

  Model model;
  model.spec = spec;
  model.weights = init_weights(spec, cfg.seed);
  {
    json tc;
    tc["lr"] = cfg.lr;
    tc["epochs"] = cfg.epochs;
    tc["batch"] = cfg.batch;
    tc["seed"] = cfg.seed;
    model.weights.config_hash = config_hash(tc);
  }

  const int m = static_cast<int>(spec.layers.size());
  std::vector<size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_stream(cfg.seed, {0x7EA1, static_cast<uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int hits = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<std::vector<Tensor>> grads(model.weights.params.size());
      for (size_t li = 0; li < grads.size(); ++li)
        for (const Tensor& t : model.weights.params[li]) grads[li].emplace_back(t.shape());

      for (size_t bi = start; bi < stop; ++bi) {
        const size_t i = order[bi];
        Tape tape = forward(model, ds.images[i]);
        const Tensor& probs = tape.acts.back();
        const int y = ds.labels[i];
        loss_sum += -std::log(std::max(probs[y], 1e-12));
        int pred = 0;
        for (int c = 1; c < probs.size(); ++c)
          if (probs[c] > probs[pred]) pred = c;
        if (pred == y) ++hits;

        // d(-log p_y)/d logits = p - onehot(y), seeded below the softmax
        Tensor seed = probs;
        seed[y] -= 1.0;
        backward(model, tape, {{m - 1, std::move(seed)}}, &grads);
      }

      const double scale = cfg.lr / static_cast<double>(stop - start);
      for (size_t li = 0; li < grads.size(); ++li)
        for (size_t pi = 0; pi < grads[li].size(); ++pi)
          axpy(model.weights.params[li][pi], -scale, grads[li][pi]);
    }

    const double mean_loss = loss_sum / static_cast<double>(ds.size());
    if (!std::isfinite(mean_loss) || !model.weights.all_finite())
      throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                         " (non-finite loss or weights); reduce the learning rate");
    EpochLog el{epoch, mean_loss, static_cast<double>(hits) / static_cast<double>(ds.size())};
    result.log.push_back(el);
    log_debug("epoch " + std::to_string(epoch) + " loss " + std::to_string(el.loss) + " acc " +
              std::to_string(el.accuracy));
  }
  result.weights = std::move(model.weights);
  return result;
}

}  // namespace dance
