#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ldgcn/model.hpp"
#include "ldgcn/rng.hpp"

namespace ldgcn {

struct TrainConfig {
  size_t epochs = 30;
  double learning_rate = 0.0015;
  size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;  // epoch shuffling

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw std::invalid_argument("adam betas must lie in (0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("adam eps must be positive");
  }
};

struct AdamState {
  TensorSet m, v;
};

inline AdamState init_adam(const ModelConfig& cfg) {
  return AdamState{make_zero_set(cfg), make_zero_set(cfg)};
}

// One bias-corrected Adam update at step t (t >= 1). Weights belonging to
// masked channels/neurons are left untouched entirely — value and moments —
// so a pruned weight stays 0 even against stale gradients or moments.
inline void adam_step(ModelParams& params, const ModelConfig& cfg, const TensorSet& grads,
                      AdamState& state, const TrainConfig& tc, size_t t) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  TensorSet freedom = weight_freedom(cfg, params.channel_mask, params.neuron_mask);
  double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(t));

  std::vector<bool> trainable;
  auto pt = detail::tensor_list(params, &trainable);
  auto pg = detail::tensor_list(const_cast<TensorSet&>(grads));
  auto pm = detail::tensor_list(state.m);
  auto pv = detail::tensor_list(state.v);
  auto pf = detail::tensor_list(freedom);
  for (size_t i = 0; i < pt.size(); ++i) {
    if (!trainable[i]) continue;
    Tensor& w = *pt[i];
    const Tensor& gt = *pg[i];
    if (w.numel() != gt.numel()) throw std::invalid_argument("gradient shape mismatch");
    for (size_t j = 0; j < w.numel(); ++j) {
      if (pf[i]->data[j] == 0.0) continue;
      double g = gt.data[j];
      double& m = pm[i]->data[j];
      double& v = pv[i]->data[j];
      m = tc.beta1 * m + (1.0 - tc.beta1) * g;
      v = tc.beta2 * v + (1.0 - tc.beta2) * g * g;
      double mhat = m / bc1;
      double vhat = v / bc2;
      w.data[j] -= tc.learning_rate * mhat / (std::sqrt(vhat) + tc.eps);
    }
  }
}

// Fold the batch statistics recorded by a training-mode forward into the
// running statistics (momentum 0.1, unbiased variance, matching the usual
// BatchNorm convention). Masked channels are left frozen.
inline void update_running_stats(ModelParams& params, const ModelConfig& cfg,
                                 const BatchCache& cache) {
  if (!cache.training) throw std::invalid_argument("running stats need a training-mode cache");
  constexpr double kMomentum = 0.1;
  size_t M = cache.batch * cfg.input_len;
  double unbias = static_cast<double>(M) / static_cast<double>(M - 1);
  for (size_t ch = 0; ch < cfg.total_channels(); ++ch) {
    if (!params.channel_mask[ch]) continue;
    params.bn_rmean[ch] = (1.0 - kMomentum) * params.bn_rmean[ch] + kMomentum * cache.bn_mu[ch];
    params.bn_rvar[ch] =
        (1.0 - kMomentum) * params.bn_rvar[ch] + kMomentum * (cache.bn_var[ch] * unbias);
  }
}

struct TrainItem {
  Input input;  // in_channels x input_len
  int label = 0;
};

struct EpochStats {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
};

// Full training loop: seeded epoch shuffles, batch-mean gradients in fixed
// item order, Adam updates, running-statistic maintenance. Deterministic for
// fixed seeds and data.
inline TrainResult train(const std::vector<TrainItem>& data, const ModelConfig& cfg,
                         const TrainConfig& tc, uint64_t model_seed) {
  cfg.validate();
  tc.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  for (const TrainItem& it : data)
    if (it.label != 0 && it.label != 1) throw std::invalid_argument("train: label must be 0 or 1");

  TrainResult res;
  res.params = init_model(cfg, model_seed);
  AdamState adam = init_adam(cfg);
  Rng shuffle_rng(tc.seed);
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  BatchCache cache;
  size_t step = 0;
  for (size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t start = 0; start < order.size(); start += tc.batch_size) {
      size_t stop = std::min(order.size(), start + tc.batch_size);
      std::vector<const Input*> items;
      std::vector<int> labels;
      items.reserve(stop - start);
      labels.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) {
        items.push_back(&data[order[i]].input);
        labels.push_back(data[order[i]].label);
      }
      forward_batch(res.params, cfg, items, true, cache);
      update_running_stats(res.params, cfg, cache);
      TensorSet grads = backward_batch(res.params, cfg, cache, labels);
      ++step;
      adam_step(res.params, cfg, grads, adam, tc, step);

      for (size_t b = 0; b < items.size(); ++b) {
        const double* lp = cache.logp.data() + b * cfg.n_classes;
        loss_sum += -lp[labels[b]];
        int pred = lp[1] > lp[0] ? 1 : 0;  // tie goes to class 0 (Alert)
        if (pred == labels[b]) ++correct;
      }
    }
    res.history.push_back(EpochStats{loss_sum / static_cast<double>(data.size()),
                                     static_cast<double>(correct) /
                                         static_cast<double>(data.size())});
  }
  return res;
}

}  // namespace ldgcn
