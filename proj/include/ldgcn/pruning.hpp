#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ldgcn/model.hpp"

namespace ldgcn {

struct PruneConfig {
  double channel_ratio = 0.10;  // PR
  double neuron_ratio = 0.30;   // pr

  void validate() const {
    if (!(channel_ratio >= 0.0 && channel_ratio < 1.0))
      throw std::invalid_argument("channel pruning ratio must lie in [0, 1)");
    if (!(neuron_ratio >= 0.0 && neuron_ratio < 1.0))
      throw std::invalid_argument("neuron pruning ratio must lie in [0, 1)");
  }
};

struct PruneReport {
  std::vector<size_t> pruned_channel_indices;
  std::vector<size_t> pruned_neuron_indices;
  size_t pruned_param_count = 0;
  double latency_before_ms = 0.0;  // filled by callers that measure
  double latency_after_ms = 0.0;
};

namespace detail {

inline size_t prune_count(size_t total, double ratio) {
  long c = std::lround(ratio * static_cast<double>(total));
  return std::max<long>(1, c);
}

// Indices of the `count` smallest scores; ties resolved toward lower index.
inline std::vector<size_t> smallest_indices(const std::vector<double>& score, size_t count) {
  std::vector<size_t> order(score.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return score[a] < score[b]; });
  order.resize(std::min(count, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace detail

// L1 channel importance: sum of |w| over the weights that produce the channel
// (pointwise row, depthwise kernel, both biases). The max(1, round(T*PR))
// least-important channels are selected, ascending, lower index on ties.
inline std::vector<size_t> select_prune_channels(const ModelParams& params,
                                                 const ModelConfig& cfg, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw std::invalid_argument("channel pruning ratio must lie in [0, 1)");
  if (ratio == 0.0) return {};
  size_t T = cfg.total_channels();
  size_t BC = cfg.branch_channels();
  std::vector<double> importance(T, 0.0);
  for (size_t ch = 0; ch < T; ++ch) {
    size_t br = ch / BC, oc = ch % BC;
    double sum = 0.0;
    if (cfg.has_pointwise()) {
      const Tensor& w = br == 0 ? params.pw_a_w : params.pw_b_w;
      const Tensor& b = br == 0 ? params.pw_a_b : params.pw_b_b;
      for (size_t ic = 0; ic < cfg.in_channels; ++ic) sum += std::fabs(w(oc, ic));
      sum += std::fabs(b[oc]);
    }
    if (cfg.has_depthwise()) {
      const Tensor& w = br == 0 ? params.dw_a_w : params.dw_b_w;
      const Tensor& b = br == 0 ? params.dw_a_b : params.dw_b_b;
      for (size_t j = 0; j < cfg.dw_kernel(br); ++j) sum += std::fabs(w(oc, j));
      sum += std::fabs(b[oc]);
    }
    importance[ch] = sum;
  }
  return detail::smallest_indices(importance, detail::prune_count(T, ratio));
}

// Median-distance neuron importance: |row L1 - median of all row L1s|,
// ascending; the neurons closest to the median are pruned. Without a hidden
// FC layer there is nothing to select.
inline std::vector<size_t> select_prune_neurons(const ModelParams& params,
                                                const ModelConfig& cfg, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw std::invalid_argument("neuron pruning ratio must lie in [0, 1)");
  if (ratio == 0.0 || !cfg.has_fc1()) return {};
  size_t H = cfg.fc_hidden;
  std::vector<double> importance(H, 0.0);
  for (size_t h = 0; h < H; ++h) {
    double sum = 0.0;
    for (size_t ch = 0; ch < cfg.total_channels(); ++ch) sum += std::fabs(params.fc1_w(h, ch));
    importance[h] = sum;
  }
  std::vector<double> sorted = importance;
  std::sort(sorted.begin(), sorted.end());
  double median = (H % 2 == 1) ? sorted[H / 2] : (sorted[H / 2 - 1] + sorted[H / 2]) / 2.0;
  std::vector<double> distance(H);
  for (size_t h = 0; h < H; ++h) distance[h] = std::fabs(importance[h] - median);
  return detail::smallest_indices(distance, detail::prune_count(H, ratio));
}

// Mask the selected channels/neurons and zero every weight they own; all
// other weights stay bit-identical. The report counts weights that actually
// changed to 0, so re-applying the same selection is a no-op.
inline std::pair<ModelParams, PruneReport> apply_pruning(ModelParams params,
                                                         const ModelConfig& cfg,
                                                         const std::vector<size_t>& channels,
                                                         const std::vector<size_t>& neurons) {
  detail::check_params_shape(params, cfg);
  for (size_t ch : channels)
    if (ch >= cfg.total_channels()) throw std::out_of_range("channel index out of range");
  for (size_t h : neurons)
    if (h >= params.neuron_mask.size()) throw std::out_of_range("neuron index out of range");

  PruneReport report;
  report.pruned_channel_indices = channels;
  report.pruned_neuron_indices = neurons;
  std::sort(report.pruned_channel_indices.begin(), report.pruned_channel_indices.end());
  std::sort(report.pruned_neuron_indices.begin(), report.pruned_neuron_indices.end());

  for (size_t ch : channels) params.channel_mask[ch] = 0;
  for (size_t h : neurons) params.neuron_mask[h] = 0;

  TensorSet freedom = weight_freedom(cfg, params.channel_mask, params.neuron_mask);
  auto pw = detail::tensor_list(static_cast<TensorSet&>(params));
  auto pf = detail::tensor_list(freedom);
  for (size_t i = 0; i < pw.size(); ++i) {
    for (size_t j = 0; j < pw[i]->numel(); ++j) {
      if (pf[i]->data[j] == 0.0 && pw[i]->data[j] != 0.0) {
        pw[i]->data[j] = 0.0;
        ++report.pruned_param_count;
      }
    }
  }
  return {std::move(params), report};
}

// Inference forward that skips all work for masked channels/neurons; the
// optional counter tallies the FLOPs actually executed. Bit-identical to the
// dense forward on the same parameters.
inline std::array<double, 2> sparse_forward(const ModelParams& params, const ModelConfig& cfg,
                                            const Input& input, BatchCache& cache,
                                            FlopCounter* fc = nullptr) {
  std::vector<const Input*> one{&input};
  forward_batch(params, cfg, one, false, cache, fc);
  return {cache.logp[0], cache.logp[1]};
}

inline std::array<double, 2> sparse_forward(const ModelParams& params, const ModelConfig& cfg,
                                            const Input& input, FlopCounter* fc = nullptr) {
  BatchCache cache;
  return sparse_forward(params, cfg, input, cache, fc);
}

}  // namespace ldgcn
