#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldgcn/model.hpp"

#if defined(__linux__)
#include <sched.h>
#endif

namespace ldgcn {

// Binary-classification quality with Drowsiness (label 1) as the positive
// class. Ratios with a zero denominator are reported as 0 and flagged.
struct PerformanceMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // some ratio had an empty denominator
  size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline PerformanceMetrics compute_metrics(const std::vector<int>& predicted,
                                          const std::vector<int>& actual) {
  if (predicted.size() != actual.size())
    throw std::invalid_argument("prediction and ground-truth counts differ");
  if (predicted.empty()) throw std::invalid_argument("cannot score zero predictions");
  PerformanceMetrics m;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if ((predicted[i] != 0 && predicted[i] != 1) || (actual[i] != 0 && actual[i] != 1))
      throw std::invalid_argument("labels must be 0 or 1");
    if (predicted[i] == 1)
      ++(actual[i] == 1 ? m.tp : m.fp);
    else
      ++(actual[i] == 1 ? m.fn : m.tn);
  }
  auto ratio = [&m](size_t num, size_t den) {
    if (den == 0) {
      m.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(m.tp + m.tn, predicted.size());
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  if (m.precision + m.recall > 0.0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else
    m.degenerate = true;
  return m;
}

// Floating-point operations of one single-item inference pass, mirroring the
// skip-masked-work forward pass operation for operation. Kept analytic so
// resource reports do not need to run the network.
inline uint64_t network_flops(const ModelConfig& cfg, const std::vector<uint8_t>& channel_mask,
                              const std::vector<uint8_t>& neuron_mask) {
  cfg.validate();
  size_t T = cfg.total_channels();
  size_t BC = cfg.branch_channels();
  size_t P = cfg.partial_channels();
  size_t n = cfg.input_len;
  if (channel_mask.size() != T) throw std::invalid_argument("channel_mask length mismatch");
  if (neuron_mask.size() != (cfg.has_fc1() ? cfg.fc_hidden : 0))
    throw std::invalid_argument("neuron_mask length mismatch");

  uint64_t flops = 0;
  size_t live_channels = 0;
  for (size_t ch = 0; ch < T; ++ch) {
    if (!channel_mask[ch]) continue;
    ++live_channels;
    size_t br = ch / BC;
    if (cfg.has_pointwise()) flops += n * (2 * cfg.in_channels + 1);
    if (cfg.has_depthwise()) flops += n * (2 * cfg.dw_kernel(br) + 1);
    if (ch < P) flops += n * 7;
    flops += 3 + 5 * n + 1;  // batch-norm prep, normalize+pool, pool divide
  }
  size_t live_head_in = live_channels;
  if (cfg.has_fc1()) {
    size_t live_neurons = 0;
    for (uint8_t b : neuron_mask) live_neurons += b != 0;
    flops += live_neurons * (2 * live_channels + 1);
    live_head_in = live_neurons;
  }
  flops += cfg.n_classes * (2 * live_head_in + 1);
  flops += 10;  // log-softmax
  return flops;
}

// Node aggregation cost of one graph channel: every in-band node pair feeds
// two multiply-adds (once per endpoint) and each node pays one divide.
inline uint64_t aggregation_flops(size_t n, size_t band_k) {
  if (n < 2 || band_k < 1 || band_k > n - 1)
    throw std::invalid_argument("aggregation_flops needs n >= 2 and 1 <= band_k <= n-1");
  uint64_t pairs = static_cast<uint64_t>(n) * band_k - static_cast<uint64_t>(band_k) * (band_k + 1) / 2;
  return 4 * pairs + n;
}

// Whole-pipeline inference cost in MFLOPs: graph aggregation over the input
// channels plus the network pass, under the current pruning masks.
inline double count_mflops(const ModelConfig& cfg, const std::vector<uint8_t>& channel_mask,
                           const std::vector<uint8_t>& neuron_mask, size_t band_k) {
  uint64_t agg = static_cast<uint64_t>(cfg.in_channels) * aggregation_flops(cfg.input_len, band_k);
  return static_cast<double>(agg + network_flops(cfg, channel_mask, neuron_mask)) / 1e6;
}

struct LatencyStats {
  double median_ms = 0.0;
  double p95_ms = 0.0;
  double mean_ms = 0.0;
  size_t reps = 0;
};

namespace detail {

// Best-effort: pin the thread to its current core for the duration of a
// timing run so the scheduler does not migrate it mid-measurement.
class ScopedAffinity {
 public:
  ScopedAffinity() {
#if defined(__linux__)
    if (sched_getaffinity(0, sizeof(saved_), &saved_) == 0) {
      int cpu = sched_getcpu();
      if (cpu >= 0) {
        cpu_set_t one;
        CPU_ZERO(&one);
        CPU_SET(cpu, &one);
        restore_ = sched_setaffinity(0, sizeof(one), &one) == 0;
      }
    }
#endif
  }
  ~ScopedAffinity() {
#if defined(__linux__)
    if (restore_) sched_setaffinity(0, sizeof(saved_), &saved_);
#endif
  }

 private:
#if defined(__linux__)
  cpu_set_t saved_{};
#endif
  bool restore_ = false;
};

inline LatencyStats summarize_ms(std::vector<double>& samples) {
  std::sort(samples.begin(), samples.end());
  LatencyStats s;
  s.reps = samples.size();
  size_t r = samples.size();
  s.median_ms = r % 2 == 1 ? samples[r / 2] : 0.5 * (samples[r / 2 - 1] + samples[r / 2]);
  size_t p95 = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(r)));
  s.p95_ms = samples[std::min(r - 1, p95 - 1)];
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean_ms = sum / static_cast<double>(r);
  return s;
}

}  // namespace detail

// Time a callable: warmup runs are discarded, then reps runs are measured
// individually on a steady clock. Needs enough repetitions for the order
// statistics to mean something.
template <typename F>
LatencyStats measure_latency(F&& body, size_t reps, size_t warmup = 50) {
  if (reps < 100) throw std::invalid_argument("latency measurement needs at least 100 reps");
  detail::ScopedAffinity pin;
  for (size_t i = 0; i < warmup; ++i) body();
  std::vector<double> ms(reps);
  for (size_t i = 0; i < reps; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    body();
    auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  return detail::summarize_ms(ms);
}

// Single-item inference latency, cycling through the given inputs with a
// reused activation buffer so allocation does not dominate the numbers.
inline LatencyStats measure_model_latency(const ModelParams& params, const ModelConfig& cfg,
                                          const std::vector<Input>& inputs, size_t reps,
                                          size_t warmup = 50) {
  if (inputs.empty()) throw std::invalid_argument("latency measurement needs at least one input");
  BatchCache cache;
  std::vector<const Input*> one(1);
  size_t next = 0;
  return measure_latency(
      [&] {
        one[0] = &inputs[next];
        next = (next + 1) % inputs.size();
        forward_batch(params, cfg, one, false, cache);
      },
      reps, warmup);
}

// On-disk model size in bytes; the checkpoint is the deployment unit.
inline uint64_t footprint_bytes(const std::string& path) {
  std::error_code ec;
  uint64_t size = std::filesystem::file_size(path, ec);
  if (ec) throw std::runtime_error("cannot stat model file: " + path);
  return size;
}

}  // namespace ldgcn
