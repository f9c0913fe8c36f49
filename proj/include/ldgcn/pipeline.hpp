#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ldgcn/data.hpp"
#include "ldgcn/graph.hpp"
#include "ldgcn/model.hpp"
#include "ldgcn/rng.hpp"
#include "ldgcn/signal.hpp"
#include "ldgcn/train.hpp"

namespace ldgcn {

// Everything between a raw window and the network input: wavelet projection,
// band split, BDST, graph construction, and the two sampled views.
struct PipelineConfig {
  WaveletConfig wavelet;       // db4, 3 levels by default
  size_t band_k = 8;           // graph connectivity coefficient K
  double view_global = 0.8;    // retained ratio R of the global view
  double view_local = 0.3;     // retained ratio r of the local view
  uint64_t seed_augment = 0;   // base seed for the per-window view sampling

  void validate() const {
    if (band_k < 1) throw std::invalid_argument("band_k must be >= 1");
    if (!(view_global >= 0.5 && view_global <= 1.0))
      throw std::invalid_argument("view_global must be in [0.5, 1]");
    if (!(view_local > 0.0 && view_local <= 0.5))
      throw std::invalid_argument("view_local must be in (0, 0.5]");
  }
};

// One window to one 3-channel network input. The augmentation seed is mixed
// with the window index so every window draws distinct, reproducible views.
inline Input prepare_input(const EegWindow& window, const PipelineConfig& pcfg,
                           uint64_t window_index) {
  pcfg.validate();
  FreqSignal freq = to_frequency(window, pcfg.wavelet);
  BandSet bands = decompose_bands(freq, window.sample_rate);
  BdstVector bdst = compute_bdst(bands);
  AdjGraph graph = build_bdsag(freq, bdst, pcfg.band_k);
  AugmentedGraph aug =
      augment(graph, pcfg.view_global, pcfg.view_local, mix_seed(pcfg.seed_augment, window_index));
  auto agg = aggregate_nodes(aug);
  return {std::move(agg[0]), std::move(agg[1]), std::move(agg[2])};
}

// Prepare a list of dataset windows (all of them when indices is empty) as
// labeled training items. Unlabeled windows are rejected: silently training
// on them would poison the loss.
inline std::vector<TrainItem> build_items(const Dataset& ds, const PipelineConfig& pcfg,
                                          const std::vector<size_t>& indices = {}) {
  if (ds.n_channels() != 1)
    throw std::invalid_argument("pipeline expects single-channel windows; select a channel first");
  std::vector<size_t> all;
  const std::vector<size_t>* use = &indices;
  if (indices.empty()) {
    all.resize(ds.windows.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    use = &all;
  }
  std::vector<TrainItem> items;
  items.reserve(use->size());
  for (size_t idx : *use) {
    if (idx >= ds.windows.size()) throw std::out_of_range("window index out of range");
    const EegWindow& w = ds.windows[idx];
    if (w.label == Label::Unlabeled)
      throw std::invalid_argument("window " + std::to_string(idx) + " is unlabeled");
    items.push_back({prepare_input(w, pcfg, idx), w.label == Label::Drowsiness ? 1 : 0});
  }
  return items;
}

struct Prediction {
  Label label = Label::Alert;
  std::array<double, 2> p{};  // class probabilities, [Alert, Drowsiness]
};

// End-to-end inference on one window with the fixed view seed (index 0).
// Ties resolve to Alert: waking a non-drowsy driver is the cheaper mistake.
inline Prediction predict(const ModelParams& params, const ModelConfig& cfg,
                          const EegWindow& window, const PipelineConfig& pcfg) {
  Input in = prepare_input(window, pcfg, 0);
  auto [logp, cache] = forward(params, cfg, in, false);
  Prediction out;
  out.p = {std::exp(logp[0]), std::exp(logp[1])};
  out.label = logp[1] > logp[0] ? Label::Drowsiness : Label::Alert;
  return out;
}

}  // namespace ldgcn
