#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldgcn/io_util.hpp"
#include "ldgcn/rng.hpp"
#include "ldgcn/signal.hpp"

namespace ldgcn {

// Symmetric banded adjacency graph over the frequency signal. Only the upper
// off-diagonal band is stored (symmetry and the unit diagonal are structural),
// which keeps construction and aggregation O(n*K) instead of O(n^2). The
// `alive` flags track nodes dropped by view sampling: a dropped node has zero
// features, a zero diagonal and no incident edges.
struct AdjGraph {
  size_t n = 0;
  uint32_t band_k = 0;  // connectivity coefficient K as constructed (0 = dense)
  std::vector<double> node_features;  // length n
  std::vector<uint8_t> alive;         // length n, 1 = live
  std::vector<double> band;           // n * width, [r*width + d-1] = weight(r, r+d)

  size_t width() const { return band_k == 0 ? (n > 0 ? n - 1 : 0) : band_k; }

  double weight(size_t r, size_t c) const {
    if (r >= n || c >= n) throw std::out_of_range("AdjGraph::weight index out of range");
    if (r == c) return alive[r] ? 1.0 : 0.0;
    size_t lo = std::min(r, c), hi = std::max(r, c);
    size_t d = hi - lo;
    if (d > width()) return 0.0;
    return band[lo * width() + d - 1];
  }
};

// Build the banded drowsiness adjacency graph: for c in (r, r+K],
// weight(r, c) = (x_r - BDST_c) / |r - c|, mirrored by symmetry, diagonal 1.
inline AdjGraph build_bdsag(const FreqSignal& freq, const BdstVector& bdst, size_t K) {
  size_t n = freq.values.size();
  if (n < 2) throw std::invalid_argument("build_bdsag needs at least 2 nodes");
  if (bdst.values.size() != n)
    throw std::invalid_argument("build_bdsag: freq and bdst length mismatch");
  if (K < 1 || K > n - 1) throw std::invalid_argument("build_bdsag: K out of range [1, n-1]");

  AdjGraph g;
  g.n = n;
  g.band_k = static_cast<uint32_t>(K);
  g.node_features = freq.values;
  g.alive.assign(n, 1);
  g.band.assign(n * K, 0.0);
  for (size_t r = 0; r < n; ++r) {
    size_t cmax = std::min(r + K, n - 1);
    for (size_t c = r + 1; c <= cmax; ++c) {
      g.band[r * K + (c - r - 1)] =
          (freq.values[r] - bdst.values[c]) / static_cast<double>(c - r);
    }
  }
  return g;
}

// Retain ceil(ratio*n) uniformly sampled nodes; drop the rest (zero features,
// zero diagonal, no incident edges). Shape stays n x n so downstream tensors
// keep a fixed size. Deterministic in (graph, ratio, seed).
inline AdjGraph sample_view(const AdjGraph& graph, double ratio, uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("sample_view: ratio out of (0,1]");
  size_t n = graph.n;
  size_t m = static_cast<size_t>(std::ceil(ratio * static_cast<double>(n)));
  if (m >= n) return graph;  // everything retained

  Rng rng(seed);
  std::vector<size_t> kept_idx = rng.sample_indices(n, m);
  std::vector<uint8_t> kept(n, 0);
  for (size_t i : kept_idx) kept[i] = 1;

  AdjGraph out;
  out.n = n;
  out.band_k = graph.band_k;
  out.node_features.assign(n, 0.0);
  out.alive.assign(n, 0);
  size_t w = graph.width();
  out.band.assign(n * w, 0.0);
  for (size_t i = 0; i < n; ++i) {
    if (!kept[i] || !graph.alive[i]) continue;
    out.alive[i] = 1;
    out.node_features[i] = graph.node_features[i];
  }
  for (size_t r = 0; r < n; ++r) {
    if (!out.alive[r]) continue;
    for (size_t d = 1; d <= w && r + d < n; ++d) {
      if (out.alive[r + d]) out.band[r * w + d - 1] = graph.band[r * w + d - 1];
    }
  }
  return out;
}

// Three stacked channel views of one graph: [original, global, local].
struct AugmentedGraph {
  std::array<AdjGraph, 3> channels;
};

// Channel 0 is the untouched graph; channels 1 and 2 are independently
// sampled global (ratio R) and local (ratio r) views with tanh applied to the
// retained node features. Weights are never changed by the nonlinearity.
inline AugmentedGraph augment(const AdjGraph& graph, double R, double r, uint64_t seed) {
  if (!(R >= 0.5 && R <= 1.0)) throw std::invalid_argument("augment: R out of [0.5, 1]");
  if (!(r > 0.0 && r <= 0.5)) throw std::invalid_argument("augment: r out of (0, 0.5]");
  auto nonlinear = [](AdjGraph g) {
    for (double& v : g.node_features) v = std::tanh(v);
    return g;
  };
  AugmentedGraph out;
  out.channels[0] = graph;
  out.channels[1] = nonlinear(sample_view(graph, R, seed));
  out.channels[2] = nonlinear(sample_view(graph, r, seed + 1));
  return out;
}

// Per-channel neighborhood mean: out[k][i] = sum_j w[i][j]*x[j] / d[i], where
// d[i] counts the structural entries of row i (self-loop plus live in-band
// neighbors). Dropped rows produce 0. Reduces each n x n channel to length n.
inline std::array<std::vector<double>, 3> aggregate_nodes(const AugmentedGraph& aug) {
  std::array<std::vector<double>, 3> out;
  for (size_t k = 0; k < 3; ++k) {
    const AdjGraph& g = aug.channels[k];
    size_t n = g.n;
    size_t w = g.width();
    out[k].assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      if (!g.alive[i]) continue;
      double acc = g.node_features[i];  // self-loop weight 1
      size_t degree = 1;
      for (size_t d = 1; d <= w; ++d) {
        if (i + d < n && g.alive[i + d]) {
          acc += g.band[i * w + d - 1] * g.node_features[i + d];
          ++degree;
        }
        if (i >= d && g.alive[i - d]) {
          acc += g.band[(i - d) * w + d - 1] * g.node_features[i - d];
          ++degree;
        }
      }
      out[k][i] = acc / static_cast<double>(degree);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: magic "BDSG", u32 n, u32 K, n*n float32 weights row-major,
// n float32 node features. Little-endian throughout.

inline std::vector<uint8_t> graph_to_bytes(const AdjGraph& g) {
  std::vector<uint8_t> out;
  out.reserve(12 + 4 * (g.n * g.n + g.n));
  put_bytes(out, "BDSG", 4);
  put_u32(out, static_cast<uint32_t>(g.n));
  put_u32(out, g.band_k);
  for (size_t r = 0; r < g.n; ++r)
    for (size_t c = 0; c < g.n; ++c) put_f32(out, static_cast<float>(g.weight(r, c)));
  for (size_t i = 0; i < g.n; ++i) put_f32(out, static_cast<float>(g.node_features[i]));
  return out;
}

inline void save_graph(const std::string& path, const AdjGraph& g) {
  write_file_atomic(path, graph_to_bytes(g));
}

inline AdjGraph graph_from_bytes(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  if (r.str(4) != "BDSG") throw std::runtime_error("bad graph file: wrong magic");
  uint32_t n = r.u32();
  uint32_t K = r.u32();
  if (n < 2) throw std::runtime_error("bad graph file: n < 2");
  if (K > n - 1) throw std::runtime_error("bad graph file: K out of range");

  std::vector<float> dense(static_cast<size_t>(n) * n);
  for (float& v : dense) v = r.f32();
  AdjGraph g;
  g.n = n;
  g.band_k = K;
  g.node_features.resize(n);
  for (size_t i = 0; i < n; ++i) g.node_features[i] = r.f32();
  if (r.remaining() != 0) throw std::runtime_error("bad graph file: trailing bytes");

  size_t w = g.width();
  g.alive.assign(n, 0);
  g.band.assign(static_cast<size_t>(n) * w, 0.0);
  for (size_t i = 0; i < n; ++i) {
    float d = dense[i * n + i];
    if (d == 1.0f)
      g.alive[i] = 1;
    else if (d != 0.0f)
      throw std::runtime_error("bad graph file: diagonal entry not 0 or 1");
  }
  for (size_t r2 = 0; r2 < n; ++r2) {
    for (size_t c = r2 + 1; c < n; ++c) {
      float v = dense[r2 * n + c];
      if (dense[c * n + r2] != v) throw std::runtime_error("bad graph file: asymmetric weights");
      if (c - r2 > w) {
        if (v != 0.0f) throw std::runtime_error("bad graph file: entry outside band");
      } else {
        g.band[r2 * w + (c - r2 - 1)] = v;
      }
    }
  }
  return g;
}

inline AdjGraph load_graph(const std::string& path) {
  return graph_from_bytes(read_file_bytes(path));
}

}  // namespace ldgcn
