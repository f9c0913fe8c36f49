#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ldgcn/rng.hpp"

namespace ldgcn {

// Architecture switches for the ablation matrix. `standard` is the full
// dual-branch network; the rest each remove one ingredient.
enum class Variant : uint32_t {
  standard = 0,
  single_branch = 1,   // one pointwise+depthwise branch instead of two
  single_fc = 2,       // classifier head only, no hidden FC layer
  no_pointwise = 3,    // branches convolve the raw input channels
  no_depthwise = 4,    // branches stop after the pointwise mix
  no_partialconv = 5,  // fusion stage is a plain pass-through
};

inline Variant variant_from_string(const std::string& s) {
  if (s == "standard") return Variant::standard;
  if (s == "single_branch") return Variant::single_branch;
  if (s == "single_fc") return Variant::single_fc;
  if (s == "no_pointwise") return Variant::no_pointwise;
  if (s == "no_depthwise") return Variant::no_depthwise;
  if (s == "no_partialconv") return Variant::no_partialconv;
  throw std::invalid_argument("unknown variant: " + s);
}

inline std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::standard: return "standard";
    case Variant::single_branch: return "single_branch";
    case Variant::single_fc: return "single_fc";
    case Variant::no_pointwise: return "no_pointwise";
    case Variant::no_depthwise: return "no_depthwise";
    case Variant::no_partialconv: return "no_partialconv";
  }
  throw std::logic_error("bad variant enum");
}

struct ModelConfig {
  size_t in_channels = 3;
  size_t conv_channels = 8;  // C, per-branch output channels
  size_t dw_kernel_a = 3;
  size_t dw_kernel_b = 5;
  double partial_ratio = 0.5;
  size_t fc_hidden = 256;  // H
  size_t n_classes = 2;
  size_t input_len = 384;  // n
  Variant variant = Variant::standard;

  size_t n_branches() const { return variant == Variant::single_branch ? 1 : 2; }
  bool has_pointwise() const { return variant != Variant::no_pointwise; }
  bool has_depthwise() const { return variant != Variant::no_depthwise; }
  bool has_partialconv() const { return variant != Variant::no_partialconv; }
  bool has_fc1() const { return variant != Variant::single_fc; }
  size_t branch_channels() const { return has_pointwise() ? conv_channels : in_channels; }
  size_t total_channels() const { return n_branches() * branch_channels(); }
  size_t partial_channels() const {
    if (!has_partialconv()) return 0;
    return static_cast<size_t>(
        std::lround(partial_ratio * static_cast<double>(total_channels())));
  }
  size_t fc2_in() const { return has_fc1() ? fc_hidden : total_channels(); }
  size_t dw_kernel(size_t branch) const { return branch == 0 ? dw_kernel_a : dw_kernel_b; }

  void validate() const {
    if (in_channels < 1) throw std::invalid_argument("in_channels must be >= 1");
    if (conv_channels < 2 || conv_channels % 2 != 0)
      throw std::invalid_argument("conv_channels must be even and >= 2");
    if (dw_kernel_a < 1 || dw_kernel_a % 2 == 0 || dw_kernel_b < 1 || dw_kernel_b % 2 == 0)
      throw std::invalid_argument("depthwise kernels must be odd");
    if (!(partial_ratio >= 0.0 && partial_ratio <= 1.0))
      throw std::invalid_argument("partial_ratio must be in [0, 1]");
    if (fc_hidden < 8) throw std::invalid_argument("fc_hidden must be >= 8");
    if (n_classes != 2) throw std::invalid_argument("n_classes must be 2");
    if (input_len < 2) throw std::invalid_argument("input_len must be >= 2");
  }
};

// Dense row-major tensor of rank 1 or 2. Default-constructed means "not part
// of this architecture variant".
struct Tensor {
  std::vector<size_t> dims;
  std::vector<double> data;

  static Tensor zeros(std::vector<size_t> d) {
    Tensor t;
    size_t count = d.empty() ? 0 : 1;
    for (size_t x : d) count *= x;
    t.dims = std::move(d);
    t.data.assign(count, 0.0);
    return t;
  }
  size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  size_t rows() const { return dims.empty() ? 0 : dims[0]; }
  size_t cols() const { return dims.size() < 2 ? 1 : dims[1]; }
  double operator()(size_t i, size_t j) const { return data[i * cols() + j]; }
  double& operator()(size_t i, size_t j) { return data[i * cols() + j]; }
  double operator[](size_t i) const { return data[i]; }
  double& operator[](size_t i) { return data[i]; }
};

// Every tensor the network owns, in one fixed-order bundle. The same shape
// is reused for gradients and Adam moments so iteration order (and therefore
// initialization, updates, and serialization) is identical everywhere.
struct TensorSet {
  Tensor pw_a_w, pw_a_b;  // pointwise branch a: (C x in), (C)
  Tensor pw_b_w, pw_b_b;
  Tensor dw_a_w, dw_a_b;  // depthwise branch a: (BC x k_a), (BC)
  Tensor dw_b_w, dw_b_b;
  Tensor fuse_w, fuse_b;  // partial fusion: (P x 3), (P)
  Tensor bn_gamma, bn_beta, bn_rmean, bn_rvar;  // (T) each
  Tensor fc1_w, fc1_b;  // (H x T), (H)
  Tensor fc2_w, fc2_b;  // (classes x fc2_in), (classes)

  // f(name, tensor, trainable); fixed order, running stats are not trainable.
  template <typename Self, typename F>
  static void visit(Self& s, F&& f) {
    f("pw_a_w", s.pw_a_w, true);
    f("pw_a_b", s.pw_a_b, true);
    f("pw_b_w", s.pw_b_w, true);
    f("pw_b_b", s.pw_b_b, true);
    f("dw_a_w", s.dw_a_w, true);
    f("dw_a_b", s.dw_a_b, true);
    f("dw_b_w", s.dw_b_w, true);
    f("dw_b_b", s.dw_b_b, true);
    f("fuse_w", s.fuse_w, true);
    f("fuse_b", s.fuse_b, true);
    f("bn_gamma", s.bn_gamma, true);
    f("bn_beta", s.bn_beta, true);
    f("bn_rmean", s.bn_rmean, false);
    f("bn_rvar", s.bn_rvar, false);
    f("fc1_w", s.fc1_w, true);
    f("fc1_b", s.fc1_b, true);
    f("fc2_w", s.fc2_w, true);
    f("fc2_b", s.fc2_b, true);
  }
  template <typename F>
  void for_each(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, std::forward<F>(f));
  }
};

inline TensorSet make_zero_set(const ModelConfig& cfg) {
  TensorSet s;
  size_t BC = cfg.branch_channels();
  size_t T = cfg.total_channels();
  size_t P = cfg.partial_channels();
  if (cfg.has_pointwise()) {
    s.pw_a_w = Tensor::zeros({cfg.conv_channels, cfg.in_channels});
    s.pw_a_b = Tensor::zeros({cfg.conv_channels});
    if (cfg.n_branches() == 2) {
      s.pw_b_w = Tensor::zeros({cfg.conv_channels, cfg.in_channels});
      s.pw_b_b = Tensor::zeros({cfg.conv_channels});
    }
  }
  if (cfg.has_depthwise()) {
    s.dw_a_w = Tensor::zeros({BC, cfg.dw_kernel_a});
    s.dw_a_b = Tensor::zeros({BC});
    if (cfg.n_branches() == 2) {
      s.dw_b_w = Tensor::zeros({BC, cfg.dw_kernel_b});
      s.dw_b_b = Tensor::zeros({BC});
    }
  }
  if (P > 0) {
    s.fuse_w = Tensor::zeros({P, 3});
    s.fuse_b = Tensor::zeros({P});
  }
  s.bn_gamma = Tensor::zeros({T});
  s.bn_beta = Tensor::zeros({T});
  s.bn_rmean = Tensor::zeros({T});
  s.bn_rvar = Tensor::zeros({T});
  if (cfg.has_fc1()) {
    s.fc1_w = Tensor::zeros({cfg.fc_hidden, T});
    s.fc1_b = Tensor::zeros({cfg.fc_hidden});
  }
  s.fc2_w = Tensor::zeros({cfg.n_classes, cfg.fc2_in()});
  s.fc2_b = Tensor::zeros({cfg.n_classes});
  return s;
}

struct ModelParams : TensorSet {
  std::vector<uint8_t> channel_mask;  // length T, 1 = channel live
  std::vector<uint8_t> neuron_mask;   // length H (empty without FC1)
};

inline double init_fan_in(const ModelConfig& cfg, std::string_view name) {
  if (name.substr(0, 2) == "pw") return static_cast<double>(cfg.in_channels);
  if (name == "dw_a_w" || name == "dw_a_b") return static_cast<double>(cfg.dw_kernel_a);
  if (name == "dw_b_w" || name == "dw_b_b") return static_cast<double>(cfg.dw_kernel_b);
  if (name.substr(0, 4) == "fuse") return 3.0;
  if (name.substr(0, 3) == "fc1") return static_cast<double>(cfg.total_channels());
  if (name.substr(0, 3) == "fc2") return static_cast<double>(cfg.fc2_in());
  throw std::logic_error("no fan-in rule for tensor " + std::string(name));
}

inline ModelParams init_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams p;
  static_cast<TensorSet&>(p) = make_zero_set(cfg);
  Rng rng(seed);
  p.for_each([&](std::string_view name, Tensor& t, bool) {
    if (t.empty() || name.substr(0, 3) == "bn_") return;
    double s = std::sqrt(1.0 / init_fan_in(cfg, name));
    for (double& v : t.data) v = rng.next_uniform(-s, s);
  });
  for (double& v : p.bn_gamma.data) v = 1.0;
  for (double& v : p.bn_rvar.data) v = 1.0;
  p.channel_mask.assign(cfg.total_channels(), 1);
  p.neuron_mask.assign(cfg.has_fc1() ? cfg.fc_hidden : 0, 1);
  return p;
}

// One aggregated input: in_channels rows of length input_len.
using Input = std::vector<std::vector<double>>;

inline constexpr double kBnEps = 1e-5;

// Tally of floating-point work actually executed, under the documented
// convention: multiply-add = 2, every other add/mul/div/sqrt = 1, exp/log = 1,
// comparisons and ReLU = 0.
struct FlopCounter {
  uint64_t flops = 0;
};

// All intermediate activations of one batched forward pass, laid out flat as
// [item][channel][position]. Kept for the hand-derived backward pass.
struct BatchCache {
  bool training = false;
  size_t batch = 0;
  std::vector<double> input;            // B * IC * n
  std::vector<double> u, v, f, r, xhat;  // B * T * n each
  std::vector<double> bn_mu, bn_var;     // T, batch statistics (training mode)
  std::vector<double> pooled;            // B * T
  std::vector<double> z1, a1;            // B * H
  std::vector<double> logits, logp;      // B * n_classes
};

namespace detail {

inline void check_params_shape(const ModelParams& p, const ModelConfig& cfg) {
  if (p.channel_mask.size() != cfg.total_channels())
    throw std::invalid_argument("channel_mask length does not match config");
  size_t want_neurons = cfg.has_fc1() ? cfg.fc_hidden : 0;
  if (p.neuron_mask.size() != want_neurons)
    throw std::invalid_argument("neuron_mask length does not match config");
  if (p.bn_gamma.numel() != cfg.total_channels())
    throw std::invalid_argument("parameter shapes do not match config");
}

inline void log_softmax2(const double* l, double* out, FlopCounter* fc) {
  double m = std::max(l[0], l[1]);
  double s = std::exp(l[0] - m) + std::exp(l[1] - m);
  double ls = std::log(s);
  out[0] = l[0] - m - ls;
  out[1] = l[1] - m - ls;
  if (fc) fc->flops += 10;  // 2 sub+exp pairs (4), 1 add, 1 log, 4 subs
}

// Pointers to the tensors of a set in visitation order, for lockstep
// iteration over several sets (params, gradients, moments, freedom masks).
template <typename TS>
inline std::vector<Tensor*> tensor_list(TS& s, std::vector<bool>* trainable = nullptr) {
  std::vector<Tensor*> out;
  s.for_each([&](std::string_view, Tensor& t, bool tr) {
    out.push_back(&t);
    if (trainable) trainable->push_back(tr);
  });
  return out;
}

}  // namespace detail

// Forward pass over a batch. Training mode normalizes with batch statistics
// (mean/variance per channel over every item and position) and records them
// in the cache; inference mode uses the running statistics. Masked channels
// and neurons are skipped outright and contribute exact zeros. The optional
// counter tallies executed FLOPs (inference path).
inline void forward_batch(const ModelParams& params, const ModelConfig& cfg,
                          const std::vector<const Input*>& items, bool training,
                          BatchCache& cache, FlopCounter* fc = nullptr) {
  cfg.validate();
  detail::check_params_shape(params, cfg);
  size_t B = items.size();
  if (B == 0) throw std::invalid_argument("forward_batch: empty batch");
  size_t IC = cfg.in_channels, n = cfg.input_len;
  size_t nb = cfg.n_branches(), BC = cfg.branch_channels(), T = cfg.total_channels();
  size_t P = cfg.partial_channels(), H = cfg.has_fc1() ? cfg.fc_hidden : 0;

  for (const Input* it : items) {
    if (it->size() != IC) throw std::invalid_argument("input channel count mismatch");
    for (const auto& row : *it)
      if (row.size() != n) throw std::invalid_argument("input length mismatch");
  }

  cache.training = training;
  cache.batch = B;
  cache.input.assign(B * IC * n, 0.0);
  cache.u.assign(B * T * n, 0.0);
  cache.v.assign(B * T * n, 0.0);
  cache.f.assign(B * T * n, 0.0);
  cache.r.assign(B * T * n, 0.0);
  cache.xhat.assign(B * T * n, 0.0);
  cache.bn_mu.assign(T, 0.0);
  cache.bn_var.assign(T, 0.0);
  cache.pooled.assign(B * T, 0.0);
  cache.z1.assign(B * H, 0.0);
  cache.a1.assign(B * H, 0.0);
  cache.logits.assign(B * cfg.n_classes, 0.0);
  cache.logp.assign(B * cfg.n_classes, 0.0);

  for (size_t b = 0; b < B; ++b)
    for (size_t ic = 0; ic < IC; ++ic)
      std::copy((*items[b])[ic].begin(), (*items[b])[ic].end(),
                cache.input.begin() + (b * IC + ic) * n);

  auto live = [&](size_t ch) { return params.channel_mask[ch] != 0; };

  // Branch stage: pointwise channel mix, then per-channel depthwise conv.
  std::vector<double> pad;
  for (size_t b = 0; b < B; ++b) {
    const double* in = cache.input.data() + b * IC * n;
    for (size_t br = 0; br < nb; ++br) {
      const Tensor& pww = br == 0 ? params.pw_a_w : params.pw_b_w;
      const Tensor& pwb = br == 0 ? params.pw_a_b : params.pw_b_b;
      const Tensor& dww = br == 0 ? params.dw_a_w : params.dw_b_w;
      const Tensor& dwb = br == 0 ? params.dw_a_b : params.dw_b_b;
      size_t k = cfg.dw_kernel(br);
      for (size_t oc = 0; oc < BC; ++oc) {
        size_t ch = br * BC + oc;
        if (!live(ch)) continue;
        double* u = cache.u.data() + (b * T + ch) * n;
        if (cfg.has_pointwise()) {
          for (size_t t = 0; t < n; ++t) {
            double acc = 0.0;
            for (size_t ic = 0; ic < IC; ++ic) acc += pww(oc, ic) * in[ic * n + t];
            u[t] = acc + pwb[oc];
            if (fc) fc->flops += 2 * IC + 1;
          }
        } else {
          std::copy(in + oc * n, in + (oc + 1) * n, u);
        }
        double* v = cache.v.data() + (b * T + ch) * n;
        if (cfg.has_depthwise()) {
          size_t h = k / 2;
          pad.assign(n + 2 * h, 0.0);
          std::copy(u, u + n, pad.begin() + h);
          for (size_t t = 0; t < n; ++t) {
            double acc = 0.0;
            for (size_t j = 0; j < k; ++j) acc += dww(oc, j) * pad[t + j];
            v[t] = acc + dwb[oc];
            if (fc) fc->flops += 2 * k + 1;
          }
        } else {
          std::copy(u, u + n, v);
        }
      }
    }
  }

  // Fusion: convolve the first P channels (kernel 3), identity on the rest.
  for (size_t b = 0; b < B; ++b) {
    for (size_t ch = 0; ch < T; ++ch) {
      if (!live(ch)) continue;
      const double* v = cache.v.data() + (b * T + ch) * n;
      double* f_out = cache.f.data() + (b * T + ch) * n;
      if (ch < P) {
        pad.assign(n + 2, 0.0);
        std::copy(v, v + n, pad.begin() + 1);
        for (size_t t = 0; t < n; ++t) {
          double acc = 0.0;
          for (size_t j = 0; j < 3; ++j) acc += params.fuse_w(ch, j) * pad[t + j];
          f_out[t] = acc + params.fuse_b[ch];
          if (fc) fc->flops += 7;
        }
      } else {
        std::copy(v, v + n, f_out);
      }
    }
  }

  // ReLU (costs no FLOPs under the convention).
  for (size_t b = 0; b < B; ++b)
    for (size_t ch = 0; ch < T; ++ch) {
      if (!live(ch)) continue;
      const double* f_in = cache.f.data() + (b * T + ch) * n;
      double* r = cache.r.data() + (b * T + ch) * n;
      for (size_t t = 0; t < n; ++t) r[t] = f_in[t] > 0.0 ? f_in[t] : 0.0;
    }

  // BatchNorm, then global average pooling per channel.
  size_t M = B * n;
  for (size_t ch = 0; ch < T; ++ch) {
    if (!live(ch)) continue;  // zeros stay zeros; stats recorded as 0
    double mu, var;
    if (training) {
      double sum = 0.0;
      for (size_t b = 0; b < B; ++b) {
        const double* r = cache.r.data() + (b * T + ch) * n;
        for (size_t t = 0; t < n; ++t) sum += r[t];
      }
      mu = sum / static_cast<double>(M);
      double sq = 0.0;
      for (size_t b = 0; b < B; ++b) {
        const double* r = cache.r.data() + (b * T + ch) * n;
        for (size_t t = 0; t < n; ++t) {
          double d = r[t] - mu;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(M);
      cache.bn_mu[ch] = mu;
      cache.bn_var[ch] = var;
    } else {
      mu = params.bn_rmean[ch];
      var = params.bn_rvar[ch];
    }
    double inv_std = 1.0 / std::sqrt(var + kBnEps);
    if (fc) fc->flops += 3;  // var+eps, sqrt, reciprocal
    double gamma = params.bn_gamma[ch], beta = params.bn_beta[ch];
    for (size_t b = 0; b < B; ++b) {
      const double* r = cache.r.data() + (b * T + ch) * n;
      double* xh = cache.xhat.data() + (b * T + ch) * n;
      double pool_acc = 0.0;
      for (size_t t = 0; t < n; ++t) {
        double x = (r[t] - mu) * inv_std;
        xh[t] = x;
        pool_acc += gamma * x + beta;
        if (fc) fc->flops += 5;  // sub, mul, mul-add (2), pool accumulate
      }
      cache.pooled[b * T + ch] = pool_acc / static_cast<double>(n);
      if (fc) fc->flops += 1;  // pool divide
    }
  }

  // Fully connected head.
  for (size_t b = 0; b < B; ++b) {
    const double* g = cache.pooled.data() + b * T;
    const double* head_in = g;
    size_t head_n = T;
    if (cfg.has_fc1()) {
      double* z1 = cache.z1.data() + b * H;
      double* a1 = cache.a1.data() + b * H;
      for (size_t h = 0; h < H; ++h) {
        if (!params.neuron_mask[h]) continue;
        double acc = 0.0;
        for (size_t ch = 0; ch < T; ++ch) {
          if (!live(ch)) continue;
          acc += params.fc1_w(h, ch) * g[ch];
          if (fc) fc->flops += 2;
        }
        z1[h] = acc + params.fc1_b[h];
        if (fc) fc->flops += 1;
        a1[h] = z1[h] > 0.0 ? z1[h] : 0.0;
      }
      head_in = a1;
      head_n = H;
    }
    double* l = cache.logits.data() + b * cfg.n_classes;
    for (size_t j = 0; j < cfg.n_classes; ++j) {
      double acc = 0.0;
      for (size_t i = 0; i < head_n; ++i) {
        bool in_live = cfg.has_fc1() ? params.neuron_mask[i] != 0 : live(i);
        if (!in_live) continue;
        acc += params.fc2_w(j, i) * head_in[i];
        if (fc) fc->flops += 2;
      }
      l[j] = acc + params.fc2_b[j];
      if (fc) fc->flops += 1;
    }
    detail::log_softmax2(l, cache.logp.data() + b * cfg.n_classes, fc);
  }
}

// Single-item forward: returns the two log-probabilities plus the cache
// needed by backward.
inline std::pair<std::array<double, 2>, BatchCache> forward(const ModelParams& params,
                                                            const ModelConfig& cfg,
                                                            const Input& input, bool training) {
  BatchCache cache;
  forward_batch(params, cfg, {&input}, training, cache);
  return {{cache.logp[0], cache.logp[1]}, std::move(cache)};
}

inline double nll_loss(const std::array<double, 2>& logp, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
  return -logp[static_cast<size_t>(label)];
}

// Gradient of the batch-mean NLL loss with respect to every parameter.
// Masked channels/neurons were skipped in the forward pass, so their
// gradients come out exactly 0. BatchNorm backward accounts for the batch
// statistics' dependence on every item (biased variance convention).
inline TensorSet backward_batch(const ModelParams& params, const ModelConfig& cfg,
                                const BatchCache& cache, const std::vector<int>& labels) {
  if (!cache.training) throw std::invalid_argument("backward needs a training-mode cache");
  size_t B = cache.batch;
  if (labels.size() != B) throw std::invalid_argument("label count does not match cache batch");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("label must be 0 or 1");

  size_t IC = cfg.in_channels, n = cfg.input_len;
  size_t nb = cfg.n_branches(), BC = cfg.branch_channels(), T = cfg.total_channels();
  size_t P = cfg.partial_channels(), H = cfg.has_fc1() ? cfg.fc_hidden : 0;
  auto live = [&](size_t ch) { return params.channel_mask[ch] != 0; };

  TensorSet g = make_zero_set(cfg);
  double inv_B = 1.0 / static_cast<double>(B);

  std::vector<double> d_logits(B * cfg.n_classes, 0.0);
  for (size_t b = 0; b < B; ++b)
    for (size_t j = 0; j < cfg.n_classes; ++j) {
      double p = std::exp(cache.logp[b * cfg.n_classes + j]);
      double target = (static_cast<int>(j) == labels[b]) ? 1.0 : 0.0;
      d_logits[b * cfg.n_classes + j] = (p - target) * inv_B;
    }

  std::vector<double> d_pooled(B * T, 0.0);
  std::vector<double> d_z1(B * H, 0.0);

  // FC head backward.
  for (size_t b = 0; b < B; ++b) {
    const double* dl = d_logits.data() + b * cfg.n_classes;
    if (cfg.has_fc1()) {
      const double* a1 = cache.a1.data() + b * H;
      const double* z1 = cache.z1.data() + b * H;
      for (size_t h = 0; h < H; ++h) {
        if (!params.neuron_mask[h]) continue;
        double da = 0.0;
        for (size_t j = 0; j < cfg.n_classes; ++j) {
          g.fc2_w(j, h) += dl[j] * a1[h];
          da += params.fc2_w(j, h) * dl[j];
        }
        d_z1[b * H + h] = z1[h] > 0.0 ? da : 0.0;
      }
      for (size_t j = 0; j < cfg.n_classes; ++j) g.fc2_b[j] += dl[j];
      const double* gp = cache.pooled.data() + b * T;
      for (size_t h = 0; h < H; ++h) {
        if (!params.neuron_mask[h]) continue;
        double dz = d_z1[b * H + h];
        for (size_t ch = 0; ch < T; ++ch) {
          if (!live(ch)) continue;
          g.fc1_w(h, ch) += dz * gp[ch];
          d_pooled[b * T + ch] += params.fc1_w(h, ch) * dz;
        }
        g.fc1_b[h] += dz;
      }
    } else {
      const double* gp = cache.pooled.data() + b * T;
      for (size_t j = 0; j < cfg.n_classes; ++j) {
        for (size_t ch = 0; ch < T; ++ch) {
          if (!live(ch)) continue;
          g.fc2_w(j, ch) += dl[j] * gp[ch];
          d_pooled[b * T + ch] += params.fc2_w(j, ch) * dl[j];
        }
        g.fc2_b[j] += dl[j];
      }
    }
  }

  // Pool -> BN -> ReLU backward, per channel across the whole batch.
  size_t M = B * n;
  std::vector<double> d_f(B * T * n, 0.0);
  for (size_t ch = 0; ch < T; ++ch) {
    if (!live(ch)) continue;
    double inv_std = 1.0 / std::sqrt(cache.bn_var[ch] + kBnEps);
    double gamma = params.bn_gamma[ch];
    // dy is constant per item thanks to the mean pool: d_pooled / n.
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (size_t b = 0; b < B; ++b) {
      double dy = d_pooled[b * T + ch] / static_cast<double>(n);
      const double* xh = cache.xhat.data() + (b * T + ch) * n;
      double row_xh = 0.0;
      for (size_t t = 0; t < n; ++t) row_xh += xh[t];
      g.bn_gamma[ch] += dy * row_xh;
      g.bn_beta[ch] += dy * static_cast<double>(n);
      double dxh = gamma * dy;
      sum_dxh += dxh * static_cast<double>(n);
      sum_dxh_xh += dxh * row_xh;
    }
    double mean_dxh = sum_dxh / static_cast<double>(M);
    double mean_dxh_xh = sum_dxh_xh / static_cast<double>(M);
    for (size_t b = 0; b < B; ++b) {
      double dxh = gamma * (d_pooled[b * T + ch] / static_cast<double>(n));
      const double* xh = cache.xhat.data() + (b * T + ch) * n;
      const double* f_pre = cache.f.data() + (b * T + ch) * n;
      double* df = d_f.data() + (b * T + ch) * n;
      for (size_t t = 0; t < n; ++t) {
        double dr = inv_std * (dxh - mean_dxh - xh[t] * mean_dxh_xh);
        df[t] = f_pre[t] > 0.0 ? dr : 0.0;
      }
    }
  }

  // Fusion backward.
  std::vector<double> d_v(B * T * n, 0.0);
  std::vector<double> pad(0), dpad(0);
  for (size_t b = 0; b < B; ++b) {
    for (size_t ch = 0; ch < T; ++ch) {
      if (!live(ch)) continue;
      const double* df = d_f.data() + (b * T + ch) * n;
      double* dv = d_v.data() + (b * T + ch) * n;
      if (ch < P) {
        const double* v = cache.v.data() + (b * T + ch) * n;
        pad.assign(n + 2, 0.0);
        std::copy(v, v + n, pad.begin() + 1);
        dpad.assign(n + 2, 0.0);
        for (size_t t = 0; t < n; ++t) {
          for (size_t j = 0; j < 3; ++j) {
            g.fuse_w(ch, j) += df[t] * pad[t + j];
            dpad[t + j] += params.fuse_w(ch, j) * df[t];
          }
          g.fuse_b[ch] += df[t];
        }
        for (size_t t = 0; t < n; ++t) dv[t] = dpad[t + 1];
      } else {
        std::copy(df, df + n, dv);
      }
    }
  }

  // Branch backward: depthwise then pointwise.
  for (size_t b = 0; b < B; ++b) {
    const double* in = cache.input.data() + b * IC * n;
    for (size_t br = 0; br < nb; ++br) {
      Tensor& gdww = br == 0 ? g.dw_a_w : g.dw_b_w;
      Tensor& gdwb = br == 0 ? g.dw_a_b : g.dw_b_b;
      Tensor& gpww = br == 0 ? g.pw_a_w : g.pw_b_w;
      Tensor& gpwb = br == 0 ? g.pw_a_b : g.pw_b_b;
      const Tensor& dww = br == 0 ? params.dw_a_w : params.dw_b_w;
      size_t k = cfg.dw_kernel(br);
      size_t half = k / 2;
      for (size_t oc = 0; oc < BC; ++oc) {
        size_t ch = br * BC + oc;
        if (!live(ch)) continue;
        const double* dv = d_v.data() + (b * T + ch) * n;
        std::vector<double> du(n, 0.0);
        if (cfg.has_depthwise()) {
          const double* u = cache.u.data() + (b * T + ch) * n;
          pad.assign(n + 2 * half, 0.0);
          std::copy(u, u + n, pad.begin() + half);
          dpad.assign(n + 2 * half, 0.0);
          for (size_t t = 0; t < n; ++t) {
            for (size_t j = 0; j < k; ++j) {
              gdww(oc, j) += dv[t] * pad[t + j];
              dpad[t + j] += dww(oc, j) * dv[t];
            }
            gdwb[oc] += dv[t];
          }
          for (size_t t = 0; t < n; ++t) du[t] = dpad[t + half];
        } else {
          std::copy(dv, dv + n, du.begin());
        }
        if (cfg.has_pointwise()) {
          for (size_t t = 0; t < n; ++t) {
            for (size_t ic = 0; ic < IC; ++ic) gpww(oc, ic) += du[t] * in[ic * n + t];
            gpwb[oc] += du[t];
          }
        }
      }
    }
  }
  return g;
}

// Single-item backward matching the single-item forward.
inline TensorSet backward(const ModelParams& params, const ModelConfig& cfg,
                          const BatchCache& cache, int label) {
  if (cache.batch != 1) throw std::invalid_argument("single-item backward needs a batch of 1");
  return backward_batch(params, cfg, cache, std::vector<int>{label});
}

// Map the channel/neuron masks onto individual weights: 1.0 where a weight is
// free, 0.0 where it belongs to a masked unit. A masked channel owns its
// producing weights (pointwise row, depthwise kernel, their biases), its
// fusion kernel when fused, its BatchNorm scale/shift, and its outgoing FC
// column; a masked neuron owns its FC1 row, bias, and FC2 column. Running
// statistics are never claimed.
inline TensorSet weight_freedom(const ModelConfig& cfg, const std::vector<uint8_t>& channel_mask,
                                const std::vector<uint8_t>& neuron_mask) {
  size_t BC = cfg.branch_channels();
  size_t T = cfg.total_channels();
  size_t P = cfg.partial_channels();
  if (channel_mask.size() != T) throw std::invalid_argument("channel_mask length mismatch");
  if (neuron_mask.size() != (cfg.has_fc1() ? cfg.fc_hidden : 0))
    throw std::invalid_argument("neuron_mask length mismatch");

  TensorSet f = make_zero_set(cfg);
  f.for_each([](std::string_view, Tensor& t, bool) {
    for (double& v : t.data) v = 1.0;
  });
  for (size_t ch = 0; ch < T; ++ch) {
    if (channel_mask[ch]) continue;
    size_t br = ch / BC, oc = ch % BC;
    if (cfg.has_pointwise()) {
      Tensor& w = br == 0 ? f.pw_a_w : f.pw_b_w;
      Tensor& b = br == 0 ? f.pw_a_b : f.pw_b_b;
      for (size_t ic = 0; ic < cfg.in_channels; ++ic) w(oc, ic) = 0.0;
      b[oc] = 0.0;
    }
    if (cfg.has_depthwise()) {
      Tensor& w = br == 0 ? f.dw_a_w : f.dw_b_w;
      Tensor& b = br == 0 ? f.dw_a_b : f.dw_b_b;
      for (size_t j = 0; j < cfg.dw_kernel(br); ++j) w(oc, j) = 0.0;
      b[oc] = 0.0;
    }
    if (ch < P) {
      for (size_t j = 0; j < 3; ++j) f.fuse_w(ch, j) = 0.0;
      f.fuse_b[ch] = 0.0;
    }
    f.bn_gamma[ch] = 0.0;
    f.bn_beta[ch] = 0.0;
    if (cfg.has_fc1()) {
      for (size_t h = 0; h < cfg.fc_hidden; ++h) f.fc1_w(h, ch) = 0.0;
    } else {
      for (size_t j = 0; j < cfg.n_classes; ++j) f.fc2_w(j, ch) = 0.0;
    }
  }
  if (cfg.has_fc1()) {
    for (size_t h = 0; h < cfg.fc_hidden; ++h) {
      if (neuron_mask[h]) continue;
      for (size_t ch = 0; ch < T; ++ch) f.fc1_w(h, ch) = 0.0;
      f.fc1_b[h] = 0.0;
      for (size_t j = 0; j < cfg.n_classes; ++j) f.fc2_w(j, h) = 0.0;
    }
  }
  return f;
}

}  // namespace ldgcn
