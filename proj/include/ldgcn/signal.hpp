#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldgcn/dft.hpp"
#include "ldgcn/dwt.hpp"

namespace ldgcn {

enum class Label : uint8_t { Alert = 0, Drowsiness = 1, Unlabeled = 255 };

inline std::string label_to_string(Label l) {
  switch (l) {
    case Label::Alert: return "Alert";
    case Label::Drowsiness: return "Drowsiness";
    case Label::Unlabeled: return "Unlabeled";
  }
  throw std::logic_error("bad label enum");
}

// One single-channel EEG window (microvolts).
struct EegWindow {
  std::vector<double> samples;
  double sample_rate = 500.0;
  uint16_t subject_id = 0;
  Label label = Label::Unlabeled;

  void validate() const {
    if (samples.size() < 2) throw std::invalid_argument("EegWindow needs at least 2 samples");
    if (!(sample_rate > 0.0)) throw std::invalid_argument("EegWindow sample_rate must be positive");
  }
};

// Frequency-domain representation of a window; same length as the source.
struct FreqSignal {
  std::vector<double> values;
};

// The four classic EEG bands, each a length-n time series limited to its
// frequency range. Edges in Hz: delta 0-4, theta 4-8, alpha 8-12, beta 12-20.
struct BandSet {
  std::vector<double> delta;
  std::vector<double> theta;
  std::vector<double> alpha;
  std::vector<double> beta;
};

inline constexpr std::array<double, 5> kBandEdgesHz = {0.0, 4.0, 8.0, 12.0, 20.0};

// Baseline drowsiness status: elementwise mean of theta and alpha.
struct BdstVector {
  std::vector<double> values;
};

struct WaveletConfig {
  Wavelet wavelet = Wavelet::db4;
  // Number of analysis levels whose detail coefficients are discarded. Each
  // level halves the retained bandwidth, so at 500 Hz three levels keep
  // roughly 0-31 Hz, which covers every band of interest with headroom.
  size_t levels = 3;
};

// Project a window onto the low-frequency wavelet subspace: pad with zeros to
// a power of two, run `levels` analysis steps, zero all detail coefficients,
// synthesize back, and truncate to the original length. Linear in the input
// and exactly invertible apart from the discarded details.
inline FreqSignal to_frequency(const EegWindow& window, const WaveletConfig& cfg = {}) {
  window.validate();
  size_t n = window.samples.size();
  size_t padded = next_pow2(n);

  // Cannot analyze past length-1 approximation.
  size_t max_levels = 0;
  for (size_t len = padded; len >= 2 && len % 2 == 0; len /= 2) ++max_levels;
  size_t levels = std::min(cfg.levels, max_levels);

  std::vector<double> cur(window.samples);
  cur.resize(padded, 0.0);

  std::vector<std::vector<double>> approx_stack;
  approx_stack.reserve(levels);
  for (size_t l = 0; l < levels; ++l) {
    std::vector<double> a, d;
    dwt_step(cur, cfg.wavelet, a, d);
    approx_stack.push_back(a);
    cur = std::move(a);
  }
  // Synthesize with all detail coefficients zeroed.
  for (size_t l = levels; l-- > 0;) {
    std::vector<double> zeros(cur.size(), 0.0);
    cur = idwt_step(cur, zeros, cfg.wavelet);
  }
  cur.resize(n);
  return FreqSignal{std::move(cur)};
}

// Split a frequency signal into the four bands with ideal brick-wall DFT
// masks, so the bands are spectrally disjoint and sum exactly to the 0-20 Hz
// content of the input.
inline BandSet decompose_bands(const FreqSignal& freq, double sample_rate) {
  if (freq.values.size() < 2) throw std::invalid_argument("FreqSignal needs at least 2 values");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample_rate must be positive");
  BandSet out;
  out.delta = bandpass_ideal(freq.values, sample_rate, kBandEdgesHz[0], kBandEdgesHz[1]);
  out.theta = bandpass_ideal(freq.values, sample_rate, kBandEdgesHz[1], kBandEdgesHz[2]);
  out.alpha = bandpass_ideal(freq.values, sample_rate, kBandEdgesHz[2], kBandEdgesHz[3]);
  out.beta = bandpass_ideal(freq.values, sample_rate, kBandEdgesHz[3], kBandEdgesHz[4]);
  return out;
}

inline BdstVector compute_bdst(const BandSet& bands) {
  size_t n = bands.theta.size();
  if (bands.alpha.size() != n || bands.delta.size() != n || bands.beta.size() != n)
    throw std::invalid_argument("BandSet sequences must have equal length");
  BdstVector out;
  out.values.resize(n);
  for (size_t i = 0; i < n; ++i) out.values[i] = (bands.theta[i] + bands.alpha[i]) / 2.0;
  return out;
}

}  // namespace ldgcn
