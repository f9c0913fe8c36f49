#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace ldgcn {

// Plain O(n^2) real-input DFT. Window lengths here are a few hundred samples
// and the transform is off the hot path, so clarity wins over an FFT.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  const double step = -2.0 * std::numbers::pi / static_cast<double>(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t j = 0; j < n; ++j) {
      double ang = step * static_cast<double>((k * j) % n);
      acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<double> idft_real(const std::vector<std::complex<double>>& spec) {
  size_t n = spec.size();
  std::vector<double> out(n);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (size_t j = 0; j < n; ++j) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t k = 0; k < n; ++k) {
      double ang = step * static_cast<double>((k * j) % n);
      acc += spec[k] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[j] = acc.real() / static_cast<double>(n);
  }
  return out;
}

// Frequency in Hz of DFT bin k for the given sample rate.
inline double bin_hz(size_t k, size_t n, double sample_rate) {
  return static_cast<double>(k) * sample_rate / static_cast<double>(n);
}

// Ideal bandpass: zeroes every bin whose frequency lies outside [lo_hz, hi_hz)
// and mirrors the mask onto the conjugate half so the output stays real.
// Passing lo_hz = 0 keeps the DC bin.
inline std::vector<double> bandpass_ideal(const std::vector<double>& x, double sample_rate,
                                          double lo_hz, double hi_hz) {
  if (!(lo_hz < hi_hz)) throw std::invalid_argument("bandpass_ideal needs lo_hz < hi_hz");
  size_t n = x.size();
  std::vector<std::complex<double>> spec = dft(x);
  for (size_t k = 0; k < n; ++k) {
    // each bin k > 0 pairs with n-k; classify by the lower alias frequency
    size_t kk = (k <= n - k) ? k : n - k;
    double f = bin_hz(kk, n, sample_rate);
    bool keep = (f >= lo_hz && f < hi_hz);
    if (!keep) spec[k] = 0.0;
  }
  return idft_real(spec);
}

// Total spectral energy in [lo_hz, hi_hz) by Parseval: sum over kept bins of
// |X_k|^2 / n, counting each conjugate pair once per member (so interior
// pairs contribute twice, DC and Nyquist once).
inline double band_energy(const std::vector<double>& x, double sample_rate, double lo_hz,
                          double hi_hz) {
  size_t n = x.size();
  std::vector<std::complex<double>> spec = dft(x);
  double total = 0.0;
  for (size_t k = 0; k < n; ++k) {
    size_t kk = (k <= n - k) ? k : n - k;
    double f = bin_hz(kk, n, sample_rate);
    if (f >= lo_hz && f < hi_hz) total += std::norm(spec[k]);
  }
  return total / static_cast<double>(n);
}

inline double signal_energy(const std::vector<double>& x) {
  double total = 0.0;
  for (double v : x) total += v * v;
  return total;
}

}  // namespace ldgcn
