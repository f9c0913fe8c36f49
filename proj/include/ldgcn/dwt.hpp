#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldgcn {

enum class Wavelet { haar, db2, db4 };

inline Wavelet wavelet_from_string(const std::string& name) {
  if (name == "haar") return Wavelet::haar;
  if (name == "db2") return Wavelet::db2;
  if (name == "db4") return Wavelet::db4;
  throw std::invalid_argument("unknown wavelet: " + name);
}

inline std::string wavelet_to_string(Wavelet w) {
  switch (w) {
    case Wavelet::haar: return "haar";
    case Wavelet::db2: return "db2";
    case Wavelet::db4: return "db4";
  }
  throw std::logic_error("bad wavelet enum");
}

// Orthonormal scaling (lowpass) filters. Daubechies coefficients to full
// double precision; sum h[m] = sqrt(2), sum h[m]^2 = 1.
inline std::vector<double> scaling_filter(Wavelet w) {
  switch (w) {
    case Wavelet::haar:
      return {0.7071067811865476, 0.7071067811865476};
    case Wavelet::db2:
      return {0.48296291314469025, 0.8365163037378079, 0.22414386804185735,
              -0.12940952255092145};
    case Wavelet::db4:
      return {0.23037781330885523, 0.7148465705525415,  0.6308807679295904,
              -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
              0.032883011666982945, -0.010597401784997278};
  }
  throw std::logic_error("bad wavelet enum");
}

// Quadrature-mirror highpass: g[m] = (-1)^m h[L-1-m].
inline std::vector<double> wavelet_filter(Wavelet w) {
  std::vector<double> h = scaling_filter(w);
  size_t L = h.size();
  std::vector<double> g(L);
  for (size_t m = 0; m < L; ++m) {
    double sign = (m % 2 == 0) ? 1.0 : -1.0;
    g[m] = sign * h[L - 1 - m];
  }
  return g;
}

// One periodized analysis step: N even samples -> N/2 approximation and N/2
// detail coefficients. a[k] = sum_m h[m] x[(2k+m) mod N], likewise for g.
inline void dwt_step(const std::vector<double>& x, Wavelet w, std::vector<double>& approx,
                     std::vector<double>& detail) {
  size_t n = x.size();
  if (n == 0 || n % 2 != 0) throw std::invalid_argument("dwt_step needs even nonzero length");
  std::vector<double> h = scaling_filter(w);
  std::vector<double> g = wavelet_filter(w);
  size_t half = n / 2;
  approx.assign(half, 0.0);
  detail.assign(half, 0.0);
  for (size_t k = 0; k < half; ++k) {
    double a = 0.0, d = 0.0;
    for (size_t m = 0; m < h.size(); ++m) {
      double v = x[(2 * k + m) % n];
      a += h[m] * v;
      d += g[m] * v;
    }
    approx[k] = a;
    detail[k] = d;
  }
}

// Inverse of dwt_step for orthonormal periodized filters:
// x[i] = sum_{k : i = (2k+m) mod N} h[m] a[k] + g[m] d[k].
inline std::vector<double> idwt_step(const std::vector<double>& approx,
                                     const std::vector<double>& detail, Wavelet w) {
  if (approx.size() != detail.size())
    throw std::invalid_argument("idwt_step needs equal approx/detail lengths");
  size_t half = approx.size();
  size_t n = half * 2;
  std::vector<double> h = scaling_filter(w);
  std::vector<double> g = wavelet_filter(w);
  std::vector<double> x(n, 0.0);
  for (size_t k = 0; k < half; ++k) {
    for (size_t m = 0; m < h.size(); ++m) {
      size_t i = (2 * k + m) % n;
      x[i] += h[m] * approx[k] + g[m] * detail[k];
    }
  }
  return x;
}

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace ldgcn
