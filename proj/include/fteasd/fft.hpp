#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "fteasd/common.hpp"

namespace fteasd {

namespace detail {

inline bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 Cooley-Tukey. n must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) throw argument_error("fft_pow2: size must be a power of 2");
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

// Bluestein chirp-z transform: DFT of arbitrary length via a power-of-two
// convolution. The quadratic phase exponent is reduced mod 2n to keep the
// angle argument small for large inputs.
inline void fft_bluestein(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<std::complex<double>> w(n);  // chirp: exp(+/- i*pi*k^2/n)
  const double sign = inverse ? 1.0 : -1.0;
  std::size_t k2 = 0;  // k^2 mod 2n, updated incrementally
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      k2 += 2 * k - 1;  // k^2 = (k-1)^2 + 2k - 1
      k2 %= 2 * n;
    }
    double ang = sign * M_PI * static_cast<double>(k2) / static_cast<double>(n);
    w[k] = std::complex<double>(std::cos(ang), std::sin(ang));
  }
  std::vector<std::complex<double>> x(m, {0.0, 0.0}), y(m, {0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * w[k];
  y[0] = std::conj(w[0]);
  for (std::size_t k = 1; k < n; ++k) {
    y[k] = std::conj(w[k]);
    y[m - k] = std::conj(w[k]);
  }
  fft_pow2(x, false);
  fft_pow2(y, false);
  for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
  fft_pow2(x, true);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * w[k];
  if (inverse) {
    double invn = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= invn;
  }
}

}  // namespace detail

// Forward DFT, X[k] = sum_j x[j] exp(-2*pi*i*j*k/n). Any length >= 1.
inline void fft(std::vector<std::complex<double>>& a) {
  if (a.empty()) throw argument_error("fft: empty input");
  if (a.size() == 1) return;
  if (detail::is_pow2(a.size()))
    detail::fft_pow2(a, false);
  else
    detail::fft_bluestein(a, false);
}

inline void ifft(std::vector<std::complex<double>>& a) {
  if (a.empty()) throw argument_error("ifft: empty input");
  if (a.size() == 1) return;
  if (detail::is_pow2(a.size()))
    detail::fft_pow2(a, true);
  else
    detail::fft_bluestein(a, true);
}

// One-sided magnitude spectrum of a real signal: bins 0..n/2 inclusive.
inline std::vector<double> real_magnitude_spectrum(const std::vector<double>& x) {
  if (x.empty()) throw argument_error("real_magnitude_spectrum: empty input");
  std::vector<std::complex<double>> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  fft(a);
  std::vector<double> mag(x.size() / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(a[k]);
  return mag;
}

}  // namespace fteasd
