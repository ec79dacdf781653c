#pragma once

// Discrete Fourier analysis/synthesis on uniform grids t_k = k*T/L.
//
// Coefficients are stored in transform order (storage index k = 0..L-1) and
// carry the two-sided frequency index
//   l(k) = k        for k <= (L-1)/2
//   l(k) = k - L    otherwise
// so an even L spans l = -L/2 .. L/2-1 and an odd L spans -(L-1)/2 .. (L-1)/2.
// Analysis is normalized by 1/L, synthesis is not:
//   alpha_l = (1/L) sum_k v_k exp(-i w_l t_k),   v_k = sum_l alpha_l exp(i w_l t_k)
// with w_l = 2 pi l / T.

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include "lno/tensor.hpp"

namespace lno::transforms {

inline bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

inline long signed_frequency_index(std::size_t k, std::size_t L) {
  return 2 * k <= L - 1 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(L);
}

inline double angular_frequency(std::size_t k, std::size_t L, double period) {
  return 2.0 * std::numbers::pi * static_cast<double>(signed_frequency_index(k, L)) / period;
}

// Roots of unity exp(2 pi i j / L) for j = 0..L-1 plus, for powers of two, the
// bit-reversal permutation. Cached per thread.
class DftPlan {
 public:
  explicit DftPlan(std::size_t n) : n_(n), roots_(n) {
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      roots_[j] = {std::cos(angle), std::sin(angle)};
    }
    if (is_power_of_two(n)) {
      reversed_.resize(n);
      std::size_t bits = 0;
      while ((std::size_t{1} << bits) < n) ++bits;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
        reversed_[i] = r;
      }
    }
  }

  static const DftPlan& get(std::size_t n) {
    thread_local std::unordered_map<std::size_t, std::unique_ptr<DftPlan>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<DftPlan>(n);
    return *slot;
  }

  std::size_t size() const { return n_; }

  // exp(sign * 2 pi i j / n)
  cplx root(std::size_t j, int sign) const {
    const cplx& w = roots_[j % n_];
    return sign > 0 ? w : std::conj(w);
  }

  // Unnormalized in-place transform X_k = sum_j x_j exp(sign 2 pi i jk / n).
  void execute(std::span<cplx> data, int sign) const {
    if (data.size() != n_) throw DimensionError("DftPlan: length mismatch");
    if (n_ <= 1) return;
    if (!reversed_.empty()) {
      radix2(data, sign);
    } else {
      direct(data, sign);
    }
  }

 private:
  void radix2(std::span<cplx> a, int sign) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < reversed_[i]) std::swap(a[i], a[reversed_[i]]);
    }
    const double s = sign > 0 ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        cplx* lo = a.data() + start;
        cplx* hi = lo + half;
        for (std::size_t j = 0; j < half; ++j) {
          const cplx& w = roots_[j * stride];
          const double wr = w.real(), wi = s * w.imag();
          const double vr = hi[j].real() * wr - hi[j].imag() * wi;
          const double vi = hi[j].real() * wi + hi[j].imag() * wr;
          const double ur = lo[j].real(), ui = lo[j].imag();
          lo[j] = {ur + vr, ui + vi};
          hi[j] = {ur - vr, ui - vi};
        }
      }
    }
  }

  void direct(std::span<cplx> a, int sign) const {
    thread_local std::vector<cplx> out;
    out.assign(n_, cplx{});
    const double s = sign > 0 ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n_; ++k) {
      double re = 0.0, im = 0.0;
      std::size_t idx = 0;
      for (std::size_t j = 0; j < n_; ++j) {
        const double wr = roots_[idx].real(), wi = s * roots_[idx].imag();
        re += a[j].real() * wr - a[j].imag() * wi;
        im += a[j].real() * wi + a[j].imag() * wr;
        idx += k;
        if (idx >= n_) idx -= n_;
      }
      out[k] = {re, im};
    }
    std::copy(out.begin(), out.end(), a.begin());
  }

  std::size_t n_;
  std::vector<cplx> roots_;
  std::vector<std::size_t> reversed_;
};

// Unnormalized forward (sign -1) or inverse (sign +1) transform.
inline void dft(std::span<cplx> data, int sign) { DftPlan::get(data.size()).execute(data, sign); }

// Unnormalized forward transforms of two real signals of equal length with
// one complex FFT: z = x + i y, X_k = (Z_k + conj Z_-k) / 2, Y_k = (Z_k - conj Z_-k) / 2i.
inline void dft_real_pair(std::span<const double> x, std::span<const double> y, std::span<cplx> X,
                          std::span<cplx> Y) {
  const std::size_t n = x.size();
  thread_local std::vector<cplx> z;
  z.resize(n);
  for (std::size_t k = 0; k < n; ++k) z[k] = {x[k], y.empty() ? 0.0 : y[k]};
  dft(z, -1);
  for (std::size_t k = 0; k < n; ++k) {
    const cplx a = z[k], b = std::conj(z[(n - k) % n]);
    X[k] = 0.5 * (a + b);
    if (!Y.empty()) Y[k] = cplx(0.0, -0.5) * (a - b);
  }
}

// Real parts of the unnormalized inverse transforms of two spectra with one
// complex FFT. Re ifft(X) only sees the Hermitian part (X_k + conj X_-k) / 2.
inline void idft_real_part_pair(std::span<const cplx> X, std::span<const cplx> Y, std::span<double> x,
                                std::span<double> y) {
  const std::size_t n = X.size();
  thread_local std::vector<cplx> z;
  z.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = (n - k) % n;
    const cplx hx = 0.5 * (X[k] + std::conj(X[r]));
    const cplx hy = Y.empty() ? cplx{} : 0.5 * (Y[k] + std::conj(Y[r]));
    z[k] = hx + cplx(0.0, 1.0) * hy;
  }
  dft(z, +1);
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = z[k].real();
    if (!y.empty()) y[k] = z[k].imag();
  }
}

// Forward transforms of `count` real signals of length n, two per FFT.
// load(s, span<double>) fills signal s; store(s, span<const cplx>) receives its spectrum.
template <class Load, class Store>
void forward_real_batch(std::size_t count, std::size_t n, Load&& load, Store&& store) {
  std::vector<double> x(n), y(n);
  std::vector<cplx> X(n), Y(n);
  for (std::size_t s = 0; s < count; s += 2) {
    const bool two = s + 1 < count;
    load(s, std::span<double>(x));
    if (two) load(s + 1, std::span<double>(y));
    dft_real_pair(x, two ? std::span<const double>(y) : std::span<const double>(),
                  X, two ? std::span<cplx>(Y) : std::span<cplx>());
    store(s, std::span<const cplx>(X));
    if (two) store(s + 1, std::span<const cplx>(Y));
  }
}

// Real parts of the inverse transforms of `count` spectra, two per FFT.
// load(s, span<cplx>) fills spectrum s; store(s, span<const double>) receives the signal.
template <class Load, class Store>
void inverse_real_batch(std::size_t count, std::size_t n, Load&& load, Store&& store) {
  std::vector<cplx> X(n), Y(n);
  std::vector<double> x(n), y(n);
  for (std::size_t s = 0; s < count; s += 2) {
    const bool two = s + 1 < count;
    load(s, std::span<cplx>(X));
    if (two) load(s + 1, std::span<cplx>(Y));
    idft_real_part_pair(X, two ? std::span<const cplx>(Y) : std::span<const cplx>(), x,
                        two ? std::span<double>(y) : std::span<double>());
    store(s, std::span<const double>(x));
    if (two) store(s + 1, std::span<const double>(y));
  }
}

struct FourierDecomposition {
  std::vector<cplx> coefficients;  // transform order
  double period = 0.0;

  std::size_t size() const { return coefficients.size(); }
  long index(std::size_t k) const { return signed_frequency_index(k, size()); }
  double omega(std::size_t k) const { return angular_frequency(k, size(), period); }
  double fundamental() const { return 2.0 * std::numbers::pi / period; }
  // Storage slot of two-sided index l.
  std::size_t slot(long l) const {
    const long L = static_cast<long>(size());
    return static_cast<std::size_t>(((l % L) + L) % L);
  }
};

inline FourierDecomposition analyze(std::span<const double> samples, double period) {
  if (samples.size() < 2) throw ContractError("analyze: need at least 2 samples");
  if (!(period > 0.0)) throw ContractError("analyze: period must be positive");
  FourierDecomposition d;
  d.period = period;
  d.coefficients.assign(samples.begin(), samples.end());
  dft(d.coefficients, -1);
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (cplx& c : d.coefficients) c *= inv;
  return d;
}

// Checks that `times` is the uniform grid k*T/L starting at 0 and derives T.
inline double uniform_period(std::span<const double> times) {
  if (times.size() < 2) throw ContractError("grid needs at least 2 points");
  const double dt = times[1] - times[0];
  if (!(dt > 0.0) || std::abs(times[0]) > 1e-12 * dt) {
    throw ContractError("grid must start at 0 with positive spacing");
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (std::abs(times[k] - static_cast<double>(k) * dt) > 1e-9 * dt * static_cast<double>(times.size())) {
      throw ContractError("grid is not uniform at point " + std::to_string(k));
    }
  }
  return dt * static_cast<double>(times.size());
}

inline FourierDecomposition analyze(std::span<const double> samples, std::span<const double> times) {
  if (samples.size() != times.size()) throw DimensionError("analyze: samples and grid differ in length");
  return analyze(samples, uniform_period(times));
}

// Complex series value at the native grid points (fast path).
inline std::vector<cplx> synthesize_complex(const FourierDecomposition& d) {
  std::vector<cplx> out = d.coefficients;
  dft(out, +1);
  return out;
}

// Real part of sum_l c_l exp(i w_l t) at arbitrary times.
inline std::vector<double> synthesize(const FourierDecomposition& d, std::span<const double> times) {
  std::vector<double> out(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    cplx acc{};
    for (std::size_t l = 0; l < d.size(); ++l) acc += d.coefficients[l] * std::polar(1.0, d.omega(l) * times[k]);
    out[k] = acc.real();
  }
  return out;
}

// Real part of the series on its own grid t_k = k*T/L.
inline std::vector<double> synthesize(const FourierDecomposition& d) {
  const std::vector<cplx> z = synthesize_complex(d);
  std::vector<double> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k].real();
  return out;
}

// Backward pass of analyze for real samples: given dL/dalpha (complex
// convention), returns dL/dv_k = (1/L) Re sum_l exp(i w_l t_k) g_l.
inline std::vector<double> adjoint_gradient(std::span<const cplx> upstream) {
  std::vector<cplx> z(upstream.begin(), upstream.end());
  dft(z, +1);
  const double inv = 1.0 / static_cast<double>(z.size());
  std::vector<double> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k].real() * inv;
  return out;
}

// Unnormalized in-place transform of a row-major [Lx, Lt] block along both axes.
inline void dft_2d(std::span<cplx> a, std::size_t lx, std::size_t lt, int sign) {
  if (a.size() != lx * lt) throw DimensionError("dft_2d: size mismatch");
  for (std::size_t x = 0; x < lx; ++x) dft(a.subspan(x * lt, lt), sign);
  std::vector<cplx> column(lx);
  for (std::size_t t = 0; t < lt; ++t) {
    for (std::size_t x = 0; x < lx; ++x) column[x] = a[x * lt + t];
    dft(column, sign);
    for (std::size_t x = 0; x < lx; ++x) a[x * lt + t] = column[x];
  }
}

// 2D analysis of a row-major [Lx, Lt] block, normalized by 1/(Lx*Lt).
inline std::vector<cplx> analyze_2d(std::span<const double> samples, std::size_t lx, std::size_t lt) {
  if (samples.size() != lx * lt) throw DimensionError("analyze_2d: size mismatch");
  std::vector<cplx> a(samples.begin(), samples.end());
  dft_2d(a, lx, lt, -1);
  const double inv = 1.0 / static_cast<double>(lx * lt);
  for (cplx& c : a) c *= inv;
  return a;
}

// Unnormalized 2D inverse transform (complex result).
inline std::vector<cplx> synthesize_2d(std::span<const cplx> coefficients, std::size_t lx, std::size_t lt) {
  std::vector<cplx> a(coefficients.begin(), coefficients.end());
  dft_2d(a, lx, lt, +1);
  return a;
}

// Tape op: Fourier coefficients along the last axis of a real tensor.
inline Tensor fourier_coefficients(const Tensor& v) {
  if (v.is_complex() || v.rank() < 1) throw ContractError("fourier_coefficients: expects a real tensor");
  const std::size_t L = v.shape().back();
  if (L < 2) throw ContractError("fourier_coefficients: need at least 2 samples");
  const std::size_t rows = v.size() / L;
  Tensor out = Tensor::zeros(v.shape(), DType::complex128);
  auto y = out.mutable_cvalues();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = y.subspan(r * L, L);
    for (std::size_t k = 0; k < L; ++k) row[k] = v.values()[r * L + k];
    dft(row, -1);
    for (cplx& c : row) c /= static_cast<double>(L);
  }
  detail::record(out, "fourier_coefficients", {v},
                 [rows, L](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
                   auto g = detail::grad_of(*in[0]);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const auto back = adjoint_gradient(std::span(o.grad_cx).subspan(r * L, L));
                     for (std::size_t k = 0; k < L; ++k) g[r * L + k] += back[k];
                   }
                 });
  return out;
}

}  // namespace lno::transforms
