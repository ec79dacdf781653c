#pragma once

// Spectral convolution with truncated Fourier-mode weights.
//
// 1D: the first M non-negative modes of each input channel are mixed by a
// complex [c_in, c_out] matrix per mode and the result is synthesized back as
// a real signal, the same as irfft of the half spectrum:
//
//   u_k = Re sum_{m<M} c_m Y_m exp(2 pi i m k / L),  c_m = 1 at DC and Nyquist, 2 otherwise.
//
// 2D keeps the half spectrum along t and both low corners along x
// (rows 0..Mx-1 and Lx-Mx..Lx-1), each corner with its own weight tensor.

#include <Eigen/Dense>
#include <complex>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lno/random.hpp"
#include "lno/tensor.hpp"
#include "lno/transforms.hpp"

namespace lno::fourier {

using CMatrix = Eigen::MatrixXcd;
using CRowMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CRowMap = Eigen::Map<CRowMatrix>;
using CConstRowMap = Eigen::Map<const CRowMatrix>;

inline std::size_t available_modes(std::size_t L) { return L / 2 + 1; }

inline bool self_conjugate(std::size_t m, std::size_t L) { return m == 0 || 2 * m == L; }

inline double half_spectrum_multiplicity(std::size_t m, std::size_t L) {
  return self_conjugate(m, L) ? 1.0 : 2.0;
}

namespace detail {

inline std::vector<cplx> draw_weights(std::size_t count, double scale, Rng& rng) {
  std::vector<cplx> w(count);
  for (auto& c : w) {
    const double re = rng.uniform() * scale;
    c = {re, rng.uniform() * scale};
  }
  return w;
}

}  // namespace detail

struct SpectralWeights1D {
  Tensor weights;  // complex [c_in, c_out, M]

  std::size_t in_channels() const { return weights.extent(0); }
  std::size_t out_channels() const { return weights.extent(1); }
  std::size_t modes() const { return weights.extent(2); }

  // Re and Im ~ U(0, 1) / (c_in * c_out).
  static SpectralWeights1D initialize(std::size_t c_in, std::size_t c_out, std::size_t m, Rng& rng) {
    const double scale = 1.0 / static_cast<double>(c_in * c_out);
    return {Tensor::complex({c_in, c_out, m}, detail::draw_weights(c_in * c_out * m, scale, rng))};
  }

  void validate() const {
    if (!weights.is_complex() || weights.rank() != 3 || modes() == 0) {
      throw DimensionError("SpectralWeights1D: weights must be complex [c_in, c_out, M]");
    }
  }
};

struct SpectralWeights2D {
  Tensor positive;  // complex [c_in, c_out, Mx, Mt], rows kx = 0..Mx-1
  Tensor negative;  // complex [c_in, c_out, Mx, Mt], rows kx = Lx-Mx..Lx-1

  std::size_t in_channels() const { return positive.extent(0); }
  std::size_t out_channels() const { return positive.extent(1); }
  std::size_t modes_x() const { return positive.extent(2); }
  std::size_t modes_t() const { return positive.extent(3); }

  static SpectralWeights2D initialize(std::size_t c_in, std::size_t c_out, std::size_t mx, std::size_t mt,
                                      Rng& rng) {
    const double scale = 1.0 / static_cast<double>(c_in * c_out);
    const std::size_t count = c_in * c_out * mx * mt;
    Tensor pos = Tensor::complex({c_in, c_out, mx, mt}, detail::draw_weights(count, scale, rng));
    Tensor neg = Tensor::complex({c_in, c_out, mx, mt}, detail::draw_weights(count, scale, rng));
    return {pos, neg};
  }

  void validate() const {
    if (!positive.is_complex() || !negative.is_complex() || positive.rank() != 4 ||
        positive.shape() != negative.shape() || modes_x() == 0 || modes_t() == 0) {
      throw DimensionError("SpectralWeights2D: weights must be two complex [c_in, c_out, Mx, Mt] tensors");
    }
  }
};

// v[b, k, i] -> u[b, k, j].
inline Tensor spectral_conv_1d(const SpectralWeights1D& w, const Tensor& v) {
  w.validate();
  if (v.is_complex() || v.rank() != 3 || v.extent(2) != w.in_channels()) {
    throw DimensionError("spectral_conv_1d: input " + to_string(v.shape()) + " does not match weights with " +
                         std::to_string(w.in_channels()) + " input channels");
  }
  const std::size_t B = v.extent(0), L = v.extent(1), ci = w.in_channels(), co = w.out_channels(), M = w.modes();
  if (M > available_modes(L)) {
    throw ConfigError("spectral_conv_1d: " + std::to_string(M) + " modes requested but a grid of " +
                      std::to_string(L) + " points has only " + std::to_string(available_modes(L)));
  }
  const auto eB = static_cast<Eigen::Index>(B), eci = static_cast<Eigen::Index>(ci),
             eco = static_cast<Eigen::Index>(co);

  // A[m] is [B x ci], Wm[m] is [ci x co], both row-major and mode-major.
  auto A = std::make_shared<std::vector<cplx>>(M * B * ci);
  auto Wm = std::make_shared<std::vector<cplx>>(M * ci * co);
  const double inv = 1.0 / static_cast<double>(L);
  const auto vv = v.values();
  transforms::forward_real_batch(
      B * ci, L,
      [&](std::size_t s, std::span<double> x) {
        const std::size_t b = s / ci, i = s % ci;
        for (std::size_t k = 0; k < L; ++k) x[k] = vv[(b * L + k) * ci + i];
      },
      [&](std::size_t s, std::span<const cplx> X) {
        const std::size_t b = s / ci, i = s % ci;
        for (std::size_t m = 0; m < M; ++m) (*A)[(m * B + b) * ci + i] = X[m] * inv;
      });
  const auto wv = w.weights.cvalues();
  for (std::size_t i = 0; i < ci; ++i) {
    for (std::size_t j = 0; j < co; ++j) {
      for (std::size_t m = 0; m < M; ++m) (*Wm)[(m * ci + i) * co + j] = wv[(i * co + j) * M + m];
    }
  }

  std::vector<cplx> Y(M * B * co);
  for (std::size_t m = 0; m < M; ++m) {
    CRowMap(Y.data() + m * B * co, eB, eco).noalias() =
        CConstRowMap(A->data() + m * B * ci, eB, eci) * CConstRowMap(Wm->data() + m * ci * co, eci, eco);
  }

  Tensor out = Tensor::zeros({B, L, co});
  auto u = out.mutable_values();
  transforms::inverse_real_batch(
      B * co, L,
      [&](std::size_t s, std::span<cplx> X) {
        const std::size_t b = s / co, j = s % co;
        std::fill(X.begin(), X.end(), cplx{});
        for (std::size_t m = 0; m < M; ++m) X[m] = half_spectrum_multiplicity(m, L) * Y[(m * B + b) * co + j];
      },
      [&](std::size_t s, std::span<const double> x) {
        const std::size_t b = s / co, j = s % co;
        for (std::size_t k = 0; k < L; ++k) u[(b * L + k) * co + j] = x[k];
      });
  lno::detail::check_finite(out.values(), "spectral_conv_1d");

  lno::detail::record(
      out, "spectral_conv_1d", {v, w.weights},
      [A, Wm, B, L, ci, co, M](const lno::detail::Storage& o, std::span<const lno::detail::StoragePtr> in) {
        const auto eB = static_cast<Eigen::Index>(B), eci = static_cast<Eigen::Index>(ci),
                   eco = static_cast<Eigen::Index>(co);
        std::vector<cplx> gY(M * B * co);
        transforms::forward_real_batch(
            B * co, L,
            [&](std::size_t s, std::span<double> x) {
              const std::size_t b = s / co, j = s % co;
              for (std::size_t k = 0; k < L; ++k) x[k] = o.grad_re[(b * L + k) * co + j];
            },
            [&](std::size_t s, std::span<const cplx> X) {
              const std::size_t b = s / co, j = s % co;
              for (std::size_t m = 0; m < M; ++m) gY[(m * B + b) * co + j] = half_spectrum_multiplicity(m, L) * X[m];
            });
        if (in[1]->requires_grad) {
          auto g_w = lno::detail::cgrad_of(*in[1]);
          CRowMatrix gWm(eci, eco);
          for (std::size_t m = 0; m < M; ++m) {
            gWm.noalias() = CConstRowMap(A->data() + m * B * ci, eB, eci).adjoint() *
                            CConstRowMap(gY.data() + m * B * co, eB, eco);
            for (std::size_t i = 0; i < ci; ++i) {
              for (std::size_t j = 0; j < co; ++j) {
                g_w[(i * co + j) * M + m] += gWm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
              }
            }
          }
        }
        if (in[0]->requires_grad) {
          std::vector<cplx> gA(M * B * ci);
          for (std::size_t m = 0; m < M; ++m) {
            CRowMap(gA.data() + m * B * ci, eB, eci).noalias() =
                CConstRowMap(gY.data() + m * B * co, eB, eco) *
                CConstRowMap(Wm->data() + m * ci * co, eci, eco).adjoint();
          }
          auto g_v = lno::detail::grad_of(*in[0]);
          const double inv = 1.0 / static_cast<double>(L);
          transforms::inverse_real_batch(
              B * ci, L,
              [&](std::size_t s, std::span<cplx> X) {
                const std::size_t b = s / ci, i = s % ci;
                std::fill(X.begin(), X.end(), cplx{});
                for (std::size_t m = 0; m < M; ++m) X[m] = gA[(m * B + b) * ci + i];
              },
              [&](std::size_t s, std::span<const double> x) {
                const std::size_t b = s / ci, i = s % ci;
                for (std::size_t k = 0; k < L; ++k) g_v[(b * L + k) * ci + i] += x[k] * inv;
              });
        }
      });
  return out;
}

// v[b, x, t, i] -> u[b, x, t, j]. The partial transforms are dense products
// with truncated DFT matrices since the grids are small and not powers of two.
inline Tensor spectral_conv_2d(const SpectralWeights2D& w, const Tensor& v) {
  w.validate();
  if (v.is_complex() || v.rank() != 4 || v.extent(3) != w.in_channels()) {
    throw DimensionError("spectral_conv_2d: input " + to_string(v.shape()) + " does not match weights with " +
                         std::to_string(w.in_channels()) + " input channels");
  }
  const std::size_t B = v.extent(0), Lx = v.extent(1), Lt = v.extent(2), ci = w.in_channels(),
                    co = w.out_channels(), Mx = w.modes_x(), Mt = w.modes_t();
  if (Mx > available_modes(Lx) || Mt > available_modes(Lt)) {
    throw ConfigError("spectral_conv_2d: modes " + std::to_string(Mx) + " x " + std::to_string(Mt) +
                      " exceed the " + std::to_string(available_modes(Lx)) + " x " +
                      std::to_string(available_modes(Lt)) + " available on a " + std::to_string(Lx) + " x " +
                      std::to_string(Lt) + " grid");
  }

  struct Plan {
    std::size_t B, Lx, Lt, ci, co, Mx, Mt, Qx;
    std::vector<std::size_t> kx;      // retained x rows
    std::vector<std::size_t> source;  // weight row for each retained row, offset by Mx for the negative corner
    CMatrix Tx, Tt;                   // analysis [Qx x Lx], [Lt x Mt]
    CMatrix Sx, St;                   // synthesis [Lx x Qx], [Mt x Lt]
    std::vector<double> mult;         // per kt
    std::vector<cplx> A;              // [Q][B x ci]
    std::vector<cplx> W;              // [Q][ci x co]
  };
  auto p = std::make_shared<Plan>();
  *p = Plan{B, Lx, Lt, ci, co, Mx, Mt, 0, {}, {}, {}, {}, {}, {}, {}, {}, {}};
  for (std::size_t r = 0; r < Mx; ++r) {
    p->kx.push_back(r);
    p->source.push_back(r);
  }
  for (std::size_t r = 0; r < Mx; ++r) {
    const std::size_t k = Lx - Mx + r;
    if (k >= Mx) {
      p->kx.push_back(k);
      p->source.push_back(Mx + r);
    }
  }
  const std::size_t Qx = p->Qx = p->kx.size();
  const auto& px = transforms::DftPlan::get(Lx);
  const auto& pt = transforms::DftPlan::get(Lt);
  p->Tx.resize(static_cast<Eigen::Index>(Qx), static_cast<Eigen::Index>(Lx));
  p->Sx.resize(static_cast<Eigen::Index>(Lx), static_cast<Eigen::Index>(Qx));
  for (std::size_t q = 0; q < Qx; ++q) {
    for (std::size_t x = 0; x < Lx; ++x) {
      p->Tx(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(x)) =
          px.root(p->kx[q] * x % Lx, -1) / static_cast<double>(Lx);
      p->Sx(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(q)) = px.root(p->kx[q] * x % Lx, +1);
    }
  }
  p->Tt.resize(static_cast<Eigen::Index>(Lt), static_cast<Eigen::Index>(Mt));
  p->St.resize(static_cast<Eigen::Index>(Mt), static_cast<Eigen::Index>(Lt));
  for (std::size_t k = 0; k < Mt; ++k) {
    p->mult.push_back(half_spectrum_multiplicity(k, Lt));
    for (std::size_t t = 0; t < Lt; ++t) {
      p->Tt(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = pt.root(k * t % Lt, -1) / static_cast<double>(Lt);
      p->St(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = pt.root(k * t % Lt, +1);
    }
  }

  const std::size_t Q = Qx * Mt;
  const auto eB = static_cast<Eigen::Index>(B), eLx = static_cast<Eigen::Index>(Lx),
             eLt = static_cast<Eigen::Index>(Lt), eQx = static_cast<Eigen::Index>(Qx),
             eci = static_cast<Eigen::Index>(ci), eco = static_cast<Eigen::Index>(co);
  p->A.resize(Q * B * ci);
  CMatrix Vi(static_cast<Eigen::Index>(B * Lx), eLt);
  for (std::size_t i = 0; i < ci; ++i) {
    for (std::size_t r = 0; r < B * Lx; ++r) {
      for (std::size_t t = 0; t < Lt; ++t) Vi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = v.values()[(r * Lt + t) * ci + i];
    }
    const CMatrix P = Vi * p->Tt;  // [B*Lx x Mt]
    for (std::size_t b = 0; b < B; ++b) {
      const CMatrix Ab = p->Tx * P.middleRows(static_cast<Eigen::Index>(b * Lx), eLx);  // [Qx x Mt]
      for (std::size_t q = 0; q < Qx; ++q) {
        for (std::size_t k = 0; k < Mt; ++k) {
          p->A[((q * Mt + k) * B + b) * ci + i] = Ab(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k));
        }
      }
    }
  }
  p->W.resize(Q * ci * co);
  const auto wp = w.positive.cvalues(), wn = w.negative.cvalues();
  for (std::size_t q = 0; q < Qx; ++q) {
    const bool neg = p->source[q] >= Mx;
    const std::size_t r = neg ? p->source[q] - Mx : p->source[q];
    const auto src = neg ? wn : wp;
    for (std::size_t k = 0; k < Mt; ++k) {
      for (std::size_t i = 0; i < ci; ++i) {
        for (std::size_t j = 0; j < co; ++j) {
          p->W[((q * Mt + k) * ci + i) * co + j] = src[((i * co + j) * Mx + r) * Mt + k];
        }
      }
    }
  }

  std::vector<cplx> Y(Q * B * co);
  for (std::size_t m = 0; m < Q; ++m) {
    CRowMap(Y.data() + m * B * co, eB, eco).noalias() =
        CConstRowMap(p->A.data() + m * B * ci, eB, eci) * CConstRowMap(p->W.data() + m * ci * co, eci, eco);
  }

  Tensor out = Tensor::zeros({B, Lx, Lt, co});
  auto u = out.mutable_values();
  CMatrix Z(static_cast<Eigen::Index>(B * Qx), static_cast<Eigen::Index>(Mt));
  for (std::size_t j = 0; j < co; ++j) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t q = 0; q < Qx; ++q) {
        for (std::size_t k = 0; k < Mt; ++k) {
          Z(static_cast<Eigen::Index>(b * Qx + q), static_cast<Eigen::Index>(k)) = p->mult[k] * Y[((q * Mt + k) * B + b) * co + j];
        }
      }
    }
    const CMatrix R = Z * p->St;  // [B*Qx x Lt]
    for (std::size_t b = 0; b < B; ++b) {
      const CMatrix Ub = p->Sx * R.middleRows(static_cast<Eigen::Index>(b * Qx), eQx);
      for (std::size_t x = 0; x < Lx; ++x) {
        for (std::size_t t = 0; t < Lt; ++t) {
          u[((b * Lx + x) * Lt + t) * co + j] = Ub(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(t)).real();
        }
      }
    }
  }
  lno::detail::check_finite(out.values(), "spectral_conv_2d");

  lno::detail::record(
      out, "spectral_conv_2d", {v, w.positive, w.negative},
      [p](const lno::detail::Storage& o, std::span<const lno::detail::StoragePtr> in) {
        const std::size_t B = p->B, Lx = p->Lx, Lt = p->Lt, ci = p->ci, co = p->co, Mx = p->Mx, Mt = p->Mt,
                          Qx = p->Qx, Q = Qx * Mt;
        const auto eB = static_cast<Eigen::Index>(B), eLx = static_cast<Eigen::Index>(Lx),
                   eLt = static_cast<Eigen::Index>(Lt), eQx = static_cast<Eigen::Index>(Qx),
                   eci = static_cast<Eigen::Index>(ci), eco = static_cast<Eigen::Index>(co);
        const CMatrix SxH = p->Sx.adjoint();  // [Qx x Lx]
        const CMatrix StH = p->St.adjoint();  // [Lt x Mt]
        std::vector<cplx> gY(Q * B * co);
        CMatrix G(static_cast<Eigen::Index>(B * Lx), eLt);
        for (std::size_t j = 0; j < co; ++j) {
          for (std::size_t r = 0; r < B * Lx; ++r) {
            for (std::size_t t = 0; t < Lt; ++t) G(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = o.grad_re[(r * Lt + t) * co + j];
          }
          const CMatrix P = G * StH;  // [B*Lx x Mt]
          for (std::size_t b = 0; b < B; ++b) {
            const CMatrix gZ = SxH * P.middleRows(static_cast<Eigen::Index>(b * Lx), eLx);  // [Qx x Mt]
            for (std::size_t q = 0; q < Qx; ++q) {
              for (std::size_t k = 0; k < Mt; ++k) {
                gY[((q * Mt + k) * B + b) * co + j] = p->mult[k] * gZ(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(k));
              }
            }
          }
        }
        if (in[1]->requires_grad || in[2]->requires_grad) {
          std::span<cplx> g_pos, g_neg;
          if (in[1]->requires_grad) g_pos = lno::detail::cgrad_of(*in[1]);
          if (in[2]->requires_grad) g_neg = lno::detail::cgrad_of(*in[2]);
          CRowMatrix gW(eci, eco);
          for (std::size_t q = 0; q < Qx; ++q) {
            const bool neg = p->source[q] >= Mx;
            const std::size_t r = neg ? p->source[q] - Mx : p->source[q];
            const std::span<cplx> dst = neg ? g_neg : g_pos;
            if (dst.empty()) continue;
            for (std::size_t k = 0; k < Mt; ++k) {
              const std::size_t m = q * Mt + k;
              gW.noalias() = CConstRowMap(p->A.data() + m * B * ci, eB, eci).adjoint() *
                             CConstRowMap(gY.data() + m * B * co, eB, eco);
              // A self-conjugate mode of a real signal only reaches the output
              // through Re(W); the dense transforms leave roundoff in Im.
              if (self_conjugate(p->kx[q], Lx) && self_conjugate(k, Lt)) gW.imag().setZero();
              for (std::size_t i = 0; i < ci; ++i) {
                for (std::size_t j = 0; j < co; ++j) {
                  dst[((i * co + j) * Mx + r) * Mt + k] += gW(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                }
              }
            }
          }
        }
        if (in[0]->requires_grad) {
          std::vector<cplx> gA(Q * B * ci);
          for (std::size_t m = 0; m < Q; ++m) {
            CRowMap(gA.data() + m * B * ci, eB, eci).noalias() =
                CConstRowMap(gY.data() + m * B * co, eB, eco) *
                CConstRowMap(p->W.data() + m * ci * co, eci, eco).adjoint();
          }
          auto g_v = lno::detail::grad_of(*in[0]);
          const CMatrix TxH = p->Tx.adjoint();  // [Lx x Qx]
          const CMatrix TtH = p->Tt.adjoint();  // [Mt x Lt]
          CMatrix gAi(static_cast<Eigen::Index>(B * Qx), static_cast<Eigen::Index>(Mt));
          for (std::size_t i = 0; i < ci; ++i) {
            for (std::size_t b = 0; b < B; ++b) {
              for (std::size_t q = 0; q < Qx; ++q) {
                for (std::size_t k = 0; k < Mt; ++k) {
                  gAi(static_cast<Eigen::Index>(b * Qx + q), static_cast<Eigen::Index>(k)) = gA[((q * Mt + k) * B + b) * ci + i];
                }
              }
            }
            const CMatrix R = gAi * TtH;  // [B*Qx x Lt]
            for (std::size_t b = 0; b < B; ++b) {
              const CMatrix gv = TxH * R.middleRows(static_cast<Eigen::Index>(b * Qx), eQx);
              for (std::size_t x = 0; x < Lx; ++x) {
                for (std::size_t t = 0; t < Lt; ++t) {
                  g_v[((b * Lx + x) * Lt + t) * ci + i] += gv(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(t)).real();
                }
              }
            }
          }
        }
      });
  return out;
}

}  // namespace lno::fourier
