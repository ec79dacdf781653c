#pragma once

// Laplace layer: a convolution kernel whose transfer function is a sum of
// trainable poles and residues,
//
//   K(s) = sum_n beta_n / (s - mu_n),
//
// applied to an input expanded as a Fourier series v(t) = sum_l alpha_l e^{i w_l t}.
// The product K(s)V(s) splits by the residue theorem into a transient part at
// the system poles and a steady part at the excitation poles i*w_l:
//
//   gamma_n  = beta_n  * sum_l alpha_l / (mu_n - i w_l)
//   lambda_l = alpha_l * K(i w_l)
//   u(t)     = Re[ sum_n gamma_n e^{mu_n t} + sum_l lambda_l e^{i w_l t} ]
//
// Poles and residues are stored per (input channel, output channel) pair and
// the response is summed over input channels.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "lno/random.hpp"
#include "lno/tensor.hpp"
#include "lno/transforms.hpp"

namespace lno::laplace {

using CMatrix = Eigen::MatrixXcd;
using CRowMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kCollisionTolerance = 1e-12;
inline constexpr cplx kI{0.0, 1.0};

struct PoleResidueKernel1D {
  Tensor poles;     // complex [c_in, c_out, N]
  Tensor residues;  // complex [c_in, c_out, N]

  std::size_t in_channels() const { return poles.extent(0); }
  std::size_t out_channels() const { return poles.extent(1); }
  std::size_t pole_count() const { return poles.extent(2); }

  cplx pole(std::size_t i, std::size_t j, std::size_t n) const {
    return poles.cvalues()[(i * out_channels() + j) * pole_count() + n];
  }
  cplx residue(std::size_t i, std::size_t j, std::size_t n) const {
    return residues.cvalues()[(i * out_channels() + j) * pole_count() + n];
  }

  static PoleResidueKernel1D from_values(std::size_t c_in, std::size_t c_out, std::size_t n,
                                         std::vector<cplx> poles, std::vector<cplx> residues) {
    PoleResidueKernel1D k{Tensor::complex({c_in, c_out, n}, std::move(poles)),
                          Tensor::complex({c_in, c_out, n}, std::move(residues))};
    k.validate();
    return k;
  }

  // Re(mu) ~ U(-1, -0.05), Im(mu) ~ U(-1, 1) * pi * N / T,
  // Re/Im(beta) ~ U(-1, 1) / (c_in * N).
  static PoleResidueKernel1D initialize(std::size_t c_in, std::size_t c_out, std::size_t n,
                                        double period, Rng& rng) {
    const std::size_t count = c_in * c_out * n;
    std::vector<cplx> mu(count), beta(count);
    const double im_scale = std::numbers::pi * static_cast<double>(n) / period;
    for (auto& m : mu) {
      const double re = rng.uniform(-1.0, -0.05);
      m = {re, rng.uniform(-1.0, 1.0) * im_scale};
    }
    const double scale = 1.0 / static_cast<double>(c_in * n);
    for (auto& b : beta) {
      const double re = rng.uniform(-1.0, 1.0) * scale;
      b = {re, rng.uniform(-1.0, 1.0) * scale};
    }
    return from_values(c_in, c_out, n, std::move(mu), std::move(beta));
  }

  void validate() const {
    if (!poles.is_complex() || !residues.is_complex() || poles.rank() != 3 ||
        poles.shape() != residues.shape() || pole_count() == 0) {
      throw DimensionError("PoleResidueKernel1D: poles/residues must be complex [c_in, c_out, N]");
    }
    lno::detail::check_finite(poles.cvalues(), "PoleResidueKernel1D poles");
  }
};

struct PoleResidueKernel2D {
  Tensor poles_x;   // complex [c_in, c_out, N_x]
  Tensor poles_t;   // complex [c_in, c_out, N_t]
  Tensor residues;  // complex [c_in, c_out, N_x, N_t]

  std::size_t in_channels() const { return residues.extent(0); }
  std::size_t out_channels() const { return residues.extent(1); }
  std::size_t poles_x_count() const { return residues.extent(2); }
  std::size_t poles_t_count() const { return residues.extent(3); }

  static PoleResidueKernel2D from_values(std::size_t c_in, std::size_t c_out, std::size_t nx,
                                         std::size_t nt, std::vector<cplx> px, std::vector<cplx> pt,
                                         std::vector<cplx> beta) {
    PoleResidueKernel2D k{Tensor::complex({c_in, c_out, nx}, std::move(px)),
                          Tensor::complex({c_in, c_out, nt}, std::move(pt)),
                          Tensor::complex({c_in, c_out, nx, nt}, std::move(beta))};
    k.validate();
    return k;
  }

  static PoleResidueKernel2D initialize(std::size_t c_in, std::size_t c_out, std::size_t nx,
                                        std::size_t nt, double period_x, double period_t, Rng& rng) {
    auto draw_poles = [&](std::size_t n, double period) {
      std::vector<cplx> mu(c_in * c_out * n);
      const double im_scale = std::numbers::pi * static_cast<double>(n) / period;
      for (auto& m : mu) {
        const double re = rng.uniform(-1.0, -0.05);
        m = {re, rng.uniform(-1.0, 1.0) * im_scale};
      }
      return mu;
    };
    std::vector<cplx> px = draw_poles(nx, period_x);
    std::vector<cplx> pt = draw_poles(nt, period_t);
    std::vector<cplx> beta(c_in * c_out * nx * nt);
    const double scale = 1.0 / static_cast<double>(c_in * nx * nt);
    for (auto& b : beta) {
      const double re = rng.uniform(-1.0, 1.0) * scale;
      b = {re, rng.uniform(-1.0, 1.0) * scale};
    }
    return from_values(c_in, c_out, nx, nt, std::move(px), std::move(pt), std::move(beta));
  }

  void validate() const {
    if (!poles_x.is_complex() || !poles_t.is_complex() || !residues.is_complex() ||
        residues.rank() != 4 || poles_x.rank() != 3 || poles_t.rank() != 3 ||
        poles_x.extent(0) != residues.extent(0) || poles_x.extent(1) != residues.extent(1) ||
        poles_x.extent(2) != residues.extent(2) || poles_t.extent(0) != residues.extent(0) ||
        poles_t.extent(1) != residues.extent(1) || poles_t.extent(2) != residues.extent(3)) {
      throw DimensionError("PoleResidueKernel2D: inconsistent pole/residue shapes");
    }
    lno::detail::check_finite(poles_x.cvalues(), "PoleResidueKernel2D poles_x");
    lno::detail::check_finite(poles_t.cvalues(), "PoleResidueKernel2D poles_t");
  }
};

namespace detail {

inline std::string pair_label(std::size_t i, std::size_t j, std::size_t n) {
  return "(in " + std::to_string(i) + ", out " + std::to_string(j) + ", pole " + std::to_string(n) + ")";
}

inline cplx checked_inverse(cplx pole, cplx s, std::size_t i, std::size_t j, std::size_t n) {
  const cplx d = pole - s;
  if (std::abs(d) < kCollisionTolerance) {
    throw PoleCollisionError("pole collision at " + pair_label(i, j, n), i, j, n);
  }
  return 1.0 / d;
}

// D[n, l] = 1 / (mu_n - i w_l) for one channel pair.
inline CMatrix pole_frequency_matrix(std::span<const cplx> poles, std::span<const double> omegas,
                                     std::size_t i, std::size_t j) {
  CMatrix d(static_cast<Eigen::Index>(poles.size()), static_cast<Eigen::Index>(omegas.size()));
  for (std::size_t n = 0; n < poles.size(); ++n) {
    for (std::size_t l = 0; l < omegas.size(); ++l) {
      d(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(l)) =
          checked_inverse(poles[n], kI * omegas[l], i, j, n);
    }
  }
  return d;
}

// E[n, k] = exp(mu_n t_k); overflow is reported against the pole.
inline CMatrix pole_exponentials(std::span<const cplx> poles, std::span<const double> times,
                                 std::size_t i, std::size_t j) {
  CMatrix e(static_cast<Eigen::Index>(poles.size()), static_cast<Eigen::Index>(times.size()));
  for (std::size_t n = 0; n < poles.size(); ++n) {
    for (std::size_t k = 0; k < times.size(); ++k) {
      const cplx v = std::exp(poles[n] * times[k]);
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
        throw NonFiniteError("exp(mu t) overflows for pole " + pair_label(i, j, n) + " with mu = (" +
                             std::to_string(poles[n].real()) + ", " + std::to_string(poles[n].imag()) + ")");
      }
      e(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return e;
}

// Fourier synthesis matrix F[l, k] = exp(i w_l t_k) on the native grid.
inline CMatrix synthesis_matrix(std::size_t L) {
  const auto& plan = transforms::DftPlan::get(L);
  CMatrix f(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(L));
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < L; ++k) f(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = plan.root(l * k % L, +1);
  }
  return f;
}

inline std::vector<double> omegas(std::size_t L, double period) {
  std::vector<double> w(L);
  for (std::size_t k = 0; k < L; ++k) w[k] = transforms::angular_frequency(k, L, period);
  return w;
}

inline std::vector<double> grid_times(std::size_t L, double period) {
  std::vector<double> t(L);
  for (std::size_t k = 0; k < L; ++k) t[k] = static_cast<double>(k) * period / static_cast<double>(L);
  return t;
}

// Accumulates dL/dmu from dL/dD (D = 1/(mu - iw), dD/dmu = -D^2) and from
// dL/dE (E = exp(mu t), dE/dmu = t E), row n = pole n.
inline void accumulate_pole_gradient(std::span<cplx> grad_poles, const CMatrix& d, const CMatrix& grad_d,
                                     const CMatrix& e, const CMatrix& grad_e, std::span<const double> times) {
  for (Eigen::Index n = 0; n < d.rows(); ++n) {
    cplx acc{};
    for (Eigen::Index l = 0; l < d.cols(); ++l) acc += std::conj(-d(n, l) * d(n, l)) * grad_d(n, l);
    for (Eigen::Index k = 0; k < e.cols(); ++k) {
      acc += std::conj(times[static_cast<std::size_t>(k)] * e(n, k)) * grad_e(n, k);
    }
    grad_poles[static_cast<std::size_t>(n)] += acc;
  }
}

}  // namespace detail

// K_ij(s) = sum_n beta_ijn / (s - mu_ijn), returned as [c_in x c_out].
inline CMatrix transfer_at(const PoleResidueKernel1D& kernel, cplx s) {
  const std::size_t ci = kernel.in_channels(), co = kernel.out_channels(), n = kernel.pole_count();
  CMatrix k = CMatrix::Zero(static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(co));
  for (std::size_t i = 0; i < ci; ++i) {
    for (std::size_t j = 0; j < co; ++j) {
      cplx acc{};
      for (std::size_t p = 0; p < n; ++p) {
        acc += kernel.residue(i, j, p) * -detail::checked_inverse(kernel.pole(i, j, p), s, i, j, p);
      }
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
    }
  }
  return k;
}

// Transient residues gamma[i][j][n] = beta_ijn * V_i(mu_ijn) for one sample;
// `inputs` holds the decomposition of every input channel.
inline std::vector<cplx> transient_residues(const PoleResidueKernel1D& kernel,
                                            std::span<const transforms::FourierDecomposition> inputs) {
  const std::size_t ci = kernel.in_channels(), co = kernel.out_channels(), n = kernel.pole_count();
  if (inputs.size() != ci) throw DimensionError("transient_residues: expected one decomposition per input channel");
  std::vector<cplx> gamma(ci * co * n);
  for (std::size_t i = 0; i < ci; ++i) {
    const auto& d = inputs[i];
    for (std::size_t j = 0; j < co; ++j) {
      for (std::size_t p = 0; p < n; ++p) {
        const cplx mu = kernel.pole(i, j, p);
        cplx v{};
        for (std::size_t l = 0; l < d.size(); ++l) {
          v += d.coefficients[l] * detail::checked_inverse(mu, kI * d.omega(l), i, j, p);
        }
        gamma[(i * co + j) * n + p] = kernel.residue(i, j, p) * v;
      }
    }
  }
  return gamma;
}

// Steady residues lambda[j][l] = sum_i alpha_il * K_ij(i w_l) for one sample.
inline std::vector<cplx> steady_residues(const PoleResidueKernel1D& kernel,
                                         std::span<const transforms::FourierDecomposition> inputs) {
  const std::size_t ci = kernel.in_channels(), co = kernel.out_channels();
  if (inputs.size() != ci) throw DimensionError("steady_residues: expected one decomposition per input channel");
  const std::size_t L = inputs.front().size();
  std::vector<cplx> lambda(co * L);
  for (std::size_t l = 0; l < L; ++l) {
    const CMatrix k = transfer_at(kernel, kI * inputs.front().omega(l));
    for (std::size_t i = 0; i < ci; ++i) {
      for (std::size_t j = 0; j < co; ++j) {
        lambda[j * L + l] += inputs[i].coefficients[l] * k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  return lambda;
}

// u[b, k, j] for v[b, k, i] on the grid t_k = k T / L. Differentiable with
// respect to the poles, the residues and v.
inline Tensor forward_1d(const PoleResidueKernel1D& kernel, const Tensor& v, double period) {
  kernel.validate();
  if (v.is_complex() || v.rank() != 3 || v.extent(2) != kernel.in_channels()) {
    throw DimensionError("laplace forward_1d: input " + to_string(v.shape()) + " does not match kernel with " +
                         std::to_string(kernel.in_channels()) + " input channels");
  }
  if (v.extent(1) < 2) throw ContractError("laplace forward_1d: need at least 2 grid points");
  if (!(period > 0.0)) throw ContractError("laplace forward_1d: period must be positive");

  const std::size_t B = v.extent(0), L = v.extent(1), ci = kernel.in_channels(), co = kernel.out_channels(),
                    N = kernel.pole_count();
  const auto eB = static_cast<Eigen::Index>(B), eL = static_cast<Eigen::Index>(L);
  const std::vector<double> w = detail::omegas(L, period);
  const std::vector<double> t = detail::grid_times(L, period);

  // Fourier coefficients per input channel, [B x L] each.
  auto alphas = std::make_shared<std::vector<CRowMatrix>>(ci, CRowMatrix(eB, eL));
  std::vector<cplx> row(L);
  for (std::size_t i = 0; i < ci; ++i) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < L; ++k) row[k] = v.values()[(b * L + k) * ci + i];
      transforms::dft(row, -1);
      for (std::size_t k = 0; k < L; ++k) (*alphas)[i](static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = row[k] / static_cast<double>(L);
    }
  }

  const auto poles = kernel.poles.cvalues();
  const auto res = kernel.residues.cvalues();
  Tensor out = Tensor::zeros({B, L, co});
  auto u = out.mutable_values();
  for (std::size_t j = 0; j < co; ++j) {
    CRowMatrix transient = CRowMatrix::Zero(eB, eL);
    CRowMatrix steady = CRowMatrix::Zero(eB, eL);
    for (std::size_t i = 0; i < ci; ++i) {
      const std::size_t off = (i * co + j) * N;
      const auto mu = poles.subspan(off, N);
      const CMatrix D = detail::pole_frequency_matrix(mu, w, i, j);
      const CMatrix E = detail::pole_exponentials(mu, t, i, j);
      const Eigen::Map<const Eigen::VectorXcd> beta(res.data() + off, static_cast<Eigen::Index>(N));
      const CMatrix V = (*alphas)[i] * D.transpose();                      // [B x N]
      const CMatrix gamma = V * beta.asDiagonal();                         // [B x N]
      transient.noalias() += gamma * E;                                    // [B x L]
      const Eigen::RowVectorXcd K = -(beta.transpose() * D);               // [1 x L]
      steady += ((*alphas)[i].array().rowwise() * K.array()).matrix();
    }
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t k = 0; k < L; ++k) row[k] = steady(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k));
      transforms::dft(row, +1);
      for (std::size_t k = 0; k < L; ++k) {
        u[(b * L + k) * co + j] = (row[k] + transient(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k))).real();
      }
    }
  }
  lno::detail::check_finite(out.values(), "laplace forward_1d");

  lno::detail::record(
      out, "laplace_1d", {v, kernel.poles, kernel.residues},
      [alphas, B, L, ci, co, N, w, t](const lno::detail::Storage& o, std::span<const lno::detail::StoragePtr> in) {
        const auto eB = static_cast<Eigen::Index>(B), eL = static_cast<Eigen::Index>(L);
        const auto& poles = in[1]->cx;
        const auto& res = in[2]->cx;
        std::span<cplx> g_poles, g_res;
        if (in[1]->requires_grad) g_poles = lno::detail::cgrad_of(*in[1]);
        if (in[2]->requires_grad) g_res = lno::detail::cgrad_of(*in[2]);
        std::vector<CRowMatrix> g_alpha(ci, CRowMatrix::Zero(eB, eL));
        std::vector<cplx> row(L);
        for (std::size_t j = 0; j < co; ++j) {
          CRowMatrix g_out(eB, eL);        // dL/du as complex
          CRowMatrix g_lambda(eB, eL);     // forward DFT of dL/du
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t k = 0; k < L; ++k) {
              const double gk = o.grad_re[(b * L + k) * co + j];
              g_out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = gk;
              row[k] = gk;
            }
            transforms::dft(row, -1);
            for (std::size_t k = 0; k < L; ++k) g_lambda(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = row[k];
          }
          for (std::size_t i = 0; i < ci; ++i) {
            const std::size_t off = (i * co + j) * N;
            const std::span<const cplx> mu(poles.data() + off, N);
            const CMatrix D = detail::pole_frequency_matrix(mu, w, i, j);
            const CMatrix E = detail::pole_exponentials(mu, t, i, j);
            const Eigen::Map<const Eigen::VectorXcd> beta(res.data() + off, static_cast<Eigen::Index>(N));
            const CRowMatrix& A = (*alphas)[i];
            const CMatrix V = A * D.transpose();
            const CMatrix gamma = V * beta.asDiagonal();
            const Eigen::RowVectorXcd K = -(beta.transpose() * D);

            // steady: lambda = A .* K
            g_alpha[i] += (g_lambda.array().rowwise() * K.conjugate().array()).matrix();
            const Eigen::RowVectorXcd g_K = (A.conjugate().array() * g_lambda.array()).colwise().sum().matrix();
            Eigen::VectorXcd g_beta = -(D.conjugate() * g_K.transpose());
            CMatrix g_D = -(beta.conjugate() * g_K);                     // [N x L]

            // transient: out += gamma * E
            const CMatrix g_gamma = g_out * E.adjoint();                  // [B x N]
            const CMatrix g_E = gamma.adjoint() * g_out;                  // [N x L]
            g_beta += (V.conjugate().array() * g_gamma.array()).colwise().sum().matrix().transpose();
            const CMatrix g_V = g_gamma * beta.conjugate().asDiagonal();  // [B x N]
            g_alpha[i].noalias() += g_V * D.conjugate();
            g_D.noalias() += g_V.transpose() * A.conjugate();

            if (!g_res.empty()) {
              for (std::size_t n = 0; n < N; ++n) g_res[off + n] += g_beta(static_cast<Eigen::Index>(n));
            }
            if (!g_poles.empty()) {
              detail::accumulate_pole_gradient(g_poles.subspan(off, N), D, g_D, E, g_E, t);
            }
          }
        }
        if (in[0]->requires_grad) {
          auto g_v = lno::detail::grad_of(*in[0]);
          const double inv = 1.0 / static_cast<double>(L);
          for (std::size_t i = 0; i < ci; ++i) {
            for (std::size_t b = 0; b < B; ++b) {
              for (std::size_t k = 0; k < L; ++k) row[k] = g_alpha[i](static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k));
              transforms::dft(row, +1);
              for (std::size_t k = 0; k < L; ++k) g_v[(b * L + k) * ci + i] += row[k].real() * inv;
            }
          }
        }
      });
  return out;
}

namespace detail {

// Batched 2D buffers put sample b of grid point (r, t) in column t*B + b of an
// [R x Lt*B] matrix. The same memory read as [R*B x Lt] has row r + R*b, so
// maps along r and maps along t are each a single product over the batch.
using CMap = Eigen::Map<CMatrix>;
using CConstMap = Eigen::Map<const CMatrix>;

inline CMap by_time(CMatrix& m, std::size_t batch) {
  return {m.data(), m.rows() * static_cast<Eigen::Index>(batch), m.cols() / static_cast<Eigen::Index>(batch)};
}
inline CConstMap by_time(const CMatrix& m, std::size_t batch) {
  return {m.data(), m.rows() * static_cast<Eigen::Index>(batch), m.cols() / static_cast<Eigen::Index>(batch)};
}

// Sum of the B stacked [rows x cols] blocks of a [rows*B x cols] matrix.
template <class M>
CMatrix fold_batch(const M& m, Eigen::Index rows, std::size_t batch) {
  CMatrix acc = m.topRows(rows);
  for (std::size_t b = 1; b < batch; ++b) acc += m.middleRows(static_cast<Eigen::Index>(b) * rows, rows);
  return acc;
}

// Per channel pair matrices shared by the forward and backward passes.
struct PairTerms2D {
  CMatrix Dx, Dt, Ex, Et, Kt, Kx, Kd;
};

inline PairTerms2D pair_terms_2d(std::span<const cplx> mux, std::span<const cplx> mut,
                                 const Eigen::Ref<const CMatrix>& beta, std::span<const double> wx,
                                 std::span<const double> wt, std::span<const double> x, std::span<const double> t,
                                 std::size_t i, std::size_t j) {
  PairTerms2D p;
  p.Dx = pole_frequency_matrix(mux, wx, i, j);
  p.Dt = pole_frequency_matrix(mut, wt, i, j);
  p.Ex = pole_exponentials(mux, x, i, j);
  p.Et = pole_exponentials(mut, t, i, j);
  p.Kt = -(beta * p.Dt);                   // [Nx x Lt]
  p.Kx = -(p.Dx.transpose() * beta);       // [Lx x Nt]
  p.Kd = -(p.Dx.transpose() * p.Kt);       // [Lx x Lt] = Dx^T beta Dt
  return p;
}

}  // namespace detail

// u[b, x, t, j] for v[b, x, t, i] on the grid x_k = k Tx / Lx, t_k = k Tt / Lt,
// using the separable kernel K(sx, st) = sum_pq beta_pq / ((sx - mux_p)(st - mut_q)).
// The response is the sum of four residue families: (system, system),
// (system, excitation), (excitation, system) and (excitation, excitation).
//
// With Sx = Dx alpha and St = alpha Dt^T per sample,
//   Z = Ex^T (beta .* (Sx Dt^T)) Et + Ex^T (Sx .* Kt) Ft
//     + Fx^T ((St .* Kx) Et) + Fx^T (alpha .* Kd) Ft,   u = Re Z,
// where F are the synthesis matrices on the native grids.
inline Tensor forward_2d(const PoleResidueKernel2D& kernel, const Tensor& v, double period_x, double period_t) {
  kernel.validate();
  if (v.is_complex() || v.rank() != 4 || v.extent(3) != kernel.in_channels()) {
    throw DimensionError("laplace forward_2d: input " + to_string(v.shape()) + " does not match kernel with " +
                         std::to_string(kernel.in_channels()) + " input channels");
  }
  if (v.extent(1) < 2 || v.extent(2) < 2) throw ContractError("laplace forward_2d: need at least 2 points per axis");
  if (!(period_x > 0.0) || !(period_t > 0.0)) throw ContractError("laplace forward_2d: periods must be positive");

  struct Shared {
    std::size_t B, Lx, Lt, ci, co, Nx, Nt;
    std::vector<double> wx, wt, x, t;
    CMatrix Fx, Ft;                 // synthesis matrices [freq x grid], symmetric
    std::vector<CMatrix> alpha;     // per input channel, [Lx x Lt*B]
  };
  auto sh = std::make_shared<Shared>();
  sh->B = v.extent(0);
  sh->Lx = v.extent(1);
  sh->Lt = v.extent(2);
  sh->ci = kernel.in_channels();
  sh->co = kernel.out_channels();
  sh->Nx = kernel.poles_x_count();
  sh->Nt = kernel.poles_t_count();
  sh->wx = detail::omegas(sh->Lx, period_x);
  sh->wt = detail::omegas(sh->Lt, period_t);
  sh->x = detail::grid_times(sh->Lx, period_x);
  sh->t = detail::grid_times(sh->Lt, period_t);
  sh->Fx = detail::synthesis_matrix(sh->Lx);
  sh->Ft = detail::synthesis_matrix(sh->Lt);

  const std::size_t B = sh->B, Lx = sh->Lx, Lt = sh->Lt, ci = sh->ci, co = sh->co, Nx = sh->Nx, Nt = sh->Nt;
  const auto eB = static_cast<Eigen::Index>(B);
  const auto eLx = static_cast<Eigen::Index>(Lx), eLt = static_cast<Eigen::Index>(Lt);
  const auto wide = static_cast<Eigen::Index>(Lt * B);
  const double inv_n = 1.0 / static_cast<double>(Lx * Lt);

  // alpha = conj(Fx) v conj(Ft) / (Lx Lt), one product per axis for the whole batch.
  sh->alpha.resize(ci);
  {
    const CMatrix FxC = sh->Fx.conjugate() * inv_n, FtC = sh->Ft.conjugate();
    CMatrix grid(eLx, wide);
    for (std::size_t i = 0; i < ci; ++i) {
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t xk = 0; xk < Lx; ++xk) {
          for (std::size_t tk = 0; tk < Lt; ++tk) {
            grid(static_cast<Eigen::Index>(xk), static_cast<Eigen::Index>(tk * B + b)) =
                v.values()[((b * Lx + xk) * Lt + tk) * ci + i];
          }
        }
      }
      CMatrix partial = FxC * grid;
      sh->alpha[i].resize(eLx, wide);
      detail::by_time(sh->alpha[i], B).noalias() = detail::by_time(partial, B) * FtC;
    }
  }

  Tensor out = Tensor::zeros({B, Lx, Lt, co});
  auto u = out.mutable_values();
  const auto px = kernel.poles_x.cvalues(), pt = kernel.poles_t.cvalues(), res = kernel.residues.cvalues();
  const CMatrix FxT = sh->Fx.transpose();
  // Summing over input channels is one product per family: [Ex_1^T .. Ex_ci^T] [Y_1; ..; Y_ci].
  CMatrix Exs(static_cast<Eigen::Index>(ci * Nx), eLx), Ys(static_cast<Eigen::Index>(ci * Nx), wide);
  CMatrix Ets(static_cast<Eigen::Index>(ci * Nt), eLt), Ccs(eLx * eB, static_cast<Eigen::Index>(ci * Nt));
  for (std::size_t j = 0; j < co; ++j) {
    CMatrix H4 = CMatrix::Zero(eLx * eB, eLt);
    for (std::size_t i = 0; i < ci; ++i) {
      const std::size_t p = i * co + j;
      const Eigen::Map<const CRowMatrix> beta(res.data() + p * Nx * Nt, static_cast<Eigen::Index>(Nx),
                                              static_cast<Eigen::Index>(Nt));
      const auto k = detail::pair_terms_2d(px.subspan(p * Nx, Nx), pt.subspan(p * Nt, Nt), beta, sh->wx, sh->wt,
                                           sh->x, sh->t, i, j);
      const CMatrix& A = sh->alpha[i];
      const auto At = detail::by_time(A, B);
      const auto rx = static_cast<Eigen::Index>(i * Nx), rt = static_cast<Eigen::Index>(i * Nt);
      const auto eNx = static_cast<Eigen::Index>(Nx), eNt = static_cast<Eigen::Index>(Nt);

      CMatrix Sx = k.Dx * A;                              // [Nx x Lt*B]
      const auto Sxt = detail::by_time(Sx, B);            // [Nx*B x Lt]
      const CMatrix Aa = ((Sxt * k.Dt.transpose()).array() * beta.replicate(eB, 1).array()).matrix();
      CMatrix Y(eNx, wide);
      auto Yt = detail::by_time(Y, B);
      Yt.noalias() = Aa * k.Et;
      Yt.noalias() += (Sxt.array() * k.Kt.replicate(eB, 1).array()).matrix() * sh->Ft;
      Ys.middleRows(rx, eNx) = Y;
      Exs.middleRows(rx, eNx) = k.Ex;

      Ccs.middleCols(rt, eNt) = ((At * k.Dt.transpose()).array() * k.Kx.replicate(eB, 1).array()).matrix();
      Ets.middleRows(rt, eNt) = k.Et;
      H4 += (At.array() * k.Kd.replicate(eB, 1).array()).matrix();
    }
    CMatrix W(eLx, wide);
    auto Wt = detail::by_time(W, B);
    Wt.noalias() = Ccs * Ets;
    Wt.noalias() += H4 * sh->Ft;
    CMatrix H = Exs.transpose() * Ys;
    H.noalias() += FxT * W;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t xk = 0; xk < Lx; ++xk) {
        for (std::size_t tk = 0; tk < Lt; ++tk) {
          u[((b * Lx + xk) * Lt + tk) * co + j] =
              H(static_cast<Eigen::Index>(xk), static_cast<Eigen::Index>(tk * B + b)).real();
        }
      }
    }
  }
  lno::detail::check_finite(out.values(), "laplace forward_2d");

  lno::detail::record(
      out, "laplace_2d", {v, kernel.poles_x, kernel.poles_t, kernel.residues},
      [sh](const lno::detail::Storage& o, std::span<const lno::detail::StoragePtr> in) {
        const std::size_t B = sh->B, Lx = sh->Lx, Lt = sh->Lt, ci = sh->ci, co = sh->co, Nx = sh->Nx, Nt = sh->Nt;
        const auto eB = static_cast<Eigen::Index>(B);
        const auto eLx = static_cast<Eigen::Index>(Lx), eNx = static_cast<Eigen::Index>(Nx);
        const auto wide = static_cast<Eigen::Index>(Lt * B);
        const auto& px = in[1]->cx;
        const auto& pt = in[2]->cx;
        const auto& res = in[3]->cx;
        std::span<cplx> g_px, g_pt, g_res;
        if (in[1]->requires_grad) g_px = lno::detail::cgrad_of(*in[1]);
        if (in[2]->requires_grad) g_pt = lno::detail::cgrad_of(*in[2]);
        if (in[3]->requires_grad) g_res = lno::detail::cgrad_of(*in[3]);
        std::vector<CMatrix> g_alpha(ci, CMatrix::Zero(eLx, wide));
        const CMatrix FxC = sh->Fx.conjugate(), FtH = sh->Ft.adjoint();

        for (std::size_t j = 0; j < co; ++j) {
          CMatrix G(eLx, wide);   // dL/dZ
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t xk = 0; xk < Lx; ++xk) {
              for (std::size_t tk = 0; tk < Lt; ++tk) {
                G(static_cast<Eigen::Index>(xk), static_cast<Eigen::Index>(tk * B + b)) =
                    o.grad_re[((b * Lx + xk) * Lt + tk) * co + j];
              }
            }
          }
          CMatrix gW = FxC * G;
          const auto gWt = detail::by_time(gW, B);
          const CMatrix gH4 = gWt * FtH;                  // [Lx*B x Lt]

          for (std::size_t i = 0; i < ci; ++i) {
            const std::size_t p = i * co + j;
            const Eigen::Map<const CRowMatrix> beta(res.data() + p * Nx * Nt, eNx, static_cast<Eigen::Index>(Nt));
            const std::span<const cplx> mux(px.data() + p * Nx, Nx), mut(pt.data() + p * Nt, Nt);
            const auto k = detail::pair_terms_2d(mux, mut, beta, sh->wx, sh->wt, sh->x, sh->t, i, j);
            const CMatrix& A = sh->alpha[i];
            const auto At = detail::by_time(A, B);
            CMatrix& gA = g_alpha[i];
            auto gAt = detail::by_time(gA, B);

            // Recompute the forward intermediates of this pair.
            CMatrix Sx = k.Dx * A;
            const auto Sxt = detail::by_time(Sx, B);
            const CMatrix Vpq = Sxt * k.Dt.transpose();                     // [Nx*B x Nt]
            const CMatrix Aa = (Vpq.array() * beta.replicate(eB, 1).array()).matrix();
            const CMatrix Bb = (Sxt.array() * k.Kt.replicate(eB, 1).array()).matrix();
            CMatrix Y(eNx, wide);
            auto Yt = detail::by_time(Y, B);
            Yt.noalias() = Aa * k.Et;
            Yt.noalias() += Bb * sh->Ft;
            const CMatrix St = At * k.Dt.transpose();                       // [Lx*B x Nt]
            const CMatrix Cc = (St.array() * k.Kx.replicate(eB, 1).array()).matrix();

            // H += Ex^T Y
            CMatrix gY = k.Ex.conjugate() * G;
            const auto gYt = detail::by_time(gY, B);
            CMatrix gEx = Y.conjugate() * G.transpose();

            // Y = Aa Et + Bb Ft
            const CMatrix gAa = gYt * k.Et.adjoint();
            CMatrix gEt = Aa.adjoint() * gYt;
            const CMatrix gBb = gYt * FtH;

            // Aa = Vpq .* beta, Vpq = Sx Dt^T, Bb = Sx .* Kt
            CMatrix gBeta = detail::fold_batch((Vpq.conjugate().array() * gAa.array()).matrix(), eNx, B);
            const CMatrix gVpq = (gAa.array() * beta.conjugate().replicate(eB, 1).array()).matrix();
            CMatrix gSx(eNx, wide);
            auto gSxt = detail::by_time(gSx, B);
            gSxt.noalias() = gVpq * k.Dt.conjugate();
            gSxt += (gBb.array() * k.Kt.conjugate().replicate(eB, 1).array()).matrix();
            CMatrix gDt = gVpq.transpose() * Sxt.conjugate();
            const CMatrix gKt = detail::fold_batch((Sxt.conjugate().array() * gBb.array()).matrix(), eNx, B);

            // Sx = Dx A
            CMatrix gDx = gSx * A.adjoint();
            gA.noalias() += k.Dx.adjoint() * gSx;

            // W += (St .* Kx) Et
            const CMatrix gCc = gWt * k.Et.adjoint();                     // [Lx*B x Nt]
            gEt.noalias() += Cc.adjoint() * gWt;
            const CMatrix gKx = detail::fold_batch((St.conjugate().array() * gCc.array()).matrix(), eLx, B);
            const CMatrix gSt = (gCc.array() * k.Kx.conjugate().replicate(eB, 1).array()).matrix();
            gAt.noalias() += gSt * k.Dt.conjugate();
            gDt.noalias() += gSt.transpose() * At.conjugate();

            // W += (A .* Kd) Ft
            const CMatrix gKd = detail::fold_batch((At.conjugate().array() * gH4.array()).matrix(), eLx, B);
            gAt += (gH4.array() * k.Kd.conjugate().replicate(eB, 1).array()).matrix();

            // Kt = -beta Dt, Kx = -Dx^T beta, Kd = Dx^T beta Dt
            gBeta.noalias() -= gKt * k.Dt.adjoint();
            gDt.noalias() -= beta.adjoint() * gKt;
            gDx.noalias() -= beta.conjugate() * gKx.transpose();
            gBeta.noalias() -= k.Dx.conjugate() * gKx;
            gDx.noalias() += (beta * k.Dt).conjugate() * gKd.transpose();
            gBeta.noalias() += k.Dx.conjugate() * gKd * k.Dt.adjoint();
            gDt.noalias() += beta.adjoint() * k.Dx.conjugate() * gKd;

            if (!g_res.empty()) {
              for (std::size_t a = 0; a < Nx; ++a) {
                for (std::size_t c = 0; c < Nt; ++c) {
                  g_res[p * Nx * Nt + a * Nt + c] += gBeta(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
                }
              }
            }
            if (!g_px.empty()) detail::accumulate_pole_gradient(g_px.subspan(p * Nx, Nx), k.Dx, gDx, k.Ex, gEx, sh->x);
            if (!g_pt.empty()) detail::accumulate_pole_gradient(g_pt.subspan(p * Nt, Nt), k.Dt, gDt, k.Et, gEt, sh->t);
          }
        }

        if (in[0]->requires_grad) {
          // alpha = conj(Fx) v conj(Ft) / n  =>  dL/dv = Re(Fx g Ft) / n
          auto g_v = lno::detail::grad_of(*in[0]);
          const double inv = 1.0 / static_cast<double>(Lx * Lt);
          for (std::size_t i = 0; i < ci; ++i) {
            CMatrix partial(eLx, wide);
            detail::by_time(partial, B).noalias() = detail::by_time(g_alpha[i], B) * sh->Ft;
            const CMatrix gv = sh->Fx * partial;
            for (std::size_t b = 0; b < B; ++b) {
              for (std::size_t xk = 0; xk < Lx; ++xk) {
                for (std::size_t tk = 0; tk < Lt; ++tk) {
                  g_v[((b * Lx + xk) * Lt + tk) * ci + i] +=
                      gv(static_cast<Eigen::Index>(xk), static_cast<Eigen::Index>(tk * B + b)).real() * inv;
                }
              }
            }
          }
        }
      });
  return out;
}

}  // namespace lno::laplace
