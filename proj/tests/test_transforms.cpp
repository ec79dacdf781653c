#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lno/transforms.hpp"
#include "support.hpp"

using namespace lno;
using namespace lno::transforms;
using lno::testing::gradcheck;
using lno::testing::random_values;

namespace {

const double tau = 2.0 * std::numbers::pi;

std::vector<cplx> naive_dft(const std::vector<double>& v) {
  const std::size_t L = v.size();
  std::vector<cplx> a(L);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < L; ++k) a[l] += v[k] * std::polar(1.0, -tau * double(l * k) / double(L));
    a[l] /= double(L);
  }
  return a;
}

}  // namespace

TEST(Analyze, ConstantSignal) {
  const auto d = analyze(std::vector<double>(10, 3.0), 2.0);
  EXPECT_NEAR(std::abs(d.coefficients[0] - cplx(3.0)), 0.0, 1e-15);
  for (std::size_t l = 1; l < 10; ++l) EXPECT_LE(std::abs(d.coefficients[l]), 1e-15);
}

TEST(Analyze, Sine) {
  for (std::size_t L : {16u, 15u}) {
    const double T = 3.0;
    std::vector<double> v(L);
    for (std::size_t k = 0; k < L; ++k) v[k] = std::sin(tau / T * (k * T / L));
    const auto d = analyze(v, T);
    EXPECT_NEAR(std::abs(d.coefficients[d.slot(1)] - cplx(0, -0.5)), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(d.coefficients[d.slot(-1)] - cplx(0, 0.5)), 0.0, 1e-14);
    EXPECT_NEAR(d.omega(d.slot(1)), tau / T, 1e-14);
    for (std::size_t l = 0; l < L; ++l) {
      if (l != d.slot(1) && l != d.slot(-1)) {
        EXPECT_LE(std::abs(d.coefficients[l]), 1e-14);
      }
    }
  }
}

TEST(Analyze, MatchesNaiveDft) {
  Rng rng(1);
  for (std::size_t L : {64u, 51u, 17u, 2u}) {
    const auto v = random_values(L, rng);
    const auto d = analyze(v, 1.0);
    const auto want = naive_dft(v);
    for (std::size_t l = 0; l < L; ++l) EXPECT_LE(std::abs(d.coefficients[l] - want[l]), 1e-12);
  }
}

TEST(Analyze, FrequencyIndexConvention) {
  EXPECT_EQ(signed_frequency_index(3, 8), 3);
  EXPECT_EQ(signed_frequency_index(4, 8), -4);
  EXPECT_EQ(signed_frequency_index(4, 9), 4);
  EXPECT_EQ(signed_frequency_index(5, 9), -4);
}

TEST(Analyze, RejectsNonUniformGrid) {
  EXPECT_THROW(analyze(std::vector<double>{1, 2, 3}, std::vector<double>{0.0, 0.1, 0.25}), ContractError);
  EXPECT_NO_THROW(analyze(std::vector<double>{1, 2, 3}, std::vector<double>{0.0, 0.1, 0.2}));
  EXPECT_THROW(analyze(std::vector<double>{1}, 1.0), ContractError);
}

TEST(Analyze, ParsevalLinearitySymmetry) {
  Rng rng(2);
  for (std::size_t L : {32u, 25u}) {
    const auto x = random_values(L, rng), y = random_values(L, rng);
    const auto dx = analyze(x, 1.0), dy = analyze(y, 1.0);
    double energy = 0.0, spectral = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
      energy += x[k] * x[k] / double(L);
      spectral += std::norm(dx.coefficients[k]);
    }
    EXPECT_NEAR(energy, spectral, 1e-10);
    std::vector<double> z(L);
    for (std::size_t k = 0; k < L; ++k) z[k] = 2.0 * x[k] - 3.0 * y[k];
    const auto dz = analyze(z, 1.0);
    for (std::size_t l = 0; l < L; ++l) {
      EXPECT_LE(std::abs(dz.coefficients[l] - (2.0 * dx.coefficients[l] - 3.0 * dy.coefficients[l])), 1e-12);
      EXPECT_LE(std::abs(dx.coefficients[dx.slot(-dx.index(l))] - std::conj(dx.coefficients[l])), 1e-13);
    }
  }
}

TEST(Synthesize, RoundTrip) {
  Rng rng(3);
  for (std::size_t L : {32u, 20u}) {
    const auto v = random_values(L, rng);
    const auto d = analyze(v, 2.0);
    const auto back = synthesize(d);
    std::vector<double> t(L);
    for (std::size_t k = 0; k < L; ++k) t[k] = k * 2.0 / L;
    const auto direct = synthesize(d, t);
    for (std::size_t k = 0; k < L; ++k) {
      EXPECT_NEAR(back[k], v[k], 1e-12);
      EXPECT_NEAR(direct[k], v[k], 1e-12);
    }
  }
}

TEST(Synthesize, ZeroCoefficients) {
  FourierDecomposition d{std::vector<cplx>(8), 1.0};
  for (double x : synthesize(d)) EXPECT_EQ(x, 0.0);
}

TEST(Synthesize, SingleCoefficient) {
  FourierDecomposition d{std::vector<cplx>(8), 1.0};
  d.coefficients[2] = 1.0;
  const auto u = synthesize(d);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(u[k], std::cos(tau * 2.0 * k / 8.0), 1e-14);
}

TEST(AdjointGradient, MeanAndZero) {
  std::vector<cplx> g(6);
  g[0] = 1.0;  // d Re(alpha_0)
  for (double x : adjoint_gradient(g)) EXPECT_NEAR(x, 1.0 / 6.0, 1e-15);
  for (double x : adjoint_gradient(std::vector<cplx>(6))) EXPECT_EQ(x, 0.0);
}

TEST(AdjointGradient, FiniteDifferences) {
  Rng rng(4);
  for (std::size_t L : {16u, 13u}) {
    Tensor v = Tensor::real({2, L}, random_values(2 * L, rng));
    // nonlinear real function of the coefficients
    auto loss = [&] {
      const Tensor a = fourier_coefficients(v);
      return add(sum_squares(real_part(a)), scale(sum(activation(imag_part(a), Activation::sin)), 0.7));
    };
    EXPECT_LE(gradcheck(loss, v, 2 * L, rng).max_rel, 1e-6);
  }
}

TEST(Analyze2D, MatchesSeparableDft) {
  Rng rng(5);
  const std::size_t lx = 5, lt = 8;
  const auto v = random_values(lx * lt, rng);
  const auto a = analyze_2d(v, lx, lt);
  for (std::size_t p = 0; p < lx; ++p)
    for (std::size_t q = 0; q < lt; ++q) {
      cplx want{};
      for (std::size_t x = 0; x < lx; ++x)
        for (std::size_t t = 0; t < lt; ++t)
          want += v[x * lt + t] * std::polar(1.0, -tau * (double(p * x) / lx + double(q * t) / lt));
      EXPECT_LE(std::abs(a[p * lt + q] - want / double(lx * lt)), 1e-13);
    }
  const auto back = synthesize_2d(a, lx, lt);
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(back[k].real(), v[k], 1e-13);
}

TEST(RealPair, ForwardMatchesComplexTransform) {
  Rng rng(5);
  for (std::size_t L : {2u, 7u, 16u, 30u}) {
    const std::size_t count = 5;
    std::vector<std::vector<double>> sig(count);
    for (auto& s : sig) s = random_values(L, rng);
    forward_real_batch(
        count, L, [&](std::size_t s, std::span<double> x) { std::copy(sig[s].begin(), sig[s].end(), x.begin()); },
        [&](std::size_t s, std::span<const cplx> X) {
          const auto ref = naive_dft(sig[s]);
          for (std::size_t k = 0; k < L; ++k) EXPECT_NEAR(std::abs(X[k] / double(L) - ref[k]), 0.0, 1e-13);
        });
  }
}

TEST(RealPair, InverseRealPartMatchesComplexTransform) {
  Rng rng(6);
  for (std::size_t L : {2u, 9u, 32u}) {
    const std::size_t count = 3;
    std::vector<std::vector<cplx>> spec(count, std::vector<cplx>(L));
    for (auto& s : spec) {
      for (auto& c : s) c = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    }
    inverse_real_batch(
        count, L, [&](std::size_t s, std::span<cplx> X) { std::copy(spec[s].begin(), spec[s].end(), X.begin()); },
        [&](std::size_t s, std::span<const double> x) {
          for (std::size_t k = 0; k < L; ++k) {
            cplx ref{};
            for (std::size_t l = 0; l < L; ++l) ref += spec[s][l] * std::polar(1.0, tau * double(l * k) / double(L));
            EXPECT_NEAR(x[k], ref.real(), 1e-12);
          }
        });
  }
}
