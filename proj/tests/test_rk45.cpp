#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "lno/rk45.hpp"

using namespace lno;
using namespace lno::ode;

namespace {

std::vector<double> grid(std::size_t n, double dt) {
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = static_cast<double>(k) * dt;
  return t;
}

}  // namespace

TEST(Rk45, ExponentialDecay) {
  const std::vector<double> t{0.0, 1.0};
  const auto sol = rk45([](double, std::span<const double> y, std::span<double> d) { d[0] = -y[0]; }, {1.0}, t,
                        1e-8, 1e-8);
  EXPECT_NEAR(sol.at(1, 0), std::exp(-1.0), 1e-8);
  EXPECT_EQ(sol.at(0, 0), 1.0);
  EXPECT_GT(sol.stats.accepted, 0u);
}

TEST(Rk45, DenseOutputOnFineGrid) {
  // Many output points per step: the interpolant must stay at the
  // integration accuracy, not drop to linear interpolation.
  const auto t = grid(1001, 0.005);
  const auto sol = rk45([](double, std::span<const double> y, std::span<double> d) { d[0] = -y[0]; }, {1.0}, t,
                        1e-9, 1e-9);
  EXPECT_LT(sol.stats.accepted, 200u);
  double worst = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) worst = std::max(worst, std::abs(sol.at(k, 0) - std::exp(-t[k])));
  EXPECT_LE(worst, 1e-8);
}

TEST(Rk45, HarmonicEnergyConserved) {
  const auto t = grid(2001, 0.01);
  const auto sol = rk45(
      [](double, std::span<const double> y, std::span<double> d) {
        d[0] = y[1];
        d[1] = -y[0];
      },
      {0.0, 1.0}, t, 1e-8, 1e-8);
  double drift = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double e = 0.5 * (sol.at(k, 0) * sol.at(k, 0) + sol.at(k, 1) * sol.at(k, 1));
    drift = std::max(drift, std::abs(e - 0.5));
    EXPECT_NEAR(sol.at(k, 0), std::sin(t[k]), 1e-6);
  }
  EXPECT_LE(drift, 1e-7);
}

TEST(Rk45, UnforcedLorenzReachesEquilibrium) {
  const double sigma = 10.0, rho = 5.0, beta = 8.0 / 3.0;
  const std::vector<double> t{0.0, 50.0};
  const auto sol = rk45(
      [&](double, std::span<const double> y, std::span<double> d) {
        d[0] = sigma * (y[1] - y[0]);
        d[1] = y[0] * (rho - y[2]) - y[1];
        d[2] = y[0] * y[1] - beta * y[2];
      },
      {1.0, 0.0, 0.0}, t, 1e-8, 1e-8);
  const double eq = std::sqrt(beta * (rho - 1.0));
  EXPECT_NEAR(sol.at(1, 0), eq, 1e-3);
  EXPECT_NEAR(sol.at(1, 1), eq, 1e-3);
  EXPECT_NEAR(sol.at(1, 2), rho - 1.0, 1e-3);
}

TEST(Rk45, BlowUpReportsTime) {
  // y' = y^2, y(0) = 1 has y = 1/(1-t)
  const std::vector<double> t{0.0, 2.0};
  try {
    rk45([](double, std::span<const double> y, std::span<double> d) { d[0] = y[0] * y[0]; }, {1.0}, t, 1e-8, 1e-8);
    FAIL() << "expected an integration failure";
  } catch (const IntegrationError& e) {
    EXPECT_NEAR(e.time(), 1.0, 1e-3);
  }
}

TEST(Rk45, Contracts) {
  auto f = [](double, std::span<const double> y, std::span<double> d) { d[0] = -y[0]; };
  const std::vector<double> t{0.0, 1.0}, bad{0.0, 1.0, 0.5};
  EXPECT_THROW(rk45(f, {1.0}, t, 0.0, 1e-8), ContractError);
  EXPECT_THROW(rk45(f, {1.0}, t, 1e-8, -1.0), ContractError);
  EXPECT_THROW(rk45(f, {1.0}, bad, 1e-8, 1e-8), ContractError);
  const std::vector<double> single{0.5};
  const auto sol = rk45(f, {2.0}, single, 1e-8, 1e-8);
  EXPECT_EQ(sol.at(0, 0), 2.0);
  EXPECT_EQ(sol.stats.evaluations, 0u);
}

TEST(Rk45, Deterministic) {
  auto run = [] {
    const auto t = grid(300, 0.01);
    return rk45(
               [](double tt, std::span<const double> y, std::span<double> d) {
                 d[0] = y[1];
                 d[1] = -0.5 * y[1] - y[0] - y[0] * y[0] * y[0] + 3.0 * std::sin(5.0 * tt);
               },
               {0.0, 0.0}, t, 1e-8, 1e-8)
        .y;
  };
  EXPECT_EQ(run(), run());
}
