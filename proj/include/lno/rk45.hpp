#pragma once

// Dormand-Prince 5(4) with local extrapolation, PI-free step control and
// the order-4 continuous extension of Hairer, Norsett and Wanner. States are
// reported by interpolation at the requested grid, never by stepping onto it.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lno/error.hpp"

namespace lno::ode {

using Rhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

struct RKStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

struct RKSolution {
  std::vector<double> t;
  std::vector<double> y;  // [t.size() x dim], row-major
  std::size_t dim = 0;
  double rtol = 0.0, atol = 0.0;
  RKStats stats;

  double at(std::size_t k, std::size_t i) const { return y[k * dim + i]; }
  std::vector<double> component(std::size_t i) const {
    std::vector<double> c(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) c[k] = at(k, i);
    return c;
  }
};

struct RKOptions {
  std::size_t max_steps = 10'000'000;
  double first_step = 0.0;  // 0: automatic
};

namespace detail {

struct DormandPrince {
  static constexpr std::array<double, 7> c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  // fifth-order weights (also row 7 of the tableau, FSAL)
  static constexpr std::array<double, 7> b{35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
  // b - b_hat
  static constexpr std::array<double, 7> e{71.0 / 57600,      0.0, -71.0 / 16695, 71.0 / 1920,
                                           -17253.0 / 339200, 22.0 / 525, -1.0 / 40};
  // continuous extension coefficients
  static constexpr std::array<double, 7> d{-12715105075.0 / 11282082432.0, 0.0, 87487479700.0 / 32700410799.0,
                                           -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
                                           -1453857185.0 / 822651844.0,  69997945.0 / 29380423.0};
};

}  // namespace detail

// Integrates y' = rhs(t, y) from t_grid.front() with y(t_grid.front()) = y0
// and returns the state at every grid point. The grid must be non-decreasing.
inline RKSolution rk45(const Rhs& rhs, std::vector<double> y0, std::span<const double> t_grid, double rtol,
                       double atol, const RKOptions& options = {}) {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ContractError("rk45: tolerances must be positive");
  if (t_grid.empty()) throw ContractError("rk45: empty output grid");
  if (y0.empty()) throw ContractError("rk45: empty state");
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    if (!(t_grid[k] >= t_grid[k - 1])) throw ContractError("rk45: output grid must be non-decreasing");
  }
  using DP = detail::DormandPrince;
  const std::size_t n = y0.size();
  RKSolution sol;
  sol.dim = n;
  sol.rtol = rtol;
  sol.atol = atol;
  sol.t.assign(t_grid.begin(), t_grid.end());
  sol.y.resize(t_grid.size() * n);

  std::array<std::vector<double>, 7> k;
  for (auto& v : k) v.resize(n);
  std::vector<double> y = std::move(y0), y1(n), tmp(n), r1(n), r2(n), r3(n), r4(n);

  double t = t_grid.front();
  const double t_end = t_grid.back();
  auto eval = [&](double tt, const std::vector<double>& yy, std::vector<double>& out) {
    rhs(tt, yy, out);
    ++sol.stats.evaluations;
    for (double v : out) {
      if (!std::isfinite(v)) throw IntegrationError("rk45: non-finite derivative at t = " + std::to_string(tt), tt);
    }
  };

  std::size_t next = 0;
  while (next < t_grid.size() && t_grid[next] == t) {
    std::copy(y.begin(), y.end(), sol.y.begin() + static_cast<std::ptrdiff_t>(next * n));
    ++next;
  }
  if (next == t_grid.size()) return sol;

  eval(t, y, k[0]);

  auto norm = [&](const std::vector<double>& v, const std::vector<double>& scale_from) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = atol + rtol * std::abs(scale_from[i]);
      s += (v[i] / sc) * (v[i] / sc);
    }
    return std::sqrt(s / static_cast<double>(n));
  };

  // Initial step: Hairer's heuristic from the first two derivatives.
  double h = options.first_step;
  if (h <= 0.0) {
    const double d0 = norm(y, y), d1 = norm(k[0], y);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, t_end - t);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h0 * k[0][i];
    eval(t + h0, tmp, k[1]);
    for (std::size_t i = 0; i < n; ++i) r1[i] = (k[1][i] - k[0][i]) / h0;
    const double d2 = norm(r1, y);
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    h = std::min(100.0 * h0, h1);
  }

  constexpr double safety = 0.9, min_factor = 0.2, max_factor = 10.0;
  bool last_rejected = false;
  std::size_t steps = 0;
  while (next < t_grid.size()) {
    if (++steps > options.max_steps) {
      throw IntegrationError("rk45: step budget exhausted at t = " + std::to_string(t), t);
    }
    h = std::min(h, t_end - t);
    if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      throw IntegrationError("rk45: step size underflow at t = " + std::to_string(t), t);
    }
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * DP::a21 * k[0][i];
    eval(t + DP::c[1] * h, tmp, k[1]);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (DP::a31 * k[0][i] + DP::a32 * k[1][i]);
    eval(t + DP::c[2] * h, tmp, k[2]);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (DP::a41 * k[0][i] + DP::a42 * k[1][i] + DP::a43 * k[2][i]);
    eval(t + DP::c[3] * h, tmp, k[3]);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (DP::a51 * k[0][i] + DP::a52 * k[1][i] + DP::a53 * k[2][i] + DP::a54 * k[3][i]);
    eval(t + DP::c[4] * h, tmp, k[4]);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (DP::a61 * k[0][i] + DP::a62 * k[1][i] + DP::a63 * k[2][i] + DP::a64 * k[3][i] +
                           DP::a65 * k[4][i]);
    eval(t + h, tmp, k[5]);
    for (std::size_t i = 0; i < n; ++i)
      y1[i] = y[i] + h * (DP::b[0] * k[0][i] + DP::b[2] * k[2][i] + DP::b[3] * k[3][i] + DP::b[4] * k[4][i] +
                          DP::b[5] * k[5][i]);
    eval(t + h, y1, k[6]);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double e = 0.0;
      for (std::size_t s = 0; s < 7; ++s) e += DP::e[s] * k[s][i];
      const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
      err += (h * e / sc) * (h * e / sc);
    }
    err = std::sqrt(err / static_cast<double>(n));

    if (err <= 1.0) {
      const double t1 = (t + h >= t_end || t_end - (t + h) <= 1e-14 * std::abs(t_end)) ? t_end : t + h;
      // Continuous extension on [t, t1]:
      // y(t + th h) = y + th (r1 + (1-th)(r2 + th (r3 + (1-th) r4)))
      for (std::size_t i = 0; i < n; ++i) {
        const double dy = y1[i] - y[i];
        const double bspl = h * k[0][i] - dy;
        r1[i] = dy;
        r2[i] = bspl;
        r3[i] = dy - h * k[6][i] - bspl;
        double acc = 0.0;
        for (std::size_t s = 0; s < 7; ++s) acc += DP::d[s] * k[s][i];
        r4[i] = h * acc;
      }
      while (next < t_grid.size() && t_grid[next] <= t1) {
        double* out = sol.y.data() + next * n;
        if (t_grid[next] == t1) {
          std::copy(y1.begin(), y1.end(), out);
        } else {
          const double th = (t_grid[next] - t) / h, th1 = 1.0 - th;
          for (std::size_t i = 0; i < n; ++i) out[i] = y[i] + th * (r1[i] + th1 * (r2[i] + th * (r3[i] + th1 * r4[i])));
        }
        ++next;
      }
      t = t1;
      y.swap(y1);
      k[0].swap(k[6]);
      ++sol.stats.accepted;
      double factor = err == 0.0 ? max_factor : std::clamp(safety * std::pow(err, -0.2), min_factor, max_factor);
      if (last_rejected) factor = std::min(factor, 1.0);
      h *= factor;
      last_rejected = false;
    } else {
      ++sol.stats.rejected;
      h *= std::max(min_factor, safety * std::pow(err, -0.2));
      last_rejected = true;
    }
  }
  return sol;
}

}  // namespace lno::ode
