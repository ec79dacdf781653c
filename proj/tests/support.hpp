#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "lno/ops.hpp"
#include "lno/random.hpp"
#include "lno/tensor.hpp"

namespace lno::testing {

inline double rel_err(double a, double b) {
  const double d = std::max(std::abs(a), std::abs(b));
  return d == 0.0 ? 0.0 : std::abs(a - b) / (d + 1e-12);
}

inline std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline std::vector<cplx> random_cvalues(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<cplx> v(n);
  for (cplx& x : v) {
    const double re = rng.uniform(lo, hi);
    x = {re, rng.uniform(lo, hi)};
  }
  return v;
}

struct GradCheck {
  double max_rel = 0.0;  // worst componentwise relative error
  double max_abs = 0.0;  // worst |fd - tape|
  double max_grad = 0.0;
  std::size_t checked = 0;

  // Error relative to the largest probed gradient entry. Componentwise error
  // on an entry far below that scale only measures the step-size noise floor.
  double normwise() const { return max_grad == 0.0 ? max_abs : max_abs / max_grad; }
};

// Central differences with step h on `count` random components of `param`
// (real and imaginary parts separately for complex tensors), compared with
// the tape gradient of loss().
inline GradCheck gradcheck(const std::function<Tensor()>& loss, Tensor param, std::size_t count, Rng& rng,
                           double h = 1e-6) {
  param.zero_grad();
  param.set_requires_grad(true);
  backward(loss());
  GradCheck result;
  const std::size_t n = param.size();
  const bool cx = param.is_complex();
  std::vector<double> tape_re(n), tape_im(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (cx) {
      tape_re[k] = param.cgrad()[k].real();
      tape_im[k] = param.cgrad()[k].imag();
    } else {
      tape_re[k] = param.grad()[k];
    }
  }
  auto probe = [&](std::size_t k, bool imag) {
    auto bump = [&](double delta) {
      if (cx) {
        param.mutable_cvalues()[k] += imag ? cplx(0.0, delta) : cplx(delta, 0.0);
      } else {
        param.mutable_values()[k] += delta;
      }
    };
    bump(h);
    const double up = loss().item();
    bump(-2.0 * h);
    const double down = loss().item();
    bump(h);
    const double fd = (up - down) / (2.0 * h);
    const double tape = imag ? tape_im[k] : tape_re[k];
    const double e = rel_err(fd, tape);
    if (std::getenv("LNO_GRADCHECK_TRACE")) std::fprintf(stderr, "k=%zu %s fd=%.12e tape=%.12e rel=%.2e\n", k, imag ? "im" : "re", fd, tape, e);
    result.max_rel = std::max(result.max_rel, e);
    result.max_abs = std::max(result.max_abs, std::abs(fd - tape));
    result.max_grad = std::max({result.max_grad, std::abs(fd), std::abs(tape)});
    ++result.checked;
  };
  for (std::size_t c = 0; c < std::min(count, n); ++c) {
    const std::size_t k = count >= n ? c : static_cast<std::size_t>(rng.below(n));
    probe(k, false);
    if (cx) probe(k, true);
  }
  param.zero_grad();
  return result;
}

// Fixed random linear functional of a real tensor: sum_k c_k u_k.
inline std::function<Tensor(const Tensor&)> random_projection(std::size_t n, Rng& rng) {
  Tensor c = Tensor::real({n, 1}, random_values(n, rng));
  Tensor zero = Tensor::zeros({1});
  return [c, zero, n](const Tensor& u) { return sum(linear(reshape(u, {1, n}), c, zero)); };
}

}  // namespace lno::testing
