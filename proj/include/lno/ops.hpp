#pragma once

#include <Eigen/Core>
#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "lno/tensor.hpp"

namespace lno {

enum class Activation { sin, tanh };

inline Activation parse_activation(std::string_view name) {
  if (name == "sin") return Activation::sin;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected sin or tanh)");
}

inline std::string_view to_string(Activation kind) {
  return kind == Activation::sin ? "sin" : "tanh";
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

inline void require_real(const Tensor& t, const char* op) {
  if (t.is_complex()) throw ContractError(std::string(op) + ": expects a real tensor");
}

}  // namespace detail

// out[i,j] = sum_k x[i,k] * w[k,j] + b[j]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require_real(x, "linear");
  detail::require_real(w, "linear");
  detail::require_real(b, "linear");
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.extent(1) != w.extent(0) ||
      w.extent(1) != b.extent(0)) {
    throw DimensionError("linear: incompatible shapes x" + to_string(x.shape()) + " w" +
                         to_string(w.shape()) + " b" + to_string(b.shape()));
  }
  const auto rows = static_cast<Eigen::Index>(x.extent(0));
  const auto n_in = static_cast<Eigen::Index>(w.extent(0));
  const auto n_out = static_cast<Eigen::Index>(w.extent(1));

  Tensor out = Tensor::zeros({x.extent(0), w.extent(1)});
  detail::ConstRowMap X(x.values().data(), rows, n_in);
  detail::ConstRowMap Wm(w.values().data(), n_in, n_out);
  Eigen::Map<const Eigen::RowVectorXd> B(b.values().data(), n_out);
  detail::RowMap Y(out.mutable_values().data(), rows, n_out);
  Y.noalias() = X * Wm;
  Y.rowwise() += B;
  detail::check_finite(out.values(), "linear");

  detail::record(out, "linear", {x, w, b},
                 [rows, n_in, n_out](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
                   detail::ConstRowMap G(o.grad_re.data(), rows, n_out);
                   detail::ConstRowMap X(in[0]->re.data(), rows, n_in);
                   detail::ConstRowMap Wm(in[1]->re.data(), n_in, n_out);
                   if (in[0]->requires_grad) {
                     detail::RowMap GX(detail::grad_of(*in[0]).data(), rows, n_in);
                     GX.noalias() += G * Wm.transpose();
                   }
                   if (in[1]->requires_grad) {
                     detail::RowMap GW(detail::grad_of(*in[1]).data(), n_in, n_out);
                     GW.noalias() += X.transpose() * G;
                   }
                   if (in[2]->requires_grad) {
                     Eigen::Map<Eigen::RowVectorXd> GB(detail::grad_of(*in[2]).data(), n_out);
                     GB += G.colwise().sum();
                   }
                 });
  return out;
}

inline Tensor activation(const Tensor& x, Activation kind) {
  detail::require_real(x, "activation");
  Tensor out = Tensor::zeros(x.shape());
  auto y = out.mutable_values();
  const auto v = x.values();
  if (kind == Activation::sin) {
    for (std::size_t i = 0; i < v.size(); ++i) y[i] = std::sin(v[i]);
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) y[i] = std::tanh(v[i]);
  }
  detail::check_finite(out.values(), "activation");
  detail::record(out, kind == Activation::sin ? "sin" : "tanh", {x},
                 [kind](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
                   auto gx = detail::grad_of(*in[0]);
                   const auto& xv = in[0]->re;
                   if (kind == Activation::sin) {
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += std::cos(xv[i]) * o.grad_re[i];
                   } else {
                     // sech^2 = 1 - tanh^2, read back from the forward output
                     for (std::size_t i = 0; i < gx.size(); ++i) {
                       gx[i] += (1.0 - o.re[i] * o.re[i]) * o.grad_re[i];
                     }
                   }
                 });
  return out;
}

inline Tensor activation(const Tensor& x, std::string_view kind) {
  return activation(x, parse_activation(kind));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) {
    throw DimensionError("add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  if (a.is_complex()) {
    auto y = out.mutable_cvalues();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.cvalues()[i] + b.cvalues()[i];
    detail::check_finite(out.cvalues(), "add");
  } else {
    auto y = out.mutable_values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
    detail::check_finite(out.values(), "add");
  }
  detail::record(out, "add", {a, b}, [](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
    for (const auto& s : in) {
      if (!s->requires_grad) continue;
      if (o.dtype == DType::real64) {
        auto g = detail::grad_of(*s);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad_re[i];
      } else {
        auto g = detail::cgrad_of(*s);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad_cx[i];
      }
    }
  });
  return out;
}

inline Tensor scale(const Tensor& a, double factor) {
  detail::require_real(a, "scale");
  Tensor out = Tensor::zeros(a.shape());
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * a.values()[i];
  detail::check_finite(out.values(), "scale");
  detail::record(out, "scale", {a}, [factor](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
    auto g = detail::grad_of(*in[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad_re[i];
  });
  return out;
}

// Same values under a new shape with the same element count.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  Tensor out = a.is_complex() ? Tensor::complex(shape, {a.cvalues().begin(), a.cvalues().end()})
                              : Tensor::real(shape, {a.values().begin(), a.values().end()});
  detail::record(out, "reshape", {a}, [](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
    if (o.dtype == DType::real64) {
      auto g = detail::grad_of(*in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad_re[i];
    } else {
      auto g = detail::cgrad_of(*in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad_cx[i];
    }
  });
  return out;
}

inline Tensor sum(const Tensor& a) {
  detail::require_real(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor out = Tensor::scalar(total);
  detail::check_finite(out.values(), "sum");
  detail::record(out, "sum", {a}, [](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
    auto g = detail::grad_of(*in[0]);
    for (double& gi : g) gi += o.grad_re[0];
  });
  return out;
}

inline Tensor sum_squares(const Tensor& a) {
  detail::require_real(a, "sum_squares");
  double total = 0.0;
  for (double v : a.values()) total += v * v;
  Tensor out = Tensor::scalar(total);
  detail::check_finite(out.values(), "sum_squares");
  detail::record(out, "sum_squares", {a}, [](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
    auto g = detail::grad_of(*in[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * in[0]->re[i] * o.grad_re[0];
  });
  return out;
}

inline Tensor real_part(const Tensor& z) {
  Tensor out = Tensor::zeros(z.shape());
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = z.cvalues()[i].real();
  detail::record(out, "real", {z}, [](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
    auto g = detail::cgrad_of(*in[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += cplx(o.grad_re[i], 0.0);
  });
  return out;
}

inline Tensor imag_part(const Tensor& z) {
  Tensor out = Tensor::zeros(z.shape());
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = z.cvalues()[i].imag();
  detail::record(out, "imag", {z}, [](const detail::Storage& o, std::span<const detail::StoragePtr> in) {
    auto g = detail::cgrad_of(*in[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += cplx(0.0, o.grad_re[i]);
  });
  return out;
}

// Euclidean relative error of one sample.
inline double relative_l2(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw DimensionError("relative_l2: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()) + " values");
  }
  double diff = 0.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    diff += (pred[i] - target[i]) * (pred[i] - target[i]);
    norm += target[i] * target[i];
  }
  if (norm == 0.0) throw DegenerateTargetError("relative_l2: target has zero norm");
  return std::sqrt(diff / norm);
}

// Mean over samples of ||pred - target|| / ||target||. Axis 0 is the batch
// axis for rank >= 2; a rank-0/1 tensor is a single sample. Differentiable
// with respect to pred only.
inline Tensor relative_l2(const Tensor& pred, const Tensor& target) {
  detail::require_real(pred, "relative_l2");
  detail::require_real(target, "relative_l2");
  if (pred.shape() != target.shape()) {
    throw DimensionError("relative_l2: shapes " + to_string(pred.shape()) + " and " +
                         to_string(target.shape()));
  }
  const std::size_t batch = pred.rank() >= 2 ? pred.extent(0) : 1;
  const std::size_t per = batch ? pred.size() / batch : 0;
  std::vector<double> diff_norm(batch), target_norm(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double d = 0.0, t = 0.0;
    for (std::size_t k = b * per; k < (b + 1) * per; ++k) {
      const double e = pred.values()[k] - target.values()[k];
      d += e * e;
      t += target.values()[k] * target.values()[k];
    }
    if (t == 0.0) throw DegenerateTargetError("relative_l2: sample " + std::to_string(b) + " has zero-norm target");
    diff_norm[b] = std::sqrt(d);
    target_norm[b] = std::sqrt(t);
    total += diff_norm[b] / target_norm[b];
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(batch));
  detail::check_finite(out.values(), "relative_l2");
  detail::record(out, "relative_l2", {pred, target},
                 [batch, per, diff_norm, target_norm](const detail::Storage& o,
                                                      std::span<const detail::StoragePtr> in) {
                   if (!in[0]->requires_grad) return;
                   auto g = detail::grad_of(*in[0]);
                   for (std::size_t b = 0; b < batch; ++b) {
                     if (diff_norm[b] == 0.0) continue;  // subgradient 0 at the minimum
                     const double c = o.grad_re[0] / (static_cast<double>(batch) * diff_norm[b] * target_norm[b]);
                     for (std::size_t k = b * per; k < (b + 1) * per; ++k) {
                       g[k] += c * (in[0]->re[k] - in[1]->re[k]);
                     }
                   }
                 });
  return out;
}

}  // namespace lno
