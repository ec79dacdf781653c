#pragma once

// Dense real/complex tensors with a reverse-mode gradient tape.
//
// A Tensor is a reference-counted handle: copies share storage, which is how
// model parameters, optimizer state and graph nodes refer to the same values.
// Every operation that has at least one input with requires_grad() records a
// node holding its inputs and a backward closure. backward() orders the nodes
// reachable from the loss topologically and sweeps them in reverse.
//
// Gradient convention for complex tensors: grad = dL/dRe + i*dL/dIm, so that
// theta <- theta - lr*grad is a descent step on the real loss L. For a
// holomorphic step w = f(z) the chain rule reads grad_z += conj(f'(z))*grad_w.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lno/error.hpp"

namespace lno {

using cplx = std::complex<double>;
using Shape = std::vector<std::size_t>;

enum class DType { real64, complex128 };

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

class Tensor;

namespace detail {

struct Node;

struct Storage {
  Shape shape;
  DType dtype = DType::real64;
  std::vector<double> re;
  std::vector<cplx> cx;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<double> grad_re;
  std::vector<cplx> grad_cx;
  std::shared_ptr<Node> node;  // producer; null for leaves

  std::size_t size() const { return element_count(shape); }

  void ensure_grad() {
    if (has_grad) return;
    if (dtype == DType::real64) {
      grad_re.assign(size(), 0.0);
    } else {
      grad_cx.assign(size(), cplx{});
    }
    has_grad = true;
  }

  void clear_grad() {
    has_grad = false;
    grad_re.clear();
    grad_re.shrink_to_fit();
    grad_cx.clear();
    grad_cx.shrink_to_fit();
  }
};

using StoragePtr = std::shared_ptr<Storage>;

// Receives the output storage (whose grad is populated) and the inputs;
// accumulates into every input that requires a gradient.
using BackwardFn = std::function<void(const Storage& out, std::span<const StoragePtr> inputs)>;

struct Node {
  std::string op;
  std::vector<StoragePtr> inputs;
  BackwardFn backward;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::real64) {
    auto s = std::make_shared<detail::Storage>();
    s->dtype = dtype;
    const std::size_t n = element_count(shape);
    s->shape = std::move(shape);
    if (dtype == DType::real64) {
      s->re.assign(n, 0.0);
    } else {
      s->cx.assign(n, cplx{});
    }
    return Tensor(std::move(s));
  }

  static Tensor real(Shape shape, std::vector<double> values) {
    if (element_count(shape) != values.size()) {
      throw DimensionError("Tensor::real: shape " + to_string(shape) + " needs " +
                           std::to_string(element_count(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    auto s = std::make_shared<detail::Storage>();
    s->shape = std::move(shape);
    s->dtype = DType::real64;
    s->re = std::move(values);
    return Tensor(std::move(s));
  }

  static Tensor complex(Shape shape, std::vector<cplx> values) {
    if (element_count(shape) != values.size()) {
      throw DimensionError("Tensor::complex: shape " + to_string(shape) + " needs " +
                           std::to_string(element_count(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    auto s = std::make_shared<detail::Storage>();
    s->shape = std::move(shape);
    s->dtype = DType::complex128;
    s->cx = std::move(values);
    return Tensor(std::move(s));
  }

  static Tensor scalar(double value) { return real({}, {value}); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->size(); }
  std::size_t extent(std::size_t axis) const { return s_->shape.at(axis); }
  DType dtype() const { return s_->dtype; }
  bool is_complex() const { return s_->dtype == DType::complex128; }

  std::span<const double> values() const {
    require_dtype(DType::real64, "values");
    return s_->re;
  }
  std::span<double> mutable_values() {
    require_dtype(DType::real64, "mutable_values");
    return s_->re;
  }
  std::span<const cplx> cvalues() const {
    require_dtype(DType::complex128, "cvalues");
    return s_->cx;
  }
  std::span<cplx> mutable_cvalues() {
    require_dtype(DType::complex128, "mutable_cvalues");
    return s_->cx;
  }

  double item() const {
    if (size() != 1 || is_complex()) throw ContractError("item() needs a real single-element tensor");
    return s_->re[0];
  }

  Tensor& set_requires_grad(bool flag = true) {
    s_->requires_grad = flag;
    return *this;
  }
  bool requires_grad() const { return s_->requires_grad; }
  bool is_leaf() const { return !s_->node; }

  bool has_grad() const { return s_->has_grad; }
  std::span<const double> grad() const {
    require_dtype(DType::real64, "grad");
    if (!s_->has_grad) throw ContractError("grad() on a tensor without gradient");
    return s_->grad_re;
  }
  std::span<const cplx> cgrad() const {
    require_dtype(DType::complex128, "cgrad");
    if (!s_->has_grad) throw ContractError("cgrad() on a tensor without gradient");
    return s_->grad_cx;
  }
  void zero_grad() { s_->clear_grad(); }

  // Deep copy of the values; the result is a leaf without gradient tracking.
  Tensor detach() const {
    auto s = std::make_shared<detail::Storage>();
    s->shape = s_->shape;
    s->dtype = s_->dtype;
    s->re = s_->re;
    s->cx = s_->cx;
    return Tensor(std::move(s));
  }

  const detail::StoragePtr& storage() const { return s_; }
  explicit Tensor(detail::StoragePtr s) : s_(std::move(s)) {}

 private:
  void require_dtype(DType want, const char* what) const {
    if (s_->dtype != want) {
      throw ContractError(std::string(what) + ": tensor is " +
                          (s_->dtype == DType::real64 ? "real" : "complex"));
    }
  }

  detail::StoragePtr s_;
};

namespace detail {

inline bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

inline void check_finite(std::span<const double> values, const std::string& op) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NonFiniteError(op + ": non-finite value in output");
  }
}

inline void check_finite(std::span<const cplx> values, const std::string& op) {
  for (const cplx& v : values) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw NonFiniteError(op + ": non-finite value in output");
    }
  }
}

inline bool& grad_disabled() {
  thread_local bool flag = false;
  return flag;
}

// Attaches a tape node to `out` when any input tracks gradients.
inline void record(Tensor& out, std::string op, std::vector<Tensor> inputs, BackwardFn backward) {
  if (grad_disabled()) return;
  bool track = false;
  std::vector<StoragePtr> parents;
  parents.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    track = track || t.requires_grad();
    parents.push_back(t.storage());
  }
  if (!track) return;
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->inputs = std::move(parents);
  node->backward = std::move(backward);
  out.storage()->node = std::move(node);
  out.storage()->requires_grad = true;
}

inline std::span<double> grad_of(Storage& s) {
  s.ensure_grad();
  return s.grad_re;
}

inline std::span<cplx> cgrad_of(Storage& s) {
  s.ensure_grad();
  return s.grad_cx;
}

}  // namespace detail

// Suspends tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topological order of the graph feeding a root tensor (inputs first).
class Tape {
 public:
  static Tape record(const Tensor& root) {
    Tape tape;
    std::unordered_set<const detail::Storage*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<detail::StoragePtr, std::size_t>> stack;
    stack.emplace_back(root.storage(), 0);
    seen.insert(root.storage().get());
    while (!stack.empty()) {
      const detail::Storage* current = stack.back().first.get();
      std::size_t& next = stack.back().second;
      if (current->node && next < current->node->inputs.size()) {
        detail::StoragePtr parent = current->node->inputs[next++];
        if (parent->requires_grad && seen.insert(parent.get()).second) {
          stack.emplace_back(std::move(parent), 0);
        }
      } else {
        tape.order_.push_back(stack.back().first);
        stack.pop_back();
      }
    }
    return tape;
  }

  std::span<const detail::StoragePtr> order() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<detail::StoragePtr> order_;
};

// Accumulates dL/dtheta into every requires_grad leaf reachable from `loss`.
// Leaf gradients add up across calls until zero_grad().
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.is_complex() || loss.size() != 1) {
    throw ContractError("backward: loss must be a real scalar");
  }
  if (!loss.requires_grad()) return;
  const Tape tape = Tape::record(loss);
  const auto order = tape.order();
  for (const auto& s : order) {
    if (s->node) s->clear_grad();
  }
  loss.storage()->ensure_grad();
  loss.storage()->grad_re[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Storage& s = **it;
    if (!s.node || !s.has_grad) continue;
    s.node->backward(s, s.node->inputs);
    s.clear_grad();
  }
}

}  // namespace lno
