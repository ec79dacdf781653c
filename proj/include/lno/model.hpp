#pragma once

// LNO and FNO assembled from a lifting map P, spectral blocks with a pointwise
// bypass W, and a projection Q, all acting on channel-last tensors
// [batch, grid..., channels].
//
//   LNO:  Q( sigma( K v + W v ) ),                       v = P([f, coords])
//   FNO:  Q( B4(B3(B2(B1 v))) ),  Bl v = sigma(Kl v + Wl v), no sigma after B4

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "lno/fourier.hpp"
#include "lno/io.hpp"
#include "lno/laplace.hpp"
#include "lno/ops.hpp"
#include "lno/random.hpp"

namespace lno {

enum class ModelKind { lno, fno };

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "lno") return ModelKind::lno;
  if (name == "fno") return ModelKind::fno;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected lno or fno)");
}

inline std::string_view to_string(ModelKind kind) { return kind == ModelKind::lno ? "lno" : "fno"; }

struct OperatorConfig {
  ModelKind kind = ModelKind::lno;
  std::size_t layers = 1;
  std::size_t width = 4;
  std::vector<std::size_t> modes{16};   // per axis; pole counts for lno, retained modes for fno
  Activation activation = Activation::sin;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  bool coordinates = true;
  std::vector<std::size_t> grid{2048};  // extents per axis (x before t in 2D)
  std::vector<double> spacing{0.01};
  double input_scale = 1.0;             // model sees f / input_scale
  double output_scale = 1.0;            // and predicts y / output_scale

  std::size_t dims() const { return grid.size(); }

  void validate() const {
    if (dims() != 1 && dims() != 2) throw ConfigError("grid must have 1 or 2 axes");
    if (modes.size() != dims()) {
      throw ConfigError("modes has " + std::to_string(modes.size()) + " entries but the grid has " +
                        std::to_string(dims()) + " axes");
    }
    if (spacing.size() != dims()) throw ConfigError("spacing must have one entry per grid axis");
    if (kind == ModelKind::lno && layers != 1) throw ConfigError("lno uses exactly 1 layer");
    if (kind == ModelKind::fno && layers != 4) throw ConfigError("fno uses exactly 4 layers");
    if (width == 0) throw ConfigError("width must be at least 1");
    if (in_channels == 0 || out_channels == 0) throw ConfigError("channel counts must be at least 1");
    for (std::size_t a = 0; a < dims(); ++a) {
      if (grid[a] < 2) throw ConfigError("grid axis " + std::to_string(a) + " needs at least 2 points");
      if (!(spacing[a] > 0.0)) throw ConfigError("spacing must be positive");
      if (modes[a] == 0) throw ConfigError("modes must be at least 1");
      if (kind == ModelKind::fno && modes[a] > fourier::available_modes(grid[a])) {
        throw ConfigError("fno modes " + std::to_string(modes[a]) + " exceed the " +
                          std::to_string(fourier::available_modes(grid[a])) + " available on axis " +
                          std::to_string(a));
      }
    }
    if (!(input_scale > 0.0) || !(output_scale > 0.0)) throw ConfigError("normalization scales must be positive");
  }

  double period(std::size_t axis) const { return static_cast<double>(grid[axis]) * spacing[axis]; }
};

inline nlohmann::json to_json(const OperatorConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"layers", c.layers},
          {"width", c.width},
          {"modes", c.modes},
          {"activation", std::string(to_string(c.activation))},
          {"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"coordinates", c.coordinates},
          {"grid", c.grid},
          {"spacing", c.spacing},
          {"input_scale", c.input_scale},
          {"output_scale", c.output_scale}};
}

namespace detail {

template <typename T>
T field(const nlohmann::json& j, const char* name, const T& fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + name + "' has the wrong type");
  }
}

}  // namespace detail

// Missing fields keep the values of `base`.
inline OperatorConfig operator_config_from_json(const nlohmann::json& j, OperatorConfig base = {}) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const char* known[] = {"kind", "layers", "width", "modes", "activation", "in_channels", "out_channels",
                                "coordinates", "grid", "spacing", "input_scale", "output_scale"};
  for (const auto& item : j.items()) {
    if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known)) {
      throw ConfigError("unknown model config field '" + item.key() + "'");
    }
  }
  OperatorConfig c = base;
  c.kind = parse_model_kind(detail::field<std::string>(j, "kind", std::string(to_string(base.kind))));
  c.layers = detail::field(j, "layers", base.layers);
  c.width = detail::field(j, "width", base.width);
  c.modes = detail::field(j, "modes", base.modes);
  c.activation = parse_activation(detail::field<std::string>(j, "activation", std::string(to_string(base.activation))));
  c.in_channels = detail::field(j, "in_channels", base.in_channels);
  c.out_channels = detail::field(j, "out_channels", base.out_channels);
  c.coordinates = detail::field(j, "coordinates", base.coordinates);
  c.grid = detail::field(j, "grid", base.grid);
  c.spacing = detail::field(j, "spacing", base.spacing);
  c.input_scale = detail::field(j, "input_scale", base.input_scale);
  c.output_scale = detail::field(j, "output_scale", base.output_scale);
  return c;
}

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class OperatorModel {
 public:
  using Kernel = std::variant<laplace::PoleResidueKernel1D, laplace::PoleResidueKernel2D, fourier::SpectralWeights1D,
                              fourier::SpectralWeights2D>;

  struct Layer {
    Kernel kernel;
    Tensor w;  // [width, width]
    Tensor b;  // [width]
  };

  static OperatorModel build(const OperatorConfig& config, std::uint64_t seed) {
    config.validate();
    OperatorModel m;
    m.config_ = config;
    Rng rng(seed);
    const std::size_t lifted_in = config.in_channels + (config.coordinates ? config.dims() : 0);
    std::tie(m.p_w_, m.p_b_) = linear_init(lifted_in, config.width, rng);
    for (std::size_t l = 0; l < config.layers; ++l) {
      Layer layer;
      const std::size_t d = config.width;
      if (config.kind == ModelKind::lno) {
        if (config.dims() == 1) {
          layer.kernel = laplace::PoleResidueKernel1D::initialize(d, d, config.modes[0], config.period(0), rng);
        } else {
          layer.kernel = laplace::PoleResidueKernel2D::initialize(d, d, config.modes[0], config.modes[1],
                                                                  config.period(0), config.period(1), rng);
        }
      } else if (config.dims() == 1) {
        layer.kernel = fourier::SpectralWeights1D::initialize(d, d, config.modes[0], rng);
      } else {
        layer.kernel = fourier::SpectralWeights2D::initialize(d, d, config.modes[0], config.modes[1], rng);
      }
      std::tie(layer.w, layer.b) = linear_init(d, d, rng);
      m.layers_.push_back(std::move(layer));
    }
    std::tie(m.q_w_, m.q_b_) = linear_init(config.width, config.out_channels, rng);
    for (auto& p : m.parameters()) p.tensor.set_requires_grad(true);
    return m;
  }

  const OperatorConfig& config() const { return config_; }
  OperatorConfig& mutable_config() { return config_; }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out{{"P.weight", p_w_}, {"P.bias", p_b_}};
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string prefix = "layer" + std::to_string(l) + ".";
      std::visit(
          [&](const auto& k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, laplace::PoleResidueKernel1D>) {
              out.push_back({prefix + "poles", k.poles});
              out.push_back({prefix + "residues", k.residues});
            } else if constexpr (std::is_same_v<K, laplace::PoleResidueKernel2D>) {
              out.push_back({prefix + "poles_x", k.poles_x});
              out.push_back({prefix + "poles_t", k.poles_t});
              out.push_back({prefix + "residues", k.residues});
            } else if constexpr (std::is_same_v<K, fourier::SpectralWeights1D>) {
              out.push_back({prefix + "weights", k.weights});
            } else {
              out.push_back({prefix + "weights_pos", k.positive});
              out.push_back({prefix + "weights_neg", k.negative});
            }
          },
          layers_[l].kernel);
      out.push_back({prefix + "W.weight", layers_[l].w});
      out.push_back({prefix + "W.bias", layers_[l].b});
    }
    out.push_back({"Q.weight", q_w_});
    out.push_back({"Q.bias", q_b_});
    return out;
  }

  // Number of stored scalars; a complex entry counts once.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
  }

  // f: [batch, grid..., in_channels] in physical units; returns the prediction
  // in physical units. `spacing` overrides the configured grid spacing, which
  // is how the same model is evaluated on a finer grid.
  Tensor forward(const Tensor& f, const std::vector<double>& spacing = {}) const {
    const std::size_t D = config_.dims();
    if (f.is_complex() || f.rank() != D + 2 || f.extent(D + 1) != config_.in_channels) {
      throw DimensionError("model forward: input " + to_string(f.shape()) + " does not match a " +
                           std::to_string(D) + "D model with " + std::to_string(config_.in_channels) +
                           " input channels");
    }
    const std::vector<double>& h = spacing.empty() ? config_.spacing : spacing;
    if (h.size() != D) throw DimensionError("model forward: spacing must have one entry per axis");
    const std::size_t B = f.extent(0);
    std::vector<std::size_t> grid(f.shape().begin() + 1, f.shape().end() - 1);
    std::size_t points = 1;
    for (std::size_t e : grid) points *= e;
    std::vector<double> periods(D);
    for (std::size_t a = 0; a < D; ++a) periods[a] = static_cast<double>(grid[a]) * h[a];

    // Lifted input [f / s, coords] as data (no gradient flows into f).
    const std::size_t ci = config_.in_channels, cl = ci + (config_.coordinates ? D : 0);
    std::vector<double> lifted(B * points * cl);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t p = 0; p < points; ++p) {
        double* row = &lifted[(b * points + p) * cl];
        for (std::size_t c = 0; c < ci; ++c) row[c] = f.values()[(b * points + p) * ci + c] / config_.input_scale;
        if (config_.coordinates) {
          std::size_t rest = p;
          for (std::size_t a = D; a-- > 0;) {
            row[ci + a] = static_cast<double>(rest % grid[a]) / static_cast<double>(grid[a]);
            rest /= grid[a];
          }
        }
      }
    }
    const std::size_t d = config_.width;
    Shape wide{B};
    wide.insert(wide.end(), grid.begin(), grid.end());
    wide.push_back(d);

    Tensor v = linear(Tensor::real({B * points, cl}, std::move(lifted)), p_w_, p_b_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& layer = layers_[l];
      const Tensor vg = reshape(v, wide);
      const Tensor kv = std::visit(
          [&](const auto& k) -> Tensor {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, laplace::PoleResidueKernel1D>) {
              return laplace::forward_1d(k, vg, periods[0]);
            } else if constexpr (std::is_same_v<K, laplace::PoleResidueKernel2D>) {
              return laplace::forward_2d(k, vg, periods[0], periods[1]);
            } else if constexpr (std::is_same_v<K, fourier::SpectralWeights1D>) {
              return fourier::spectral_conv_1d(k, vg);
            } else {
              return fourier::spectral_conv_2d(k, vg);
            }
          },
          layer.kernel);
      v = add(reshape(kv, {B * points, d}), linear(v, layer.w, layer.b));
      const bool last = l + 1 == layers_.size();
      if (config_.kind == ModelKind::lno || !last) v = activation(v, config_.activation);
    }
    Tensor out = linear(v, q_w_, q_b_);
    Shape out_shape{B};
    out_shape.insert(out_shape.end(), grid.begin(), grid.end());
    out_shape.push_back(config_.out_channels);
    return reshape(scale(out, config_.output_scale), out_shape);
  }

  // Versioned container: magic, version, config JSON, then named parameters.
  void save(const std::string& path) const { serialize().save(path); }

  io::Writer serialize() const {
    io::Writer w;
    w.bytes("LNOC", 4);
    w.u32(kCheckpointVersion);
    w.string(to_json(config_).dump());
    const auto params = parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
      w.string(p.name);
      w.u8(p.tensor.is_complex() ? 1 : 0);
      w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
      for (std::size_t e : p.tensor.shape()) w.u32(static_cast<std::uint32_t>(e));
      if (p.tensor.is_complex()) {
        for (const cplx& z : p.tensor.cvalues()) {
          w.f64(z.real());
          w.f64(z.imag());
        }
      } else {
        for (double x : p.tensor.values()) w.f64(x);
      }
    }
    return w;
  }

  static OperatorModel load(const std::string& path) {
    io::Reader r = io::Reader::open(path);
    if (r.remaining() < 4 || r.bytes(4) != "LNOC") throw FormatError(path + ": not a model checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw FormatError(path + ": checkpoint version " + std::to_string(version) + " is not supported");
    }
    nlohmann::json cj;
    try {
      cj = nlohmann::json::parse(r.string());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": malformed config block: " + e.what());
    }
    OperatorModel m = build(operator_config_from_json(cj), 0);
    auto params = m.parameters();
    const std::uint32_t count = r.u32();
    if (count != params.size()) {
      throw FormatError(path + ": expected " + std::to_string(params.size()) + " parameter tensors, found " +
                        std::to_string(count));
    }
    for (auto& p : params) {
      const std::string name = r.string();
      if (name != p.name) throw FormatError(path + ": expected parameter '" + p.name + "', found '" + name + "'");
      const bool cx = r.u8() != 0;
      const std::uint32_t rank = r.u32();
      Shape shape(rank);
      for (auto& e : shape) e = r.u32();
      if (cx != p.tensor.is_complex() || shape != p.tensor.shape()) {
        throw FormatError(path + ": parameter '" + name + "' has shape " + to_string(shape) + ", expected " +
                          to_string(p.tensor.shape()));
      }
      if (cx) {
        for (cplx& z : p.tensor.mutable_cvalues()) {
          const double re = r.f64();
          z = {re, r.f64()};
        }
      } else {
        for (double& x : p.tensor.mutable_values()) x = r.f64();
      }
    }
    if (r.remaining() != 0) throw FormatError(path + ": trailing bytes after the last parameter");
    return m;
  }

  // Copies parameter values (not gradients) from another model of the same layout.
  void copy_parameters_from(const OperatorModel& other) {
    auto dst = parameters();
    const auto src = other.parameters();
    if (dst.size() != src.size()) throw DimensionError("copy_parameters_from: layouts differ");
    for (std::size_t k = 0; k < dst.size(); ++k) {
      if (dst[k].tensor.shape() != src[k].tensor.shape()) throw DimensionError("copy_parameters_from: layouts differ");
      if (dst[k].tensor.is_complex()) {
        std::ranges::copy(src[k].tensor.cvalues(), dst[k].tensor.mutable_cvalues().begin());
      } else {
        std::ranges::copy(src[k].tensor.values(), dst[k].tensor.mutable_values().begin());
      }
    }
  }

  // Independent copy with fresh storage.
  OperatorModel clone() const {
    OperatorModel m = build(config_, 0);
    m.copy_parameters_from(*this);
    return m;
  }

  static constexpr std::uint32_t kCheckpointVersion = 1;

 private:
  // PyTorch-style default: weights and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static std::pair<Tensor, Tensor> linear_init(std::size_t n_in, std::size_t n_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
    std::vector<double> w(n_in * n_out), b(n_out);
    for (double& x : w) x = rng.uniform(-bound, bound);
    for (double& x : b) x = rng.uniform(-bound, bound);
    return {Tensor::real({n_in, n_out}, std::move(w)), Tensor::real({n_out}, std::move(b))};
  }

  OperatorConfig config_;
  Tensor p_w_, p_b_;
  std::vector<Layer> layers_;
  Tensor q_w_, q_b_;
};

}  // namespace lno
