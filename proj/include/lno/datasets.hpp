#pragma once

// The six benchmark datasets. ODE samples are integrated with rk45 on a
// 2048-point grid; PDE samples are closed-form (source, response) pairs on
// an [x, t] grid, emitted exactly as the formulas read.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lno/error.hpp"
#include "lno/io.hpp"
#include "lno/parallel.hpp"
#include "lno/random.hpp"
#include "lno/rk45.hpp"

namespace lno::data {

enum class Case { duffing, pendulum, lorenz, beam, diffusion, reaction_diffusion };
enum class Split { train, vali, test };

inline const std::vector<Case>& all_cases() {
  static const std::vector<Case> cases{Case::duffing, Case::pendulum,  Case::lorenz,
                                       Case::beam,    Case::diffusion, Case::reaction_diffusion};
  return cases;
}

inline std::string to_string(Case c) {
  switch (c) {
    case Case::duffing: return "duffing";
    case Case::pendulum: return "pendulum";
    case Case::lorenz: return "lorenz";
    case Case::beam: return "beam";
    case Case::diffusion: return "diffusion";
    case Case::reaction_diffusion: return "reaction-diffusion";
  }
  return "?";
}

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::vali: return "vali";
    case Split::test: return "test";
  }
  return "?";
}

inline std::string case_names() {
  std::string s;
  for (Case c : all_cases()) s += (s.empty() ? "" : ", ") + to_string(c);
  return s;
}

inline Case parse_case(const std::string& name) {
  for (Case c : all_cases())
    if (to_string(c) == name) return c;
  throw ConfigError("unknown case '" + name + "' (valid: " + case_names() + ")");
}

inline Split parse_split(const std::string& name) {
  for (Split s : {Split::train, Split::vali, Split::test})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown split '" + name + "' (valid: train, vali, test)");
}

inline bool is_pde(Case c) { return c == Case::beam || c == Case::diffusion || c == Case::reaction_diffusion; }

inline std::vector<std::string> scenarios(Case c) {
  switch (c) {
    case Case::duffing:
    case Case::pendulum: return {"c0", "c0.5"};
    case Case::lorenz: return {"rho5", "rho10"};
    default: return {"default"};
  }
}

inline void check_scenario(Case c, const std::string& scenario) {
  const auto valid = scenarios(c);
  if (std::ranges::find(valid, scenario) != valid.end()) return;
  std::string list;
  for (const auto& s : valid) list += (list.empty() ? "" : ", ") + s;
  throw ConfigError("unknown scenario '" + scenario + "' for case " + to_string(c) + " (valid: " + list + ")");
}

// ---------------------------------------------------------------- grids

struct GridSpec {
  std::vector<std::size_t> extents;  // [L] or [Lx, Lt]
  std::vector<double> spacing;       // same order

  std::size_t points() const {
    std::size_t n = 1;
    for (auto e : extents) n *= e;
    return n;
  }
  bool operator==(const GridSpec&) const = default;
};

inline GridSpec grid_for(Case c) {
  switch (c) {
    case Case::duffing:
    case Case::pendulum:
    case Case::lorenz: return {{2048}, {0.01}};
    case Case::beam: return {{17, 51}, {0.1, 0.02}};
    case Case::diffusion: return {{80, 25}, {0.05, 0.02}};
    case Case::reaction_diffusion: return {{40, 20}, {0.0513, 0.0526}};
  }
  return {};
}

// ----------------------------------------------------------- amplitudes

inline constexpr std::size_t train_count = 200, vali_count = 50, test_count = 130;
inline constexpr std::uint64_t split_seed = 20230524;

inline std::size_t sample_count(Split s) {
  return s == Split::train ? train_count : s == Split::vali ? vali_count : test_count;
}

// Range of the evaluation amplitudes.
inline std::pair<double, double> evaluation_range(Case c) {
  return (c == Case::beam || c == Case::diffusion) ? std::pair{1.24, 10.19} : std::pair{0.14, 9.09};
}

// Train: 0.05, 0.10, ..., 10.00. Vali/test: 180 evenly spaced values over the
// evaluation range, shuffled with a fixed seed into 50 + 130, each sorted.
inline std::vector<double> amplitudes(Case c, Split s) {
  if (s == Split::train) {
    std::vector<double> a(train_count);
    for (std::size_t k = 0; k < train_count; ++k) a[k] = 0.05 * static_cast<double>(k + 1);
    return a;
  }
  const auto [lo, hi] = evaluation_range(c);
  const std::size_t total = vali_count + test_count;
  std::vector<double> all(total);
  for (std::size_t k = 0; k < total; ++k) all[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(total - 1);
  Rng rng(split_seed);
  rng.shuffle(std::span<double>(all));
  std::vector<double> out = s == Split::vali ? std::vector<double>(all.begin(), all.begin() + vali_count)
                                             : std::vector<double>(all.begin() + vali_count, all.end());
  std::ranges::sort(out);
  return out;
}

// -------------------------------------------------------------- ODEs

// Sinusoidal forcing A sin(5t), with an e^{-0.05 t} envelope on the
// evaluation splits.
struct Forcing {
  double amplitude = 0.0;
  bool decaying = false;
  double operator()(double t) const {
    const double s = amplitude * std::sin(5.0 * t);
    return decaying ? std::exp(-0.05 * t) * s : s;
  }
};

struct OdeSystem {
  Case kind = Case::duffing;
  double damping = 0.0;  // c for duffing and pendulum
  double rho = 0.0;      // lorenz
  static constexpr double sigma = 10.0, beta = 8.0 / 3.0;

  static OdeSystem make(Case c, const std::string& scenario) {
    check_scenario(c, scenario);
    OdeSystem s;
    s.kind = c;
    if (c == Case::lorenz) {
      s.rho = scenario == "rho5" ? 5.0 : 10.0;
    } else {
      s.damping = scenario == "c0" ? 0.0 : 0.5;
    }
    return s;
  }

  std::vector<double> initial_state() const {
    return kind == Case::lorenz ? std::vector<double>{1.0, 0.0, 0.0} : std::vector<double>{0.0, 0.0};
  }

  // m = k1 = k3 = 1 for duffing, g/l = 1 for the pendulum.
  void rhs(std::span<const double> y, double f, std::span<double> d) const {
    switch (kind) {
      case Case::duffing:
        d[0] = y[1];
        d[1] = f - damping * y[1] - y[0] - y[0] * y[0] * y[0];
        break;
      case Case::pendulum:
        d[0] = y[1];
        d[1] = f - damping * y[1] - std::sin(y[0]);
        break;
      case Case::lorenz:
        d[0] = sigma * (y[1] - y[0]);
        d[1] = y[0] * (rho - y[2]) - y[1];
        d[2] = y[0] * y[1] - beta * y[2] - f;
        break;
      default: throw ContractError("OdeSystem: " + to_string(kind) + " is not an ODE case");
    }
  }
};

inline constexpr double ode_tolerance = 1e-8;

// Response x(t) on t_k = k dt, k < L.
inline std::vector<double> integrate_response(const OdeSystem& sys, const Forcing& f, std::size_t L, double dt,
                                              double rtol = ode_tolerance, double atol = ode_tolerance) {
  std::vector<double> t(L);
  for (std::size_t k = 0; k < L; ++k) t[k] = static_cast<double>(k) * dt;
  const auto sol = ode::rk45([&](double tt, std::span<const double> y, std::span<double> d) { sys.rhs(y, f(tt), d); },
                             sys.initial_state(), t, rtol, atol);
  return sol.component(0);
}

// ---------------------------------------------------------------- PDEs

struct PdePair {
  double source, response;
};

// Closed-form pair at (x, t). `train` selects the slowly decaying family.
inline PdePair pde_pair(Case c, bool train, double A, double x, double t) {
  const double pi = std::numbers::pi;
  switch (c) {
    case Case::beam: {
      const double env = A * std::exp(-(train ? 0.05 : 1.0) * x) * std::sin(10.0 * t);
      return {(1.0 - 100.0) * env, env};
    }
    case Case::diffusion: {
      const double y = A * std::exp(-(train ? 0.05 : 1.0) * t) * std::sin(pi * x);
      return {(1.0 - pi * pi) * y, y};
    }
    case Case::reaction_diffusion: {
      const double s = std::sin(pi * x);
      const double y = A * std::exp(-(train ? 0.05 : 1.0) * t) * s;
      const double quad = A * A * std::exp(-(train ? 0.1 : 2.0) * t) * s * s;
      return {(1.0 - pi * pi) * y + quad, y};
    }
    default: throw ContractError("pde_pair: " + to_string(c) + " is not a PDE case");
  }
}

// ------------------------------------------------------------- dataset

struct TimeSeriesDataset {
  Case kind = Case::duffing;
  std::string scenario;
  Split split = Split::train;
  GridSpec grid;
  std::vector<double> amplitudes;
  std::vector<double> inputs;   // [N x points]
  std::vector<double> outputs;  // [N x points]

  std::size_t size() const { return amplitudes.size(); }
  std::size_t points() const { return grid.points(); }
  std::span<const double> input(std::size_t i) const { return {inputs.data() + i * points(), points()}; }
  std::span<const double> output(std::size_t i) const { return {outputs.data() + i * points(), points()}; }

  nlohmann::json metadata() const {
    return {{"case", to_string(kind)},
            {"scenario", scenario},
            {"split", to_string(split)},
            {"axes", grid.extents.size() == 1 ? nlohmann::json{"t"} : nlohmann::json{"x", "t"}},
            {"amplitudes", amplitudes}};
  }

  void validate() const {
    if (grid.extents.empty() || grid.extents.size() > 2 || grid.spacing.size() != grid.extents.size()) {
      throw FormatError("dataset: grid must have one or two axes with matching spacings");
    }
    for (double h : grid.spacing)
      if (!(h > 0.0) || !std::isfinite(h)) throw FormatError("dataset: grid spacing must be positive");
    if (inputs.size() != size() * points() || outputs.size() != size() * points()) {
      throw FormatError("dataset: payload length does not match " + std::to_string(size()) + " samples of " +
                        std::to_string(points()) + " points");
    }
    for (double v : inputs)
      if (!std::isfinite(v)) throw FormatError("dataset: non-finite input value");
    for (double v : outputs)
      if (!std::isfinite(v)) throw FormatError("dataset: non-finite output value");
  }
};

inline TimeSeriesDataset generate(Case c, const std::string& scenario, Split split, std::size_t jobs = 1) {
  check_scenario(c, scenario);
  TimeSeriesDataset d;
  d.kind = c;
  d.scenario = scenario;
  d.split = split;
  d.grid = grid_for(c);
  d.amplitudes = amplitudes(c, split);
  const std::size_t N = d.size(), P = d.points();
  d.inputs.resize(N * P);
  d.outputs.resize(N * P);
  const bool train = split == Split::train;

  if (!is_pde(c)) {
    const auto sys = OdeSystem::make(c, scenario);
    const double dt = d.grid.spacing[0];
    parallel_for(N, jobs, [&](std::size_t i) {
      const Forcing f{d.amplitudes[i], !train};
      std::vector<double> x;
      try {
        x = integrate_response(sys, f, P, dt);
      } catch (const IntegrationError& e) {
        throw IntegrationError(to_string(c) + "/" + scenario + "/" + to_string(split) + " sample " +
                                   std::to_string(i) + " (A = " + std::to_string(d.amplitudes[i]) + "): " + e.what(),
                               e.time());
      }
      for (std::size_t k = 0; k < P; ++k) {
        d.inputs[i * P + k] = f(static_cast<double>(k) * dt);
        d.outputs[i * P + k] = x[k];
      }
    });
  } else {
    const std::size_t Lx = d.grid.extents[0], Lt = d.grid.extents[1];
    const double dx = d.grid.spacing[0], dt = d.grid.spacing[1];
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t a = 0; a < Lx; ++a) {
        for (std::size_t b = 0; b < Lt; ++b) {
          const auto p = pde_pair(c, train, d.amplitudes[i], static_cast<double>(a) * dx, static_cast<double>(b) * dt);
          d.inputs[i * P + a * Lt + b] = p.source;
          d.outputs[i * P + a * Lt + b] = p.response;
        }
      }
    }
  }
  d.validate();
  return d;
}

// ------------------------------------------------------------------ I/O
//
// "LNOD", u32 version, u32 rank, u32 extents[rank], u32 samples,
// f64 spacing[rank], u32 length + JSON metadata, f64 inputs, f64 outputs.

inline constexpr std::uint32_t dataset_version = 1;

inline io::Writer serialize(const TimeSeriesDataset& d) {
  d.validate();
  io::Writer w;
  w.bytes("LNOD", 4);
  w.u32(dataset_version);
  w.u32(static_cast<std::uint32_t>(d.grid.extents.size()));
  for (auto e : d.grid.extents) w.u32(static_cast<std::uint32_t>(e));
  w.u32(static_cast<std::uint32_t>(d.size()));
  for (double h : d.grid.spacing) w.f64(h);
  w.string(d.metadata().dump());
  for (double v : d.inputs) w.f64(v);
  for (double v : d.outputs) w.f64(v);
  return w;
}

inline void save(const TimeSeriesDataset& d, const std::string& path) { serialize(d).save(path); }

inline TimeSeriesDataset load(const std::string& path) {
  auto r = io::Reader::open(path);
  if (r.bytes(4) != "LNOD") throw FormatError(path + ": not a dataset file (bad magic)");
  const auto version = r.u32();
  if (version != dataset_version) {
    throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
  }
  TimeSeriesDataset d;
  const auto rank = r.u32();
  if (rank < 1 || rank > 2) throw FormatError(path + ": dataset rank must be 1 or 2, got " + std::to_string(rank));
  for (std::uint32_t k = 0; k < rank; ++k) d.grid.extents.push_back(r.u32());
  const auto samples = r.u32();
  for (std::uint32_t k = 0; k < rank; ++k) d.grid.spacing.push_back(r.f64());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.string());
    d.kind = parse_case(meta.at("case").get<std::string>());
    d.scenario = meta.at("scenario").get<std::string>();
    d.split = parse_split(meta.at("split").get<std::string>());
    d.amplitudes = meta.at("amplitudes").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(path + ": bad metadata: " + e.what());
  }
  if (d.amplitudes.size() != samples) {
    throw FormatError(path + ": header declares " + std::to_string(samples) + " samples but metadata lists " +
                      std::to_string(d.amplitudes.size()) + " amplitudes");
  }
  const std::size_t n = static_cast<std::size_t>(samples) * d.points();
  if (r.remaining() != 2 * n * sizeof(double)) {
    throw FormatError(path + ": payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                      std::to_string(2 * n * sizeof(double)));
  }
  d.inputs.resize(n);
  d.outputs.resize(n);
  for (double& v : d.inputs) v = r.f64();
  for (double& v : d.outputs) v = r.f64();
  d.validate();
  return d;
}

// One sample as CSV: "t,f,x" for ODEs and "x,t,f,y" for PDEs.
inline void write_csv(const TimeSeriesDataset& d, std::size_t sample, const std::string& path) {
  if (sample >= d.size()) throw ContractError("write_csv: sample " + std::to_string(sample) + " out of range");
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.precision(17);
  const auto f = d.input(sample), y = d.output(sample);
  if (d.grid.extents.size() == 1) {
    out << "t,f,x\n";
    for (std::size_t k = 0; k < d.points(); ++k) out << static_cast<double>(k) * d.grid.spacing[0] << ',' << f[k] << ',' << y[k] << '\n';
  } else {
    out << "x,t,f,y\n";
    const std::size_t Lt = d.grid.extents[1];
    for (std::size_t k = 0; k < d.points(); ++k) {
      out << static_cast<double>(k / Lt) * d.grid.spacing[0] << ',' << static_cast<double>(k % Lt) * d.grid.spacing[1]
          << ',' << f[k] << ',' << y[k] << '\n';
    }
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace lno::data
