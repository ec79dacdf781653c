#pragma once

// Hyperparameters per benchmark row (layer count, width, modes, learning rate,
// batch size, activation, epochs) and the reduced "desk" profile used for
// single-machine reproduction runs.

#include <algorithm>
#include <string>
#include <string_view>

#include "lno/datasets.hpp"
#include "lno/model.hpp"
#include "lno/training.hpp"

namespace lno::presets {

enum class Profile { paper, desk };

inline Profile parse_profile(std::string_view name) {
  if (name == "paper") return Profile::paper;
  if (name == "desk") return Profile::desk;
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or desk)");
}

inline std::string_view to_string(Profile p) { return p == Profile::paper ? "paper" : "desk"; }

struct Preset {
  data::Case kind;
  std::string scenario;
  OperatorConfig model;
  training::TrainConfig train;
  std::size_t trials = 5;
};

namespace detail {

struct Row {
  std::size_t width;
  std::vector<std::size_t> modes;
  double lr;
  std::size_t batch;
  Activation activation;
  std::size_t epochs;
};

inline Row table_row(data::Case c, const std::string& scenario, ModelKind kind) {
  const bool lno = kind == ModelKind::lno;
  switch (c) {
    case data::Case::duffing:
      if (lno) return {4, {16}, 0.002, 20, Activation::sin, 1000};
      return {scenario == "c0" ? 128u : 32u, {1025}, 0.002, 20, Activation::sin, 1000};
    case data::Case::pendulum:
      if (!lno) return {32, {1025}, 0.002, 40, Activation::sin, 1200};
      if (scenario == "c0") return {4, {20}, 0.005, 40, Activation::sin, 1200};
      return {4, {8}, 0.002, 40, Activation::sin, 1200};
    case data::Case::lorenz:
      if (!lno) return {32, {1025}, 0.002, 20, Activation::tanh, 1000};
      if (scenario == "rho5") return {4, {16}, 0.005, 20, Activation::tanh, 1000};
      return {4, {84}, 0.002, 10, Activation::tanh, 1000};
    case data::Case::beam:
      return lno ? Row{16, {4, 4}, 0.002, 50, Activation::sin, 1000} : Row{64, {9, 26}, 0.002, 50, Activation::sin, 1000};
    case data::Case::diffusion:
      return lno ? Row{16, {4, 4}, 0.002, 50, Activation::sin, 1000} : Row{64, {41, 13}, 0.002, 50, Activation::sin, 1000};
    case data::Case::reaction_diffusion:
      // 40 x-modes are listed for a 40-point axis; the half spectrum holds 21.
      return lno ? Row{48, {4, 4}, 0.002, 50, Activation::sin, 1000} : Row{32, {40, 11}, 0.002, 50, Activation::sin, 1000};
  }
  throw ConfigError("unknown case");
}

}  // namespace detail

// Desk profile: one-core reproduction runs. Each row keeps the table's
// width (FNO capped at 32; 128 does not fit in memory for 2048-point signals),
// learning rate, batch and step decay, and stops early. The epoch counts give
// both models about the same wall-clock time per trial (~250 s for the ODE
// cases, ~150 s for the PDE cases on one core), so five trials of each fit in
// an hour for an ODE case and half an hour for a PDE case.
inline constexpr std::size_t kDeskFnoWidthCap = 32;

namespace detail {

inline std::size_t desk_epochs(data::Case c, const std::string& scenario, ModelKind kind) {
  const bool lno = kind == ModelKind::lno;
  switch (c) {
    case data::Case::duffing:
    case data::Case::pendulum:
      return lno ? 200 : 25;
    case data::Case::lorenz:
      return lno ? (scenario == "rho10" ? 25 : 200) : 25;
    case data::Case::beam:
      return lno ? 35 : 30;
    case data::Case::diffusion:
      return lno ? 20 : 10;
    case data::Case::reaction_diffusion:
      return lno ? 8 : 30;
  }
  throw ConfigError("unknown case");
}

}  // namespace detail

inline Preset preset(data::Case c, const std::string& scenario, ModelKind kind, Profile profile = Profile::paper) {
  data::check_scenario(c, scenario);
  const auto row = detail::table_row(c, scenario, kind);
  const auto grid = data::grid_for(c);

  Preset p;
  p.kind = c;
  p.scenario = scenario;
  p.model.kind = kind;
  p.model.layers = kind == ModelKind::lno ? 1 : 4;
  p.model.width = row.width;
  p.model.activation = row.activation;
  p.model.grid = grid.extents;
  p.model.spacing = grid.spacing;
  p.model.modes = row.modes;
  if (kind == ModelKind::fno) {
    for (std::size_t a = 0; a < p.model.modes.size(); ++a) {
      p.model.modes[a] = std::min(p.model.modes[a], fourier::available_modes(grid.extents[a]));
    }
  }
  p.train.learning_rate = row.lr;
  p.train.batch_size = row.batch;
  p.train.epochs = row.epochs;

  if (profile == Profile::desk) {
    p.train.epochs = detail::desk_epochs(c, scenario, kind);
    if (kind == ModelKind::fno) p.model.width = std::min(p.model.width, kDeskFnoWidthCap);
  }
  p.model.validate();
  return p;
}

}  // namespace lno::presets
