#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "lno/model.hpp"
#include "support.hpp"

using namespace lno;
using lno::testing::gradcheck;
using lno::testing::random_values;

namespace {

OperatorConfig duffing_lno() {
  OperatorConfig c;
  c.kind = ModelKind::lno;
  c.layers = 1;
  c.width = 4;
  c.modes = {16};
  c.grid = {2048};
  c.spacing = {0.01};
  return c;
}

OperatorConfig small(ModelKind kind, std::vector<std::size_t> grid, std::vector<std::size_t> modes) {
  OperatorConfig c;
  c.kind = kind;
  c.layers = kind == ModelKind::lno ? 1 : 4;
  c.width = 3;
  c.modes = std::move(modes);
  c.grid = grid;
  c.spacing.assign(grid.size(), 0.1);
  c.input_scale = 1.7;
  c.output_scale = 0.6;
  return c;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lno_test_" + name);
}

}  // namespace

TEST(Build, DuffingParameterCount) {
  const auto m = OperatorModel::build(duffing_lno(), 1);
  // lift [f, t] -> 4, 4x4x16 poles and residues, 4x4 bypass, 4 -> 1 projection
  const std::size_t want = (2 * 4 + 4) + 2 * (4 * 4 * 16) + (4 * 4 + 4) + (4 + 1);
  EXPECT_EQ(m.parameter_count(), want);
  EXPECT_EQ(want, 549u);
}

TEST(Build, ParameterCountsForTableRows) {
  struct Row {
    ModelKind kind;
    std::size_t width;
    std::vector<std::size_t> modes, grid;
  };
  const std::vector<Row> rows{
      {ModelKind::fno, 32, {1025}, {2048}},
      {ModelKind::lno, 16, {4, 4}, {17, 51}},
      {ModelKind::fno, 64, {9, 26}, {17, 51}},
      {ModelKind::lno, 48, {4, 4}, {40, 20}},
  };
  for (const auto& r : rows) {
    OperatorConfig c;
    c.kind = r.kind;
    c.layers = r.kind == ModelKind::lno ? 1 : 4;
    c.width = r.width;
    c.modes = r.modes;
    c.grid = r.grid;
    c.spacing.assign(r.grid.size(), 0.1);
    const std::size_t D = r.grid.size(), d = r.width;
    std::size_t kernel = 0;
    if (r.kind == ModelKind::lno) {
      kernel = D == 1 ? 2 * d * d * r.modes[0] : d * d * (r.modes[0] + r.modes[1] + r.modes[0] * r.modes[1]);
    } else {
      kernel = D == 1 ? d * d * r.modes[0] : 2 * d * d * r.modes[0] * r.modes[1];
    }
    const std::size_t want = ((1 + D) * d + d) + c.layers * (kernel + d * d + d) + (d + 1);
    EXPECT_EQ(OperatorModel::build(c, 0).parameter_count(), want);
  }
}

TEST(Build, SameSeedSameParameters) {
  const auto a = OperatorModel::build(duffing_lno(), 42), b = OperatorModel::build(duffing_lno(), 42);
  const auto c = OperatorModel::build(duffing_lno(), 43);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    if (pa[k].tensor.is_complex()) {
      EXPECT_TRUE(std::ranges::equal(pa[k].tensor.cvalues(), pb[k].tensor.cvalues()));
      differs = differs || !std::ranges::equal(pa[k].tensor.cvalues(), pc[k].tensor.cvalues());
    } else {
      EXPECT_TRUE(std::ranges::equal(pa[k].tensor.values(), pb[k].tensor.values()));
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Build, InitialPolesAreStable) {
  const auto m = OperatorModel::build(duffing_lno(), 7);
  for (const auto& p : m.parameters()) {
    if (p.name == "layer0.poles") {
      for (cplx z : p.tensor.cvalues()) EXPECT_LT(z.real(), 0.0);
    }
  }
}

TEST(Build, MinimalModelRuns) {
  OperatorConfig c = duffing_lno();
  c.width = 1;
  c.modes = {1};
  c.grid = {8};
  c.spacing = {0.1};
  const auto m = OperatorModel::build(c, 3);
  Rng rng(1);
  const Tensor y = m.forward(Tensor::real({2, 8, 1}, random_values(16, rng)));
  EXPECT_EQ(y.shape(), (Shape{2, 8, 1}));
}

TEST(Build, InvalidConfigurations) {
  OperatorConfig c = duffing_lno();
  c.modes = {4, 4};
  EXPECT_THROW(OperatorModel::build(c, 0), ConfigError);
  c = duffing_lno();
  c.layers = 4;
  EXPECT_THROW(OperatorModel::build(c, 0), ConfigError);
  c = duffing_lno();
  c.kind = ModelKind::fno;
  EXPECT_THROW(OperatorModel::build(c, 0), ConfigError);  // layers must be 4
  c.layers = 4;
  c.modes = {1026};
  EXPECT_THROW(OperatorModel::build(c, 0), ConfigError);
  c.modes = {1025};
  c.width = 0;
  EXPECT_THROW(OperatorModel::build(c, 0), ConfigError);
  EXPECT_THROW(operator_config_from_json({{"widht", 3}}), ConfigError);
  EXPECT_THROW(operator_config_from_json({{"width", "three"}}), ConfigError);
  EXPECT_THROW(operator_config_from_json({{"activation", "relu"}}), ConfigError);
}

TEST(Forward, ZeroInputZeroBiasesGivesZero) {
  for (ModelKind kind : {ModelKind::lno, ModelKind::fno}) {
    for (Activation act : {Activation::sin, Activation::tanh}) {
      OperatorConfig c = small(kind, {16}, {kind == ModelKind::lno ? 3u : 9u});
      c.coordinates = false;
      c.activation = act;
      auto m = OperatorModel::build(c, 5);
      for (auto& p : m.parameters())
        if (p.name.ends_with("bias")) std::ranges::fill(p.tensor.mutable_values(), 0.0);
      const Tensor y = m.forward(Tensor::zeros({2, 16, 1}));
      for (double x : y.values()) EXPECT_EQ(x, 0.0);
    }
  }
}

TEST(Forward, DuffingShape) {
  const auto m = OperatorModel::build(duffing_lno(), 1);
  EXPECT_EQ(m.forward(Tensor::zeros({3, 2048, 1})).shape(), (Shape{3, 2048, 1}));
}

TEST(Forward, RejectsWrongDimensionality) {
  const auto m = OperatorModel::build(duffing_lno(), 1);
  EXPECT_THROW(m.forward(Tensor::zeros({3, 16, 8, 1})), DimensionError);
}

class ModelGradients : public ::testing::TestWithParam<int> {};

TEST_P(ModelGradients, EveryParameterTensor) {
  const int which = GetParam();
  const ModelKind kind = which % 2 == 0 ? ModelKind::lno : ModelKind::fno;
  const bool two_d = which >= 2;
  OperatorConfig c = two_d ? small(kind, {6, 7}, kind == ModelKind::lno ? std::vector<std::size_t>{2, 2} : std::vector<std::size_t>{3, 3})
                           : small(kind, {16}, {kind == ModelKind::lno ? 3u : 6u});
  c.activation = which == 1 ? Activation::tanh : Activation::sin;
  const auto m = OperatorModel::build(c, 11);
  Rng rng(100 + which);
  std::size_t points = 1;
  for (auto e : c.grid) points *= e;
  Shape shape{2};
  shape.insert(shape.end(), c.grid.begin(), c.grid.end());
  shape.push_back(1);
  const Tensor f = Tensor::real(shape, random_values(2 * points, rng));
  const Tensor y = Tensor::real(shape, random_values(2 * points, rng));
  auto loss = [&] { return relative_l2(m.forward(f), y); };
  for (const auto& p : m.parameters()) {
    const auto r = gradcheck(loss, p.tensor, 20, rng);
    EXPECT_LE(r.normwise(), 1e-5) << p.name;
    EXPECT_GT(r.max_grad, 0.0) << p.name;
    EXPECT_GE(r.checked, std::min<std::size_t>(20, p.tensor.size()));
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, ModelGradients, ::testing::Values(0, 1, 2, 3));

TEST(Forward, LnoConsistentOnFinerGrid) {
  OperatorConfig c = small(ModelKind::lno, {64}, {4});
  c.coordinates = false;  // the coordinate ramp is not band-limited
  c.spacing = {0.05};
  const auto m = OperatorModel::build(c, 9);
  auto sample = [](std::size_t L, double T) {
    std::vector<double> v(L);
    for (std::size_t k = 0; k < L; ++k) {
      const double t = k * T / L;
      v[k] = std::sin(2 * std::numbers::pi * 2 * t / T) + 0.3 * std::cos(2 * std::numbers::pi * 5 * t / T);
    }
    return v;
  };
  const double T = 64 * 0.05;
  const Tensor coarse = m.forward(Tensor::real({1, 64, 1}, sample(64, T)));
  const Tensor fine = m.forward(Tensor::real({1, 128, 1}, sample(128, T)), {0.025});
  std::vector<double> restricted(64);
  for (std::size_t k = 0; k < 64; ++k) restricted[k] = fine.values()[2 * k];
  EXPECT_LE(relative_l2(restricted, coarse.values()), 1e-6);
}

TEST(Checkpoint, RoundTrip) {
  for (ModelKind kind : {ModelKind::lno, ModelKind::fno}) {
    const auto m = OperatorModel::build(small(kind, {6, 7}, {2, 3}), 4);
    const auto path = temp_file("ckpt.bin");
    m.save(path);
    const auto back = OperatorModel::load(path);
    EXPECT_EQ(to_json(back.config()), to_json(m.config()));
    Rng rng(2);
    const Tensor f = Tensor::real({2, 6, 7, 1}, random_values(84, rng));
    EXPECT_TRUE(std::ranges::equal(m.forward(f).values(), back.forward(f).values()));
    EXPECT_EQ(back.serialize().buffer(), m.serialize().buffer());
    std::filesystem::remove(path);
  }
}

TEST(Checkpoint, RejectsCorruption) {
  const auto m = OperatorModel::build(duffing_lno(), 4);
  const auto path = temp_file("ckpt_bad.bin");
  auto bytes = m.serialize().buffer();
  bytes[0] = 'X';
  std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(OperatorModel::load(path), FormatError);
  bytes = m.serialize().buffer();
  bytes.resize(bytes.size() - 9);
  std::ofstream(path, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(OperatorModel::load(path), FormatError);
  bytes = m.serialize().buffer();
  bytes[4] = 7;  // version
  std::ofstream(path, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(OperatorModel::load(path), FormatError);
  std::filesystem::remove(path);
}
