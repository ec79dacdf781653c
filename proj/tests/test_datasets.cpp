#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "lno/datasets.hpp"
#include "lno/ops.hpp"

using namespace lno;
using namespace lno::data;

namespace {

const double pi = std::numbers::pi;

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lno_test_" + name);
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// x'' + x = A sin(5t), x(0) = x'(0) = 0
double linear_oscillator(double A, double t) { return A / (1.0 - 25.0) * (std::sin(5.0 * t) - 5.0 * std::sin(t)); }

}  // namespace

TEST(Amplitudes, TrainFamily) {
  const auto a = amplitudes(Case::duffing, Split::train);
  ASSERT_EQ(a.size(), 200u);
  EXPECT_DOUBLE_EQ(a.front(), 0.05);
  EXPECT_NEAR(a.back(), 10.0, 1e-12);
  for (std::size_t k = 1; k < a.size(); ++k) EXPECT_NEAR(a[k] - a[k - 1], 0.05, 1e-12);
}

TEST(Amplitudes, EvaluationSplitsPartitionTheRange) {
  for (Case c : all_cases()) {
    const auto v = amplitudes(c, Split::vali), t = amplitudes(c, Split::test);
    ASSERT_EQ(v.size(), 50u);
    ASSERT_EQ(t.size(), 130u);
    EXPECT_TRUE(std::ranges::is_sorted(v));
    EXPECT_TRUE(std::ranges::is_sorted(t));
    std::vector<double> all(v);
    all.insert(all.end(), t.begin(), t.end());
    std::ranges::sort(all);
    const auto [lo, hi] = evaluation_range(c);
    for (std::size_t k = 0; k < all.size(); ++k) EXPECT_NEAR(all[k], lo + (hi - lo) * double(k) / 179.0, 1e-12);
    EXPECT_EQ(amplitudes(c, Split::vali), v);  // fixed seed
  }
  EXPECT_EQ(evaluation_range(Case::beam), (std::pair{1.24, 10.19}));
  EXPECT_EQ(evaluation_range(Case::lorenz), (std::pair{0.14, 9.09}));
}

TEST(Names, RoundTripAndRejection) {
  for (Case c : all_cases()) EXPECT_EQ(parse_case(to_string(c)), c);
  EXPECT_THROW(parse_case("navier-stokes"), ConfigError);
  EXPECT_THROW(check_scenario(Case::duffing, "rho5"), ConfigError);
  EXPECT_THROW(generate(Case::beam, "c0", Split::train), ConfigError);
  EXPECT_NO_THROW(check_scenario(Case::lorenz, "rho10"));
}

TEST(Duffing, ForcingSpotValue) {
  const auto d = generate(Case::duffing, "c0", Split::train, 4);
  EXPECT_NEAR(d.input(0)[10], 0.05 * std::sin(0.5), 1e-15);
  EXPECT_NEAR(d.input(0)[10], 0.023971, 1e-6);
  EXPECT_EQ(d.output(0)[0], 0.0);
}

TEST(Duffing, ZeroForcingStaysAtRest) {
  for (Case c : {Case::duffing, Case::pendulum}) {
    const auto x = integrate_response(OdeSystem::make(c, "c0"), Forcing{0.0, false}, 2048, 0.01);
    for (double v : x) EXPECT_EQ(v, 0.0);
  }
}

TEST(Duffing, SmallAmplitudeMatchesLinearOscillator) {
  for (Case c : {Case::duffing, Case::pendulum}) {
    const auto x = integrate_response(OdeSystem::make(c, "c0"), Forcing{0.05, false}, 2048, 0.01);
    std::vector<double> lin(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) lin[k] = linear_oscillator(0.05, 0.01 * double(k));
    EXPECT_LE(relative_l2(x, lin), 1e-3) << to_string(c);
  }
}

TEST(Lorenz, RhsAtInitialState) {
  for (const char* s : {"rho5", "rho10"}) {
    const auto sys = OdeSystem::make(Case::lorenz, s);
    const auto y0 = sys.initial_state();
    std::vector<double> d(3);
    sys.rhs(y0, 0.7, d);
    EXPECT_EQ(d[0], -10.0);
    EXPECT_EQ(d[1], sys.rho);
    EXPECT_EQ(d[2], -0.7);
  }
}

TEST(Lorenz, ZeroForcingApproachesEquilibrium) {
  for (const char* s : {"rho5", "rho10"}) {
    const auto sys = OdeSystem::make(Case::lorenz, s);
    const auto x = integrate_response(sys, Forcing{0.0, false}, 2, 50.0);
    EXPECT_NEAR(x[1], std::sqrt(8.0 / 3.0 * (sys.rho - 1.0)), 1e-3) << s;
  }
}

TEST(Lorenz, SelfConvergence) {
  for (const char* s : {"rho5", "rho10"}) {
    const auto sys = OdeSystem::make(Case::lorenz, s);
    for (const Forcing f : {Forcing{10.0, false}, Forcing{9.09, true}}) {
      const auto a = integrate_response(sys, f, 2048, 0.01);
      const auto b = integrate_response(sys, f, 2048, 0.01, 0.5 * ode_tolerance, 0.5 * ode_tolerance);
      EXPECT_LE(relative_l2(a, b), 1e-6) << s;
    }
  }
}

TEST(Beam, SpotValues) {
  for (double t : {0.0, 0.1, 0.37}) {
    const auto p = pde_pair(Case::beam, true, 1.0, 0.0, t);
    EXPECT_NEAR(p.source, -99.0 * std::sin(10.0 * t), 1e-13);
    EXPECT_NEAR(p.response, std::sin(10.0 * t), 1e-15);
  }
  for (Case c : {Case::beam, Case::diffusion, Case::reaction_diffusion}) {
    const auto p = pde_pair(c, false, 0.0, 0.3, 0.2);
    EXPECT_EQ(p.source, 0.0);
    EXPECT_EQ(p.response, 0.0);
  }
}

TEST(ReactionDiffusion, SpotValuesAndHomogeneity) {
  const auto p = pde_pair(Case::reaction_diffusion, true, 1.0, 0.5, 0.0);
  EXPECT_NEAR(p.source, 2.0 - pi * pi, 1e-13);
  EXPECT_NEAR(p.response, 1.0, 1e-15);
  // f(A) = A l + A^2 q: second differences isolate the quadratic part.
  for (bool train : {true, false}) {
    const double x = 0.3, t = 0.4;
    auto f = [&](double A) { return pde_pair(Case::reaction_diffusion, train, A, x, t).source; };
    const double q1 = (f(2.0) - 2.0 * f(1.0)) / 2.0, q3 = (f(6.0) - 2.0 * f(3.0)) / 2.0;
    EXPECT_NEAR(q3 / q1, 9.0, 1e-10);
    EXPECT_NEAR((f(3.0) - q3) / (f(1.0) - q1), 3.0, 1e-10);
  }
}

// Residuals of the test pairs from hand-differentiated responses.
TEST(PdeResidual, TestPairsSatisfyTheirEquations) {
  for (Case c : {Case::beam, Case::diffusion, Case::reaction_diffusion}) {
    const auto d = generate(c, "default", Split::test);
    const std::size_t Lx = d.grid.extents[0], Lt = d.grid.extents[1];
    double worst = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double A = d.amplitudes[i];
      for (std::size_t a = 0; a < Lx; ++a) {
        for (std::size_t b = 0; b < Lt; ++b) {
          const double x = double(a) * d.grid.spacing[0], t = double(b) * d.grid.spacing[1];
          const double f = d.input(i)[a * Lt + b];
          double residual = 0.0;
          if (c == Case::beam) {
            const double y = A * std::exp(-x) * std::sin(10 * t);
            residual = y /* y_xxxx */ + (-100.0 * y) /* y_tt */ - f;
          } else {
            const double y = A * std::exp(-t) * std::sin(pi * x);
            const double yxx = -pi * pi * y, yt = -y;
            residual = yxx - yt - f;
            if (c == Case::reaction_diffusion) residual += y * y;  // D = k = 1
          }
          worst = std::max(worst, std::abs(residual));
          EXPECT_NEAR(d.output(i)[a * Lt + b], c == Case::beam ? A * std::exp(-x) * std::sin(10 * t)
                                                               : A * std::exp(-t) * std::sin(pi * x),
                      1e-12);
        }
      }
    }
    EXPECT_LE(worst, 1e-10) << to_string(c);
  }
}

TEST(Contract, SampleCountsAndGrids) {
  const std::vector<std::pair<Case, GridSpec>> grids{
      {Case::duffing, {{2048}, {0.01}}},     {Case::beam, {{17, 51}, {0.1, 0.02}}},
      {Case::diffusion, {{80, 25}, {0.05, 0.02}}}, {Case::reaction_diffusion, {{40, 20}, {0.0513, 0.0526}}}};
  for (const auto& [c, g] : grids) EXPECT_EQ(grid_for(c), g);
  for (Case c : {Case::beam, Case::diffusion, Case::reaction_diffusion}) {
    for (Split s : {Split::train, Split::vali, Split::test}) {
      const auto d = generate(c, "default", s);
      EXPECT_EQ(d.size(), sample_count(s));
      EXPECT_EQ(d.inputs.size(), d.size() * d.points());
    }
  }
  const auto lz = generate(Case::lorenz, "rho5", Split::vali, 4);
  EXPECT_EQ(lz.size(), 50u);
  for (std::size_t i = 0; i < lz.size(); ++i) EXPECT_EQ(lz.output(i)[0], 1.0);
}

TEST(Generate, ParallelMatchesSerial) {
  const auto a = generate(Case::pendulum, "c0.5", Split::vali, 1);
  const auto b = generate(Case::pendulum, "c0.5", Split::vali, 8);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.outputs, b.outputs);
  EXPECT_EQ(serialize(a).buffer(), serialize(b).buffer());
}

TEST(File, RoundTrip) {
  const auto d = generate(Case::beam, "default", Split::vali);
  const auto path = temp_file("beam.lnod");
  save(d, path);
  const auto back = load(path);
  EXPECT_EQ(back.kind, d.kind);
  EXPECT_EQ(back.scenario, d.scenario);
  EXPECT_EQ(back.split, d.split);
  EXPECT_EQ(back.grid, d.grid);
  EXPECT_EQ(back.amplitudes, d.amplitudes);
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.outputs, d.outputs);
  std::filesystem::remove(path);
}

TEST(File, RejectsCorruption) {
  const auto d = generate(Case::diffusion, "default", Split::vali);
  const auto path = temp_file("bad.lnod");
  auto bytes = serialize(d).buffer();
  bytes[1] = 'X';
  write_bytes(path, bytes);
  EXPECT_THROW(load(path), FormatError);

  bytes = serialize(d).buffer();
  bytes.resize(bytes.size() - 8);
  write_bytes(path, bytes);
  EXPECT_THROW(load(path), FormatError);

  bytes = serialize(d).buffer();
  bytes.push_back(0);
  write_bytes(path, bytes);
  EXPECT_THROW(load(path), FormatError);

  bytes = serialize(d).buffer();
  bytes[12] = 81;  // first extent 80 -> 81: payload no longer matches
  write_bytes(path, bytes);
  EXPECT_THROW(load(path), FormatError);

  bytes = serialize(d).buffer();
  bytes[4] = 2;  // version
  write_bytes(path, bytes);
  EXPECT_THROW(load(path), FormatError);
  std::filesystem::remove(path);
}

TEST(File, Csv) {
  const auto d = generate(Case::beam, "default", Split::vali);
  const auto path = temp_file("beam.csv");
  write_csv(d, 3, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,t,f,y");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, d.points());
  EXPECT_THROW(write_csv(d, 50, path), ContractError);
  std::filesystem::remove(path);
}
