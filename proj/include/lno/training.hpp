#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lno/datasets.hpp"
#include "lno/model.hpp"
#include "lno/parallel.hpp"

namespace lno::training {

// ----------------------------------------------------------- batches

// Samples `indices` of a split as a [B, grid..., 1] tensor.
inline Tensor batch_tensor(const data::TimeSeriesDataset& d, bool outputs, std::span<const std::size_t> indices) {
  const std::size_t P = d.points();
  std::vector<double> v(indices.size() * P);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto src = outputs ? d.output(indices[b]) : d.input(indices[b]);
    std::copy(src.begin(), src.end(), v.begin() + static_cast<std::ptrdiff_t>(b * P));
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), d.grid.extents.begin(), d.grid.extents.end());
  shape.push_back(1);
  return Tensor::real(shape, std::move(v));
}

inline double rms(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

// Grid, spacing and the scale-only normalization taken from the train split.
inline OperatorConfig fit_to_data(OperatorConfig c, const data::TimeSeriesDataset& train) {
  if (train.split != data::Split::train) throw ContractError("fit_to_data: scales must come from the train split");
  c.grid = train.grid.extents;
  c.spacing = train.grid.spacing;
  c.input_scale = rms(train.inputs);
  c.output_scale = rms(train.outputs);
  if (!(c.input_scale > 0.0) || !(c.output_scale > 0.0)) {
    throw DegenerateTargetError("fit_to_data: train split is identically zero");
  }
  return c;
}

inline void check_compatible(const OperatorModel& m, const data::TimeSeriesDataset& d) {
  const auto& c = m.config();
  if (c.grid != d.grid.extents || c.in_channels != 1 || c.out_channels != 1) {
    throw DimensionError("model grid " + to_string(Shape(c.grid.begin(), c.grid.end())) + " does not match " +
                         data::to_string(d.kind) + " data on " +
                         to_string(Shape(d.grid.extents.begin(), d.grid.extents.end())));
  }
}

// -------------------------------------------------------- evaluation

struct Evaluation {
  std::vector<double> per_sample;
  double mean = 0.0;
  double std = 0.0;  // population
};

inline Evaluation summarize(std::vector<double> values) {
  Evaluation e;
  e.per_sample = std::move(values);
  const double n = static_cast<double>(e.per_sample.size());
  if (e.per_sample.empty()) return e;
  e.mean = std::accumulate(e.per_sample.begin(), e.per_sample.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : e.per_sample) ss += (v - e.mean) * (v - e.mean);
  e.std = std::sqrt(ss / n);
  return e;
}

inline Evaluation evaluate(const OperatorModel& m, const data::TimeSeriesDataset& d, std::size_t chunk = 32) {
  check_compatible(m, d);
  NoGradGuard no_grad;
  std::vector<double> errors(d.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < d.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(d.size(), start + chunk); ++i) idx.push_back(i);
    const Tensor pred = m.forward(batch_tensor(d, false, idx));
    const std::size_t P = d.points();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      errors[idx[b]] = relative_l2(pred.values().subspan(b * P, P), d.output(idx[b]));
    }
  }
  return summarize(std::move(errors));
}

// -------------------------------------------------------------- Adam

// Complex parameters are updated as pairs of reals: Re and Im each carry
// their own first and second moments.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      const std::size_t n = p.tensor.size() * (p.tensor.is_complex() ? 2 : 1);
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    }
  }

  std::size_t steps() const { return t_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  // Parameters without a gradient are treated as having gradient zero.
  void step(double lr) {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      const bool ok = p.tensor.is_complex()
                          ? std::ranges::all_of(p.tensor.cgrad(), [](cplx g) { return std::isfinite(g.real()) && std::isfinite(g.imag()); })
                          : std::ranges::all_of(p.tensor.grad(), [](double g) { return std::isfinite(g); });
      if (!ok) throw NonFiniteError("adam: non-finite gradient in parameter " + p.name);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor p = params_[k].tensor;
      auto& m = m_[k];
      auto& v = v_[k];
      auto update = [&](std::size_t i, double g) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        return lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      };
      const bool has = p.has_grad();
      if (p.is_complex()) {
        auto w = p.mutable_cvalues();
        for (std::size_t i = 0; i < w.size(); ++i) {
          const cplx g = has ? p.cgrad()[i] : cplx{};
          const double dr = update(2 * i, g.real()), di = update(2 * i + 1, g.imag());
          w[i] -= cplx(dr, di);
        }
      } else {
        auto w = p.mutable_values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= update(i, has ? p.grad()[i] : 0.0);
      }
    }
  }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

// ------------------------------------------------------------ config

struct TrainConfig {
  double learning_rate = 0.002;
  std::size_t batch_size = 20;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t decay_every = 100;  // 0: constant rate
  double decay_factor = 0.5;
  std::string loss = "relative_l2";
  bool select_best = true;  // keep the parameters with the lowest validation error

  void validate(std::size_t n_train) const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be >= 0");
    if (batch_size == 0 || batch_size > n_train) {
      throw ConfigError("train: batch_size must be in [1, " + std::to_string(n_train) + "], got " +
                        std::to_string(batch_size));
    }
    if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("train: beta1 and beta2 must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("train: eps must be > 0");
    if (!(decay_factor > 0.0)) throw ConfigError("train: decay_factor must be > 0");
    if (loss != "relative_l2") throw ConfigError("train: unknown loss '" + loss + "' (supported: relative_l2)");
  }

  double rate_at(std::size_t epoch) const {
    if (decay_every == 0) return learning_rate;
    return learning_rate * std::pow(decay_factor, static_cast<double>(epoch / decay_every));
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"seed", c.seed},                   {"beta1", c.beta1},           {"beta2", c.beta2},
          {"eps", c.eps},                     {"decay_every", c.decay_every}, {"decay_factor", c.decay_factor},
          {"loss", c.loss},                   {"select_best", c.select_best}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  const auto known = to_json(base);
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ConfigError("train config: unknown field '" + item.key() + "'");
  }
  TrainConfig c = base;
  c.learning_rate = lno::detail::field(j, "learning_rate", base.learning_rate);
  c.batch_size = lno::detail::field(j, "batch_size", base.batch_size);
  c.epochs = lno::detail::field(j, "epochs", base.epochs);
  c.seed = lno::detail::field(j, "seed", base.seed);
  c.beta1 = lno::detail::field(j, "beta1", base.beta1);
  c.beta2 = lno::detail::field(j, "beta2", base.beta2);
  c.eps = lno::detail::field(j, "eps", base.eps);
  c.decay_every = lno::detail::field(j, "decay_every", base.decay_every);
  c.decay_factor = lno::detail::field(j, "decay_factor", base.decay_factor);
  c.loss = lno::detail::field(j, "loss", base.loss);
  c.select_best = lno::detail::field(j, "select_best", base.select_best);
  return c;
}

// ------------------------------------------------------------ report

inline constexpr int report_schema_version = 1;

struct TrialReport {
  std::uint64_t seed = 0;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_rel_l2;  // per epoch
  std::size_t best_epoch = 0;      // 1-based; 0 when selection is off
  Evaluation test;
  double wall_seconds = 0.0;
  bool failed = false;
  std::string failure;
  std::size_t parameter_count = 0;
};

inline nlohmann::json to_json(const TrialReport& r) {
  return {{"schema_version", report_schema_version},
          {"seed", r.seed},
          {"train_loss", r.train_loss},
          {"val_rel_l2", r.val_rel_l2},
          {"best_epoch", r.best_epoch},
          {"test_rel_l2", r.test.per_sample},
          {"test_mean", r.test.mean},
          {"test_std", r.test.std},
          {"wall_seconds", r.wall_seconds},
          {"failed", r.failed},
          {"failure", r.failure},
          {"parameter_count", r.parameter_count}};
}

// ------------------------------------------------------------- train

struct EpochInfo {
  std::size_t epoch;  // 1-based
  double train_loss;
  double val_rel_l2;
  double learning_rate;
};

using Progress = std::function<void(const EpochInfo&)>;

// Mini-batch Adam on the mean relative L2 loss. Only the train and
// validation splits are accepted here; test data goes through evaluate().
inline TrialReport train(OperatorModel& model, const data::TimeSeriesDataset& train_split,
                         const data::TimeSeriesDataset& vali_split, const TrainConfig& config,
                         const Progress& progress = {}) {
  if (train_split.split != data::Split::train) throw ContractError("train: first dataset must be the train split");
  if (vali_split.split != data::Split::vali) throw ContractError("train: second dataset must be the vali split");
  check_compatible(model, train_split);
  check_compatible(model, vali_split);
  config.validate(train_split.size());

  const auto start = std::chrono::steady_clock::now();
  TrialReport report;
  report.seed = config.seed;
  report.parameter_count = model.parameter_count();
  const auto params = model.parameters();
  Adam adam(params, config.beta1, config.beta2, config.eps);
  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), 0);

  double best_val = std::numeric_limits<double>::infinity();
  std::optional<OperatorModel> best;
  try {
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      const double lr = config.rate_at(epoch);
      rng.shuffle(std::span<std::size_t>(order));
      double total = 0.0;
      for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
        const std::span<const std::size_t> idx(order.data() + s, std::min(config.batch_size, order.size() - s));
        adam.zero_grad();
        const Tensor loss = relative_l2(model.forward(batch_tensor(train_split, false, idx)),
                                        batch_tensor(train_split, true, idx));
        backward(loss);
        adam.step(lr);
        total += loss.item() * static_cast<double>(idx.size());
      }
      adam.zero_grad();
      report.train_loss.push_back(total / static_cast<double>(order.size()));
      const double val = evaluate(model, vali_split).mean;
      report.val_rel_l2.push_back(val);
      if (!std::isfinite(report.train_loss.back()) || !std::isfinite(val)) {
        throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      if (config.select_best && val < best_val) {
        best_val = val;
        report.best_epoch = epoch + 1;
        if (!best) {
          best = model.clone();
        } else {
          best->copy_parameters_from(model);
        }
      }
      if (progress) progress({epoch + 1, report.train_loss.back(), val, lr});
    }
  } catch (const Error& e) {
    report.failed = true;
    report.failure = e.what();
  }
  if (best) model.copy_parameters_from(*best);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ------------------------------------------------------------ trials

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population, over trial means
  std::size_t trials = 0;
  std::size_t failed = 0;
};

inline Aggregate aggregate(const std::vector<TrialReport>& reports) {
  Aggregate a;
  a.trials = reports.size();
  std::vector<double> means;
  for (const auto& r : reports) {
    if (r.failed) {
      ++a.failed;
    } else {
      means.push_back(r.test.mean);
    }
  }
  const auto s = summarize(means);
  a.mean = means.empty() ? std::numeric_limits<double>::quiet_NaN() : s.mean;
  a.std = means.empty() ? std::numeric_limits<double>::quiet_NaN() : s.std;
  return a;
}

struct TrialSetup {
  OperatorConfig model;
  TrainConfig train;
};

struct TrialOutcome {
  TrialReport report;
  std::optional<OperatorModel> model;  // trained parameters, absent on failure before build
};

// n trials with seeds base_seed + k, both for initialization and shuffling.
inline std::vector<TrialOutcome> run_trials(const TrialSetup& setup, const data::TimeSeriesDataset& train_split,
                                            const data::TimeSeriesDataset& vali_split,
                                            const data::TimeSeriesDataset& test_split, std::size_t n,
                                            std::uint64_t base_seed, std::size_t jobs = 1,
                                            const std::function<void(std::size_t, const EpochInfo&)>& progress = {}) {
  if (test_split.split != data::Split::test) throw ContractError("run_trials: third dataset must be the test split");
  std::vector<TrialOutcome> out(n);
  parallel_for(n, jobs, [&](std::size_t k) {
    TrainConfig tc = setup.train;
    tc.seed = base_seed + k;
    try {
      OperatorModel m = OperatorModel::build(setup.model, tc.seed);
      Progress p;
      if (progress) p = [&progress, k](const EpochInfo& e) { progress(k, e); };
      out[k].report = train(m, train_split, vali_split, tc, p);
      if (!out[k].report.failed) out[k].report.test = evaluate(m, test_split);
      out[k].model = std::move(m);
    } catch (const Error& e) {
      out[k].report.seed = tc.seed;
      out[k].report.failed = true;
      out[k].report.failure = e.what();
    }
  });
  return out;
}

}  // namespace lno::training
