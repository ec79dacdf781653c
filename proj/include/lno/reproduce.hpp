#pragma once

// LNO-vs-FNO comparison for one benchmark: trials for both model kinds, the
// acceptance ordering, and the CSV / JSON / SVG renderings of the result.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lno/presets.hpp"
#include "lno/training.hpp"

namespace lno::reproduce {

struct ModelResult {
  ModelKind kind;
  OperatorConfig model;
  training::TrainConfig train;
  std::vector<training::TrialReport> reports;
  training::Aggregate summary;
  std::size_t parameter_count = 0;
};

// LNO error must not exceed `ratio` times the FNO error (strictly below when
// ratio == 1).
struct Ordering {
  double ratio = 1.0;
  std::string claim;
};

inline Ordering ordering_for(data::Case c) {
  switch (c) {
    case data::Case::diffusion:
      return {0.1, "LNO mean <= 0.1 x FNO mean"};
    case data::Case::beam:
      return {0.3, "LNO mean <= 0.3 x FNO mean"};
    default:
      return {1.0, "LNO mean < FNO mean"};
  }
}

struct Comparison {
  data::Case kind;
  std::string scenario;
  presets::Profile profile;
  std::uint64_t base_seed = 0;
  std::vector<ModelResult> results;  // lno first, then fno
  Ordering ordering;
  bool any_failed = false;
  bool ordering_held = false;

  const ModelResult& result(ModelKind k) const {
    for (const auto& r : results) {
      if (r.kind == k) return r;
    }
    throw ContractError("comparison has no " + std::string(to_string(k)) + " result");
  }
};

inline bool ordering_holds(const Ordering& o, double lno_mean, double fno_mean) {
  if (!std::isfinite(lno_mean) || !std::isfinite(fno_mean)) return false;
  return o.ratio == 1.0 ? lno_mean < fno_mean : lno_mean <= o.ratio * fno_mean;
}

struct Setup {
  presets::Profile profile = presets::Profile::desk;
  std::size_t trials = 5;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 1;
  std::size_t epochs = 0;  // 0: profile default
};

using Progress = std::function<void(ModelKind, std::size_t trial, const training::EpochInfo&)>;

inline Comparison compare(data::Case c, const std::string& scenario, const data::TimeSeriesDataset& train,
                          const data::TimeSeriesDataset& vali, const data::TimeSeriesDataset& test,
                          const Setup& setup, const Progress& progress = {}) {
  if (setup.trials == 0) throw ConfigError("reproduce: trials must be >= 1");
  Comparison out;
  out.kind = c;
  out.scenario = scenario;
  out.profile = setup.profile;
  out.base_seed = setup.base_seed;
  out.ordering = ordering_for(c);
  for (ModelKind kind : {ModelKind::lno, ModelKind::fno}) {
    auto p = presets::preset(c, scenario, kind, setup.profile);
    if (setup.epochs > 0) p.train.epochs = setup.epochs;
    training::TrialSetup ts{training::fit_to_data(p.model, train), p.train};
    std::function<void(std::size_t, const training::EpochInfo&)> hook;
    if (progress) hook = [&progress, kind](std::size_t k, const training::EpochInfo& e) { progress(kind, k, e); };
    auto outcomes = training::run_trials(ts, train, vali, test, setup.trials, setup.base_seed, setup.jobs, hook);
    ModelResult r{kind, ts.model, ts.train, {}, {}, 0};
    for (auto& o : outcomes) {
      if (o.model) r.parameter_count = o.model->parameter_count();
      r.reports.push_back(std::move(o.report));
    }
    r.summary = training::aggregate(r.reports);
    out.any_failed = out.any_failed || r.summary.failed > 0;
    out.results.push_back(std::move(r));
  }
  out.ordering_held = !out.any_failed && ordering_holds(out.ordering, out.result(ModelKind::lno).summary.mean,
                                                        out.result(ModelKind::fno).summary.mean);
  return out;
}

namespace detail {

inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    switch (ch) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += ch;
    }
  }
  return o;
}

}  // namespace detail

// One row per model kind. Only quantities that are deterministic given the
// seed appear here, so repeated runs produce identical bytes.
inline std::string table_csv(const Comparison& c) {
  std::ostringstream s;
  s << "case,scenario,model,mean,std,trials,failed\n";
  for (const auto& r : c.results) {
    s << data::to_string(c.kind) << ',' << c.scenario << ',' << to_string(r.kind) << ','
      << detail::number(r.summary.mean) << ',' << detail::number(r.summary.std) << ',' << r.summary.trials << ','
      << r.summary.failed << '\n';
  }
  return s.str();
}

inline nlohmann::json to_json(const Comparison& c) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& r : c.results) {
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& rep : r.reports) reports.push_back(training::to_json(rep));
    models.push_back({{"model", std::string(to_string(r.kind))},
                      {"config", lno::to_json(r.model)},
                      {"train", training::to_json(r.train)},
                      {"parameter_count", r.parameter_count},
                      {"mean", r.summary.mean},
                      {"std", r.summary.std},
                      {"trials", r.summary.trials},
                      {"failed", r.summary.failed},
                      {"reports", reports}});
  }
  return {{"schema_version", 1},
          {"case", data::to_string(c.kind)},
          {"scenario", c.scenario},
          {"profile", std::string(presets::to_string(c.profile))},
          {"base_seed", c.base_seed},
          {"ordering", {{"claim", c.ordering.claim}, {"ratio", c.ordering.ratio}, {"held", c.ordering_held}}},
          {"any_failed", c.any_failed},
          {"models", models}};
}

// Bar chart of mean test error with +-std whiskers on a log axis, each bar
// annotated with its numbers.
inline std::string bar_chart_svg(const Comparison& c) {
  const double W = 480, H = 360, left = 70, right = 20, top = 50, bottom = 60;
  const double plot_h = H - top - bottom, plot_w = W - left - right;
  double lo = 1e300, hi = 0;
  for (const auto& r : c.results) {
    const double m = r.summary.mean, s = r.summary.std;
    if (!(m > 0) || !std::isfinite(m)) continue;
    lo = std::min(lo, std::max(m - s, m * 0.1));
    hi = std::max(hi, m + s);
  }
  if (!(hi > 0)) lo = 1e-3, hi = 1.0;
  const double d0 = std::floor(std::log10(lo)), d1 = std::max(d0 + 1, std::ceil(std::log10(hi)));
  auto y_of = [&](double v) { return top + plot_h * (1.0 - (std::log10(v) - d0) / (d1 - d0)); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << detail::xml_escape(data::to_string(c.kind) + " / " + c.scenario) << ": test relative L2 (mean +- std, "
    << (c.results.empty() ? 0 : c.results.front().summary.trials) << " trials)</text>\n";
  for (double d = d0; d <= d1; d += 1.0) {
    const double y = y_of(std::pow(10.0, d));
    s << "<line x1=\"" << left << "\" x2=\"" << W - right << "\" y1=\"" << y << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << static_cast<int>(d)
      << "</text>\n";
  }
  s << "<line x1=\"" << left << "\" x2=\"" << left << "\" y1=\"" << top << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  const std::size_t n = c.results.size();
  const double slot = plot_w / static_cast<double>(std::max<std::size_t>(n, 1)), bar = slot * 0.5;
  const char* colors[] = {"#1f77b4", "#ff7f0e"};
  for (std::size_t k = 0; k < n; ++k) {
    const auto& r = c.results[k];
    const double x = left + slot * (static_cast<double>(k) + 0.25), base = top + plot_h;
    const double m = r.summary.mean, sd = r.summary.std;
    if (m > 0 && std::isfinite(m)) {
      const double y = y_of(m);
      s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar << "\" height=\"" << base - y
        << "\" fill=\"" << colors[k % 2] << "\"/>\n";
      const double cx = x + bar / 2, y_hi = y_of(m + sd), y_lo = y_of(std::max(m - sd, std::pow(10.0, d0)));
      s << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << y_hi << "\" y2=\"" << y_lo
        << "\" stroke=\"black\"/>\n";
      s << "<text x=\"" << cx << "\" y=\"" << y_hi - 6 << "\" text-anchor=\"middle\">" << detail::number(m)
        << " +- " << detail::number(sd) << "</text>\n";
    } else {
      s << "<text x=\"" << x + bar / 2 << "\" y=\"" << base - 6 << "\" text-anchor=\"middle\">failed</text>\n";
    }
    s << "<text x=\"" << x + bar / 2 << "\" y=\"" << base + 18 << "\" text-anchor=\"middle\">"
      << detail::xml_escape(std::string(to_string(r.kind))) << "</text>\n";
  }
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 14 << "\" text-anchor=\"middle\">"
    << detail::xml_escape(c.ordering.claim) << ": " << (c.ordering_held ? "held" : "violated") << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace lno::reproduce
