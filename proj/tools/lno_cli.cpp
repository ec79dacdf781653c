// lno: dataset generation, training, evaluation and LNO-vs-FNO reproduction.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
// 3 the reproduced comparison violated its expected ordering.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lno/lno.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2, kOrdering = 3 };

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string output_root() {
  const char* env = std::getenv("LNO_OUTPUT_ROOT");
  return env && *env ? env : "lno-output";
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw lno::Error("cannot open '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json file_entry(const fs::path& p) { return {{"path", p.string()}, {"fnv1a64", lno::io::file_hash(p.string())}}; }

// Every file of a command goes through one of these, so a directory has a
// single writer and the manifest lists exactly what was produced.
class OutputDir {
 public:
  OutputDir(fs::path path, bool overwrite) : path_(std::move(path)) {
    if (fs::exists(path_)) {
      if (!fs::is_directory(path_)) throw lno::ConfigError("output path '" + path_.string() + "' is not a directory");
      if (!fs::is_empty(path_) && !overwrite) {
        throw lno::ConfigError("output directory '" + path_.string() + "' is not empty (pass --overwrite to replace)");
      }
    }
    fs::create_directories(path_);
  }

  const fs::path& path() const { return path_; }

  fs::path write_text(const std::string& name, const std::string& content) {
    const fs::path p = path_ / name;
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw lno::Error("cannot open '" + p.string() + "' for writing");
    out << content;
    if (!out) throw lno::Error("failed writing '" + p.string() + "'");
    artifacts_.push_back(p);
    return p;
  }

  fs::path write_binary(const std::string& name, const lno::io::Writer& w) {
    const fs::path p = path_ / name;
    w.save(p.string());
    artifacts_.push_back(p);
    return p;
  }

  void write_manifest(json manifest) {
    json arts = json::array();
    for (const auto& p : artifacts_) arts.push_back(file_entry(p));
    manifest["artifacts"] = arts;
    manifest["finished_utc"] = utc_now();
    write_text("manifest.json", manifest.dump(2) + "\n");
  }

 private:
  fs::path path_;
  std::vector<fs::path> artifacts_;
};

json manifest_base(const std::string& command, const std::vector<std::string>& argv) {
  return {{"tool", "lno"},
          {"version", lno::version},
          {"command", command},
          {"argv", argv},
          {"formats",
           {{"dataset", lno::data::dataset_version},
            {"checkpoint", lno::OperatorModel::kCheckpointVersion},
            {"report", lno::training::report_schema_version}}},
          {"started_utc", utc_now()}};
}

class Log {
 public:
  explicit Log(bool quiet) : quiet_(quiet) {}
  template <class... T>
  void operator()(const T&... parts) {
    if (quiet_) return;
    std::lock_guard lock(mu_);
    (std::cerr << ... << parts) << '\n';
  }

 private:
  bool quiet_;
  std::mutex mu_;
};

std::string split_file(lno::data::Split s) { return lno::data::to_string(s) + ".lnod"; }

fs::path default_data_dir(lno::data::Case c, const std::string& scenario) {
  return fs::path(output_root()) / "data" / (lno::data::to_string(c) + "-" + scenario);
}

lno::data::TimeSeriesDataset load_split(const fs::path& dir, lno::data::Case c, const std::string& scenario,
                                        lno::data::Split s) {
  const fs::path p = dir / split_file(s);
  if (!fs::exists(p)) {
    throw lno::Error("dataset file '" + p.string() + "' not found; create it with: lno generate --case " +
                     lno::data::to_string(c) + " --scenario " + scenario + " --out " + dir.string());
  }
  auto d = lno::data::load(p.string());
  if (d.kind != c || d.scenario != scenario || d.split != s) {
    throw lno::ConfigError("'" + p.string() + "' holds " + lno::data::to_string(d.kind) + "/" + d.scenario + "/" +
                           lno::data::to_string(d.split) + ", expected " + lno::data::to_string(c) + "/" + scenario +
                           "/" + lno::data::to_string(s));
  }
  return d;
}

// Writes the three splits into `out` (the directory's single writer).
json write_splits(OutputDir& out, lno::data::Case c, const std::string& scenario, std::size_t jobs, Log& log) {
  json hashes = json::object();
  for (auto s : {lno::data::Split::train, lno::data::Split::vali, lno::data::Split::test}) {
    log("generating ", lno::data::to_string(c), "/", scenario, " ", lno::data::to_string(s));
    const auto d = lno::data::generate(c, scenario, s, jobs);
    const auto p = out.write_binary(split_file(s), lno::data::serialize(d));
    hashes[lno::data::to_string(s)] = file_entry(p);
  }
  return hashes;
}

std::string default_scenario(lno::data::Case c) { return lno::data::scenarios(c).front(); }

struct Common {
  std::string kase, scenario;
  std::size_t jobs = lno::default_jobs();
  bool overwrite = false;
};

void add_case_options(CLI::App* cmd, Common& o) {
  cmd->add_option("--case", o.kase, "benchmark: " + lno::data::case_names())->required();
  cmd->add_option("--scenario", o.scenario, "scenario of the case (default: its first)");
}

std::pair<lno::data::Case, std::string> resolve_case(const Common& o) {
  const auto c = lno::data::parse_case(o.kase);
  const std::string s = o.scenario.empty() ? default_scenario(c) : o.scenario;
  lno::data::check_scenario(c, s);
  return {c, s};
}

// ---------------------------------------------------------------- generate

struct GenerateArgs : Common {
  std::string out;
};

int cmd_generate(const GenerateArgs& a, const std::vector<std::string>& argv, Log& log) {
  const auto [c, scenario] = resolve_case(a);
  const fs::path dir = a.out.empty() ? default_data_dir(c, scenario) : fs::path(a.out);
  OutputDir out(dir, a.overwrite);
  json m = manifest_base("generate", argv);
  m["config"] = {{"case", lno::data::to_string(c)}, {"scenario", scenario}};
  m["datasets"] = write_splits(out, c, scenario, a.jobs, log);
  out.write_manifest(m);
  log("wrote ", dir.string());
  return kOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs : Common {
  std::string model, config, data, out, profile = "paper";
  std::optional<std::size_t> epochs, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
};

lno::presets::Preset resolve_train_config(const TrainArgs& a, lno::data::Case c, const std::string& scenario) {
  auto p = lno::presets::preset(c, scenario, lno::parse_model_kind(a.model), lno::presets::parse_profile(a.profile));
  if (!a.config.empty()) {
    json j;
    try {
      j = json::parse(read_text(a.config));
    } catch (const json::exception& e) {
      throw lno::ConfigError("config '" + a.config + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw lno::ConfigError("config must be a JSON object with optional 'model' and 'train'");
    for (const auto& item : j.items()) {
      if (item.key() != "model" && item.key() != "train") {
        throw lno::ConfigError("unknown config section '" + item.key() + "' (expected model, train)");
      }
    }
    if (j.contains("model")) p.model = lno::operator_config_from_json(j["model"], p.model);
    if (j.contains("train")) p.train = lno::training::train_config_from_json(j["train"], p.train);
    if (p.model.kind != lno::parse_model_kind(a.model)) {
      throw lno::ConfigError("config field 'kind' disagrees with --model " + a.model);
    }
  }
  if (a.epochs) p.train.epochs = *a.epochs;
  if (a.lr) p.train.learning_rate = *a.lr;
  if (a.batch) p.train.batch_size = *a.batch;
  if (a.seed) p.train.seed = *a.seed;
  return p;
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, Log& log) {
  const auto [c, scenario] = resolve_case(a);
  auto p = resolve_train_config(a, c, scenario);
  const fs::path data_dir = a.data.empty() ? default_data_dir(c, scenario) : fs::path(a.data);
  const auto train = load_split(data_dir, c, scenario, lno::data::Split::train);
  const auto vali = load_split(data_dir, c, scenario, lno::data::Split::vali);
  const auto test = load_split(data_dir, c, scenario, lno::data::Split::test);
  p.model = lno::training::fit_to_data(p.model, train);
  p.model.validate();
  p.train.validate(train.size());

  const fs::path dir = a.out.empty() ? fs::path(output_root()) / "runs" /
                                           (lno::data::to_string(c) + "-" + scenario + "-" + a.model + "-seed" +
                                            std::to_string(p.train.seed))
                                     : fs::path(a.out);
  OutputDir out(dir, a.overwrite);

  auto model = lno::OperatorModel::build(p.model, p.train.seed);
  log("training ", a.model, " on ", lno::data::to_string(c), "/", scenario, ": ", model.parameter_count(),
      " parameters, ", p.train.epochs, " epochs");
  const std::size_t every = std::max<std::size_t>(1, p.train.epochs / 20);
  auto report = lno::training::train(model, train, vali, p.train, [&](const lno::training::EpochInfo& e) {
    if (e.epoch % every == 0 || e.epoch == 1) {
      log("epoch ", e.epoch, " train ", e.train_loss, " vali ", e.val_rel_l2, " lr ", e.learning_rate);
    }
  });
  if (!report.failed) report.test = lno::training::evaluate(model, test);

  const json config = {{"case", lno::data::to_string(c)},
                       {"scenario", scenario},
                       {"profile", a.profile},
                       {"model", lno::to_json(p.model)},
                       {"train", lno::training::to_json(p.train)}};
  out.write_text("config.json", config.dump(2) + "\n");
  out.write_binary("checkpoint.lnoc", model.serialize());
  out.write_text("report.json", lno::training::to_json(report).dump(2) + "\n");
  json m = manifest_base("train", argv);
  m["config"] = config;
  m["datasets"] = {{"train", file_entry(data_dir / split_file(lno::data::Split::train))},
                   {"vali", file_entry(data_dir / split_file(lno::data::Split::vali))},
                   {"test", file_entry(data_dir / split_file(lno::data::Split::test))}};
  out.write_manifest(m);
  if (report.failed) {
    std::cerr << "error: training failed: " << report.failure << '\n';
    return kRuntime;
  }
  std::cout << "test relative L2: mean " << report.test.mean << " std " << report.test.std << " (best epoch "
            << report.best_epoch << ")\n";
  return kOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, data, split = "test", out;
  bool overwrite = false;
};

int cmd_eval(const EvalArgs& a, Log& log) {
  const auto model = lno::OperatorModel::load(a.checkpoint);
  const auto split = lno::data::parse_split(a.split);
  const fs::path p = fs::path(a.data) / split_file(split);
  if (!fs::exists(p)) throw lno::Error("dataset file '" + p.string() + "' not found");
  const auto d = lno::data::load(p.string());
  if (d.split != split) throw lno::ConfigError("'" + p.string() + "' is not a " + a.split + " split");
  lno::training::check_compatible(model, d);
  const auto ev = lno::training::evaluate(model, d);
  const json metrics = {{"checkpoint", file_entry(a.checkpoint)},
                        {"dataset", file_entry(p)},
                        {"case", lno::data::to_string(d.kind)},
                        {"scenario", d.scenario},
                        {"split", a.split},
                        {"mean", ev.mean},
                        {"std", ev.std},
                        {"per_sample", ev.per_sample}};
  const fs::path out = a.out.empty() ? fs::path(a.checkpoint).parent_path() / ("metrics-" + a.split + ".json")
                                     : fs::path(a.out);
  if (fs::exists(out) && !a.overwrite) {
    throw lno::ConfigError("'" + out.string() + "' exists (pass --overwrite to replace)");
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw lno::Error("cannot open '" + out.string() + "' for writing");
  f << metrics.dump(2) << '\n';
  log("wrote ", out.string());
  std::cout << a.split << " relative L2: mean " << ev.mean << " std " << ev.std << " over " << ev.per_sample.size()
            << " samples\n";
  return kOk;
}

// --------------------------------------------------------------- reproduce

struct ReproduceArgs : Common {
  std::string out, data, profile = "desk";
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
};

int cmd_reproduce(const ReproduceArgs& a, const std::vector<std::string>& argv, Log& log) {
  const auto [c, scenario] = resolve_case(a);
  const auto profile = lno::presets::parse_profile(a.profile);
  const fs::path dir = a.out.empty() ? fs::path(output_root()) / "reproduce" /
                                           (lno::data::to_string(c) + "-" + scenario + "-" + a.profile)
                                     : fs::path(a.out);
  OutputDir out(dir, a.overwrite);
  json m = manifest_base("reproduce", argv);

  fs::path data_dir = a.data.empty() ? dir / "data" : fs::path(a.data);
  const bool have_data = fs::exists(data_dir / split_file(lno::data::Split::train)) &&
                         fs::exists(data_dir / split_file(lno::data::Split::vali)) &&
                         fs::exists(data_dir / split_file(lno::data::Split::test));
  if (!have_data) {
    if (!a.data.empty()) throw lno::Error("no dataset in '" + data_dir.string() + "'");
    OutputDir data_out(data_dir, true);
    write_splits(data_out, c, scenario, a.jobs, log);
    json dm = manifest_base("generate", argv);
    dm["config"] = {{"case", lno::data::to_string(c)}, {"scenario", scenario}};
    data_out.write_manifest(dm);
  }
  const auto train = load_split(data_dir, c, scenario, lno::data::Split::train);
  const auto vali = load_split(data_dir, c, scenario, lno::data::Split::vali);
  const auto test = load_split(data_dir, c, scenario, lno::data::Split::test);

  lno::reproduce::Setup setup{profile, a.trials, a.seed, a.jobs, a.epochs};
  auto progress = [&](lno::ModelKind k, std::size_t trial, const lno::training::EpochInfo& e) {
    if (e.epoch % 10 == 0 || e.epoch == 1) {
      log(lno::to_string(k), " trial ", trial, " epoch ", e.epoch, " train ", e.train_loss, " vali ", e.val_rel_l2);
    }
  };
  const auto cmp = lno::reproduce::compare(c, scenario, train, vali, test, setup, progress);

  out.write_text("table.csv", lno::reproduce::table_csv(cmp));
  out.write_text("results.json", lno::reproduce::to_json(cmp).dump(2) + "\n");
  out.write_text("chart.svg", lno::reproduce::bar_chart_svg(cmp));
  m["config"] = {{"case", lno::data::to_string(c)}, {"scenario", scenario},   {"profile", a.profile},
                 {"trials", a.trials},              {"seed", a.seed},         {"epochs", a.epochs},
                 {"jobs", a.jobs},                  {"data", data_dir.string()}};
  m["datasets"] = {{"train", file_entry(data_dir / split_file(lno::data::Split::train))},
                   {"vali", file_entry(data_dir / split_file(lno::data::Split::vali))},
                   {"test", file_entry(data_dir / split_file(lno::data::Split::test))}};
  out.write_manifest(m);

  std::cout << lno::reproduce::table_csv(cmp);
  if (cmp.any_failed) {
    std::cerr << "error: at least one trial failed; see results.json\n";
    return kRuntime;
  }
  std::cout << cmp.ordering.claim << ": " << (cmp.ordering_held ? "held" : "violated") << '\n';
  return cmp.ordering_held ? kOk : kOrdering;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Laplace and Fourier neural operators: data, training, evaluation and reproduction"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress output");
  app.set_version_flag("--version", lno::version);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write train/vali/test datasets for one benchmark");
  add_case_options(g, gen);
  g->add_option("--out", gen.out, "output directory (default $LNO_OUTPUT_ROOT/data/<case>-<scenario>)");
  g->add_option("--jobs", gen.jobs, "worker threads")->check(CLI::PositiveNumber);
  g->add_flag("--overwrite", gen.overwrite, "replace the contents of a non-empty output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train one model and write checkpoint, report and manifest");
  add_case_options(t, tr);
  t->add_option("--model", tr.model, "lno or fno")->required()->check(CLI::IsMember({"lno", "fno"}));
  t->add_option("--config", tr.config, "JSON file with optional 'model' and 'train' sections");
  t->add_option("--data", tr.data, "dataset directory (default $LNO_OUTPUT_ROOT/data/<case>-<scenario>)");
  t->add_option("--out", tr.out, "output directory");
  t->add_option("--profile", tr.profile, "hyperparameter profile")->check(CLI::IsMember({"paper", "desk"}));
  t->add_option("--epochs", tr.epochs, "override the epoch count");
  t->add_option("--lr", tr.lr, "override the learning rate");
  t->add_option("--batch", tr.batch, "override the batch size");
  t->add_option("--seed", tr.seed, "initialization and shuffling seed");
  t->add_flag("--overwrite", tr.overwrite, "replace the contents of a non-empty output directory");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--split", ev.split, "train, vali or test")->check(CLI::IsMember({"train", "vali", "test"}));
  e->add_option("--out", ev.out, "metrics file (default next to the checkpoint)");
  e->add_flag("--overwrite", ev.overwrite, "replace an existing metrics file");

  ReproduceArgs rp;
  auto* r = app.add_subcommand("reproduce", "compare LNO and FNO over several trials");
  add_case_options(r, rp);
  r->add_option("--out", rp.out, "output directory");
  r->add_option("--data", rp.data, "existing dataset directory (default: generate under the output directory)");
  r->add_option("--profile", rp.profile, "hyperparameter profile")->check(CLI::IsMember({"paper", "desk"}));
  r->add_option("--trials", rp.trials, "trials per model")->check(CLI::PositiveNumber);
  r->add_option("--seed", rp.seed, "base seed; trial k uses seed + k");
  r->add_option("--epochs", rp.epochs, "override the epoch count of both models");
  r->add_option("--jobs", rp.jobs, "trials run in parallel")->check(CLI::PositiveNumber);
  r->add_flag("--overwrite", rp.overwrite, "replace the contents of a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  Log log(quiet);
  try {
    if (*g) return cmd_generate(gen, args, log);
    if (*t) return cmd_train(tr, args, log);
    if (*e) return cmd_eval(ev, log);
    if (*r) return cmd_reproduce(rp, args, log);
  } catch (const lno::ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
