// tsearch: collect demonstrations, train the waypoint CNN, and run the
// search experiments from the command line.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tsearch/config.hpp"
#include "tsearch/error.hpp"
#include "tsearch/experiments.hpp"

namespace fs = std::filesystem;
using namespace tsearch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

/// Raised for usage problems detected after parsing; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "master seed (falls back to SEARCH_SEED, then the config)");
  cmd->add_option("--jobs", c.jobs, "parallel trials")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, out_help);
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed) {
    cfg.seed = *c.seed;
  } else if (const char* env = std::getenv("SEARCH_SEED")) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, std::string("SEARCH_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  if (c.jobs) cfg.jobs = *c.jobs;
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw UsageError(flag + " is required");
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, "input file not found: '" + path + "' (" + flag + ")");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void write_logs(const std::vector<EpisodeLog>& logs, const fs::path& dir, bool timing) {
  for (const EpisodeLog& l : logs) {
    char name[96];
    std::snprintf(name, sizeof name, "%s_%s_trial%03d.jsonl", to_string(l.planner).c_str(),
                  to_string(l.scenario.kind).c_str(), l.trial);
    write_file(dir / name, l.to_jsonl(timing));
  }
}

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + " is empty");
  return out;
}

struct SimulateArgs {
  Common common;
  std::string planner = "as";
  std::string scenario = "uniform";
  std::optional<int> trials;
  std::string model;
  std::string variant = "full";
  bool timing = false;
};

int run_simulate(const SimulateArgs& a) {
  const PlannerKind planner = planner_kind_from_string(a.planner);
  if (uses_cnn(planner) && a.model.empty())
    throw UsageError("--model is required for planner " + a.planner);
  RunConfig cfg = resolve(a.common);
  if (a.trials) cfg.experiment.trials = *a.trials;
  cfg.validate();
  std::optional<InferenceModel> model;
  if (uses_cnn(planner)) {
    require_file(a.model, "--model");
    model.emplace(load_model(a.model).model);
  }
  TrialOptions o;
  o.model = model ? &*model : nullptr;
  o.variant = channel_variant_from_string(a.variant);
  const ScenarioKind kind = scenario_kind_from_string(a.scenario);
  const auto logs = run_trials(planner, kind, cfg.experiment.trials, cfg, cfg.seed, cfg.jobs, o);
  const fs::path out(cfg.out_dir);
  write_logs(logs, out / "logs", a.timing);
  if (logs.size() >= 2) write_file(out / "detection_curve.csv", detection_curve_csv(detection_curve(logs), cfg, cfg.seed));
  const MeanCi m = final_detections(logs);
  std::cout << a.planner << " " << a.scenario << ": " << fmt(m.mean) << " +- " << fmt(m.ci95)
            << " detections over " << m.n << " trials (config " << config_hash(cfg) << ")\n";
  return kExitOk;
}

struct CollectArgs {
  Common common;
  std::string planner = "as";
  std::optional<int> trials;
  std::optional<int> dirs;
  std::optional<double> spacing;
};

int run_collect(const CollectArgs& a) {
  const PlannerKind planner = planner_kind_from_string(a.planner);
  if (uses_cnn(planner)) throw UsageError("--planner must be as or asi for collect");
  RunConfig cfg = resolve(a.common);
  if (a.trials) cfg.experiment.trials = *a.trials;
  cfg.validate();
  TrialOptions o;
  o.as_dirs = a.dirs;
  o.asi_spacing = a.spacing;
  const Dataset d = collect_dataset(planner, cfg.experiment.trials, cfg, cfg.seed, cfg.jobs, o);
  const fs::path path = a.common.out.empty() ? fs::path("out") / ("dataset_" + a.planner + ".nnt") : fs::path(a.common.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(d, path.string());
  std::cout << "collected " << d.size() << " samples from " << cfg.experiment.trials << " " << a.planner
            << " trials -> " << path.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  Common common;
  std::string dataset;
  std::optional<int> epochs;
  std::string variant = "full";
  std::string history;
};

int run_train(const TrainArgs& a) {
  require_file(a.dataset, "--dataset");
  RunConfig cfg = resolve(a.common);
  cfg.training.seed = cfg.seed;
  if (a.epochs) cfg.training.max_epochs = *a.epochs;
  cfg.validate();
  Dataset d = load_dataset(a.dataset);
  const ChannelVariant v = channel_variant_from_string(a.variant);
  if (v != ChannelVariant::kFull) d = with_variant(d, v, cfg.encoding.grid);
  const TrainResult r = train(d, cfg.training, [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << "\n";
  });
  const fs::path path = a.common.out.empty() ? fs::path("out") / "model.nnt" : fs::path(a.common.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::map<std::string, std::string> meta{{"variant", a.variant},
                                          {"config_hash", config_hash(cfg)},
                                          {"seed", std::to_string(cfg.seed)},
                                          {"tool_version", kToolVersion}};
  if (auto it = d.meta.find("planner"); it != d.meta.end()) meta["teacher"] = it->second;
  save_model(r.model, path.string(), meta, &r.adam);
  fs::path hist = a.history.empty() ? fs::path(path).replace_extension(".history.csv") : fs::path(a.history);
  write_file(hist, history_csv(r.history, cfg, cfg.seed));
  std::cout << "trained " << r.history.size() << " epochs, best epoch " << r.best_epoch
            << (r.stopped_early ? " (early stop)" : "") << " -> " << path.string() << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  Common common;
  std::string planner = "cnn-as";
  std::string scenario;
  std::string model;
  std::optional<int> trials;
  std::string variant = "full";
  bool timing = false;
};

int run_evaluate(const EvaluateArgs& a) {
  const PlannerKind planner = planner_kind_from_string(a.planner);
  if (!uses_cnn(planner)) throw UsageError("--planner must be cnn-as or cnn-asi for evaluate");
  if (a.model.empty()) throw UsageError("--model is required for planner " + a.planner);
  RunConfig cfg = resolve(a.common);
  if (a.trials) cfg.experiment.trials = *a.trials;
  cfg.validate();
  require_file(a.model, "--model");
  const InferenceModel model(load_model(a.model).model);
  const PlannerKind teacher = planner == PlannerKind::kCnnAs ? PlannerKind::kAs : PlannerKind::kAsi;
  const ScenarioKind kind = scenario_kind_from_string(
      a.scenario.empty() ? (teacher == PlannerKind::kAs ? "uniform" : "clustered") : a.scenario);
  TrialOptions o;
  o.model = &model;
  o.variant = channel_variant_from_string(a.variant);
  const int n = cfg.experiment.trials;
  const auto base = run_trials(teacher, kind, n, cfg, cfg.seed, cfg.jobs);
  const auto cnn = run_trials(planner, kind, n, cfg, cfg.seed, cfg.jobs, o);
  const fs::path out(cfg.out_dir);
  write_logs(base, out / "logs", a.timing);
  write_logs(cnn, out / "logs", a.timing);
  if (n >= 2) {
    write_file(out / ("detection_curve_" + to_string(teacher) + ".csv"),
               detection_curve_csv(detection_curve(base), cfg, cfg.seed));
    write_file(out / ("detection_curve_" + a.planner + ".csv"),
               detection_curve_csv(detection_curve(cnn), cfg, cfg.seed));
  }
  std::ostringstream csv;
  csv << csv_header_comment(cfg, cfg.seed) << "planner,scenario,trials,mean,ci95\n";
  for (const auto* logs : {&base, &cnn}) {
    const MeanCi m = final_detections(*logs);
    csv << to_string(logs->front().planner) << ',' << to_string(kind) << ',' << m.n << ',' << m.mean << ','
        << m.ci95 << '\n';
    std::cout << to_string(logs->front().planner) << ": " << fmt(m.mean) << " +- " << fmt(m.ci95) << "\n";
  }
  write_file(out / "comparison.csv", csv.str());
  return kExitOk;
}

struct BenchArgs {
  Common common;
  std::string planner = "as";
  std::string dirs = "4,8,16,32";
  std::string spacings = "80,60,40,20";
  std::string model;
  int trials = 1;
  int detection_trials = 0;
};

int run_bench(const BenchArgs& a) {
  const PlannerKind planner = planner_kind_from_string(a.planner);
  if (uses_cnn(planner)) throw UsageError("--planner must be as or asi for bench");
  RunConfig cfg = resolve(a.common);
  SweepConfig s;
  s.planner = planner;
  s.sizes = planner == PlannerKind::kAs ? parse_list(a.dirs, "--dirs") : parse_list(a.spacings, "--spacings");
  s.trials = a.trials;
  s.detection_trials = a.detection_trials;
  s.jobs = cfg.jobs;
  std::optional<InferenceModel> model;
  if (!a.model.empty()) {
    require_file(a.model, "--model");
    model.emplace(load_model(a.model).model);
    s.model = &*model;
  }
  const auto rows = candidate_sweep(s, cfg, cfg.seed);
  write_file(fs::path(cfg.out_dir) / "timing.csv", timing_csv(rows, cfg, cfg.seed));
  for (const TimingRow& r : rows)
    std::cout << r.planner << " candidates " << r.n_candidates << ": mean " << r.mean * 1e3 << " ms, median "
              << r.median * 1e3 << " ms\n";
  return kExitOk;
}

struct AblateArgs {
  Common common;
  std::string dataset;
  std::string planner = "cnn-asi";
  std::optional<int> trials;
  std::optional<int> epochs;
};

int run_ablate(const AblateArgs& a) {
  require_file(a.dataset, "--dataset");
  RunConfig cfg = resolve(a.common);
  cfg.training.seed = cfg.seed;
  if (a.epochs) cfg.training.max_epochs = *a.epochs;
  cfg.validate();
  AblationConfig ab;
  ab.planner = planner_kind_from_string(a.planner);
  if (!uses_cnn(ab.planner)) throw UsageError("--planner must be cnn-as or cnn-asi for ablate");
  ab.trials = a.trials.value_or(cfg.experiment.trials);
  ab.jobs = cfg.jobs;
  const Dataset d = load_dataset(a.dataset);
  const auto rows = ablation_suite(d, ab, cfg, cfg.seed, [](const std::string& m) { std::cerr << m << "\n"; });
  write_file(fs::path(cfg.out_dir) / "ablation.csv", ablation_csv(rows, cfg, cfg.seed));
  for (const AblationRow& r : rows)
    std::cout << to_string(r.variant) << ": " << fmt(r.detections.mean) << " +- " << fmt(r.detections.ci95) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active multi-target search with PHD filtering and CNN waypoint planning"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  const auto kPlanners = CLI::IsMember({"as", "asi", "cnn-as", "cnn-asi"});
  const auto kScenarios = CLI::IsMember({"uniform", "clustered"});
  const auto kVariants = CLI::IsMember({"full", "no-visitation", "no-smoothing", "no-position", "no-boundary"});

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "run search episodes and write logs and detection curves");
  add_common(c_sim, sim.common, "output directory");
  c_sim->add_option("--planner", sim.planner, "as, asi, cnn-as or cnn-asi")->check(kPlanners);
  c_sim->add_option("--scenario", sim.scenario, "uniform or clustered")->check(kScenarios);
  c_sim->add_option("--trials", sim.trials)->check(CLI::PositiveNumber);
  c_sim->add_option("--model", sim.model, "trained model for cnn planners");
  c_sim->add_option("--variant", sim.variant, "input channel variant of the model")->check(kVariants);
  c_sim->add_flag("--timing", sim.timing, "include wall-clock planning times in logs");

  CollectArgs col;
  auto* c_col = app.add_subcommand("collect", "record demonstrations from as or asi");
  add_common(c_col, col.common, "dataset file");
  c_col->add_option("--planner", col.planner, "as or asi")->check(CLI::IsMember({"as", "asi"}));
  c_col->add_option("--trials", col.trials)->check(CLI::PositiveNumber);
  c_col->add_option("--dirs", col.dirs, "AS candidate directions")->check(CLI::PositiveNumber);
  c_col->add_option("--spacing", col.spacing, "ASI grid spacing (m)")->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train the waypoint CNN on a dataset");
  add_common(c_tr, tr.common, "model file");
  c_tr->add_option("--dataset", tr.dataset, "dataset file");
  c_tr->add_option("--epochs", tr.epochs, "maximum epochs")->check(CLI::PositiveNumber);
  c_tr->add_option("--variant", tr.variant, "input channel variant")->check(kVariants);
  c_tr->add_option("--history", tr.history, "history CSV (default next to the model)");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "compare a cnn planner with its teacher");
  add_common(c_ev, ev.common, "output directory");
  c_ev->add_option("--planner", ev.planner, "cnn-as or cnn-asi")->check(CLI::IsMember({"cnn-as", "cnn-asi"}));
  c_ev->add_option("--scenario", ev.scenario, "uniform or clustered")->check(kScenarios);
  c_ev->add_option("--model", ev.model, "trained model");
  c_ev->add_option("--trials", ev.trials)->check(CLI::PositiveNumber);
  c_ev->add_option("--variant", ev.variant, "input channel variant of the model")->check(kVariants);
  c_ev->add_flag("--timing", ev.timing, "include wall-clock planning times in logs");

  BenchArgs be;
  auto* c_be = app.add_subcommand("bench", "planning time against candidate-set size");
  add_common(c_be, be.common, "output directory");
  c_be->add_option("--planner", be.planner, "as or asi")->check(CLI::IsMember({"as", "asi"}));
  c_be->add_option("--dirs", be.dirs, "comma-separated AS direction counts");
  c_be->add_option("--spacings", be.spacings, "comma-separated ASI spacings (m)");
  c_be->add_option("--model", be.model, "also time this model on the same states");
  c_be->add_option("--trials", be.trials, "reference episodes")->check(CLI::PositiveNumber);
  c_be->add_option("--detection-trials", be.detection_trials, "episodes per size for detections")
      ->check(CLI::NonNegativeNumber);

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "train and evaluate each input-channel variant");
  add_common(c_ab, ab.common, "output directory");
  c_ab->add_option("--dataset", ab.dataset, "dataset file");
  c_ab->add_option("--planner", ab.planner, "cnn-as or cnn-asi")->check(CLI::IsMember({"cnn-as", "cnn-asi"}));
  c_ab->add_option("--trials", ab.trials)->check(CLI::PositiveNumber);
  c_ab->add_option("--epochs", ab.epochs, "maximum epochs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*c_sim) return run_simulate(sim);
    if (*c_col) return run_collect(col);
    if (*c_tr) return run_train(tr);
    if (*c_ev) return run_evaluate(ev);
    if (*c_be) return run_bench(be);
    if (*c_ab) return run_ablate(ab);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfig ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
