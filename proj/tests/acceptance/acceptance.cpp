// Acceptance run: one PASS/FAIL line per criterion.
//
//   tsearch_acceptance [--only 1,4,5] [--seed N] [--artifacts DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tsearch/config.hpp"
#include "tsearch/episode.hpp"
#include "tsearch/experiments.hpp"
#include "tsearch/nnt.hpp"
#include "tsearch/train.hpp"
#include "../support/gradient_check.hpp"

using namespace tsearch;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::string counts(const std::vector<EpisodeLog>& logs) {
  std::string s;
  for (const EpisodeLog& l : logs) s += (s.empty() ? "" : " ") + std::to_string(l.matched);
  return s;
}

// Shared artifacts, built on first use so any subset of criteria can run.
class Context {
 public:
  Context(std::uint64_t seed, fs::path dir) : seed_(seed), dir_(std::move(dir)) {
    fs::create_directories(dir_);
    cfg_.training.max_epochs = 40;
  }

  const RunConfig& cfg() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  const fs::path& dir() const { return dir_; }

  const std::vector<EpisodeLog>& as_uniform() {
    if (!as_uniform_) as_uniform_ = run_trials(PlannerKind::kAs, ScenarioKind::kUniform, 10, cfg_, seed_, 1);
    return *as_uniform_;
  }

  const Dataset& as_dataset() {
    if (!as_dataset_) {
      as_dataset_ = collect_dataset(PlannerKind::kAs, 20, cfg_, seed_ + 1000, 1);
      save_dataset(*as_dataset_, (dir_ / "dataset_as.nnt").string());
    }
    return *as_dataset_;
  }

  const InferenceModel& cnn_as() {
    if (!cnn_as_) cnn_as_ = fit(as_dataset(), "model_cnn_as.nnt", cnn_as_epochs_);
    return *cnn_as_;
  }
  int cnn_as_epochs() const { return cnn_as_epochs_; }

  const Dataset& asi_dataset() {
    if (!asi_dataset_) {
      asi_dataset_ = collect_dataset(PlannerKind::kAsi, 60, cfg_, seed_ + 2000, 1);
      save_dataset(*asi_dataset_, (dir_ / "dataset_asi.nnt").string());
    }
    return *asi_dataset_;
  }

  const InferenceModel& cnn_asi() {
    if (!cnn_asi_) cnn_asi_ = fit(asi_dataset(), "model_cnn_asi.nnt", cnn_asi_epochs_);
    return *cnn_asi_;
  }
  int cnn_asi_epochs() const { return cnn_asi_epochs_; }

 private:
  std::unique_ptr<InferenceModel> fit(const Dataset& d, const std::string& name, int& epochs) {
    const TrainResult r = train(d, cfg_.training);
    epochs = static_cast<int>(r.history.size());
    save_model(r.model, (dir_ / name).string(), {{"config_hash", config_hash(cfg_)}});
    return std::make_unique<InferenceModel>(r.model);
  }

  RunConfig cfg_;
  std::uint64_t seed_;
  fs::path dir_;
  std::optional<std::vector<EpisodeLog>> as_uniform_;
  std::optional<Dataset> as_dataset_, asi_dataset_;
  std::unique_ptr<InferenceModel> cnn_as_, cnn_asi_;
  int cnn_as_epochs_ = 0, cnn_asi_epochs_ = 0;
};

Outcome filter_suite(Context&) {
  const Environment env;
  const SensorConfig sensor;
  Rng rng(1);
  double worst_mass = 0.0;
  for (int i = 0; i < 100; ++i) {
    ParticleSet p = make_uniform_particles(50 + 40 * i, uniform(rng, 0.1, 20.0), env, 5000, rng);
    for (double& w : p.weights) w *= uniform(rng, 0.0, 2.0);
    const double ps = uniform(rng, 0.5, 1.0), birth = uniform(rng, 0.0, 1.0);
    const double before = expected_count(p);
    const double after = expected_count(predict(p, ps, BirthConfig{birth, 1 + i}, env, rng));
    const double want = ps * before + birth;
    worst_mass = std::max(worst_mass, std::abs(after - want) / want);
  }

  double worst_miss = 0.0;
  const Vec2 agent{120, 140};
  const ParticleSet p = make_uniform_particles(2000, 6.0, env, 5000, rng);
  const ParticleSet q = update(p, {}, agent, sensor);
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double want = p.weights[j] * (1.0 - detection_prob(p.positions[j], agent, sensor));
    worst_miss = std::max(worst_miss, std::abs(q.weights[j] - want) / want);
  }

  ParticleSet one;
  const double r = 50.0 * std::log(0.98 / 0.5);
  one.push_back({r, 0.0}, 1.0);
  const std::vector<Measurement> z{{r - 0.4, 0.05}};
  const double w = update(one, z, {0, 0}, sensor).weights[0];

  Outcome o;
  o.pass = worst_mass <= 1e-12 && worst_miss <= 1e-14 && std::abs(w - 1.5) <= 1e-12;
  o.detail = "predict mass rel err " + fmt("%.2g", worst_mass) + ", empty-Z factor rel err " +
             fmt("%.2g", worst_miss) + ", single-particle weight " + fmt("%.15g", w);
  return o;
}

Outcome gradient_check(Context&) {
  const auto res = testing::gradient_check(11, 2, 200);
  Outcome o;
  o.pass = res.checked >= 1000 && res.worst_rel <= 1e-3;
  o.detail = std::to_string(res.checked) + " parameters, worst relative error " + fmt("%.3g", res.worst_rel) +
             " at " + res.worst_param + " (" + std::to_string(res.skipped_kinks) + " kink probes skipped)";
  return o;
}

Outcome overfit(Context& ctx) {
  Rng rng(3);
  Tensor x({64, arch::kInChannels, arch::kGrid, arch::kGrid});
  for (double& v : x.data) v = uniform01(rng);
  Tensor y({64, 2});
  for (double& v : y.data) v = uniform(rng, 0.05, 0.95);
  CnnModel m = CnnModel::initialize(rng);
  m.dropout_p = ctx.cfg().training.dropout_p;
  AdamState adam;
  double mse = 1.0;
  int steps = 0;
  for (; steps < 500 && mse > 1e-3; ++steps) {
    train_step(m, adam, x, y, ctx.cfg().training.lr0, rng);
    if ((steps + 1) % 25 == 0) mse = evaluate_loss(m, x, y);
  }
  mse = evaluate_loss(m, x, y);
  Outcome o;
  o.pass = mse <= 1e-3;
  o.detail = "train MSE " + fmt("%.3g", mse) + " after " + std::to_string(steps) + " Adam steps";
  return o;
}

Outcome as_detections(Context& ctx) {
  const auto& logs = ctx.as_uniform();
  const MeanCi d = final_detections(logs);
  Outcome o;
  o.pass = d.mean >= 15.0;
  o.detail = "AS mean final detections " + fmt("%.2f", d.mean) + " +- " + fmt("%.2f", d.ci95) + " [" +
             counts(logs) + "]";
  return o;
}

Outcome cnn_as_parity(Context& ctx) {
  const double as_mean = final_detections(ctx.as_uniform()).mean;
  TrialOptions opts;
  opts.model = &ctx.cnn_as();
  const auto logs = run_trials(PlannerKind::kCnnAs, ScenarioKind::kUniform, 10, ctx.cfg(), ctx.seed(), 1, opts);
  const double cnn = final_detections(logs).mean;
  const double rel = std::abs(cnn - as_mean) / as_mean;
  Outcome o;
  o.pass = rel <= 0.20;
  o.detail = "CNN_AS " + fmt("%.2f", cnn) + " vs AS " + fmt("%.2f", as_mean) + " (" + fmt("%.1f", 100 * rel) +
             "% apart, " + std::to_string(ctx.as_dataset().size()) + " samples, " +
             std::to_string(ctx.cnn_as_epochs()) + " epochs) [" + counts(logs) + "]";
  return o;
}

Outcome cnn_asi_parity(Context& ctx) {
  const auto asi = run_trials(PlannerKind::kAsi, ScenarioKind::kClustered, 10, ctx.cfg(), ctx.seed(), 1);
  TrialOptions opts;
  opts.model = &ctx.cnn_asi();
  const auto cnn = run_trials(PlannerKind::kCnnAsi, ScenarioKind::kClustered, 10, ctx.cfg(), ctx.seed(), 1, opts);
  const double a = final_detections(asi).mean, c = final_detections(cnn).mean;
  const double rel = a > 0 ? std::abs(c - a) / a : 1.0;
  Outcome o;
  o.pass = a > 0 && rel <= 0.25;
  o.detail = "CNN_ASI " + fmt("%.2f", c) + " vs ASI " + fmt("%.2f", a) + " (" + fmt("%.1f", 100 * rel) +
             "% apart, " + std::to_string(ctx.asi_dataset().size()) + " samples, " +
             std::to_string(ctx.cnn_asi_epochs()) + " epochs) ASI [" + counts(asi) + "] CNN [" + counts(cnn) + "]";
  return o;
}

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

std::string ms_list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : "/") + fmt("%.3f", 1e3 * x);
  return s + " ms";
}

Outcome timing(Context& ctx) {
  SweepConfig as;
  as.planner = PlannerKind::kAs;
  as.sizes = {4, 8, 16, 32};
  as.model = &ctx.cnn_as();
  const auto as_rows = candidate_sweep(as, ctx.cfg(), ctx.seed());
  SweepConfig asi;
  asi.planner = PlannerKind::kAsi;
  asi.sizes = {80, 60, 40, 20};
  asi.model = &ctx.cnn_asi();
  const auto asi_rows = candidate_sweep(asi, ctx.cfg(), ctx.seed());
  std::vector<TimingRow> all = as_rows;
  all.insert(all.end(), asi_rows.begin(), asi_rows.end());
  spit(ctx.dir() / "timing.csv", timing_csv(all, ctx.cfg(), ctx.seed()));

  std::vector<double> as_mean, asi_mean, cnn_mean;
  double as8 = 0.0, cnn8 = 0.0;
  for (const TimingRow& r : all) {
    if (r.planner == "as") as_mean.push_back(r.mean);
    if (r.planner == "asi") asi_mean.push_back(r.mean);
    if (r.planner == "cnn-as" || r.planner == "cnn-asi") cnn_mean.push_back(r.mean);
    if (r.planner == "as" && r.n_candidates == 8) as8 = r.mean;
    if (r.planner == "cnn-as" && r.n_candidates == 8) cnn8 = r.mean;
  }
  const double spread = *std::max_element(cnn_mean.begin(), cnn_mean.end()) /
                        *std::min_element(cnn_mean.begin(), cnn_mean.end());
  const bool a = strictly_increasing(as_mean), b = strictly_increasing(asi_mean);
  const bool c = spread <= 1.25, d = as8 >= 5.0 * cnn8;
  Outcome o;
  o.pass = a && b && c && d;
  o.detail = std::string("(a) ") + (a ? "ok" : "FAIL") + " AS " + ms_list(as_mean) + "; (b) " + (b ? "ok" : "FAIL") +
             " ASI " + ms_list(asi_mean) + "; (c) " + (c ? "ok" : "FAIL") + " CNN max/min " + fmt("%.3f", spread) +
             "; (d) " + (d ? "ok" : "FAIL") + " AS/CNN at 8 candidates " + fmt("%.2f", as8 / cnn8) + "x";
  return o;
}

Outcome ablation(Context& ctx) {
  RunConfig cfg = ctx.cfg();
  cfg.training.max_epochs = 40;
  AblationConfig ab;
  ab.planner = PlannerKind::kCnnAsi;
  ab.trials = 5;
  const auto rows = ablation_suite(ctx.asi_dataset(), ab, cfg, ctx.seed());
  spit(ctx.dir() / "ablation.csv", ablation_csv(rows, cfg, ctx.seed()));
  double full = 0.0, no_visit = 0.0;
  bool dominates = true;
  std::string table;
  for (const AblationRow& r : rows) {
    if (r.variant == ChannelVariant::kFull) full = r.detections.mean;
    if (r.variant == ChannelVariant::kNoVisitation) no_visit = r.detections.mean;
    table += (table.empty() ? "" : ", ") + to_string(r.variant) + " " + fmt("%.1f", r.detections.mean);
  }
  for (const AblationRow& r : rows) dominates = dominates && full >= r.detections.mean;
  Outcome o;
  o.pass = full > no_visit && dominates;
  o.detail = table;
  return o;
}

Outcome determinism(Context& ctx) {
  RunConfig cfg = ctx.cfg();
  cfg.experiment.as_steps = 40;
  cfg.experiment.asi_decisions = 4;
  cfg.training.max_epochs = 2;
  cfg.training.batch = 16;
  std::vector<std::string> mismatches;
  auto same = [&](const std::string& what, const std::string& a, const std::string& b) {
    if (a != b) mismatches.push_back(what);
  };

  auto logs_text = [&](PlannerKind p, ScenarioKind s, int jobs, const TrialOptions& o = {}) {
    std::string all;
    for (const EpisodeLog& l : run_trials(p, s, 3, cfg, 77, jobs, o)) all += l.to_jsonl(false);
    return all;
  };
  same("as logs", logs_text(PlannerKind::kAs, ScenarioKind::kUniform, 1),
       logs_text(PlannerKind::kAs, ScenarioKind::kUniform, 3));
  same("asi logs", logs_text(PlannerKind::kAsi, ScenarioKind::kClustered, 1),
       logs_text(PlannerKind::kAsi, ScenarioKind::kClustered, 2));

  const fs::path d1 = ctx.dir() / "det_dataset_1.nnt", d2 = ctx.dir() / "det_dataset_2.nnt";
  save_dataset(collect_dataset(PlannerKind::kAs, 2, cfg, 5, 1), d1.string());
  save_dataset(collect_dataset(PlannerKind::kAs, 2, cfg, 5, 2), d2.string());
  same("datasets", slurp(d1), slurp(d2));

  const Dataset data = load_dataset(d1.string());
  const fs::path m1 = ctx.dir() / "det_model_1.nnt", m2 = ctx.dir() / "det_model_2.nnt";
  const TrainResult t1 = train(data, cfg.training);
  const TrainResult t2 = train(data, cfg.training);
  save_model(t1.model, m1.string(), {}, &t1.adam);
  save_model(t2.model, m2.string(), {}, &t2.adam);
  same("models", slurp(m1), slurp(m2));
  same("history csv", history_csv(t1.history, cfg, 5), history_csv(t2.history, cfg, 5));

  const InferenceModel im(t1.model);
  TrialOptions o;
  o.model = &im;
  same("cnn-as logs", logs_text(PlannerKind::kCnnAs, ScenarioKind::kUniform, 1, o),
       logs_text(PlannerKind::kCnnAs, ScenarioKind::kUniform, 2, o));

  const auto c1 = run_trials(PlannerKind::kAs, ScenarioKind::kClustered, 3, cfg, 78, 1);
  const auto c2 = run_trials(PlannerKind::kAs, ScenarioKind::kClustered, 3, cfg, 78, 3);
  same("curve csv", detection_curve_csv(detection_curve(c1), cfg, 78), detection_curve_csv(detection_curve(c2), cfg, 78));

  SweepConfig sw;
  sw.planner = PlannerKind::kAs;
  sw.sizes = {4, 8};
  sw.detection_trials = 2;
  auto body = [](std::vector<TimingRow> rows) {
    std::string s;
    for (const TimingRow& r : rows)
      s += r.planner + "," + std::to_string(r.n_candidates) + "," + std::to_string(r.samples) + "," +
           fmt("%.17g", r.detections) + "\n";
    return s;
  };
  same("timing csv (non-clock columns)", body(candidate_sweep(sw, cfg, 79)), body(candidate_sweep(sw, cfg, 79)));

  Outcome out;
  out.pass = mismatches.empty();
  if (out.pass) {
    out.detail = "logs (as, asi, cnn-as; 1 vs several jobs), dataset, model, history, curve and timing bodies identical";
  } else {
    for (const std::string& m : mismatches) out.detail += (out.detail.empty() ? "differs: " : ", ") + m;
  }
  return out;
}

Outcome round_trips(Context& ctx) {
  std::vector<std::string> bad;
  Rng rng(5);
  const CnnModel m = CnnModel::initialize(rng);
  AdamState adam;
  adam.t = 7;
  for (double& v : adam.v.fc2_w.data) v = uniform01(rng);
  const fs::path a = ctx.dir() / "rt_model_a.nnt", b = ctx.dir() / "rt_model_b.nnt";
  save_model(m, a.string(), {{"variant", "full"}, {"seed", "5"}}, &adam);
  const LoadedModel l = load_model(a.string());
  save_model(l.model, b.string(), l.meta, l.has_adam ? &l.adam : nullptr);
  if (slurp(a) != slurp(b)) bad.push_back("model");

  RunConfig small;
  small.experiment.as_steps = 10;
  const fs::path da = ctx.dir() / "rt_ds_a.nnt", db = ctx.dir() / "rt_ds_b.nnt";
  save_dataset(collect_dataset(PlannerKind::kAs, 1, small, 3, 1), da.string());
  save_dataset(load_dataset(da.string()), db.string());
  if (slurp(da) != slurp(db)) bad.push_back("dataset");

  const NntContainer c = read_nnt(da.string());
  if (serialize_nnt(parse_nnt(serialize_nnt(c))) != slurp(da)) bad.push_back("raw container");

  for (ScenarioKind k : {ScenarioKind::kUniform, ScenarioKind::kClustered}) {
    const std::string j1 = scenario_to_json(make_trial_scenario(k, ctx.cfg(), 9, 2));
    const std::string j2 = scenario_to_json(scenario_from_json(j1));
    if (j1 != j2) bad.push_back("scenario " + to_string(k));
  }
  const std::string cfg1 = config_to_json(ctx.cfg());
  if (config_to_json(config_from_json(cfg1)) != cfg1) bad.push_back("config");

  Outcome o;
  o.pass = bad.empty();
  o.detail = o.pass ? "model, dataset, container, scenario and config documents byte-identical after save-load-save"
                    : "differs:";
  for (const std::string& s : bad) o.detail += " " + s;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::uint64_t seed = 1;
  std::string dir = (fs::temp_directory_path() / "tsearch_acceptance").string();
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_option("--seed", seed, "master seed");
  app.add_option("--artifacts", dir, "directory for datasets, models and tables");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome(Context&)>>> criteria{
      {"filter unit suite", filter_suite},
      {"gradient check", gradient_check},
      {"overfit 64 samples", overfit},
      {"AS detections, uniform", as_detections},
      {"CNN_AS within 20% of AS", cnn_as_parity},
      {"CNN_ASI within 25% of ASI, clustered", cnn_asi_parity},
      {"planning time scaling", timing},
      {"channel ablation ordering", ablation},
      {"determinism", determinism},
      {"file round trips", round_trips},
  };
  const std::set<int> selected(only.begin(), only.end());
  Context ctx(seed, dir);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    failed += !o.pass;
    std::printf("criterion %d: %s - %s: %s (%.1f s)\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str(), s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
