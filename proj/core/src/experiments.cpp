#include "tsearch/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "tsearch/error.hpp"

namespace tsearch {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

Scenario make_trial_scenario(ScenarioKind kind, const RunConfig& cfg, std::uint64_t seed, int trial) {
  const std::uint64_t s = stream_seed(seed, "scenario", static_cast<std::uint64_t>(trial));
  if (kind == ScenarioKind::kUniform) return make_uniform_scenario(s, cfg.experiment.n_targets, cfg.env);
  return make_clustered_scenario(s, cfg.experiment.clusters, cfg.env);
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::clamp(jobs, 1, n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<EpisodeLog> run_trials(PlannerKind planner, ScenarioKind scenario, int n_trials,
                                   const RunConfig& cfg, std::uint64_t seed, int jobs,
                                   const TrialOptions& options) {
  if (n_trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  std::vector<EpisodeLog> logs(n_trials);
  parallel_for(n_trials, jobs, [&](int t) {
    EpisodeOptions opts;
    opts.model = options.model;
    opts.variant = options.variant;
    opts.as_dirs = options.as_dirs;
    opts.asi_spacing = options.asi_spacing;
    logs[t] = run_episode(planner, make_trial_scenario(scenario, cfg, seed, t), cfg, seed, t, opts);
  });
  return logs;
}

double student_t_975(int dof) {
  if (dof < 1) throw Error(ErrorCode::kInvalidArgument, "dof must be >= 1");
  return boost::math::quantile(boost::math::students_t(dof), 0.975);
}

MeanCi mean_ci95(std::span<const double> values) {
  MeanCi r;
  r.n = static_cast<int>(values.size());
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / r.n;
  if (r.n < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  const double sd = std::sqrt(ss / (r.n - 1));
  r.ci95 = student_t_975(r.n - 1) * sd / std::sqrt(static_cast<double>(r.n));
  return r;
}

DetectionCurve detection_curve(std::span<const EpisodeLog> logs) {
  if (logs.size() < 2) throw Error(ErrorCode::kInvalidArgument, "detection curve needs at least 2 logs");
  const std::size_t steps = logs.front().records.size();
  for (const EpisodeLog& l : logs)
    if (l.records.size() != steps) throw Error(ErrorCode::kInvalidArgument, "logs differ in length");
  DetectionCurve c;
  c.trials = static_cast<int>(logs.size());
  std::vector<double> v(logs.size());
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t t = 0; t < logs.size(); ++t) v[t] = logs[t].records[k].matched;
    const MeanCi m = mean_ci95(v);
    c.mean.push_back(m.mean);
    c.ci95.push_back(m.ci95);
  }
  return c;
}

MeanCi final_detections(std::span<const EpisodeLog> logs) {
  std::vector<double> v;
  for (const EpisodeLog& l : logs) v.push_back(l.matched);
  return mean_ci95(v);
}

Dataset collect_dataset(PlannerKind planner, int n_trials, const RunConfig& cfg, std::uint64_t seed,
                        int jobs, const TrialOptions& options) {
  if (planner != PlannerKind::kAs && planner != PlannerKind::kAsi)
    throw Error(ErrorCode::kInvalidArgument, "demonstrations come from as or asi");
  if (n_trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  std::vector<Demonstration> demos(n_trials);
  parallel_for(n_trials, jobs, [&](int t) {
    EpisodeOptions opts;
    opts.record = &demos[t];
    opts.as_dirs = options.as_dirs;
    opts.asi_spacing = options.asi_spacing;
    run_episode(planner, make_trial_scenario(ScenarioKind::kUniform, cfg, seed, t), cfg, seed, t, opts);
  });
  Demonstration all;
  for (auto& d : demos) all.append(std::move(d));
  Dataset data = make_dataset(all.samples, all.raw_density);
  data.meta["planner"] = to_string(planner);
  data.meta["scenario"] = to_string(ScenarioKind::kUniform);
  data.meta["trials"] = std::to_string(n_trials);
  data.meta["samples"] = std::to_string(data.size());
  data.meta["seed"] = std::to_string(seed);
  data.meta["config_hash"] = config_hash(cfg);
  data.meta["tool_version"] = kToolVersion;
  if (options.as_dirs) data.meta["as_dirs"] = std::to_string(*options.as_dirs);
  if (options.asi_spacing) data.meta["asi_spacing"] = num(*options.asi_spacing);
  return data;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::kInvalidArgument, "quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

TimingRow timing_row(std::string planner, int n_candidates, double size, std::vector<double> samples) {
  TimingRow r;
  r.planner = std::move(planner);
  r.n_candidates = n_candidates;
  r.size = size;
  r.samples = static_cast<int>(samples.size());
  if (samples.empty()) return r;
  std::sort(samples.begin(), samples.end());
  r.q1 = quantile_sorted(samples, 0.25);
  r.median = quantile_sorted(samples, 0.5);
  r.q3 = quantile_sorted(samples, 0.75);
  double sum = 0.0;
  for (double s : samples) sum += s;
  r.mean = sum / static_cast<double>(samples.size());
  return r;
}

std::vector<TimingRow> candidate_sweep(const SweepConfig& sweep, const RunConfig& cfg, std::uint64_t seed) {
  const bool as = sweep.planner == PlannerKind::kAs;
  if (!as && sweep.planner != PlannerKind::kAsi)
    throw Error(ErrorCode::kInvalidArgument, "candidate sweep runs as or asi");
  if (sweep.sizes.empty()) throw Error(ErrorCode::kInvalidArgument, "no candidate sizes");
  for (double s : sweep.sizes) {
    if (as && (s < 1 || s != std::floor(s))) throw Error(ErrorCode::kInvalidArgument, "AS sizes are direction counts");
    if (!as && !(s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ASI sizes are positive spacings");
  }
  if (sweep.trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");

  const std::size_t n = sweep.sizes.size();
  std::vector<std::vector<double>> model_t(n), cnn_t(n);
  std::vector<int> counts(n, 0);
  const PlannerKind cnn_kind = as ? PlannerKind::kCnnAs : PlannerKind::kCnnAsi;

  // Every size is timed on the same planning states, those of a reference
  // episode at the configured default size. Clustering does not depend on the
  // candidate set, so one extraction is timed per state and shared.
  for (int t = 0; t < sweep.trials; ++t) {
    const Scenario sc = make_trial_scenario(ScenarioKind::kClustered, cfg, seed, t);
    EpisodeOptions opts;
    opts.on_plan = [&](const PlanningState& st) {
      Rng rng = st.cluster_rng;
      auto t0 = Clock::now();
      const std::vector<Cluster> clusters =
          extract_clusters(*st.particles, choose_k(*st.particles, cfg.filter.k_max), rng, cfg.filter.kmeans);
      const double cluster_s = seconds_since(t0);
      auto score = [&](std::size_t i) {
        if (as) {
          const CandidateSet c =
              as_candidates(st.agent.position, static_cast<int>(sweep.sizes[i]), cfg.experiment.as_radius, sc.env);
          const PlannerDecision d = as_select(clusters, c, cfg.sensor);
          (void)d;
          counts[i] = static_cast<int>(sweep.sizes[i]);
        } else {
          const CandidateSet c = asi_candidates(sc.env, sweep.sizes[i], cfg.experiment.start);
          const AsiDecision d = asi_select(st.agent, clusters, c, cfg.sensor, cfg.asi, cfg.controller);
          (void)d;
          counts[i] = static_cast<int>(c.waypoints.size());
        }
      };
      auto infer = [&] {
        const GridEncoding e = encode(*st.visits, *st.particles, st.agent.position, cfg.encoding);
        (void)predict_waypoint(*sweep.model, e, sc.env);
      };
      // Untimed warm-up.
      score(0);
      if (sweep.model) infer();
      for (std::size_t i = 0; i < n; ++i) {
        t0 = Clock::now();
        score(i);
        model_t[i].push_back(cluster_s + seconds_since(t0));
        if (sweep.model) {
          t0 = Clock::now();
          infer();
          cnn_t[i].push_back(seconds_since(t0));
        }
      }
    };
    run_episode(sweep.planner, sc, cfg, seed, t, opts);
  }

  std::vector<TimingRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    TimingRow r = timing_row(to_string(sweep.planner), counts[i], sweep.sizes[i], std::move(model_t[i]));
    if (sweep.detection_trials > 0) {
      TrialOptions o;
      if (as)
        o.as_dirs = static_cast<int>(sweep.sizes[i]);
      else
        o.asi_spacing = sweep.sizes[i];
      const auto logs = run_trials(sweep.planner, ScenarioKind::kClustered, sweep.detection_trials, cfg, seed,
                                   sweep.jobs, o);
      r.detections = final_detections(logs).mean;
    }
    rows.push_back(std::move(r));
  }
  if (sweep.model)
    for (std::size_t i = 0; i < n; ++i)
      rows.push_back(timing_row(to_string(cnn_kind), counts[i], sweep.sizes[i], std::move(cnn_t[i])));
  return rows;
}

std::vector<AblationRow> ablation_suite(const Dataset& base, const AblationConfig& ablation,
                                        const RunConfig& cfg, std::uint64_t seed,
                                        const std::function<void(const std::string&)>& progress) {
  if (!uses_cnn(ablation.planner)) throw Error(ErrorCode::kInvalidArgument, "ablation evaluates a cnn planner");
  if (ablation.trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  std::vector<AblationRow> rows;
  for (ChannelVariant v : all_channel_variants()) {
    if (progress) progress("training " + to_string(v));
    const Dataset data = v == ChannelVariant::kFull ? base : with_variant(base, v, cfg.encoding.grid);
    const TrainResult trained = train(data, cfg.training);
    const InferenceModel model(trained.model);
    if (progress) progress("evaluating " + to_string(v));
    TrialOptions o;
    o.model = &model;
    o.variant = v;
    const auto logs = run_trials(ablation.planner, ScenarioKind::kClustered, ablation.trials, cfg, seed,
                                 ablation.jobs, o);
    rows.push_back({v, final_detections(logs), trained.best_epoch});
  }
  return rows;
}

std::string csv_header_comment(const RunConfig& cfg, std::uint64_t seed) {
  return std::string("# tool_version=") + kToolVersion + ", config_hash=" + config_hash(cfg) +
         ", seed=" + std::to_string(seed) + "\n";
}

std::string detection_curve_csv(const DetectionCurve& curve, const RunConfig& cfg, std::uint64_t seed) {
  std::ostringstream o;
  o << csv_header_comment(cfg, seed) << "step,mean,ci95\n";
  for (std::size_t k = 0; k < curve.mean.size(); ++k)
    o << k << ',' << num(curve.mean[k]) << ',' << num(curve.ci95[k]) << '\n';
  return o.str();
}

std::string timing_csv(std::span<const TimingRow> rows, const RunConfig& cfg, std::uint64_t seed) {
  std::ostringstream o;
  o << csv_header_comment(cfg, seed) << "planner,n_candidates,q1,median,q3,mean,samples,detections\n";
  for (const TimingRow& r : rows)
    o << r.planner << ',' << r.n_candidates << ',' << num(r.q1) << ',' << num(r.median) << ',' << num(r.q3)
      << ',' << num(r.mean) << ',' << r.samples << ',' << num(r.detections) << '\n';
  return o.str();
}

std::string ablation_csv(std::span<const AblationRow> rows, const RunConfig& cfg, std::uint64_t seed) {
  std::ostringstream o;
  o << csv_header_comment(cfg, seed) << "variant,mean,ci95\n";
  for (const AblationRow& r : rows)
    o << to_string(r.variant) << ',' << num(r.detections.mean) << ',' << num(r.detections.ci95) << '\n';
  return o.str();
}

std::string history_csv(std::span<const EpochRecord> history, const RunConfig& cfg, std::uint64_t seed) {
  std::ostringstream o;
  o << csv_header_comment(cfg, seed) << "epoch,train_loss,val_loss,lr\n";
  for (const EpochRecord& e : history)
    o << e.epoch << ',' << num(e.train_loss) << ',' << num(e.val_loss) << ',' << num(e.lr) << '\n';
  return o.str();
}

}  // namespace tsearch
