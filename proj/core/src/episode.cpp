#include "tsearch/episode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <tuple>

#include <json.hpp>

#include "tsearch/error.hpp"
#include "tsearch/train.hpp"

namespace tsearch {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::ordered_json vec(const Vec2& v) { return nlohmann::ordered_json::array({v.x, v.y}); }

struct FilterStep {
  double survival_prob;
  BirthConfig birth;
};

class Searcher {
 public:
  Searcher(PlannerKind planner, const Scenario& scenario, const RunConfig& cfg, std::uint64_t seed,
           int trial, const EpisodeOptions& opts)
      : planner_(planner),
        scenario_(scenario),
        cfg_(cfg),
        opts_(opts),
        sense_rng_(make_stream(seed, "sensing", trial)),
        filter_rng_(make_stream(seed, "filter", trial)),
        cluster_rng_(make_stream(seed, "cluster", trial)),
        visits_(cfg.encoding.grid) {
    if (uses_cnn(planner) && !opts.model)
      throw Error(ErrorCode::kInvalidArgument, to_string(planner) + " needs a trained model");
    if (is_intermittent(planner)) {
      filter_step_ = {cfg.asi_filter.survival_prob, {cfg.asi_filter.birth_mass, cfg.asi_filter.birth_particles}};
      jitter_sigma_ = cfg.asi_filter.jitter_sigma;
      min_pd_ = cfg.asi_filter.confirm_min_pd;
    } else {
      jitter_sigma_ = cfg.filter.jitter_sigma;
      min_pd_ = cfg.filter.confirm_min_pd;
      filter_step_ = {cfg.filter.survival_prob, cfg.filter.birth};
    }
    particles_ = make_uniform_particles(cfg.filter.initial_particles, cfg.filter.initial_mass, scenario.env,
                                        cfg.filter.cap, filter_rng_);
    agent_.position = cfg.experiment.start;
    visit_update(visits_, agent_.position);

    log_.planner = planner;
    log_.scenario = scenario;
    log_.master_seed = seed;
    log_.trial = trial;
    log_.config_hash = config_hash(cfg);
  }

  EpisodeLog run() {
    const int n = is_intermittent(planner_) ? cfg_.experiment.asi_decisions : cfg_.experiment.as_steps;
    for (int k = 0; k < n; ++k) {
      try {
        step(k);
      } catch (const Error& e) {
        throw Error(e.code(), to_string(planner_) + " step " + std::to_string(k) + ": " + e.what());
      }
    }
    log_.confirmed = confirmed_;
    log_.matched = count_matched(confirmed_, scenario_.targets, cfg_.experiment.match_radius, &log_.unmatched);
    return std::move(log_);
  }

 private:
  int sense_and_filter(const Vec2& where) {
    sensed_at_.push_back(where);
    auto z = sample_measurements(scenario_.targets, where, cfg_.sensor, sense_rng_);
    z = gate_confirmed(z, where, confirmed_, cfg_.filter.gate_radius);
    if (cfg_.filter.gate_sigma > 0.0)
      z = gate_confirmed_residual(z, where, confirmed_, cfg_.sensor, cfg_.filter.gate_sigma);
    particles_ = predict(std::move(particles_), filter_step_.survival_prob, filter_step_.birth, scenario_.env,
                         filter_rng_);
    if (!particles_.empty()) particles_ = update(std::move(particles_), z, where, cfg_.sensor);
    if (expected_count(particles_) > 0.0) {
      particles_ = resample(particles_, filter_rng_);
      jitter(particles_, jitter_sigma_, scenario_.env, filter_rng_);
    }
    return static_cast<int>(z.size());
  }

  std::vector<Cluster> clusters_now() {
    return extract_clusters(particles_, choose_k(particles_, cfg_.filter.k_max), cluster_rng_, cfg_.filter.kmeans);
  }

  // Marks clusters whose core is a narrow heavy peak as found and returns
  // the rest.
  std::vector<Cluster> promote(std::vector<Cluster> clusters, int k) {
    const FilterConfig& f = cfg_.filter;
    std::vector<Cluster> cores;
    cores.reserve(clusters.size());
    for (const Cluster& c : clusters) {
      Cluster core = cluster_core(particles_, c.center, f.core_radius);
      double nearest = std::numeric_limits<double>::infinity();
      for (const Vec2& q : sensed_at_) nearest = std::min(nearest, distance(core.center, q));
      if (sensed_at_.empty() || detection_prob(core.center, core.center + Vec2{nearest, 0.0}, cfg_.sensor) < min_pd_)
        core.mass = 0.0;
      cores.push_back(core);
    }
    sensed_at_.clear();
    const Promotion p = promote_confirmed(cores, f.confirm_mass, f.confirm_spread, k);

    std::vector<ConfirmedTarget> fresh;
    for (const ConfirmedTarget& t : p.confirmed) {
      auto near = [&](const ConfirmedTarget& o) { return distance(o.position, t.position) <= f.gate_radius; };
      if (std::any_of(fresh.begin(), fresh.end(), near) || std::any_of(confirmed_.begin(), confirmed_.end(), near))
        continue;
      fresh.push_back(t);
    }
    std::vector<Cluster> remaining;
    for (std::size_t i = 0; i < clusters.size(); ++i)
      if (cores[i].mass < f.confirm_mass || cores[i].spread > f.confirm_spread) remaining.push_back(clusters[i]);
    if (!fresh.empty()) {
      confirmed_.insert(confirmed_.end(), fresh.begin(), fresh.end());
      if (f.delete_promoted_particles) particles_ = remove_near(std::move(particles_), fresh, f.gate_radius);
    }
    return remaining;
  }

  GridEncoding encode_now() const {
    return encode(visits_, particles_, agent_.position, cfg_.encoding, opts_.variant);
  }

  void record_sample(const Vec2& chosen) {
    if (!opts_.record) return;
    GridEncoding e = encode(visits_, particles_, agent_.position, cfg_.encoding, ChannelVariant::kFull);
    e.label = normalize_label(chosen, scenario_.env);
    opts_.record->samples.push_back(std::move(e));
    opts_.record->raw_density.push_back(raw_intensity(particles_, cfg_.encoding.grid));
  }

  void step(int k) {
    StepRecord rec;
    rec.index = k;
    rec.agent = agent_.position;
    rec.measurements = sense_and_filter(agent_.position);

    // Planning: the model-based planners need clusters to score candidates;
    // the CNN planners extract them only to promote confirmed targets.
    const bool model_based = !uses_cnn(planner_);
    Rng cluster_before = cluster_rng_;
    auto t0 = Clock::now();
    std::vector<Cluster> clusters = clusters_now();
    double plan = model_based ? seconds_since(t0) : 0.0;
    rec.clusters = static_cast<int>(clusters.size());
    std::vector<Cluster> remaining = promote(std::move(clusters), k);
    if (opts_.on_plan) {
      PlanningState s{k, &particles_, &visits_, agent_, cluster_before};
      opts_.on_plan(s);
    }

    Vec2 chosen;
    Trajectory traj;
    if (planner_ == PlannerKind::kAs) {
      t0 = Clock::now();
      const CandidateSet cands = as_candidates(agent_.position, opts_.as_dirs.value_or(cfg_.experiment.as_dirs),
                                               cfg_.experiment.as_radius, scenario_.env);
      chosen = as_select(remaining, cands, cfg_.sensor).chosen;
      plan += seconds_since(t0);
    } else if (planner_ == PlannerKind::kAsi) {
      t0 = Clock::now();
      const CandidateSet cands =
          asi_candidates(scenario_.env, opts_.asi_spacing.value_or(cfg_.experiment.asi_spacing), cfg_.experiment.start);
      AsiDecision d = asi_select(agent_, remaining, cands, cfg_.sensor, cfg_.asi, cfg_.controller);
      plan += seconds_since(t0);
      chosen = d.decision.chosen;
      traj = std::move(d.trajectory);
    } else {
      t0 = Clock::now();
      const GridEncoding e = encode_now();
      Vec2 raw = scenario_.env.clamp(predict_waypoint(*opts_.model, e, scenario_.env));
      if (planner_ == PlannerKind::kCnnAs && k > 0)
        raw = smooth(agent_.position, raw, cfg_.experiment.smoothing_alpha);
      plan = seconds_since(t0);
      chosen = raw;
      if (planner_ == PlannerKind::kCnnAsi) traj = predict_trajectory(agent_, chosen, cfg_.controller);
    }
    record_sample(chosen);
    rec.waypoint = chosen;
    rec.plan_seconds = plan;

    if (is_intermittent(planner_)) {
      rec.measurements += execute(traj);
      rec.control_steps = traj.steps;
    } else {
      agent_.position = chosen;
      visit_update(visits_, agent_.position);
    }

    rec.expected_count = expected_count(particles_);
    rec.confirmed = static_cast<int>(confirmed_.size());
    rec.matched = count_matched(confirmed_, scenario_.targets, cfg_.experiment.match_radius);
    log_.records.push_back(rec);
  }

  // Flies the trajectory, measuring every `measurement_period` control steps
  // after the start (the start itself was measured before planning).
  int execute(const Trajectory& traj) {
    const int period = cfg_.asi.measurement_period;
    int detections = 0;
    for (int s = 1; s <= traj.steps; ++s) {
      const Vec2 p = traj.states[s - 1].position;
      visit_update(visits_, p);
      if (s % period == 0 && s < traj.steps) detections += sense_and_filter(p);
    }
    if (traj.steps > 0) agent_ = traj.states.back();
    return detections;
  }

  PlannerKind planner_;
  const Scenario& scenario_;
  const RunConfig& cfg_;
  const EpisodeOptions& opts_;
  Rng sense_rng_, filter_rng_, cluster_rng_;
  FilterStep filter_step_{};
  double jitter_sigma_ = 0.0;
  double min_pd_ = 0.0;
  ParticleSet particles_;
  VisitMap visits_;
  AgentState agent_;
  std::vector<ConfirmedTarget> confirmed_;
  std::vector<Vec2> sensed_at_;  ///< measurement positions since the last promotion
  EpisodeLog log_;
};

}  // namespace

std::string to_string(PlannerKind p) {
  switch (p) {
    case PlannerKind::kAs: return "as";
    case PlannerKind::kAsi: return "asi";
    case PlannerKind::kCnnAs: return "cnn-as";
    case PlannerKind::kCnnAsi: return "cnn-asi";
  }
  return "?";
}

PlannerKind planner_kind_from_string(const std::string& s) {
  for (PlannerKind p : {PlannerKind::kAs, PlannerKind::kAsi, PlannerKind::kCnnAs, PlannerKind::kCnnAsi})
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::kInvalidArgument, "unknown planner '" + s + "' (expected as, asi, cnn-as, cnn-asi)");
}

void Demonstration::append(Demonstration&& other) {
  std::move(other.samples.begin(), other.samples.end(), std::back_inserter(samples));
  std::move(other.raw_density.begin(), other.raw_density.end(), std::back_inserter(raw_density));
}

int count_matched(std::span<const ConfirmedTarget> confirmed, std::span<const Vec2> targets, double radius,
                  int* unmatched) {
  std::vector<std::tuple<double, int, int>> pairs;
  for (int i = 0; i < static_cast<int>(confirmed.size()); ++i)
    for (int j = 0; j < static_cast<int>(targets.size()); ++j) {
      const double d = distance(confirmed[i].position, targets[j]);
      if (d <= radius) pairs.emplace_back(d, i, j);
    }
  std::sort(pairs.begin(), pairs.end());
  std::vector<char> used_c(confirmed.size(), 0), used_t(targets.size(), 0);
  int matched = 0;
  for (const auto& [d, i, j] : pairs) {
    if (used_c[i] || used_t[j]) continue;
    used_c[i] = used_t[j] = 1;
    ++matched;
  }
  if (unmatched) *unmatched = static_cast<int>(confirmed.size()) - matched;
  return matched;
}

EpisodeLog run_episode(PlannerKind planner, const Scenario& scenario, const RunConfig& cfg,
                       std::uint64_t master_seed, int trial, const EpisodeOptions& options) {
  Searcher s(planner, scenario, cfg, master_seed, trial, options);
  return s.run();
}

std::string EpisodeLog::to_jsonl(bool include_timing) const {
  using nlohmann::ordered_json;
  std::string out;
  ordered_json head = {{"type", "episode"},
                       {"tool_version", kToolVersion},
                       {"config_hash", config_hash},
                       {"seed", master_seed},
                       {"trial", trial},
                       {"planner", to_string(planner)},
                       {"scenario", ordered_json::parse(scenario_to_json(scenario))}};
  out += head.dump() + "\n";
  for (const StepRecord& r : records) {
    ordered_json j = {{"type", "step"},
                      {"index", r.index},
                      {"agent", vec(r.agent)},
                      {"measurements", r.measurements},
                      {"expected_count", r.expected_count},
                      {"clusters", r.clusters},
                      {"confirmed", r.confirmed},
                      {"matched", r.matched},
                      {"waypoint", vec(r.waypoint)},
                      {"control_steps", r.control_steps}};
    if (include_timing) j["plan_seconds"] = r.plan_seconds;
    out += j.dump() + "\n";
  }
  ordered_json found = ordered_json::array();
  for (const auto& c : confirmed) found.push_back({c.position.x, c.position.y, c.step_confirmed});
  ordered_json tail = {{"type", "summary"}, {"confirmed", found}, {"matched", matched}, {"unmatched", unmatched}};
  out += tail.dump() + "\n";
  return out;
}

}  // namespace tsearch
