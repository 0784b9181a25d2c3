#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsearch/cnn.hpp"
#include "tsearch/config.hpp"

namespace tsearch {

enum class PlannerKind { kAs, kAsi, kCnnAs, kCnnAsi };

std::string to_string(PlannerKind p);
PlannerKind planner_kind_from_string(const std::string& s);
/// ASI and its clone plan multi-step trajectories with intermittent measurements.
inline bool is_intermittent(PlannerKind p) { return p == PlannerKind::kAsi || p == PlannerKind::kCnnAsi; }
inline bool uses_cnn(PlannerKind p) { return p == PlannerKind::kCnnAs || p == PlannerKind::kCnnAsi; }

/// One AS step or one ASI decision.
struct StepRecord {
  int index = 0;
  Vec2 agent;               ///< position where the step's planning happened
  int measurements = 0;     ///< gated detections folded into the filter this step
  double expected_count = 0.0;
  int clusters = 0;
  int confirmed = 0;
  int matched = 0;
  Vec2 waypoint;
  int control_steps = 0;    ///< executed trajectory length (intermittent planners)
  double plan_seconds = 0.0;
};

struct EpisodeLog {
  PlannerKind planner = PlannerKind::kAs;
  Scenario scenario;
  std::uint64_t master_seed = 0;
  int trial = 0;
  std::string config_hash;
  std::vector<StepRecord> records;
  std::vector<ConfirmedTarget> confirmed;
  int matched = 0;
  int unmatched = 0;

  /// Header line, one line per record, summary line. Timing fields are
  /// omitted when `include_timing` is false.
  std::string to_jsonl(bool include_timing = true) const;
};

/// Behavior-cloning pairs recorded at every planner decision.
struct Demonstration {
  std::vector<GridEncoding> samples;
  std::vector<std::vector<double>> raw_density;

  void append(Demonstration&& other);
};

/// Filter and agent state at the moment a planner is invoked, after
/// promotion of confirmed targets.
struct PlanningState {
  int index = 0;
  const ParticleSet* particles = nullptr;
  const VisitMap* visits = nullptr;
  AgentState agent;
  Rng cluster_rng;  ///< copy of the clustering stream before this step's extraction
};

struct EpisodeOptions {
  const InferenceModel* model = nullptr;  ///< required by CNN planners
  ChannelVariant variant = ChannelVariant::kFull;
  Demonstration* record = nullptr;
  std::optional<int> as_dirs;
  std::optional<double> asi_spacing;
  std::function<void(const PlanningState&)> on_plan;
};

/// Greedy nearest matching of confirmed targets to distinct true targets
/// within `radius`.
int count_matched(std::span<const ConfirmedTarget> confirmed, std::span<const Vec2> targets, double radius,
                  int* unmatched = nullptr);

/// Runs one search episode. AS and CNN_AS take experiment.as_steps sensing
/// steps; ASI and CNN_ASI take experiment.asi_decisions decisions with a
/// measurement every asi.measurement_period control steps.
EpisodeLog run_episode(PlannerKind planner, const Scenario& scenario, const RunConfig& cfg,
                       std::uint64_t master_seed, int trial, const EpisodeOptions& options = {});

}  // namespace tsearch
