#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsearch/episode.hpp"
#include "tsearch/train.hpp"

namespace tsearch {

/// Scenario of one trial, seeded from the "scenario" stream of `seed`.
Scenario make_trial_scenario(ScenarioKind kind, const RunConfig& cfg, std::uint64_t seed, int trial);

/// Calls `fn(i)` for i in [0, n) on up to `jobs` threads. The exception of the
/// lowest failing index is rethrown after all workers finish.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

struct TrialOptions {
  const InferenceModel* model = nullptr;
  ChannelVariant variant = ChannelVariant::kFull;
  std::optional<int> as_dirs;
  std::optional<double> asi_spacing;
};

/// Independent episodes for trials 0..n-1, returned in trial order.
std::vector<EpisodeLog> run_trials(PlannerKind planner, ScenarioKind scenario, int n_trials,
                                   const RunConfig& cfg, std::uint64_t seed, int jobs,
                                   const TrialOptions& options = {});

/// Two-sided 95% Student-t quantile t_{0.975, dof}.
double student_t_975(int dof);

struct MeanCi {
  double mean = 0.0;
  double ci95 = 0.0;  ///< half-width, 0 for fewer than 2 values
  int n = 0;
};

MeanCi mean_ci95(std::span<const double> values);

struct DetectionCurve {
  std::vector<double> mean;  ///< per step
  std::vector<double> ci95;
  int trials = 0;
};

/// Per-step matched detections over trials. Requires at least 2 logs of equal
/// length.
DetectionCurve detection_curve(std::span<const EpisodeLog> logs);

/// Final matched detections of each log.
MeanCi final_detections(std::span<const EpisodeLog> logs);

/// Behavior-cloning data from `n_trials` uniform-target episodes of AS or ASI.
Dataset collect_dataset(PlannerKind planner, int n_trials, const RunConfig& cfg, std::uint64_t seed,
                        int jobs, const TrialOptions& options = {});

struct TimingRow {
  std::string planner;
  int n_candidates = 0;
  double size = 0.0;  ///< directions for AS, spacing in meters for ASI
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double mean = 0.0;
  int samples = 0;
  double detections = 0.0;  ///< mean final matched detections, model-based rows only
};

/// Linear-interpolation quantile of sorted data, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

TimingRow timing_row(std::string planner, int n_candidates, double size, std::vector<double> samples);

struct SweepConfig {
  PlannerKind planner = PlannerKind::kAs;  ///< kAs or kAsi
  std::vector<double> sizes;               ///< AS directions or ASI spacings
  int trials = 1;                          ///< reference episodes supplying the planning states
  int detection_trials = 0;                ///< episodes per size for the detection column, 0 skips
  int jobs = 1;                            ///< parallelism of the detection episodes only
  const InferenceModel* model = nullptr;   ///< when set, also times CNN on the same states
};

/// Planning-time distribution per candidate-set size on clustered scenarios.
/// Model-based rows time clustering plus candidate scoring; CNN rows time
/// encoding plus inference on the identical planning states.
std::vector<TimingRow> candidate_sweep(const SweepConfig& sweep, const RunConfig& cfg, std::uint64_t seed);

struct AblationRow {
  ChannelVariant variant = ChannelVariant::kFull;
  MeanCi detections;
  int best_epoch = -1;
};

struct AblationConfig {
  PlannerKind planner = PlannerKind::kCnnAsi;  ///< CNN planner evaluated per variant
  int trials = 5;
  int jobs = 1;
};

/// Trains one model per input variant on `base` and evaluates each on the
/// same clustered scenarios. Rows follow the ablation-table order.
std::vector<AblationRow> ablation_suite(const Dataset& base, const AblationConfig& ablation,
                                        const RunConfig& cfg, std::uint64_t seed,
                                        const std::function<void(const std::string&)>& progress = {});

/// "# tool_version=..., config_hash=..., seed=..." comment line.
std::string csv_header_comment(const RunConfig& cfg, std::uint64_t seed);
std::string detection_curve_csv(const DetectionCurve& curve, const RunConfig& cfg, std::uint64_t seed);
std::string timing_csv(std::span<const TimingRow> rows, const RunConfig& cfg, std::uint64_t seed);
std::string ablation_csv(std::span<const AblationRow> rows, const RunConfig& cfg, std::uint64_t seed);
std::string history_csv(std::span<const EpochRecord> history, const RunConfig& cfg, std::uint64_t seed);

}  // namespace tsearch
