#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tsearch/phd.hpp"
#include "tsearch/sensing.hpp"
#include "tsearch/vehicle.hpp"
#include "tsearch/world.hpp"

namespace tsearch {

struct CandidateSet {
  enum class Kind { kRadial, kGrid };

  std::vector<Vec2> waypoints;
  Kind kind = Kind::kRadial;
  int n_dirs = 0;        ///< radial sets
  double radius = 0.0;   ///< radial sets
  double spacing = 0.0;  ///< grid sets
};

struct PlannerDecision {
  Vec2 chosen;
  int index = 0;
  std::vector<double> scores;  ///< aligned with the candidate waypoints
  double elapsed = 0.0;        ///< seconds, filled in by the caller when timed
};

/// `n_dirs` points on a circle of `radius` around the agent, clamped into env.
/// Duplicates created by clamping and points equal to the agent are removed.
CandidateSet as_candidates(const Vec2& agent, int n_dirs, double radius, const Environment& env);

/// Axis-aligned grid starting at `origin`. Points lie in [origin, extent - origin)
/// along each axis, giving 9/16/36/144 points for 80/60/40/20 m on the
/// default 260 m area from (10, 10).
CandidateSet asi_candidates(const Environment& env, double spacing, const Vec2& origin);

/// Sum over cluster centers of the detection probability seen from `candidate`.
double as_score(const Vec2& candidate, std::span<const Cluster> clusters,
                const SensorConfig& sensor);

/// Index-ordered argmax with lowest-index tie-break.
int argmax_lowest(std::span<const double> scores);

PlannerDecision as_select(std::span<const Cluster> clusters, const CandidateSet& candidates,
                          const SensorConfig& sensor);

struct AsiParams {
  double beta = 100.0;
  int measurement_period = 10;  ///< control steps between measurements
};

struct AsiScore {
  double score = 0.0;
  double control_cost = 0.0;
  double refinement = 0.0;
  int steps = 0;
  bool arrived = true;
};

/// (-C + beta * T) / K along the closed-loop rollout to `candidate`.
AsiScore asi_score_terms(const Trajectory& traj, const AgentState& start,
                         std::span<const Cluster> clusters, const SensorConfig& sensor,
                         const AsiParams& params);

AsiScore asi_score(const Vec2& candidate, const AgentState& state,
                   std::span<const Cluster> clusters, const SensorConfig& sensor,
                   const AsiParams& params, const ControllerConfig& ctrl);

struct AsiDecision {
  PlannerDecision decision;
  Trajectory trajectory;  ///< rollout toward the winner
};

/// Candidates within the arrival radius of the agent are skipped (score -inf)
/// since their normalized objective is undefined.
AsiDecision asi_select(const AgentState& state, std::span<const Cluster> clusters,
                       const CandidateSet& candidates, const SensorConfig& sensor,
                       const AsiParams& params, const ControllerConfig& ctrl);

}  // namespace tsearch
