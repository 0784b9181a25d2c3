#include "tsearch/planners.hpp"

#include <cmath>
#include <limits>

#include "tsearch/error.hpp"

namespace tsearch {

CandidateSet as_candidates(const Vec2& agent, int n_dirs, double radius, const Environment& env) {
  if (n_dirs < 1) throw Error(ErrorCode::kInvalidArgument, "n_dirs must be >= 1");
  if (!(radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "radius must be > 0");
  constexpr double kTwoPi = 6.283185307179586476925;
  CandidateSet set;
  set.kind = CandidateSet::Kind::kRadial;
  set.n_dirs = n_dirs;
  set.radius = radius;
  for (int i = 0; i < n_dirs; ++i) {
    const double a = kTwoPi * i / n_dirs;
    const Vec2 w = env.clamp(agent + Vec2{radius * std::cos(a), radius * std::sin(a)});
    if (distance(w, agent) < 1e-9) continue;
    bool dup = false;
    for (const Vec2& o : set.waypoints) dup = dup || distance(o, w) < 1e-9;
    if (!dup) set.waypoints.push_back(w);
  }
  return set;
}

CandidateSet asi_candidates(const Environment& env, double spacing, const Vec2& origin) {
  if (!(spacing > 0.0)) throw Error(ErrorCode::kInvalidArgument, "spacing must be > 0");
  CandidateSet set;
  set.kind = CandidateSet::Kind::kGrid;
  set.spacing = spacing;
  auto axis = [&](double o, double extent) {
    std::vector<double> v;
    for (int i = 0;; ++i) {
      const double p = o + i * spacing;
      if (p >= extent - o) break;
      v.push_back(p);
    }
    return v;
  };
  for (double x : axis(origin.x, env.width))
    for (double y : axis(origin.y, env.height)) set.waypoints.push_back({x, y});
  return set;
}

double as_score(const Vec2& candidate, std::span<const Cluster> clusters,
                const SensorConfig& sensor) {
  double t = 0.0;
  for (const Cluster& c : clusters) t += detection_prob(c.center, candidate, sensor);
  return t;
}

int argmax_lowest(std::span<const double> scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

PlannerDecision as_select(std::span<const Cluster> clusters, const CandidateSet& candidates,
                          const SensorConfig& sensor) {
  if (candidates.waypoints.empty())
    throw Error(ErrorCode::kInvalidArgument, "empty candidate set");
  PlannerDecision d;
  d.scores.reserve(candidates.waypoints.size());
  for (const Vec2& w : candidates.waypoints) d.scores.push_back(as_score(w, clusters, sensor));
  d.index = argmax_lowest(d.scores);
  d.chosen = candidates.waypoints[d.index];
  return d;
}

AsiScore asi_score_terms(const Trajectory& traj, const AgentState& start,
                         std::span<const Cluster> clusters, const SensorConfig& sensor,
                         const AsiParams& params) {
  AsiScore s;
  s.steps = traj.steps;
  s.arrived = traj.arrived;
  s.control_cost = traj.control_cost();
  const int period = params.measurement_period;
  const int m_count = (traj.steps + period - 1) / period;
  for (int m = 0; m < m_count; ++m)
    s.refinement += as_score(traj.position_at(m * period, start), clusters, sensor);
  s.score = traj.steps > 0 ? (-s.control_cost + params.beta * s.refinement) / traj.steps
                           : -std::numeric_limits<double>::infinity();
  return s;
}

AsiScore asi_score(const Vec2& candidate, const AgentState& state,
                   std::span<const Cluster> clusters, const SensorConfig& sensor,
                   const AsiParams& params, const ControllerConfig& ctrl) {
  return asi_score_terms(predict_trajectory(state, candidate, ctrl), state, clusters, sensor,
                         params);
}

AsiDecision asi_select(const AgentState& state, std::span<const Cluster> clusters,
                       const CandidateSet& candidates, const SensorConfig& sensor,
                       const AsiParams& params, const ControllerConfig& ctrl) {
  if (candidates.waypoints.empty())
    throw Error(ErrorCode::kInvalidArgument, "empty candidate set");
  AsiDecision out;
  auto& d = out.decision;
  d.scores.assign(candidates.waypoints.size(), -std::numeric_limits<double>::infinity());
  const double r = ctrl.arrival_radius;
  for (std::size_t i = 0; i < candidates.waypoints.size(); ++i) {
    const Vec2& w = candidates.waypoints[i];
    if (squared_norm(w - state.position) <= r * r) continue;
    Trajectory traj = predict_trajectory(state, w, ctrl);
    d.scores[i] = asi_score_terms(traj, state, clusters, sensor, params).score;
    const int best = argmax_lowest(d.scores);
    if (best == static_cast<int>(i)) out.trajectory = std::move(traj);
  }
  d.index = argmax_lowest(d.scores);
  d.chosen = candidates.waypoints[d.index];
  if (!std::isfinite(d.scores[d.index])) out.trajectory = Trajectory{};
  return out;
}

}  // namespace tsearch
