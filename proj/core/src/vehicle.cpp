#include "tsearch/vehicle.hpp"

#include <algorithm>

#include "tsearch/error.hpp"

namespace tsearch {

void ControllerConfig::validate() const {
  if (!(kp > 0 && kd > 0 && v_max > 0 && u_max > 0 && ts > 0 && arrival_radius > 0 &&
        max_steps > 0))
    throw Error(ErrorCode::kConfig, "controller parameters must all be positive");
}

AgentState step(const AgentState& state, const Vec2& input, const ControllerConfig& cfg) {
  AgentState next;
  next.velocity.x = std::clamp(state.velocity.x + input.x * cfg.ts, -cfg.v_max, cfg.v_max);
  next.velocity.y = std::clamp(state.velocity.y + input.y * cfg.ts, -cfg.v_max, cfg.v_max);
  next.position = state.position + cfg.ts * next.velocity;
  return next;
}

Vec2 track_waypoint(const AgentState& state, const Vec2& waypoint, const ControllerConfig& cfg) {
  const Vec2 e = waypoint - state.position;
  return {std::clamp(cfg.kp * e.x - cfg.kd * state.velocity.x, -cfg.u_max, cfg.u_max),
          std::clamp(cfg.kp * e.y - cfg.kd * state.velocity.y, -cfg.u_max, cfg.u_max)};
}

double Trajectory::control_cost() const {
  double c = 0.0;
  for (const Vec2& u : inputs) c += dot(u, u);
  return c;
}

Trajectory predict_trajectory(const AgentState& state, const Vec2& waypoint,
                              const ControllerConfig& cfg) {
  Trajectory traj;
  const double r2 = cfg.arrival_radius * cfg.arrival_radius;
  AgentState s = state;
  while (squared_norm(waypoint - s.position) > r2) {
    if (traj.steps >= cfg.max_steps) {
      traj.arrived = false;
      break;
    }
    const Vec2 u = track_waypoint(s, waypoint, cfg);
    s = step(s, u, cfg);
    traj.inputs.push_back(u);
    traj.states.push_back(s);
    ++traj.steps;
  }
  return traj;
}

}  // namespace tsearch
