#pragma once

#include <vector>

#include "tsearch/geometry.hpp"

namespace tsearch {

/// Planar double-integrator agent.
struct AgentState {
  Vec2 position;
  Vec2 velocity;
};

/// PD waypoint tracker and the integration settings it runs under.
struct ControllerConfig {
  double kp = 0.8;   ///< 1/s^2
  double kd = 1.8;   ///< 1/s
  double v_max = 4.0;
  double u_max = 3.0;
  double ts = 0.005;
  double arrival_radius = 1.0;
  int max_steps = 20000;

  void validate() const;
};

/// One semi-implicit Euler step: velocity first (clamped per axis), then position.
AgentState step(const AgentState& state, const Vec2& input, const ControllerConfig& cfg);

/// Saturated PD law toward `waypoint`.
Vec2 track_waypoint(const AgentState& state, const Vec2& waypoint, const ControllerConfig& cfg);

struct Trajectory {
  std::vector<AgentState> states;  ///< states after each step, start excluded
  std::vector<Vec2> inputs;
  int steps = 0;                   ///< K, number of control steps taken
  bool arrived = true;

  /// Agent position `k` steps after the start (k = 0 is the start itself).
  Vec2 position_at(int k, const AgentState& start) const {
    return k == 0 ? start.position : states[k - 1].position;
  }
  /// Summed squared input norm.
  double control_cost() const;
};

/// Closed-loop rollout until within the arrival radius or max_steps.
Trajectory predict_trajectory(const AgentState& state, const Vec2& waypoint,
                              const ControllerConfig& cfg);

}  // namespace tsearch
