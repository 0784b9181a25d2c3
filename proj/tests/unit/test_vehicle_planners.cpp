#include <doctest.h>

#include <cmath>
#include <limits>

#include "tsearch/error.hpp"
#include "tsearch/planners.hpp"
#include "tsearch/vehicle.hpp"

using namespace tsearch;

TEST_CASE("step") {
  const ControllerConfig cfg;
  const AgentState rest{{5, 5}, {0, 0}};
  const AgentState s0 = step(rest, {0, 0}, cfg);
  CHECK(s0.position == rest.position);
  CHECK(s0.velocity == rest.velocity);

  const AgentState s1 = step({{0, 0}, {1, 0}}, {0, 0}, cfg);
  CHECK(s1.position.x == doctest::Approx(0.005));
  CHECK(s1.position.y == 0.0);

  AgentState s{{0, 0}, {0, 0}};
  for (int k = 0; k < 100; ++k) s = step(s, {2, 0}, cfg);
  CHECK(s.velocity.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.position.x == doctest::Approx(0.2525).epsilon(1e-12));

  AgentState fast{{0, 0}, {3.99, -3.99}};
  fast = step(fast, {3, -3}, cfg);
  CHECK(fast.velocity.x == cfg.v_max);
  CHECK(fast.velocity.y == -cfg.v_max);
}

TEST_CASE("track_waypoint") {
  ControllerConfig cfg;
  CHECK(track_waypoint({{10, 10}, {0, 0}}, {10, 10}, cfg) == Vec2{0, 0});
  cfg.kp = 0.5;
  cfg.u_max = 2.0;
  CHECK(track_waypoint({{0, 0}, {0, 0}}, {10, 0}, cfg) == Vec2{2, 0});
  const Vec2 brake = track_waypoint({{0, 0}, {4, 0}}, {1, 0}, ControllerConfig{});
  CHECK(brake.x < 0.0);
}

TEST_CASE("predict_trajectory") {
  const ControllerConfig cfg;
  const AgentState start{{10, 10}, {0, 0}};
  const Trajectory none = predict_trajectory(start, {10, 10}, cfg);
  CHECK(none.steps == 0);
  CHECK(none.inputs.empty());
  CHECK(none.arrived);

  const Trajectory leg = predict_trajectory(start, {90, 10}, cfg);
  CHECK(leg.steps > 0);
  CHECK(leg.arrived);
  CHECK(leg.inputs.size() == static_cast<std::size_t>(leg.steps));
  CHECK(leg.states.size() == static_cast<std::size_t>(leg.steps));
  CHECK(distance(leg.states.back().position, {90, 10}) <= cfg.arrival_radius);
  CHECK(leg.position_at(0, start) == start.position);
  CHECK(leg.control_cost() > 0.0);

  ControllerConfig tight = cfg;
  tight.max_steps = 10;
  const Trajectory cut = predict_trajectory(start, {250, 250}, tight);
  CHECK(!cut.arrived);
  CHECK(cut.steps == 10);
}

TEST_CASE("control cost is nonnegative and zero only without input") {
  Rng rng(3);
  const ControllerConfig cfg;
  for (int i = 0; i < 30; ++i) {
    const AgentState s{{uniform(rng, 0, 260), uniform(rng, 0, 260)}, {uniform(rng, -2, 2), uniform(rng, -2, 2)}};
    const Trajectory t = predict_trajectory(s, {uniform(rng, 0, 260), uniform(rng, 0, 260)}, cfg);
    bool any = false;
    for (const Vec2& u : t.inputs) any = any || u.x != 0.0 || u.y != 0.0;
    CHECK(t.control_cost() >= 0.0);
    CHECK((t.control_cost() > 0.0) == any);
    for (const AgentState& q : t.states) {
      CHECK(std::abs(q.velocity.x) <= cfg.v_max);
      CHECK(std::abs(q.velocity.y) <= cfg.v_max);
    }
  }
}

TEST_CASE("as_candidates") {
  const Environment env;
  const CandidateSet c4 = as_candidates({130, 130}, 4, 9.0, env);
  REQUIRE(c4.waypoints.size() == 4);
  const Vec2 want[] = {{139, 130}, {130, 139}, {121, 130}, {130, 121}};
  for (int i = 0; i < 4; ++i) CHECK(distance(c4.waypoints[i], want[i]) < 1e-12);

  const CandidateSet corner = as_candidates({0, 0}, 4, 9.0, env);
  CHECK(corner.waypoints.size() <= 2);
  for (const Vec2& w : corner.waypoints) {
    CHECK(env.contains(w));
    CHECK(!(w == Vec2{0, 0}));
  }

  const CandidateSet c8 = as_candidates({130, 130}, 8, 9.0, env);
  REQUIRE(c8.waypoints.size() == 8);
  const double d = 9.0 / std::sqrt(2.0);
  const Vec2 offs[] = {{9, 0}, {d, d}, {0, 9}, {-d, d}, {-9, 0}, {-d, -d}, {0, -9}, {d, -d}};
  for (int i = 0; i < 8; ++i) CHECK(distance(c8.waypoints[i], Vec2{130, 130} + offs[i]) < 1e-12);
  CHECK_THROWS_AS(as_candidates({1, 1}, 0, 9.0, env), Error);
}

TEST_CASE("asi_candidates") {
  const Environment env;
  const CandidateSet g80 = asi_candidates(env, 80, {10, 10});
  REQUIRE(g80.waypoints.size() == 9);
  for (const Vec2& w : g80.waypoints) {
    CHECK((w.x == 10 || w.x == 90 || w.x == 170));
    CHECK((w.y == 10 || w.y == 90 || w.y == 170));
  }
  CHECK(asi_candidates(env, 60, {10, 10}).waypoints.size() == 16);
  CHECK(asi_candidates(env, 40, {10, 10}).waypoints.size() == 36);
  CHECK(asi_candidates(env, 20, {10, 10}).waypoints.size() == 144);
  CHECK_THROWS_AS(asi_candidates(env, 0, {10, 10}), Error);
}

TEST_CASE("as_score") {
  const SensorConfig s;
  CHECK(as_score({10, 10}, {}, s) == 0.0);
  const std::vector<Cluster> at{{{10, 10}, 1.0, 1.0}};
  CHECK(as_score({10, 10}, at, s) == doctest::Approx(0.98));
  const std::vector<Cluster> away{{{35, 10}, 1.0, 1.0}};
  CHECK(as_score({10, 10}, away, s) == doctest::Approx(0.59438).epsilon(1e-4));
}

TEST_CASE("as_select") {
  const SensorConfig s;
  const Environment env;
  const CandidateSet c8 = as_candidates({130, 130}, 8, 9.0, env);
  const std::vector<Cluster> east{{{170, 130}, 1.0, 2.0}};
  const PlannerDecision d = as_select(east, c8, s);
  CHECK(d.index == 0);
  CHECK(d.scores.size() == 8);
  for (std::size_t i = 1; i < 8; ++i) CHECK(d.scores[i] < d.scores[0]);

  CHECK(as_select({}, c8, s).index == 0);

  const std::vector<Cluster> both{{{170, 130}, 1.0, 2.0}, {{90, 130}, 1.0, 2.0}};
  const PlannerDecision sym = as_select(both, c8, s);
  CHECK(sym.index == 0);
  CHECK(sym.scores[0] == doctest::Approx(sym.scores[4]).epsilon(1e-12));

  CHECK_THROWS_AS(as_select(both, CandidateSet{}, s), Error);
}

TEST_CASE("as_select is invariant to scaling the sensor gain") {
  Rng rng(8);
  const Environment env;
  SensorConfig s;
  SensorConfig half = s;
  half.gain = 0.49;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Cluster> c;
    for (int i = 0; i < 1 + trial % 6; ++i) c.push_back({{uniform(rng, 0, 260), uniform(rng, 0, 260)}, 1.0, 1.0});
    const CandidateSet cand = as_candidates({uniform(rng, 0, 260), uniform(rng, 0, 260)}, 16, 9.0, env);
    CHECK(as_select(c, cand, s).index == as_select(c, cand, half).index);
  }
}

TEST_CASE("asi_score arithmetic") {
  const AgentState start{{50, 50}, {0, 0}};
  const SensorConfig s;
  Trajectory t;
  for (int k = 0; k < 100; ++k) {
    t.inputs.push_back({std::sqrt(0.4), 0.0});
    t.states.push_back(start);
  }
  t.steps = 100;
  // 10 measurement points, each seeing one cluster with detection probability 0.25.
  const double r = 50.0 * std::log(0.98 / 0.25);
  const std::vector<Cluster> c{{{50 + r, 50}, 1.0, 1.0}};
  const AsiScore sc = asi_score_terms(t, start, c, s, AsiParams{});
  CHECK(sc.control_cost == doctest::Approx(40.0));
  CHECK(sc.refinement == doctest::Approx(2.5));
  CHECK(sc.score == doctest::Approx(2.1));

  const AsiScore empty = asi_score_terms(t, start, {}, s, AsiParams{});
  CHECK(empty.score == doctest::Approx(-0.4));
}

TEST_CASE("asi_select") {
  const SensorConfig s;
  const ControllerConfig ctrl;
  const AgentState at{{50, 50}, {0, 0}};
  CandidateSet one;
  one.waypoints = {{80, 50}};
  CHECK(asi_select(at, {}, one, s, AsiParams{}, ctrl).decision.index == 0);

  CandidateSet two;
  two.waypoints = {{50, 130}, {130, 50}};
  const std::vector<Cluster> heavy{{{130, 50}, 2.0, 1.0}};
  AsiParams big;
  big.beta = 1000.0;
  const AsiDecision d = asi_select(at, heavy, two, s, big, ctrl);
  CHECK(d.decision.index == 1);
  CHECK(d.trajectory.steps > 0);
  CHECK(distance(d.trajectory.states.back().position, {130, 50}) <= ctrl.arrival_radius);

  CHECK(asi_select(at, {}, two, s, AsiParams{}, ctrl).decision.index == 0);

  AsiParams lazy;
  lazy.beta = 0.0;
  CandidateSet near_far;
  near_far.waypoints = {{200, 50}, {70, 50}};
  CHECK(asi_select(at, {}, near_far, s, lazy, ctrl).decision.index == 1);

  CandidateSet self;
  self.waypoints = {{50, 50}, {60, 50}};
  const AsiDecision skip = asi_select(at, {}, self, s, AsiParams{}, ctrl);
  CHECK(skip.decision.index == 1);
  CHECK(skip.decision.scores[0] == -std::numeric_limits<double>::infinity());
}
