#include "tsearch/world.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "tsearch/error.hpp"

namespace tsearch {

Vec2 Environment::clamp(const Vec2& p) const {
  return {std::clamp(p.x, 0.0, width), std::clamp(p.y, 0.0, height)};
}

std::string to_string(ScenarioKind kind) {
  return kind == ScenarioKind::kUniform ? "uniform" : "clustered";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "uniform") return ScenarioKind::kUniform;
  if (s == "clustered") return ScenarioKind::kClustered;
  throw Error(ErrorCode::kInvalidArgument, "unknown scenario kind '" + s + "'");
}

Scenario make_uniform_scenario(std::uint64_t seed, int n_targets, const Environment& env) {
  if (n_targets < 1) throw Error(ErrorCode::kInvalidArgument, "n_targets must be >= 1");
  Rng rng = make_stream(seed, "world");
  Scenario s{env, {}, seed, ScenarioKind::kUniform};
  s.targets.reserve(n_targets);
  while (static_cast<int>(s.targets.size()) < n_targets) {
    Vec2 p{uniform(rng, 0.0, env.width), uniform(rng, 0.0, env.height)};
    // A draw of exactly 0 would sit on the boundary.
    if (env.strictly_contains(p)) s.targets.push_back(p);
  }
  return s;
}

Scenario make_clustered_scenario(std::uint64_t seed, const ClusterLayout& layout,
                                 const Environment& env) {
  if (layout.n_clusters < 1 || layout.per_cluster < 1)
    throw Error(ErrorCode::kInvalidArgument, "cluster counts must be >= 1");
  if (!(layout.min_separation > 0 && layout.margin > 0 && layout.spread > 0))
    throw Error(ErrorCode::kInvalidArgument, "cluster geometry parameters must be > 0");
  if (2 * layout.margin >= env.width || 2 * layout.margin >= env.height)
    throw Error(ErrorCode::kInfeasibleGeometry, "cluster margin leaves no room for centers");

  Rng rng = make_stream(seed, "world");
  constexpr int kMaxAttempts = 10000;
  constexpr int kRestartAfter = 200;
  std::vector<Vec2> centers;
  int attempts = 0;
  int stuck = 0;
  while (static_cast<int>(centers.size()) < layout.n_clusters) {
    if (stuck >= kRestartAfter) {
      centers.clear();
      stuck = 0;
    }
    if (++attempts > kMaxAttempts)
      throw Error(ErrorCode::kInfeasibleGeometry,
                  "could not place " + std::to_string(layout.n_clusters) +
                      " cluster centers " + std::to_string(layout.min_separation) +
                      " m apart within " + std::to_string(kMaxAttempts) + " attempts");
    Vec2 c{uniform(rng, layout.margin, env.width - layout.margin),
           uniform(rng, layout.margin, env.height - layout.margin)};
    bool ok = std::all_of(centers.begin(), centers.end(), [&](const Vec2& o) {
      return distance(o, c) >= layout.min_separation;
    });
    if (ok) {
      centers.push_back(c);
      stuck = 0;
    } else {
      ++stuck;
    }
  }

  Scenario s{env, {}, seed, ScenarioKind::kClustered};
  s.targets.reserve(static_cast<std::size_t>(layout.n_clusters) * layout.per_cluster);
  for (const Vec2& c : centers) {
    int placed = 0;
    while (placed < layout.per_cluster) {
      Vec2 off{uniform(rng, -layout.spread, layout.spread),
               uniform(rng, -layout.spread, layout.spread)};
      if (squared_norm(off) > layout.spread * layout.spread) continue;
      Vec2 p = c + off;
      if (!env.strictly_contains(p)) continue;
      s.targets.push_back(p);
      ++placed;
    }
  }
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["kind"] = to_string(s.kind);
  j["env"] = {{"w", s.env.width}, {"h", s.env.height}};
  nlohmann::json targets = nlohmann::json::array();
  for (const Vec2& t : s.targets) targets.push_back({t.x, t.y});
  j["targets"] = std::move(targets);
  return j.dump();
}

Scenario scenario_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Scenario s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.kind = scenario_kind_from_string(j.at("kind").get<std::string>());
    s.env.width = j.at("env").at("w").get<double>();
    s.env.height = j.at("env").at("h").get<double>();
    for (const auto& t : j.at("targets")) {
      if (t.size() != 2) throw Error(ErrorCode::kCorruptFile, "target entry must be [x, y]");
      s.targets.push_back({t[0].get<double>(), t[1].get<double>()});
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("bad scenario json: ") + e.what());
  }
}

CellIndex cell_of(const Vec2& p, const GridSpec& grid) {
  auto axis = [&](double v) {
    const double idx = std::floor(v / grid.cell_size) + 1.0;
    return static_cast<int>(std::clamp(idx, 1.0, static_cast<double>(grid.n_g)));
  };
  return {axis(p.x), axis(p.y)};
}

}  // namespace tsearch
