#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsearch/geometry.hpp"
#include "tsearch/rng.hpp"

namespace tsearch {

/// Axis-aligned search area [0, width] x [0, height].
struct Environment {
  double width = 260.0;
  double height = 260.0;

  bool contains(const Vec2& p) const {
    return p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height;
  }
  bool strictly_contains(const Vec2& p) const {
    return p.x > 0.0 && p.x < width && p.y > 0.0 && p.y < height;
  }
  Vec2 clamp(const Vec2& p) const;
};

enum class ScenarioKind { kUniform, kClustered };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct Scenario {
  Environment env;
  std::vector<Vec2> targets;
  std::uint64_t seed = 0;
  ScenarioKind kind = ScenarioKind::kUniform;
};

struct ClusterLayout {
  int n_clusters = 3;
  int per_cluster = 5;
  double min_separation = 110.0;
  double margin = 40.0;
  double spread = 30.0;
};

/// n_targets i.i.d. uniform positions over env.
Scenario make_uniform_scenario(std::uint64_t seed, int n_targets,
                               const Environment& env = {});

/// Well-separated compact groups. Throws kInfeasibleGeometry when cluster
/// centers cannot be placed within 10,000 rejection attempts.
Scenario make_clustered_scenario(std::uint64_t seed, const ClusterLayout& layout,
                                 const Environment& env = {});

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);

/// Square occupancy grid laid over the environment.
struct GridSpec {
  int n_g = 26;
  double cell_size = 10.0;

  int cells() const { return n_g * n_g; }
};

/// One-based grid coordinates; a indexes x, b indexes y.
struct CellIndex {
  int a = 1;
  int b = 1;

  friend constexpr bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Cell containing `p`. A point on a cell boundary belongs to the
/// higher-indexed cell; points outside the grid clamp to edge cells.
CellIndex cell_of(const Vec2& p, const GridSpec& grid);

/// Row-major offset of a cell: (a - 1) * n_g + (b - 1).
inline int flat_index(const CellIndex& c, const GridSpec& grid) {
  return (c.a - 1) * grid.n_g + (c.b - 1);
}

}  // namespace tsearch
