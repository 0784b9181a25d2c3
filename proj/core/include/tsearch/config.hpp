#pragma once

#include <cstdint>
#include <string>

#include "tsearch/encoding.hpp"
#include "tsearch/phd.hpp"
#include "tsearch/planners.hpp"
#include "tsearch/sensing.hpp"
#include "tsearch/train.hpp"
#include "tsearch/vehicle.hpp"
#include "tsearch/world.hpp"

namespace tsearch {

inline constexpr const char* kToolVersion = "0.1.0";

/// Filter parameters applied per measurement by the intermittent-measurement
/// planners. ASI measures every 10 control steps (about 0.2 m of travel), so
/// survival and birth are rescaled to keep the per-distance decay and birth
/// rate of the per-step planners.
struct MeasurementFilterConfig {
  double survival_prob = 0.99997777;  // 0.999^(1/45)
  double birth_mass = 0.05 / 45.0;
  int birth_particles = 6;
  double jitter_sigma = 0.15;  // 1 m / sqrt(45)
  double confirm_min_pd = 0.3;
};

struct ExperimentConfig {
  int as_steps = 250;
  int asi_decisions = 50;
  int trials = 10;
  int n_targets = 18;
  ClusterLayout clusters;
  Vec2 start{10.0, 10.0};
  int as_dirs = 8;
  double as_radius = 9.0;
  double asi_spacing = 80.0;
  double match_radius = 10.0;
  double smoothing_alpha = 0.7;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int jobs = 1;
  Environment env;
  SensorConfig sensor;
  FilterConfig filter;
  MeasurementFilterConfig asi_filter;
  AsiParams asi;
  ControllerConfig controller;
  EncodingConfig encoding;
  TrainConfig training;
  ExperimentConfig experiment;

  /// Throws kConfig naming the first offending field.
  void validate() const;
};

/// Parses a (possibly partial) JSON document over the defaults. Unknown keys
/// and ill-typed values are rejected with kConfig.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);
/// Canonical full serialization (fixed key order, shortest round-trip numbers).
std::string config_to_json(const RunConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical serialization.
std::string config_hash(const RunConfig& cfg);

}  // namespace tsearch
