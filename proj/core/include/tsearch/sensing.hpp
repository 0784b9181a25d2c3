#pragma once

#include <span>
#include <vector>

#include "tsearch/geometry.hpp"
#include "tsearch/rng.hpp"

namespace tsearch {

/// Omnidirectional range-bearing sensor with distance-dependent detection.
struct SensorConfig {
  double gain = 0.98;    ///< peak detection probability G
  double fov_x = 25.0;   ///< field-of-view normalizer along x (m)
  double fov_y = 25.0;   ///< field-of-view normalizer along y (m)
  double sigma_range = 1.224744871391589;    ///< sqrt(1.5) m
  double sigma_bearing = 0.4183300132670378;  ///< sqrt(0.175) rad

  void validate() const;
};

struct Measurement {
  double range = 0.0;    ///< meters, >= 0
  double bearing = 0.0;  ///< radians, (-pi, pi]
};

struct ConfirmedTarget {
  Vec2 position;
  int step_confirmed = 0;
};

/// G * exp(-|zeta| / 2), zeta being the offset scaled by the field-of-view normalizers.
inline double detection_prob(const Vec2& target, const Vec2& agent, const SensorConfig& s) {
  const double zx = (target.x - agent.x) / s.fov_x;
  const double zy = (target.y - agent.y) / s.fov_y;
  return s.gain * std::exp(-0.5 * std::sqrt(zx * zx + zy * zy));
}

/// Noiseless range and quadrant-correct bearing of `target` seen from `agent`.
/// The bearing is 0 when the two coincide.
Measurement range_bearing(const Vec2& target, const Vec2& agent);

/// Cartesian point a measurement implies when taken from `agent`.
Vec2 implied_point(const Measurement& z, const Vec2& agent);

struct SampleOptions {
  /// Test hook: every target is detected regardless of distance.
  bool force_detection = false;
};

/// One Bernoulli detection per target, then Gaussian range/bearing noise on
/// each detected target. No clutter.
std::vector<Measurement> sample_measurements(std::span<const Vec2> targets, const Vec2& agent,
                                             const SensorConfig& sensor, Rng& rng,
                                             const SampleOptions& opts = {});

/// Drops measurements whose implied point lies within `gate_radius` of a
/// confirmed target.
std::vector<Measurement> gate_confirmed(std::span<const Measurement> measurements,
                                        const Vec2& agent,
                                        std::span<const ConfirmedTarget> confirmed,
                                        double gate_radius);

/// Drops measurements within `n_sigma` (normalized range/bearing residual) of
/// the noise-free measurement of some confirmed target. Unlike the Euclidean
/// gate this widens with range along the bearing direction.
std::vector<Measurement> gate_confirmed_residual(std::span<const Measurement> measurements,
                                                 const Vec2& agent,
                                                 std::span<const ConfirmedTarget> confirmed,
                                                 const SensorConfig& sensor, double n_sigma);

}  // namespace tsearch
