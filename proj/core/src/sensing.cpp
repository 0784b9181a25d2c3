#include "tsearch/sensing.hpp"

#include <algorithm>
#include <cmath>

#include "tsearch/error.hpp"

namespace tsearch {

void SensorConfig::validate() const {
  if (!(gain > 0.0 && gain <= 1.0)) throw Error(ErrorCode::kConfig, "sensor.gain must be in (0, 1]");
  if (!(fov_x > 0.0 && fov_y > 0.0)) throw Error(ErrorCode::kConfig, "sensor.fov must be > 0");
  if (!(sigma_range > 0.0 && sigma_bearing > 0.0))
    throw Error(ErrorCode::kConfig, "sensor noise deviations must be > 0");
}

Measurement range_bearing(const Vec2& target, const Vec2& agent) {
  const Vec2 d = target - agent;
  const double r = norm(d);
  if (r == 0.0) return {0.0, 0.0};
  return {r, wrap_angle(std::atan2(d.y, d.x))};
}

Vec2 implied_point(const Measurement& z, const Vec2& agent) {
  return agent + Vec2{z.range * std::cos(z.bearing), z.range * std::sin(z.bearing)};
}

std::vector<Measurement> sample_measurements(std::span<const Vec2> targets, const Vec2& agent,
                                             const SensorConfig& sensor, Rng& rng,
                                             const SampleOptions& opts) {
  std::vector<Measurement> out;
  for (const Vec2& t : targets) {
    const double p = opts.force_detection ? 1.0 : detection_prob(t, agent, sensor);
    if (!(uniform01(rng) < p)) continue;
    Measurement z = range_bearing(t, agent);
    z.range = std::max(0.0, z.range + sensor.sigma_range * standard_normal(rng));
    z.bearing = wrap_angle(z.bearing + sensor.sigma_bearing * standard_normal(rng));
    out.push_back(z);
  }
  return out;
}

std::vector<Measurement> gate_confirmed(std::span<const Measurement> measurements,
                                        const Vec2& agent,
                                        std::span<const ConfirmedTarget> confirmed,
                                        double gate_radius) {
  std::vector<Measurement> kept;
  kept.reserve(measurements.size());
  for (const Measurement& z : measurements) {
    const Vec2 p = implied_point(z, agent);
    const bool near = std::any_of(confirmed.begin(), confirmed.end(), [&](const ConfirmedTarget& c) {
      return distance(p, c.position) <= gate_radius;
    });
    if (!near) kept.push_back(z);
  }
  return kept;
}

std::vector<Measurement> gate_confirmed_residual(std::span<const Measurement> measurements,
                                                 const Vec2& agent,
                                                 std::span<const ConfirmedTarget> confirmed,
                                                 const SensorConfig& sensor, double n_sigma) {
  const double limit = n_sigma * n_sigma;
  std::vector<Measurement> kept;
  kept.reserve(measurements.size());
  for (const Measurement& z : measurements) {
    const bool near = std::any_of(confirmed.begin(), confirmed.end(), [&](const ConfirmedTarget& c) {
      const Measurement e = range_bearing(c.position, agent);
      const double dr = (z.range - e.range) / sensor.sigma_range;
      const double db = wrap_angle(z.bearing - e.bearing) / sensor.sigma_bearing;
      return dr * dr + db * db <= limit;
    });
    if (!near) kept.push_back(z);
  }
  return kept;
}

}  // namespace tsearch
