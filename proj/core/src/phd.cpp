#include "tsearch/phd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tsearch/error.hpp"

namespace tsearch {

void FilterConfig::validate() const {
  if (!(survival_prob > 0.0 && survival_prob <= 1.0))
    throw Error(ErrorCode::kConfig, "filter.survival_prob must be in (0, 1]");
  if (birth.total_mass < 0.0) throw Error(ErrorCode::kConfig, "filter.birth_mass must be >= 0");
  if (birth.total_mass > 0.0 && birth.n_particles < 1)
    throw Error(ErrorCode::kConfig, "filter.birth_particles must be >= 1 when birth mass > 0");
  if (cap < 1) throw Error(ErrorCode::kConfig, "filter.cap must be >= 1");
  if (initial_particles < 0 || initial_mass < 0.0)
    throw Error(ErrorCode::kConfig, "filter initial particles/mass must be >= 0");
  if (kmeans.restarts < 1 || kmeans.max_iterations < 1)
    throw Error(ErrorCode::kConfig, "kmeans restarts/iterations must be >= 1");
  if (k_max < 0) throw Error(ErrorCode::kConfig, "filter.k_max must be >= 0");
  if (!(confirm_mass > 0.0 && confirm_spread > 0.0 && core_radius > 0.0 && confirm_min_pd >= 0.0 && confirm_min_pd <= 1.0 && gate_radius > 0.0 && gate_sigma >= 0.0 && jitter_sigma >= 0.0))
    throw Error(ErrorCode::kConfig, "confirmation thresholds and gate radius must be > 0");
}

ParticleSet make_uniform_particles(int count, double total_mass, const Environment& env,
                                   std::size_t cap, Rng& rng) {
  ParticleSet ps;
  ps.cap = cap;
  if (count <= 0) return ps;
  ps.positions.reserve(count);
  ps.weights.reserve(count);
  const double w = total_mass / count;
  for (int i = 0; i < count; ++i)
    ps.push_back({uniform(rng, 0.0, env.width), uniform(rng, 0.0, env.height)}, w);
  return ps;
}

ParticleSet predict(ParticleSet particles, double survival_prob, const BirthConfig& birth,
                    const Environment& env, Rng& rng) {
  for (double& w : particles.weights) w *= survival_prob;
  if (birth.total_mass > 0.0 && birth.n_particles > 0) {
    const double w = birth.total_mass / birth.n_particles;
    for (int i = 0; i < birth.n_particles; ++i)
      particles.push_back({uniform(rng, 0.0, env.width), uniform(rng, 0.0, env.height)}, w);
  }
  return particles;
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925;

inline double gaussian2(double dr, double dtheta, const SensorConfig& s) {
  const double a = dr / s.sigma_range;
  const double b = dtheta / s.sigma_bearing;
  return std::exp(-0.5 * (a * a + b * b)) / (kTwoPi * s.sigma_range * s.sigma_bearing);
}

}  // namespace

double likelihood(const Measurement& z, const Vec2& particle, const Vec2& agent,
                  const SensorConfig& sensor) {
  const Measurement g = range_bearing(particle, agent);
  return gaussian2(z.range - g.range, wrap_angle(z.bearing - g.bearing), sensor);
}

ParticleSet update(ParticleSet particles, std::span<const Measurement> measurements,
                   const Vec2& agent, const SensorConfig& sensor, UpdateStats* stats) {
  const std::size_t n = particles.size();
  std::vector<double> pd(n), factor(n), detected(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    pd[j] = detection_prob(particles.positions[j], agent, sensor);
    factor[j] = 1.0 - pd[j];
  }
  if (!measurements.empty()) {
    std::vector<Measurement> g(n);
    for (std::size_t j = 0; j < n; ++j) g[j] = range_bearing(particles.positions[j], agent);
    std::vector<double> psi(n);
    for (const Measurement& z : measurements) {
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        psi[j] = pd[j] * gaussian2(z.range - g[j].range, wrap_angle(z.bearing - g[j].bearing),
                                   sensor);
        denom += psi[j] * particles.weights[j];
      }
      if (!(denom > 0.0) || !std::isfinite(denom)) {
        if (stats) ++stats->degenerate_terms;
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) detected[j] += psi[j] * particles.weights[j] / denom;
    }
  }
  for (std::size_t j = 0; j < n; ++j) particles.weights[j] = particles.weights[j] * factor[j] + detected[j];
  return particles;
}

double expected_count(const ParticleSet& particles) {
  return std::accumulate(particles.weights.begin(), particles.weights.end(), 0.0);
}

ParticleSet resample(const ParticleSet& particles, Rng& rng) {
  const double total = expected_count(particles);
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "cannot resample zero total mass");
  const std::size_t n = particles.size();
  const std::size_t n_out = std::min(particles.cap, n);
  const double step = total / static_cast<double>(n_out);
  const double w_out = total / static_cast<double>(n_out);

  ParticleSet out;
  out.cap = particles.cap;
  out.positions.reserve(n_out);
  out.weights.assign(n_out, w_out);

  const double u0 = uniform01(rng) * step;
  std::size_t i = 0;
  double cumulative = particles.weights[0];
  for (std::size_t m = 0; m < n_out; ++m) {
    const double target = u0 + static_cast<double>(m) * step;
    while (cumulative <= target && i + 1 < n) cumulative += particles.weights[++i];
    out.positions.push_back(particles.positions[i]);
  }
  return out;
}

namespace {

struct WeightedPoints {
  std::vector<Vec2> pts;
  std::vector<double> w;
};

// Exact duplicates (common after resampling) merge into one weighted point;
// weighted K-means on the merged set is equivalent.
WeightedPoints merge_duplicates(const ParticleSet& ps) {
  std::vector<std::size_t> order(ps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Vec2& p = ps.positions[a];
    const Vec2& q = ps.positions[b];
    if (p.x != q.x) return p.x < q.x;
    if (p.y != q.y) return p.y < q.y;
    return a < b;
  });
  WeightedPoints out;
  for (std::size_t idx : order) {
    const Vec2& p = ps.positions[idx];
    if (!out.pts.empty() && out.pts.back() == p) {
      out.w.back() += ps.weights[idx];
    } else {
      out.pts.push_back(p);
      out.w.push_back(ps.weights[idx]);
    }
  }
  return out;
}

std::size_t sample_index(const std::vector<double>& mass, double total, Rng& rng) {
  const double u = uniform01(rng) * total;
  double c = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    c += mass[i];
    if (u < c) return i;
  }
  // Rounding can leave u just above the running sum; fall back to the last
  // point with positive mass.
  for (std::size_t i = mass.size(); i-- > 0;)
    if (mass[i] > 0.0) return i;
  return 0;
}

void assign(const WeightedPoints& wp, const std::vector<Vec2>& centers,
            std::vector<int>& label) {
  const int k = static_cast<int>(centers.size());
  for (std::size_t i = 0; i < wp.pts.size(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = squared_norm(wp.pts[i] - centers[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    label[i] = best;
  }
}

}  // namespace

std::vector<Cluster> extract_clusters(const ParticleSet& particles, int k, Rng& rng,
                                      const KMeansConfig& cfg) {
  if (k <= 0 || particles.empty()) return {};
  const WeightedPoints wp = merge_duplicates(particles);
  const std::size_t n = wp.pts.size();
  const double total = std::accumulate(wp.w.begin(), wp.w.end(), 0.0);
  if (!(total > 0.0)) return {};

  std::vector<int> label(n), best_label;
  std::vector<Vec2> best_centers;
  double best_sse = std::numeric_limits<double>::infinity();

  std::vector<double> d2(n);
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    // Weighted k-means++ seeding.
    std::vector<Vec2> centers;
    centers.reserve(k);
    centers.push_back(wp.pts[sample_index(wp.w, total, rng)]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = wp.w[i] * squared_norm(wp.pts[i] - centers[0]);
    while (static_cast<int>(centers.size()) < k) {
      const double s = std::accumulate(d2.begin(), d2.end(), 0.0);
      const Vec2 next = s > 0.0 ? wp.pts[sample_index(d2, s, rng)] : centers.back();
      centers.push_back(next);
      for (std::size_t i = 0; i < n; ++i)
        d2[i] = std::min(d2[i], wp.w[i] * squared_norm(wp.pts[i] - next));
    }

    std::vector<Vec2> sum(k);
    std::vector<double> mass(k);
    for (int it = 0; it < cfg.max_iterations; ++it) {
      assign(wp, centers, label);
      std::fill(sum.begin(), sum.end(), Vec2{});
      std::fill(mass.begin(), mass.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        sum[label[i]] += wp.w[i] * wp.pts[i];
        mass[label[i]] += wp.w[i];
      }
      double moved = 0.0;
      for (int c = 0; c < k; ++c) {
        if (!(mass[c] > 0.0)) continue;
        const Vec2 nc = (1.0 / mass[c]) * sum[c];
        moved = std::max(moved, distance(nc, centers[c]));
        centers[c] = nc;
      }
      if (moved < cfg.tolerance) break;
    }
    assign(wp, centers, label);
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) sse += wp.w[i] * squared_norm(wp.pts[i] - centers[label[i]]);
    if (sse < best_sse) {
      best_sse = sse;
      best_label = label;
      best_centers = centers;
    }
  }

  std::vector<Vec2> sum(k);
  std::vector<double> mass(k, 0.0), sq(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    sum[best_label[i]] += wp.w[i] * wp.pts[i];
    mass[best_label[i]] += wp.w[i];
  }
  std::vector<Cluster> out;
  std::vector<int> slot(k, -1);
  for (int c = 0; c < k; ++c) {
    if (!(mass[c] > 0.0)) continue;
    slot[c] = static_cast<int>(out.size());
    out.push_back({(1.0 / mass[c]) * sum[c], mass[c], 0.0});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int s = slot[best_label[i]];
    if (s >= 0) sq[s] += wp.w[i] * squared_norm(wp.pts[i] - out[s].center);
  }
  for (std::size_t s = 0; s < out.size(); ++s) out[s].spread = std::sqrt(sq[s] / out[s].mass);
  return out;
}

int choose_k(const ParticleSet& particles, int k_max) {
  const double m = expected_count(particles);
  const long r = std::lround(m);
  return static_cast<int>(std::clamp<long>(r, 0, k_max));
}

Promotion promote_confirmed(std::span<const Cluster> clusters, double mass_thresh,
                            double spread_thresh, int step) {
  Promotion out;
  for (const Cluster& c : clusters) {
    if (c.mass >= mass_thresh && c.spread <= spread_thresh)
      out.confirmed.push_back({c.center, step});
    else
      out.remaining.push_back(c);
  }
  return out;
}

void jitter(ParticleSet& particles, double sigma, const Environment& env, Rng& rng) {
  if (!(sigma > 0.0)) return;
  for (Vec2& p : particles.positions)
    p = env.clamp({p.x + sigma * standard_normal(rng), p.y + sigma * standard_normal(rng)});
}

Cluster cluster_core(const ParticleSet& particles, const Vec2& seed, double radius, int iterations) {
  const double r2 = radius * radius;
  Cluster c;
  c.center = seed;
  for (int it = 0; it <= iterations; ++it) {
    double m = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t j = 0; j < particles.size(); ++j) {
      const Vec2& p = particles.positions[j];
      if (squared_norm(p - c.center) > r2) continue;
      const double w = particles.weights[j];
      m += w;
      sx += w * p.x;
      sy += w * p.y;
    }
    c.mass = m;
    if (!(m > 0.0)) break;
    const Vec2 next{sx / m, sy / m};
    const bool settled = squared_norm(next - c.center) < 1e-12;
    if (it == iterations || settled) break;
    c.center = next;
  }
  double ss = 0.0;
  for (std::size_t j = 0; j < particles.size(); ++j) {
    const double d2 = squared_norm(particles.positions[j] - c.center);
    if (d2 <= r2) ss += particles.weights[j] * d2;
  }
  c.spread = c.mass > 0.0 ? std::sqrt(ss / c.mass) : 0.0;
  return c;
}

ParticleSet remove_near(ParticleSet particles, std::span<const ConfirmedTarget> confirmed,
                        double radius) {
  if (confirmed.empty()) return particles;
  ParticleSet out;
  out.cap = particles.cap;
  const double r2 = radius * radius;
  for (std::size_t j = 0; j < particles.size(); ++j) {
    const Vec2& p = particles.positions[j];
    const bool near = std::any_of(confirmed.begin(), confirmed.end(), [&](const ConfirmedTarget& c) {
      return squared_norm(p - c.position) <= r2;
    });
    if (!near) out.push_back(p, particles.weights[j]);
  }
  return out;
}

}  // namespace tsearch
