#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tsearch/geometry.hpp"
#include "tsearch/rng.hpp"
#include "tsearch/sensing.hpp"
#include "tsearch/world.hpp"

namespace tsearch {

/// Weighted particles approximating the PHD intensity. The total weight is
/// the expected number of targets.
struct ParticleSet {
  std::vector<Vec2> positions;
  std::vector<double> weights;
  std::size_t cap = 5000;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  void push_back(const Vec2& p, double w) {
    positions.push_back(p);
    weights.push_back(w);
  }
};

/// Constant birth intensity, injected as uniformly placed particles.
struct BirthConfig {
  double total_mass = 0.2;
  int n_particles = 250;
};

struct KMeansConfig {
  int restarts = 5;
  int max_iterations = 50;
  double tolerance = 1e-6;  ///< meters of center movement
};

struct Cluster {
  Vec2 center;
  double mass = 0.0;
  double spread = 0.0;  ///< weighted RMS member distance to center
};

/// Tunables of one filter instance.
struct FilterConfig {
  double survival_prob = 0.999;
  BirthConfig birth{0.05, 250};
  std::size_t cap = 5000;
  int initial_particles = 5000;
  double initial_mass = 10.0;
  KMeansConfig kmeans;
  int k_max = 30;
  double confirm_mass = 0.8;
  double confirm_spread = 5.0;
  double core_radius = 10.0;  ///< neighborhood for the confirmation test
  /// Minimum detection probability of a core, from the closest point sensed
  /// since the previous promotion, for it to be confirmed.
  double confirm_min_pd = 0.7;
  double jitter_sigma = 1.0;  ///< roughening after each resample (m), 0 disables
  double gate_radius = 15.0;
  double gate_sigma = 3.0;  ///< residual gate in noise std units, 0 disables
  bool delete_promoted_particles = true;

  void validate() const;
};

/// `count` uniform particles over env sharing `total_mass` equally.
ParticleSet make_uniform_particles(int count, double total_mass, const Environment& env,
                                   std::size_t cap, Rng& rng);

/// Survival scaling of existing weights plus uniform birth particles.
ParticleSet predict(ParticleSet particles, double survival_prob, const BirthConfig& birth,
                    const Environment& env, Rng& rng);

/// Gaussian measurement density p(z | x) under diag(sigma_r^2, sigma_theta^2),
/// bearing residual wrapped to (-pi, pi].
double likelihood(const Measurement& z, const Vec2& particle, const Vec2& agent,
                  const SensorConfig& sensor);

struct UpdateStats {
  /// Measurements whose normalizer underflowed to zero and were skipped.
  int degenerate_terms = 0;
};

/// Clutter-free PHD measurement update of every weight.
ParticleSet update(ParticleSet particles, std::span<const Measurement> measurements,
                   const Vec2& agent, const SensorConfig& sensor, UpdateStats* stats = nullptr);

double expected_count(const ParticleSet& particles);

/// Systematic resampling to min(cap, size) equally weighted particles with
/// the total mass preserved. Throws on zero total mass.
ParticleSet resample(const ParticleSet& particles, Rng& rng);

/// Weighted Lloyd K-means, best of several k-means++ restarts by weighted
/// within-cluster sum of squares. Empty clusters are dropped.
std::vector<Cluster> extract_clusters(const ParticleSet& particles, int k, Rng& rng,
                                      const KMeansConfig& cfg = {});

/// round(expected count) clamped to [0, k_max].
int choose_k(const ParticleSet& particles, int k_max = 30);

struct Promotion {
  std::vector<ConfirmedTarget> confirmed;
  std::vector<Cluster> remaining;
};

/// Heavy, narrow clusters become confirmed targets.
Promotion promote_confirmed(std::span<const Cluster> clusters, double mass_thresh,
                            double spread_thresh, int step);

/// Roughening: moves every particle by an independent N(0, sigma^2) offset per
/// axis, clamped into env. Keeps the static-target particle cloud from
/// collapsing onto a few resampled duplicates.
void jitter(ParticleSet& particles, double sigma, const Environment& env, Rng& rng);

/// Local mode of the intensity near `seed`: weighted mean-shift over the
/// particles within `radius`, then the mass and weighted RMS spread of that
/// neighborhood. Used to judge whether a K-means cluster holds a narrow peak
/// even when its Voronoi region also collects thin background mass.
Cluster cluster_core(const ParticleSet& particles, const Vec2& seed, double radius, int iterations = 10);

/// Removes every particle within `radius` of a confirmed target.
ParticleSet remove_near(ParticleSet particles, std::span<const ConfirmedTarget> confirmed,
                        double radius);

}  // namespace tsearch
