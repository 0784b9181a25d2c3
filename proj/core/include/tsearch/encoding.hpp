#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tsearch/phd.hpp"
#include "tsearch/world.hpp"

namespace tsearch {

inline constexpr int kEncodingChannels = 4;

/// Channel order of the network input.
enum Channel : int { kVisitChannel = 0, kDensityChannel = 1, kPositionChannel = 2, kBoundaryChannel = 3 };

/// Input variants used by the channel ablations. Every variant keeps the
/// 4-channel shape.
enum class ChannelVariant { kFull, kNoVisitation, kNoSmoothing, kNoPosition, kNoBoundary };

std::string to_string(ChannelVariant v);
ChannelVariant channel_variant_from_string(const std::string& s);
/// Variants in ablation-table order.
std::array<ChannelVariant, 5> all_channel_variants();

/// Per-cell visit counts. A visit is counted only on entering a new cell.
struct VisitMap {
  explicit VisitMap(const GridSpec& grid = {}) : grid(grid), counts(grid.cells(), 0) {}

  GridSpec grid;
  std::vector<int> counts;
  std::optional<CellIndex> last_cell;

  int count(const CellIndex& c) const { return counts[flat_index(c, grid)]; }
};

void visit_update(VisitMap& map, const Vec2& agent);

/// 1 / (1 + count) per cell.
std::vector<double> visit_channel(const VisitMap& map);

/// Particle weights accumulated per cell.
std::vector<double> raw_intensity(const ParticleSet& particles, const GridSpec& grid);

/// raw_intensity convolved with a unit-sum Gaussian kernel truncated at
/// ceil(3 sigma) cells, zero padded.
std::vector<double> smooth_intensity(const std::vector<double>& intensity, const GridSpec& grid,
                                     double sigma_cells);

std::vector<double> density_channel(const ParticleSet& particles, const GridSpec& grid,
                                    double sigma_cells);

std::vector<double> position_channel(const Vec2& agent, const GridSpec& grid);

/// 1 for cells within `thickness` cells of an edge.
std::vector<double> boundary_channel(const GridSpec& grid, int thickness);

struct EncodingConfig {
  GridSpec grid;
  double sigma_cells = 1.0;
  int boundary_thickness = 2;

  void validate() const;
};

/// Network input, channel-major then row-major (a, b).
struct GridEncoding {
  std::vector<double> channels;  ///< 4 * n_g * n_g
  std::optional<std::array<double, 2>> label;
};

/// Builds all four channels from already computed layers. `density` is the
/// smoothed or raw intensity depending on the variant.
GridEncoding assemble_encoding(const std::vector<double>& visit, const std::vector<double>& density,
                               const std::vector<double>& position,
                               const std::vector<double>& boundary, ChannelVariant variant);

GridEncoding encode(const VisitMap& visits, const ParticleSet& particles, const Vec2& agent,
                    const EncodingConfig& cfg, ChannelVariant variant = ChannelVariant::kFull);

/// Rewrites a full encoding into `variant`, given the raw intensity layer
/// of the same state (needed only for kNoSmoothing).
void apply_variant(std::vector<double>& channels, const std::vector<double>& raw,
                   const GridSpec& grid, ChannelVariant variant);

std::array<double, 2> normalize_label(const Vec2& waypoint, const Environment& env);
Vec2 denormalize_label(const std::array<double, 2>& label, const Environment& env);

}  // namespace tsearch
