#include "tsearch/encoding.hpp"

#include <algorithm>
#include <cmath>

#include "tsearch/error.hpp"

namespace tsearch {

std::string to_string(ChannelVariant v) {
  switch (v) {
    case ChannelVariant::kFull: return "full";
    case ChannelVariant::kNoVisitation: return "no-visitation";
    case ChannelVariant::kNoSmoothing: return "no-smoothing";
    case ChannelVariant::kNoPosition: return "no-position";
    case ChannelVariant::kNoBoundary: return "no-boundary";
  }
  return "full";
}

ChannelVariant channel_variant_from_string(const std::string& s) {
  for (ChannelVariant v : all_channel_variants())
    if (to_string(v) == s) return v;
  throw Error(ErrorCode::kInvalidArgument, "unknown channel variant '" + s + "'");
}

std::array<ChannelVariant, 5> all_channel_variants() {
  return {ChannelVariant::kFull, ChannelVariant::kNoVisitation, ChannelVariant::kNoSmoothing,
          ChannelVariant::kNoPosition, ChannelVariant::kNoBoundary};
}

void EncodingConfig::validate() const {
  if (grid.n_g < 1 || !(grid.cell_size > 0.0)) throw Error(ErrorCode::kConfig, "bad grid spec");
  if (!(sigma_cells > 0.0)) throw Error(ErrorCode::kConfig, "encoding.sigma_cells must be > 0");
  if (boundary_thickness < 1) throw Error(ErrorCode::kConfig, "encoding.boundary_thickness must be >= 1");
}

void visit_update(VisitMap& map, const Vec2& agent) {
  const CellIndex c = cell_of(agent, map.grid);
  if (map.last_cell && *map.last_cell == c) return;
  ++map.counts[flat_index(c, map.grid)];
  map.last_cell = c;
}

std::vector<double> visit_channel(const VisitMap& map) {
  std::vector<double> out(map.counts.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + map.counts[i]);
  return out;
}

std::vector<double> raw_intensity(const ParticleSet& particles, const GridSpec& grid) {
  std::vector<double> out(grid.cells(), 0.0);
  for (std::size_t j = 0; j < particles.size(); ++j)
    out[flat_index(cell_of(particles.positions[j], grid), grid)] += particles.weights[j];
  return out;
}

std::vector<double> smooth_intensity(const std::vector<double>& intensity, const GridSpec& grid,
                                     double sigma_cells) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma_cells));
  const int w = 2 * r + 1;
  std::vector<double> kernel(static_cast<std::size_t>(w) * w);
  double sum = 0.0;
  for (int du = -r; du <= r; ++du)
    for (int dv = -r; dv <= r; ++dv) {
      const double g = std::exp(-(du * du + dv * dv) / (2.0 * sigma_cells * sigma_cells));
      kernel[(du + r) * w + (dv + r)] = g;
      sum += g;
    }
  for (double& k : kernel) k /= sum;

  const int n = grid.n_g;
  std::vector<double> out(intensity.size(), 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const double v = intensity[a * n + b];
      if (v == 0.0) continue;
      // Scatter form of the same convolution: zero padding drops mass that
      // would land outside the grid.
      for (int du = -r; du <= r; ++du) {
        const int aa = a + du;
        if (aa < 0 || aa >= n) continue;
        for (int dv = -r; dv <= r; ++dv) {
          const int bb = b + dv;
          if (bb < 0 || bb >= n) continue;
          out[aa * n + bb] += v * kernel[(du + r) * w + (dv + r)];
        }
      }
    }
  return out;
}

std::vector<double> density_channel(const ParticleSet& particles, const GridSpec& grid,
                                    double sigma_cells) {
  return smooth_intensity(raw_intensity(particles, grid), grid, sigma_cells);
}

std::vector<double> position_channel(const Vec2& agent, const GridSpec& grid) {
  std::vector<double> out(grid.cells(), 0.0);
  out[flat_index(cell_of(agent, grid), grid)] = 1.0;
  return out;
}

std::vector<double> boundary_channel(const GridSpec& grid, int thickness) {
  const int n = grid.n_g;
  std::vector<double> out(grid.cells(), 0.0);
  for (int a = 1; a <= n; ++a)
    for (int b = 1; b <= n; ++b) {
      const bool edge = a <= thickness || a > n - thickness || b <= thickness || b > n - thickness;
      out[(a - 1) * n + (b - 1)] = edge ? 1.0 : 0.0;
    }
  return out;
}

GridEncoding assemble_encoding(const std::vector<double>& visit, const std::vector<double>& density,
                               const std::vector<double>& position,
                               const std::vector<double>& boundary, ChannelVariant variant) {
  const std::size_t cells = visit.size();
  GridEncoding enc;
  enc.channels.assign(kEncodingChannels * cells, 0.0);
  auto put = [&](int ch, const std::vector<double>& src) {
    std::copy(src.begin(), src.end(), enc.channels.begin() + ch * cells);
  };
  if (variant != ChannelVariant::kNoVisitation) put(kVisitChannel, visit);
  put(kDensityChannel, density);
  if (variant != ChannelVariant::kNoPosition) put(kPositionChannel, position);
  if (variant != ChannelVariant::kNoBoundary) put(kBoundaryChannel, boundary);
  return enc;
}

GridEncoding encode(const VisitMap& visits, const ParticleSet& particles, const Vec2& agent,
                    const EncodingConfig& cfg, ChannelVariant variant) {
  const auto raw = raw_intensity(particles, cfg.grid);
  const auto density = variant == ChannelVariant::kNoSmoothing
                           ? raw
                           : smooth_intensity(raw, cfg.grid, cfg.sigma_cells);
  return assemble_encoding(visit_channel(visits), density, position_channel(agent, cfg.grid),
                           boundary_channel(cfg.grid, cfg.boundary_thickness), variant);
}

void apply_variant(std::vector<double>& channels, const std::vector<double>& raw,
                   const GridSpec& grid, ChannelVariant variant) {
  const std::size_t cells = grid.cells();
  auto zero = [&](int ch) {
    std::fill(channels.begin() + ch * cells, channels.begin() + (ch + 1) * cells, 0.0);
  };
  switch (variant) {
    case ChannelVariant::kFull: break;
    case ChannelVariant::kNoVisitation: zero(kVisitChannel); break;
    case ChannelVariant::kNoPosition: zero(kPositionChannel); break;
    case ChannelVariant::kNoBoundary: zero(kBoundaryChannel); break;
    case ChannelVariant::kNoSmoothing:
      std::copy(raw.begin(), raw.end(), channels.begin() + kDensityChannel * cells);
      break;
  }
}

std::array<double, 2> normalize_label(const Vec2& waypoint, const Environment& env) {
  return {waypoint.x / env.width, waypoint.y / env.height};
}

Vec2 denormalize_label(const std::array<double, 2>& label, const Environment& env) {
  return {label[0] * env.width, label[1] * env.height};
}

}  // namespace tsearch
