#pragma once

#include "seedgrow/types.hpp"

#include <array>
#include <limits>
#include <string_view>
#include <vector>

namespace seedgrow {

enum class VisibilityStrategy { naive, min_depth, occlusion_aware };
std::string_view to_string(VisibilityStrategy s);
VisibilityStrategy visibility_strategy_from_string(std::string_view s);

struct MappingConfig {
  double tau_vis = 0.1;  // meters
  VisibilityStrategy strategy = VisibilityStrategy::occlusion_aware;
  int splat_radius = 0;  // pixels; r splats a (2r+1)^2 block

  void validate() const;
};

/// Exact pinhole projection of every point into one view.
struct Projection {
  std::vector<Eigen::Vector2d> pixels;  // continuous (u, v)
  std::vector<double> depths;           // camera-space z
  std::vector<std::uint8_t> projectable;  // z > 0

  std::size_t size() const { return depths.size(); }
};

Projection project_points(const PointCloud& cloud, const CameraView& view);

/// Nearest-integer pixel, half away from zero. Returns false when the rounded
/// pixel falls outside [0,W) x [0,H).
bool rounded_pixel(const Eigen::Vector2d& uv, int width, int height, int& u, int& v);

struct DepthBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, +inf where no point lands

  double at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
};

/// Per-pixel minimum camera depth over all points whose rounded projection
/// (plus splat) covers the pixel. Parallel over points with an atomic-min;
/// deterministic for any thread count.
DepthBuffer rasterize_depth(const Projection& proj, const CameraView& view, const MappingConfig& cfg);
DepthBuffer rasterize_depth(const PointCloud& cloud, const CameraView& view, const MappingConfig& cfg);

/// Per-view visibility, depth buffer and point-to-pixel map.
struct ViewMapping {
  std::string view_id;
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // empty for the naive strategy
  std::vector<std::uint8_t> visible;
  std::vector<std::array<std::int32_t, 2>> pixel;  // (-1,-1) where invisible
  std::vector<double> z;

  std::size_t point_count() const { return visible.size(); }
  std::vector<PointIndex> visible_points() const;
  std::size_t visible_count() const;
};

ViewMapping verify_visibility(const Projection& proj, const CameraView& view, const DepthBuffer& depth,
                              const MappingConfig& cfg);
ViewMapping verify_visibility(const PointCloud& cloud, const CameraView& view, const DepthBuffer& depth,
                              const MappingConfig& cfg);

/// project -> rasterize (unless naive) -> verify.
ViewMapping build_mapping(const PointCloud& cloud, const CameraView& view, const MappingConfig& cfg);
/// One mapping per view, views processed in parallel.
std::vector<ViewMapping> build_mappings(const PointCloud& cloud, const std::vector<CameraView>& views,
                                        const MappingConfig& cfg);

/// Single-threaded reference kernels kept for testing and benchmarking.
namespace serial {
DepthBuffer rasterize_depth(const Projection& proj, const CameraView& view, const MappingConfig& cfg);
ViewMapping verify_visibility(const Projection& proj, const CameraView& view, const DepthBuffer& depth,
                              const MappingConfig& cfg);
}  // namespace serial

}  // namespace seedgrow
