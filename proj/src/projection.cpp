#include "seedgrow/projection.hpp"

#include "seedgrow/errors.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>

namespace seedgrow {

std::string_view to_string(VisibilityStrategy s) {
  switch (s) {
    case VisibilityStrategy::naive: return "naive";
    case VisibilityStrategy::min_depth: return "min_depth";
    case VisibilityStrategy::occlusion_aware: return "occlusion_aware";
  }
  return "occlusion_aware";
}

VisibilityStrategy visibility_strategy_from_string(std::string_view s) {
  if (s == "naive") return VisibilityStrategy::naive;
  if (s == "min_depth") return VisibilityStrategy::min_depth;
  if (s == "occlusion_aware") return VisibilityStrategy::occlusion_aware;
  throw ConfigError("unknown visibility strategy '" + std::string(s) + "'");
}

void MappingConfig::validate() const {
  if (!(tau_vis > 0.0)) throw ConfigError("tau_vis must be > 0");
  if (splat_radius < 0) throw ConfigError("splat_radius must be >= 0");
}

Projection project_points(const PointCloud& cloud, const CameraView& view) {
  if (cloud.size() == 0) throw ConfigError("cannot project an empty cloud");
  const Eigen::Matrix4d w2c = view.world_to_camera();
  const Eigen::Matrix3d R = w2c.topLeftCorner<3, 3>();
  const Eigen::Vector3d t = w2c.topRightCorner<3, 1>();
  const Eigen::Matrix3d& K = view.intrinsics;

  Projection proj;
  const auto n = static_cast<std::ptrdiff_t>(cloud.size());
  proj.pixels.resize(cloud.size());
  proj.depths.resize(cloud.size());
  proj.projectable.resize(cloud.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Eigen::Vector3d c = R * cloud.positions[static_cast<std::size_t>(i)].cast<double>() + t;
    const Eigen::Vector3d h = K * c;
    const double z = h.z();
    proj.depths[static_cast<std::size_t>(i)] = z;
    if (z > 0.0) {
      proj.pixels[static_cast<std::size_t>(i)] = {h.x() / z, h.y() / z};
      proj.projectable[static_cast<std::size_t>(i)] = 1;
    } else {
      proj.pixels[static_cast<std::size_t>(i)] = {std::nan(""), std::nan("")};
      proj.projectable[static_cast<std::size_t>(i)] = 0;
    }
  }
  return proj;
}

namespace {

// Rounded integer pixel without bounds check; false for values too large to
// land anywhere near an image.
bool rounded_center(const Eigen::Vector2d& uv, long long& u, long long& v) {
  constexpr double kFar = 1e9;
  if (!(std::abs(uv.x()) < kFar) || !(std::abs(uv.y()) < kFar)) return false;
  u = static_cast<long long>(std::round(uv.x()));
  v = static_cast<long long>(std::round(uv.y()));
  return true;
}

template <typename Visit>
void for_each_covered_pixel(const Eigen::Vector2d& uv, int width, int height, int radius, Visit&& visit) {
  long long cu = 0, cv = 0;
  if (!rounded_center(uv, cu, cv)) return;
  for (long long v = cv - radius; v <= cv + radius; ++v) {
    if (v < 0 || v >= height) continue;
    for (long long u = cu - radius; u <= cu + radius; ++u) {
      if (u < 0 || u >= width) continue;
      visit(static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u));
    }
  }
}

void require_buffer_strategy(const MappingConfig& cfg) {
  cfg.validate();
  if (cfg.strategy == VisibilityStrategy::naive)
    throw ConfigError("the naive strategy does not use a depth buffer");
}

bool point_visible(const Projection& proj, std::size_t i, int width, int height, const DepthBuffer* depth,
                   const MappingConfig& cfg, int& u, int& v) {
  if (!proj.projectable[i]) return false;
  if (!rounded_pixel(proj.pixels[i], width, height, u, v)) return false;
  const double z = proj.depths[i];
  switch (cfg.strategy) {
    case VisibilityStrategy::naive: return true;
    case VisibilityStrategy::min_depth: return z == depth->at(u, v);
    case VisibilityStrategy::occlusion_aware: return std::abs(z - depth->at(u, v)) <= cfg.tau_vis;
  }
  return false;
}

ViewMapping empty_mapping(const CameraView& view, const Projection& proj) {
  ViewMapping m;
  m.view_id = view.view_id;
  m.width = view.width;
  m.height = view.height;
  m.visible.assign(proj.size(), 0);
  m.pixel.assign(proj.size(), {-1, -1});
  m.z = proj.depths;
  return m;
}

}  // namespace

bool rounded_pixel(const Eigen::Vector2d& uv, int width, int height, int& u, int& v) {
  long long cu = 0, cv = 0;
  if (!rounded_center(uv, cu, cv)) return false;
  if (cu < 0 || cu >= width || cv < 0 || cv >= height) return false;
  u = static_cast<int>(cu);
  v = static_cast<int>(cv);
  return true;
}

namespace serial {

DepthBuffer rasterize_depth(const Projection& proj, const CameraView& view, const MappingConfig& cfg) {
  require_buffer_strategy(cfg);
  DepthBuffer buf{view.width, view.height,
                  std::vector<double>(static_cast<std::size_t>(view.width) * view.height,
                                      std::numeric_limits<double>::infinity())};
  for (std::size_t i = 0; i < proj.size(); ++i) {
    if (!proj.projectable[i]) continue;
    const double z = proj.depths[i];
    for_each_covered_pixel(proj.pixels[i], view.width, view.height, cfg.splat_radius, [&](std::size_t p) {
      if (z < buf.values[p]) buf.values[p] = z;
    });
  }
  return buf;
}

ViewMapping verify_visibility(const Projection& proj, const CameraView& view, const DepthBuffer& depth,
                              const MappingConfig& cfg) {
  cfg.validate();
  ViewMapping m = empty_mapping(view, proj);
  if (cfg.strategy != VisibilityStrategy::naive) m.depth = depth.values;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    int u = 0, v = 0;
    if (point_visible(proj, i, view.width, view.height, &depth, cfg, u, v)) {
      m.visible[i] = 1;
      m.pixel[i] = {u, v};
    }
  }
  return m;
}

}  // namespace serial

DepthBuffer rasterize_depth(const Projection& proj, const CameraView& view, const MappingConfig& cfg) {
  require_buffer_strategy(cfg);
  DepthBuffer buf{view.width, view.height,
                  std::vector<double>(static_cast<std::size_t>(view.width) * view.height,
                                      std::numeric_limits<double>::infinity())};
  const auto n = static_cast<std::ptrdiff_t>(proj.size());
  double* values = buf.values.data();
  // Minimum is exact and order-independent, so racing writers converge to the
  // same buffer as the sequential loop.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!proj.projectable[k]) continue;
    const double z = proj.depths[k];
    for_each_covered_pixel(proj.pixels[k], view.width, view.height, cfg.splat_radius, [&](std::size_t p) {
      std::atomic_ref<double> cell(values[p]);
      double cur = cell.load(std::memory_order_relaxed);
      while (z < cur && !cell.compare_exchange_weak(cur, z, std::memory_order_relaxed)) {
      }
    });
  }
  return buf;
}

DepthBuffer rasterize_depth(const PointCloud& cloud, const CameraView& view, const MappingConfig& cfg) {
  return rasterize_depth(project_points(cloud, view), view, cfg);
}

ViewMapping verify_visibility(const Projection& proj, const CameraView& view, const DepthBuffer& depth,
                              const MappingConfig& cfg) {
  cfg.validate();
  ViewMapping m = empty_mapping(view, proj);
  if (cfg.strategy != VisibilityStrategy::naive) m.depth = depth.values;
  const auto n = static_cast<std::ptrdiff_t>(proj.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    int u = 0, v = 0;
    if (point_visible(proj, k, view.width, view.height, &depth, cfg, u, v)) {
      m.visible[k] = 1;
      m.pixel[k] = {u, v};
    }
  }
  return m;
}

ViewMapping verify_visibility(const PointCloud& cloud, const CameraView& view, const DepthBuffer& depth,
                              const MappingConfig& cfg) {
  return verify_visibility(project_points(cloud, view), view, depth, cfg);
}

ViewMapping build_mapping(const PointCloud& cloud, const CameraView& view, const MappingConfig& cfg) {
  cfg.validate();
  const Projection proj = project_points(cloud, view);
  if (cfg.strategy == VisibilityStrategy::naive) return verify_visibility(proj, view, DepthBuffer{}, cfg);
  return verify_visibility(proj, view, rasterize_depth(proj, view, cfg), cfg);
}

std::vector<ViewMapping> build_mappings(const PointCloud& cloud, const std::vector<CameraView>& views,
                                        const MappingConfig& cfg) {
  std::vector<ViewMapping> out(views.size());
  for (std::size_t k = 0; k < views.size(); ++k) out[k] = build_mapping(cloud, views[k], cfg);
  return out;
}

std::vector<PointIndex> ViewMapping::visible_points() const {
  std::vector<PointIndex> out;
  for (std::size_t i = 0; i < visible.size(); ++i)
    if (visible[i]) out.push_back(static_cast<PointIndex>(i));
  return out;
}

std::size_t ViewMapping::visible_count() const {
  return static_cast<std::size_t>(std::count(visible.begin(), visible.end(), std::uint8_t{1}));
}

}  // namespace seedgrow
