#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace seedgrow {

using PointIndex = std::uint32_t;
using SuperpointId = std::int32_t;
using MaskId = std::uint32_t;

/// XYZ positions in the world frame (meters) with optional RGB in [0,1].
/// Colors are carried for visualization only.
struct PointCloud {
  std::vector<Eigen::Vector3f> positions;
  std::vector<Eigen::Vector3f> colors;  // empty when absent

  std::size_t size() const { return positions.size(); }
  bool has_colors() const { return !colors.empty(); }
  void validate() const;
};

/// Pinhole camera. `pose` maps camera coordinates to world coordinates; the
/// camera looks down +Z.
struct CameraView {
  std::string view_id;
  int width = 0;
  int height = 0;
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();

  void validate() const;
  /// Inverse of `pose` using the rigid-transform structure.
  Eigen::Matrix4d world_to_camera() const;
};

/// Total assignment of points to superpoints with every id in [0, U) used.
class SuperpointPartition {
 public:
  SuperpointPartition() = default;
  /// Throws ValidationError on an out-of-range or unused id.
  SuperpointPartition(std::vector<SuperpointId> labels, SuperpointId count);
  /// Infers U as max(label) + 1.
  static SuperpointPartition from_labels(std::vector<SuperpointId> labels);

  std::size_t point_count() const { return labels_.size(); }
  SuperpointId count() const { return count_; }
  SuperpointId label(PointIndex i) const { return labels_[i]; }
  const std::vector<SuperpointId>& labels() const { return labels_; }
  std::span<const PointIndex> members(SuperpointId u) const;
  std::size_t size_of(SuperpointId u) const { return offsets_[u + 1] - offsets_[u]; }

 private:
  std::vector<SuperpointId> labels_;
  SuperpointId count_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<PointIndex> members_;
};

/// U x D per-superpoint feature rows, float32 row-major.
struct FeatureTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t u) const { return {values.data() + u * dim, dim}; }
  std::span<float> row(std::size_t u) { return {values.data() + u * dim, dim}; }
  void validate() const;
};

/// Binary 2D instance mask of one view, row-major (v * width + u).
struct Mask2D {
  std::string view_id;
  MaskId mask_id = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  bool at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u] != 0; }
  std::size_t area() const;
};

using MaskSet = std::vector<Mask2D>;

enum class Stage { lifted, seed, grown, merged };
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct Provenance {
  Stage stage = Stage::lifted;
  std::vector<std::string> views;  // sorted, unique
  std::vector<MaskId> masks;       // sorted, unique
};

/// Sorted set of point indices with provenance and a confidence in (0,1].
struct PointSetInstance {
  std::vector<PointIndex> points;
  Provenance provenance;
  double confidence = 1.0;

  void validate(std::size_t point_count) const;
};

struct ProposalSet {
  std::vector<PointSetInstance> instances;
  std::size_t view_count = 1;  // T used for the confidence rule
};

/// Confidence rule: supporting views / T, clamped to (0,1].
double view_support_confidence(std::size_t supporting_views, std::size_t total_views);

/// The read-only input world.
struct SceneBundle {
  PointCloud cloud;
  std::vector<CameraView> views;
  SuperpointPartition superpoints;
  FeatureTable features;

  void validate() const;
  const CameraView* find_view(std::string_view id) const;
};

// Set utilities over sorted index vectors.
std::size_t intersection_size(std::span<const PointIndex> a, std::span<const PointIndex> b);
double set_iou(std::span<const PointIndex> a, std::span<const PointIndex> b);
std::vector<PointIndex> set_union(std::span<const PointIndex> a, std::span<const PointIndex> b);

}  // namespace seedgrow
