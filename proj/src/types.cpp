#include "seedgrow/types.hpp"

#include "seedgrow/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace seedgrow {

void PointCloud::validate() const {
  if (positions.empty()) throw ValidationError("point cloud is empty");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite())
      throw ValidationError("point " + std::to_string(i) + " has a non-finite coordinate");
  }
  if (!colors.empty()) {
    if (colors.size() != positions.size())
      throw ValidationError("color count " + std::to_string(colors.size()) +
                            " does not match point count " + std::to_string(positions.size()));
    for (std::size_t i = 0; i < colors.size(); ++i) {
      if ((colors[i].array() < 0.0f).any() || (colors[i].array() > 1.0f).any())
        throw ValidationError("color of point " + std::to_string(i) + " outside [0,1]");
    }
  }
}

void CameraView::validate() const {
  if (width <= 0 || height <= 0)
    throw ValidationError("view " + view_id + ": non-positive image size");
  const auto& K = intrinsics;
  if (!K.allFinite() || K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0)
    throw ValidationError("view " + view_id + ": intrinsics not upper-triangular");
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0))
    throw ValidationError("view " + view_id + ": non-positive focal length");
  if (!pose.allFinite()) throw ValidationError("view " + view_id + ": non-finite pose");
  if (pose(3, 0) != 0.0 || pose(3, 1) != 0.0 || pose(3, 2) != 0.0 || pose(3, 3) != 1.0)
    throw ValidationError("view " + view_id + ": pose last row is not (0,0,0,1)");
  const Eigen::Matrix3d R = pose.topLeftCorner<3, 3>();
  const double err = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-6) throw ValidationError("view " + view_id + ": pose rotation not orthonormal");
}

Eigen::Matrix4d CameraView::world_to_camera() const {
  const Eigen::Matrix3d R = pose.topLeftCorner<3, 3>();
  if (std::abs(R.determinant()) < 1e-9)
    throw ConfigError("view " + view_id + ": singular pose");
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  inv.topLeftCorner<3, 3>() = R.transpose();
  inv.topRightCorner<3, 1>() = -R.transpose() * pose.topRightCorner<3, 1>();
  return inv;
}

SuperpointPartition::SuperpointPartition(std::vector<SuperpointId> labels, SuperpointId count)
    : labels_(std::move(labels)), count_(count) {
  if (count_ <= 0) throw ValidationError("superpoint count must be positive");
  std::vector<std::size_t> sizes(static_cast<std::size_t>(count_), 0);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const auto l = labels_[i];
    if (l < 0 || l >= count_)
      throw ValidationError("superpoint label " + std::to_string(l) + " at point " +
                            std::to_string(i) + " outside [0, " + std::to_string(count_) + ")");
    ++sizes[static_cast<std::size_t>(l)];
  }
  for (SuperpointId u = 0; u < count_; ++u) {
    if (sizes[static_cast<std::size_t>(u)] == 0)
      throw ValidationError("superpoint " + std::to_string(u) + " has no member points");
  }
  offsets_.assign(sizes.size() + 1, 0);
  std::partial_sum(sizes.begin(), sizes.end(), offsets_.begin() + 1);
  members_.resize(labels_.size());
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t i = 0; i < labels_.size(); ++i)
    members_[cursor[static_cast<std::size_t>(labels_[i])]++] = static_cast<PointIndex>(i);
}

SuperpointPartition SuperpointPartition::from_labels(std::vector<SuperpointId> labels) {
  SuperpointId count = 0;
  for (auto l : labels) count = std::max(count, l + 1);
  return SuperpointPartition(std::move(labels), count);
}

std::span<const PointIndex> SuperpointPartition::members(SuperpointId u) const {
  return {members_.data() + offsets_[u], offsets_[u + 1] - offsets_[u]};
}

void FeatureTable::validate() const {
  if (dim == 0) throw ValidationError("feature dimension is zero");
  if (values.size() != rows * dim) throw ValidationError("feature table size mismatch");
  for (std::size_t u = 0; u < rows; ++u) {
    double norm2 = 0.0;
    for (float x : row(u)) {
      if (!std::isfinite(x)) throw ValidationError("feature row " + std::to_string(u) + " not finite");
      norm2 += static_cast<double>(x) * x;
    }
    if (!(norm2 > 0.0)) throw ValidationError("feature row " + std::to_string(u) + " has zero norm");
  }
}

std::size_t Mask2D::area() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](auto p) { return p != 0; }));
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::lifted: return "lifted";
    case Stage::seed: return "seed";
    case Stage::grown: return "grown";
    case Stage::merged: return "merged";
  }
  return "lifted";
}

Stage stage_from_string(std::string_view s) {
  if (s == "lifted") return Stage::lifted;
  if (s == "seed") return Stage::seed;
  if (s == "grown") return Stage::grown;
  if (s == "merged") return Stage::merged;
  throw ValidationError("unknown stage tag '" + std::string(s) + "'");
}

void PointSetInstance::validate(std::size_t point_count) const {
  if (points.empty()) throw ValidationError("instance has no points");
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k] >= point_count) throw ValidationError("instance point index out of range");
    if (k > 0 && points[k] <= points[k - 1])
      throw ValidationError("instance point indices not strictly increasing");
  }
  if (!(confidence > 0.0 && confidence <= 1.0)) throw ValidationError("instance confidence outside (0,1]");
}

double view_support_confidence(std::size_t supporting_views, std::size_t total_views) {
  if (total_views == 0) return 1.0;
  const double c = static_cast<double>(supporting_views) / static_cast<double>(total_views);
  return std::clamp(c, 1.0 / static_cast<double>(total_views), 1.0);
}

void SceneBundle::validate() const {
  cloud.validate();
  if (views.empty()) throw ValidationError("scene has no camera views");
  for (const auto& v : views) v.validate();
  for (std::size_t a = 0; a < views.size(); ++a)
    for (std::size_t b = a + 1; b < views.size(); ++b)
      if (views[a].view_id == views[b].view_id)
        throw ValidationError("duplicate view id '" + views[a].view_id + "'");
  if (superpoints.point_count() != cloud.size())
    throw ValidationError("superpoint labels cover " + std::to_string(superpoints.point_count()) +
                          " points but the cloud has N=" + std::to_string(cloud.size()));
  features.validate();
  if (features.rows != static_cast<std::size_t>(superpoints.count()))
    throw ValidationError("feature table has " + std::to_string(features.rows) +
                          " rows but there are U=" + std::to_string(superpoints.count()) + " superpoints");
}

const CameraView* SceneBundle::find_view(std::string_view id) const {
  for (const auto& v : views)
    if (v.view_id == id) return &v;
  return nullptr;
}

std::size_t intersection_size(std::span<const PointIndex> a, std::span<const PointIndex> b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

double set_iou(std::span<const PointIndex> a, std::span<const PointIndex> b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<PointIndex> set_union(std::span<const PointIndex> a, std::span<const PointIndex> b) {
  std::vector<PointIndex> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace seedgrow
