#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace seedgrow {

/// Exact k-nearest-neighbor queries over a fixed 3D point array (kd-tree).
/// Results come back sorted by (squared distance, index).
class KnnIndex {
 public:
  explicit KnnIndex(std::span<const Eigen::Vector3d> points);
  ~KnnIndex();
  KnnIndex(const KnnIndex&) = delete;
  KnnIndex& operator=(const KnnIndex&) = delete;

  std::size_t size() const { return points_.size(); }
  /// Up to k neighbors of `query`; a query that is itself in the set finds
  /// itself at distance 0.
  void query(const Eigen::Vector3d& query, std::size_t k, std::vector<std::uint32_t>& indices,
             std::vector<double>& sq_dists) const;

 private:
  struct Tree;
  std::span<const Eigen::Vector3d> points_;
  std::unique_ptr<Tree> tree_;
};

/// Squared Euclidean distance accumulated x, y, z in that order (the same
/// arithmetic the kd-tree uses, so brute-force checks compare bit-exactly).
inline double squared_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = a[c] - b[c];
    s += d * d;
  }
  return s;
}

}  // namespace seedgrow
