#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace seedgrow {

struct ClusterConfig {
  int min_cluster_size = 30;  // mu; 150 suits sparse outdoor scans
  int min_samples = 0;        // 0 means "same as min_cluster_size"

  int effective_min_samples() const { return min_samples > 0 ? min_samples : min_cluster_size; }
  void validate() const;
};

inline constexpr int kIndoorMinClusterSize = 30;
inline constexpr int kOutdoorMinClusterSize = 150;

struct MstEdge {
  std::uint32_t a = 0;  // a < b
  std::uint32_t b = 0;
  double weight = 0.0;
};

/// Per-point label: -1 noise, otherwise a cluster id in [0, C). Cluster ids
/// are ordered by their smallest member index.
using ClusterLabels = std::vector<int>;

/// Distance to the k-th nearest neighbor, the point itself excluded. Fewer
/// than k+1 points gives +inf everywhere.
std::vector<double> core_distances(std::span<const Eigen::Vector3d> points, int k);

/// Exact minimum spanning tree under mutual reachability
/// max(core_i, core_j, |p_i - p_j|), built with Prim's algorithm on the
/// implicit complete graph. Ties pick the lowest vertex index.
std::vector<MstEdge> mutual_reachability_mst(std::span<const Eigen::Vector3d> points,
                                             std::span<const double> core);

/// Single-linkage hierarchy, condensed with min cluster size mu, clusters
/// selected by excess of mass. The root may be selected, so one dense blob
/// comes back as one cluster rather than all noise.
ClusterLabels extract_clusters(std::span<const MstEdge> mst, std::size_t point_count, int min_cluster_size);

ClusterLabels hdbscan(std::span<const Eigen::Vector3d> points, const ClusterConfig& cfg);

std::size_t cluster_count(const ClusterLabels& labels);

namespace serial {
std::vector<double> core_distances(std::span<const Eigen::Vector3d> points, int k);
std::vector<MstEdge> mutual_reachability_mst(std::span<const Eigen::Vector3d> points,
                                             std::span<const double> core);
}  // namespace serial

}  // namespace seedgrow
