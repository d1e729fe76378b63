#pragma once

#include "seedgrow/hdbscan.hpp"
#include "seedgrow/projection.hpp"
#include "seedgrow/types.hpp"

#include <string>
#include <vector>

namespace seedgrow {

struct GrowConfig {
  double affinity_floor = 0.05;  // stop once the best candidate scores below this
  int max_iterations = 0;        // 0: bounded only by the floor
  int adjacency_k = 8;           // centroid k-NN used to define neighboring superpoints
  bool exclusive_claims = false; // forbid two seeds of one view from absorbing the same superpoint

  void validate() const;
};

struct MergeSchedule {
  std::vector<double> thresholds{0.7, 0.6, 0.5, 0.4, 0.3};

  void validate() const;
};

/// A spatially dense piece of one lifted mask.
struct Seed {
  std::vector<PointIndex> points;
  std::string origin_view;
  MaskId origin_mask = 0;
  std::vector<double> feature;
};

/// Points of a mask = points visible in the mask's view whose pixel is inside
/// the mask. One list per mapping, in mapping order; empty lifts are dropped.
std::vector<std::vector<PointSetInstance>> lift_masks(const MaskSet& masks, const std::vector<ViewMapping>& mappings);

/// HDBSCAN on each lifted mask's coordinates; every cluster becomes a seed
/// with its own count-weighted mean feature, noise is discarded.
std::vector<Seed> split_seeds(const std::vector<PointSetInstance>& lifted, const PointCloud& cloud,
                              const ClusterConfig& cfg, const SuperpointPartition& partition,
                              const FeatureTable& features);

/// Mean of superpoint features over the seed's points (equivalently weighted by
/// how many seed points fall in each superpoint).
std::vector<double> seed_feature(std::span<const PointIndex> points, const SuperpointPartition& partition,
                                 const FeatureTable& features);

/// cos(seed feature, f_u) clamped to [0,1], times IoU(seed points, s_u).
double affinity(std::span<const PointIndex> seed_points, std::span<const double> seed_feature,
                SuperpointId candidate, const SuperpointPartition& partition, const FeatureTable& features);

double cosine_similarity(std::span<const double> a, std::span<const float> b);

/// Neighbor lists over superpoint centroids (k nearest, symmetrized).
struct SuperpointAdjacency {
  std::vector<std::vector<SuperpointId>> neighbors;
};
SuperpointAdjacency build_superpoint_adjacency(const PointCloud& cloud, const SuperpointPartition& partition,
                                               int k);

/// Greedy growth by whole superpoints. `claimed`, when given, marks
/// superpoints that may not be absorbed (exclusive-claims mode).
PointSetInstance grow_seed(const Seed& seed, const SuperpointPartition& partition, const FeatureTable& features,
                           const SuperpointAdjacency& adjacency, const GrowConfig& cfg, std::size_t view_count,
                           const std::vector<std::uint8_t>* claimed = nullptr);

/// Grows every seed (parallel unless exclusive claims serialize a view).
std::vector<PointSetInstance> grow_seeds(const std::vector<Seed>& seeds, const SuperpointPartition& partition,
                                         const FeatureTable& features, const SuperpointAdjacency& adjacency,
                                         const GrowConfig& cfg, std::size_t view_count);

/// Seeds taken as proposals without growing.
std::vector<PointSetInstance> seeds_as_proposals(const std::vector<Seed>& seeds, std::size_t view_count);

/// Progressive merging under a decreasing IoU schedule. Output order is
/// canonical (by first point), so permuting the input changes nothing.
ProposalSet merge_views(std::vector<PointSetInstance> proposals, const MergeSchedule& schedule,
                        std::size_t view_count);

}  // namespace seedgrow
