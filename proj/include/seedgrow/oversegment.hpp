#pragma once

#include "seedgrow/types.hpp"

#include <vector>

namespace seedgrow {

struct OversegConfig {
  int k_neighbors = 16;
  double merge_threshold = 0.05;  // Felzenszwalb scale k, meters
  int min_segment_size = 20;

  void validate() const;
};

struct GraphEdge {
  std::uint32_t a = 0;  // a < b
  std::uint32_t b = 0;
  double weight = 0.0;
};

/// Symmetrized k-NN graph (an edge exists if either endpoint lists the other),
/// Euclidean weights, sorted by (weight, a, b).
std::vector<GraphEdge> build_knn_graph(const PointCloud& cloud, int k);

/// Felzenszwalb-Huttenlocher segmentation followed by merging every segment
/// smaller than min_segment_size into the neighbor it shares its lightest edge
/// with. Segment ids are dense and ordered by smallest member index.
SuperpointPartition segment_graph(std::span<const GraphEdge> edges, std::size_t point_count,
                                  const OversegConfig& cfg);

SuperpointPartition oversegment(const PointCloud& cloud, const OversegConfig& cfg);

}  // namespace seedgrow
