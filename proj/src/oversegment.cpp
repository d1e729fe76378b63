#include "seedgrow/oversegment.hpp"

#include "seedgrow/errors.hpp"
#include "seedgrow/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace seedgrow {

void OversegConfig::validate() const {
  if (k_neighbors < 1) throw ConfigError("k_neighbors must be positive");
  if (!(merge_threshold > 0.0)) throw ConfigError("merge_threshold must be positive");
  if (min_segment_size < 1) throw ConfigError("min_segment_size must be positive");
}

std::vector<GraphEdge> build_knn_graph(const PointCloud& cloud, int k) {
  const std::size_t n = cloud.size();
  if (k < 1) throw ConfigError("k must be positive");
  if (n <= static_cast<std::size_t>(k))
    throw ValidationError("k-NN graph needs more than k=" + std::to_string(k) + " points, got " +
                          std::to_string(n));
  std::vector<Eigen::Vector3d> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = cloud.positions[i].cast<double>();
  const KnnIndex index(pts);

  std::vector<std::vector<GraphEdge>> per_point(n);
#pragma omp parallel
  {
    std::vector<std::uint32_t> idx;
    std::vector<double> d2;
#pragma omp for schedule(static)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(n); ++s) {
      const auto i = static_cast<std::uint32_t>(s);
      index.query(pts[i], static_cast<std::size_t>(k) + 1, idx, d2);
      auto& out = per_point[i];
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] == i) continue;
        out.push_back({std::min(i, idx[r]), std::max(i, idx[r]), std::sqrt(d2[r])});
      }
      // Coincident points can push the query itself out of its own list.
      if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
    }
  }
  std::vector<GraphEdge> edges;
  edges.reserve(n * static_cast<std::size_t>(k));
  for (auto& v : per_point) edges.insert(edges.end(), v.begin(), v.end());
  std::sort(edges.begin(), edges.end(), [](const GraphEdge& x, const GraphEdge& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const GraphEdge& x, const GraphEdge& y) { return x.a == y.a && x.b == y.b; }),
              edges.end());
  return edges;
}

namespace {

struct DisjointSets {
  std::vector<std::uint32_t> parent;
  std::vector<std::uint32_t> size;
  std::vector<double> internal;  // largest edge merged into the component

  explicit DisjointSets(std::size_t n) : parent(n), size(n, 1), internal(n, 0.0) {
    std::iota(parent.begin(), parent.end(), 0u);
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  std::uint32_t join(std::uint32_t a, std::uint32_t b, double w) {
    // Lower index wins as representative so the structure is order-stable.
    if (b < a) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
    internal[a] = std::max({internal[a], internal[b], w});
    return a;
  }
};

}  // namespace

SuperpointPartition segment_graph(std::span<const GraphEdge> edges, std::size_t n, const OversegConfig& cfg) {
  cfg.validate();
  if (n == 0) throw ValidationError("cannot segment an empty graph");
  std::vector<GraphEdge> sorted(edges.begin(), edges.end());
  std::sort(sorted.begin(), sorted.end(), [](const GraphEdge& x, const GraphEdge& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  DisjointSets ds(n);
  const double k = cfg.merge_threshold;
  for (const auto& e : sorted) {
    const auto ra = ds.find(e.a);
    const auto rb = ds.find(e.b);
    if (ra == rb) continue;
    const double ta = ds.internal[ra] + k / ds.size[ra];
    const double tb = ds.internal[rb] + k / ds.size[rb];
    if (e.weight <= std::min(ta, tb)) ds.join(ra, rb, e.weight);
  }
  const auto floor = static_cast<std::uint32_t>(cfg.min_segment_size);
  for (const auto& e : sorted) {
    const auto ra = ds.find(e.a);
    const auto rb = ds.find(e.b);
    if (ra != rb && (ds.size[ra] < floor || ds.size[rb] < floor)) ds.join(ra, rb, e.weight);
  }

  std::vector<SuperpointId> labels(n);
  std::vector<SuperpointId> dense(n, -1);
  SuperpointId next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = ds.find(static_cast<std::uint32_t>(i));
    if (dense[r] < 0) dense[r] = next++;
    labels[i] = dense[r];
  }
  return SuperpointPartition(std::move(labels), next);
}

SuperpointPartition oversegment(const PointCloud& cloud, const OversegConfig& cfg) {
  cfg.validate();
  const auto edges = build_knn_graph(cloud, cfg.k_neighbors);
  return segment_graph(edges, cloud.size(), cfg);
}

}  // namespace seedgrow
