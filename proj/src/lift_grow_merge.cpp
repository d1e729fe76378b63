#include "seedgrow/lift_grow_merge.hpp"

#include "seedgrow/errors.hpp"
#include "seedgrow/knn.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <unordered_map>

namespace seedgrow {

void GrowConfig::validate() const {
  if (!(affinity_floor > 0.0)) throw ConfigError("affinity_floor must be > 0");
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (adjacency_k < 0) throw ConfigError("adjacency_k must be >= 0");
}

void MergeSchedule::validate() const {
  if (thresholds.empty()) throw ConfigError("merge schedule is empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0))
      throw ConfigError("merge thresholds must lie in (0, 1)");
    if (i > 0 && !(thresholds[i] < thresholds[i - 1]))
      throw ConfigError("merge thresholds must be strictly decreasing");
  }
}

namespace {

template <typename T>
std::vector<T> sorted_unique_union(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<T> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

std::vector<std::vector<PointSetInstance>> lift_masks(const MaskSet& masks,
                                                      const std::vector<ViewMapping>& mappings) {
  std::unordered_map<std::string, std::size_t> view_index;
  for (std::size_t j = 0; j < mappings.size(); ++j) view_index.emplace(mappings[j].view_id, j);
  std::vector<std::size_t> owner(masks.size());
  for (std::size_t m = 0; m < masks.size(); ++m) {
    const auto it = view_index.find(masks[m].view_id);
    if (it == view_index.end())
      throw ValidationError("mask " + std::to_string(masks[m].mask_id) + " refers to unmapped view '" +
                            masks[m].view_id + "'");
    const auto& map = mappings[it->second];
    if (masks[m].width != map.width || masks[m].height != map.height)
      throw ValidationError("mask " + std::to_string(masks[m].mask_id) + " raster does not match view '" +
                            map.view_id + "'");
    owner[m] = it->second;
  }

  std::vector<PointSetInstance> lifted(masks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(masks.size()); ++s) {
    const auto m = static_cast<std::size_t>(s);
    const auto& map = mappings[owner[m]];
    auto& inst = lifted[m];
    for (std::size_t i = 0; i < map.point_count(); ++i) {
      if (!map.visible[i]) continue;
      const auto [u, v] = map.pixel[i];
      if (masks[m].at(u, v)) inst.points.push_back(static_cast<PointIndex>(i));
    }
    inst.provenance.stage = Stage::lifted;
    inst.provenance.views = {masks[m].view_id};
    inst.provenance.masks = {masks[m].mask_id};
    inst.confidence = view_support_confidence(1, mappings.size());
  }

  std::vector<std::vector<PointSetInstance>> per_view(mappings.size());
  std::size_t dropped = 0;
  for (std::size_t m = 0; m < masks.size(); ++m) {
    if (lifted[m].points.empty()) {
      ++dropped;
      spdlog::debug("lift: mask {} of view '{}' has no visible points, dropped", masks[m].mask_id,
                    masks[m].view_id);
      continue;
    }
    per_view[owner[m]].push_back(std::move(lifted[m]));
  }
  if (dropped > 0) spdlog::info("lift: dropped {} mask(s) with no visible points", dropped);
  return per_view;
}

std::vector<double> seed_feature(std::span<const PointIndex> points, const SuperpointPartition& partition,
                                 const FeatureTable& features) {
  if (points.empty()) throw ValidationError("seed feature of an empty point set");
  std::vector<double> mean(features.dim, 0.0);
  for (PointIndex i : points) {
    const auto f = features.row(static_cast<std::size_t>(partition.label(i)));
    for (std::size_t d = 0; d < features.dim; ++d) mean[d] += f[d];
  }
  for (auto& x : mean) x /= static_cast<double>(points.size());
  return mean;
}

double cosine_similarity(std::span<const double> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    dot += a[d] * b[d];
    na += a[d] * a[d];
    nb += static_cast<double>(b[d]) * b[d];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double affinity(std::span<const PointIndex> seed_points, std::span<const double> feature, SuperpointId candidate,
                const SuperpointPartition& partition, const FeatureTable& features) {
  const auto members = partition.members(candidate);
  const double iou = set_iou(seed_points, members);
  const double cos = std::clamp(cosine_similarity(feature, features.row(static_cast<std::size_t>(candidate))), 0.0, 1.0);
  return cos * iou;
}

std::vector<Seed> split_seeds(const std::vector<PointSetInstance>& lifted, const PointCloud& cloud,
                              const ClusterConfig& cfg, const SuperpointPartition& partition,
                              const FeatureTable& features) {
  cfg.validate();
  std::vector<std::vector<Seed>> parts(lifted.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(lifted.size()); ++s) {
    const auto& inst = lifted[static_cast<std::size_t>(s)];
    std::vector<Eigen::Vector3d> xyz(inst.points.size());
    for (std::size_t r = 0; r < inst.points.size(); ++r) xyz[r] = cloud.positions[inst.points[r]].cast<double>();
    const auto labels = hdbscan(xyz, cfg);
    const std::size_t c = cluster_count(labels);
    auto& out = parts[static_cast<std::size_t>(s)];
    out.resize(c);
    for (std::size_t r = 0; r < labels.size(); ++r)
      if (labels[r] >= 0) out[static_cast<std::size_t>(labels[r])].points.push_back(inst.points[r]);
    for (auto& seed : out) {
      seed.origin_view = inst.provenance.views.empty() ? std::string{} : inst.provenance.views.front();
      seed.origin_mask = inst.provenance.masks.empty() ? 0 : inst.provenance.masks.front();
      seed.feature = seed_feature(seed.points, partition, features);
    }
  }
  std::vector<Seed> seeds;
  std::size_t vanished = 0;
  for (auto& p : parts) {
    if (p.empty()) ++vanished;
    for (auto& s : p) seeds.push_back(std::move(s));
  }
  if (vanished > 0) spdlog::info("split: {} lifted mask(s) were all noise", vanished);
  return seeds;
}

SuperpointAdjacency build_superpoint_adjacency(const PointCloud& cloud, const SuperpointPartition& partition,
                                               int k) {
  const auto U = static_cast<std::size_t>(partition.count());
  SuperpointAdjacency adj;
  adj.neighbors.resize(U);
  if (k <= 0 || U < 2) return adj;
  std::vector<Eigen::Vector3d> centroids(U, Eigen::Vector3d::Zero());
  for (std::size_t u = 0; u < U; ++u) {
    const auto members = partition.members(static_cast<SuperpointId>(u));
    for (PointIndex i : members) centroids[u] += cloud.positions[i].cast<double>();
    centroids[u] /= static_cast<double>(members.size());
  }
  const KnnIndex index(centroids);
  std::vector<std::uint32_t> idx;
  std::vector<double> d2;
  for (std::size_t u = 0; u < U; ++u) {
    index.query(centroids[u], static_cast<std::size_t>(k) + 1, idx, d2);
    for (auto v : idx) {
      if (v == u) continue;
      adj.neighbors[u].push_back(static_cast<SuperpointId>(v));
      adj.neighbors[v].push_back(static_cast<SuperpointId>(u));
    }
  }
  for (auto& n : adj.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

PointSetInstance grow_seed(const Seed& seed, const SuperpointPartition& partition, const FeatureTable& features,
                           const SuperpointAdjacency& adjacency, const GrowConfig& cfg, std::size_t view_count,
                           const std::vector<std::uint8_t>* claimed) {
  cfg.validate();
  if (seed.points.empty()) throw ValidationError("cannot grow an empty seed");
  const std::size_t D = features.dim;

  // Per-superpoint overlap with the current set; the feature is kept as an
  // overlap-weighted sum so absorbing a superpoint is an O(D) update.
  std::map<SuperpointId, std::size_t> overlap;
  for (PointIndex i : seed.points) ++overlap[partition.label(i)];
  std::vector<double> weighted(D, 0.0);
  for (const auto& [u, c] : overlap) {
    const auto f = features.row(static_cast<std::size_t>(u));
    for (std::size_t d = 0; d < D; ++d) weighted[d] += static_cast<double>(c) * f[d];
  }
  std::size_t total = seed.points.size();
  std::vector<SuperpointId> absorbed;

  auto full = [&](SuperpointId u) {
    const auto it = overlap.find(u);
    return it != overlap.end() && it->second == partition.size_of(u);
  };
  for (int iter = 0; cfg.max_iterations == 0 || iter < cfg.max_iterations; ++iter) {
    std::vector<SuperpointId> candidates;
    for (const auto& [u, c] : overlap)
      if (c < partition.size_of(u)) candidates.push_back(u);
    for (SuperpointId a : absorbed)
      for (SuperpointId v : adjacency.neighbors[static_cast<std::size_t>(a)])
        if (!full(v)) candidates.push_back(v);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    double best = -1.0;
    SuperpointId pick = -1;
    for (SuperpointId u : candidates) {
      if (claimed && (*claimed)[static_cast<std::size_t>(u)]) continue;
      const auto it = overlap.find(u);
      const double inter = it == overlap.end() ? 0.0 : static_cast<double>(it->second);
      const double size_u = static_cast<double>(partition.size_of(u));
      const double iou = inter / (static_cast<double>(total) + size_u - inter);
      const double cos = std::clamp(cosine_similarity(weighted, features.row(static_cast<std::size_t>(u))), 0.0, 1.0);
      const double a = cos * iou;
      if (a > best) {  // candidates ascend, so ties keep the lowest id
        best = a;
        pick = u;
      }
    }
    if (pick < 0 || best < cfg.affinity_floor) break;

    const std::size_t had = overlap.count(pick) ? overlap[pick] : 0;
    const std::size_t size_u = partition.size_of(pick);
    const auto f = features.row(static_cast<std::size_t>(pick));
    for (std::size_t d = 0; d < D; ++d) weighted[d] += static_cast<double>(size_u - had) * f[d];
    total += size_u - had;
    overlap[pick] = size_u;
    absorbed.push_back(pick);
  }

  PointSetInstance out;
  out.points = seed.points;
  if (!absorbed.empty()) {
    std::vector<PointIndex> extra;
    for (SuperpointId u : absorbed) {
      const auto m = partition.members(u);
      extra.insert(extra.end(), m.begin(), m.end());
    }
    std::sort(extra.begin(), extra.end());
    out.points = sorted_unique_union(out.points, extra);
  }
  out.provenance.stage = Stage::grown;
  out.provenance.views = {seed.origin_view};
  out.provenance.masks = {seed.origin_mask};
  out.confidence = view_support_confidence(1, view_count);
  return out;
}

std::vector<PointSetInstance> grow_seeds(const std::vector<Seed>& seeds, const SuperpointPartition& partition,
                                         const FeatureTable& features, const SuperpointAdjacency& adjacency,
                                         const GrowConfig& cfg, std::size_t view_count) {
  cfg.validate();
  std::vector<PointSetInstance> out(seeds.size());
  if (!cfg.exclusive_claims) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(seeds.size()); ++s)
      out[static_cast<std::size_t>(s)] =
          grow_seed(seeds[static_cast<std::size_t>(s)], partition, features, adjacency, cfg, view_count);
    return out;
  }
  // Seeds of one view share a claim mask and grow in input order.
  std::map<std::string, std::vector<std::size_t>> by_view;
  for (std::size_t s = 0; s < seeds.size(); ++s) by_view[seeds[s].origin_view].push_back(s);
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [v, list] : by_view) groups.push_back(&list);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t g = 0; g < static_cast<std::ptrdiff_t>(groups.size()); ++g) {
    std::vector<std::uint8_t> claimed(static_cast<std::size_t>(partition.count()), 0);
    for (std::size_t s : *groups[static_cast<std::size_t>(g)]) {
      out[s] = grow_seed(seeds[s], partition, features, adjacency, cfg, view_count, &claimed);
      std::map<SuperpointId, std::size_t> count;
      for (PointIndex i : out[s].points) ++count[partition.label(i)];
      for (const auto& [u, c] : count)
        if (c == partition.size_of(u)) claimed[static_cast<std::size_t>(u)] = 1;
    }
  }
  return out;
}

std::vector<PointSetInstance> seeds_as_proposals(const std::vector<Seed>& seeds, std::size_t view_count) {
  std::vector<PointSetInstance> out;
  out.reserve(seeds.size());
  for (const auto& s : seeds) {
    PointSetInstance inst;
    inst.points = s.points;
    inst.provenance.stage = Stage::seed;
    inst.provenance.views = {s.origin_view};
    inst.provenance.masks = {s.origin_mask};
    inst.confidence = view_support_confidence(1, view_count);
    out.push_back(std::move(inst));
  }
  return out;
}

ProposalSet merge_views(std::vector<PointSetInstance> proposals, const MergeSchedule& schedule,
                        std::size_t view_count) {
  schedule.validate();
  if (proposals.empty()) throw PipelineError("merge", "no proposals to merge");
  // Canonical order makes pair tie-breaking independent of the input order.
  std::sort(proposals.begin(), proposals.end(), [](const PointSetInstance& a, const PointSetInstance& b) {
    if (a.points != b.points) return a.points < b.points;
    if (a.provenance.views != b.provenance.views) return a.provenance.views < b.provenance.views;
    return a.provenance.masks < b.provenance.masks;
  });
  const std::size_t P = proposals.size();
  std::vector<std::uint8_t> alive(P, 1);
  std::vector<double> iou(P * P, 0.0);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return iou[i * P + j]; };

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(P); ++s) {
    const auto i = static_cast<std::size_t>(s);
    for (std::size_t j = i + 1; j < P; ++j) at(i, j) = set_iou(proposals[i].points, proposals[j].points);
  }

  for (double theta : schedule.thresholds) {
    while (true) {
      double best = -1.0;
      std::size_t bi = 0, bj = 0;
      for (std::size_t i = 0; i < P; ++i) {
        if (!alive[i]) continue;
        for (std::size_t j = i + 1; j < P; ++j) {
          if (!alive[j]) continue;
          const double v = at(i, j);
          if (v >= theta && v > best) {
            best = v;
            bi = i;
            bj = j;
          }
        }
      }
      if (best < 0.0) break;
      auto& keep = proposals[bi];
      const auto& gone = proposals[bj];
      keep.points = sorted_unique_union(keep.points, gone.points);
      keep.provenance.views = sorted_unique_union(keep.provenance.views, gone.provenance.views);
      keep.provenance.masks = sorted_unique_union(keep.provenance.masks, gone.provenance.masks);
      alive[bj] = 0;
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(P); ++s) {
        const auto k = static_cast<std::size_t>(s);
        if (!alive[k] || k == bi) continue;
        const double v = set_iou(keep.points, proposals[k].points);
        if (k < bi) at(k, bi) = v;
        else at(bi, k) = v;
      }
    }
  }

  ProposalSet out;
  out.view_count = view_count;
  for (std::size_t i = 0; i < P; ++i) {
    if (!alive[i]) continue;
    auto& p = proposals[i];
    p.provenance.stage = Stage::merged;
    p.confidence = view_support_confidence(p.provenance.views.size(), view_count);
    out.instances.push_back(std::move(p));
  }
  std::sort(out.instances.begin(), out.instances.end(),
            [](const PointSetInstance& a, const PointSetInstance& b) { return a.points < b.points; });
  return out;
}

}  // namespace seedgrow
