#include "seedgrow/hdbscan.hpp"

#include "seedgrow/errors.hpp"
#include "seedgrow/knn.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace seedgrow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> core_distances_impl(std::span<const Eigen::Vector3d> points, int k, bool parallel) {
  const std::size_t n = points.size();
  std::vector<double> core(n, kInf);
  if (k < 1) throw ConfigError("core distance neighbor count must be >= 1");
  if (n < static_cast<std::size_t>(k) + 1) return core;
  const KnnIndex index(points);
  const auto kk = static_cast<std::size_t>(k) + 1;  // the query point finds itself first
#pragma omp parallel if (parallel)
  {
    std::vector<std::uint32_t> idx;
    std::vector<double> d2;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      index.query(points[static_cast<std::size_t>(i)], kk, idx, d2);
      core[static_cast<std::size_t>(i)] = std::sqrt(d2.back());
    }
  }
  return core;
}

struct Candidate {
  double weight = kInf;
  std::uint32_t vertex = std::numeric_limits<std::uint32_t>::max();
  std::size_t slot = 0;

  bool better_than(const Candidate& o) const {
    if (weight != o.weight) return weight < o.weight;
    return vertex < o.vertex;
  }
};

// Prim over the implicit complete graph. Vertices outside the tree live in
// compacted arrays (swap-removed on selection) so the scan is contiguous and
// vectorizes. Weights are compared squared: sqrt is monotone and correctly
// rounded, so squaring preserves the order up to rounding of core^2; emitted
// edge weights are recomputed in the unsquared form. Selection is by
// (weight, vertex), so neither slot order nor thread count matters.
std::vector<MstEdge> prim_mst(std::span<const Eigen::Vector3d> points, std::span<const double> core,
                              bool parallel) {
  const std::size_t n = points.size();
  if (core.size() != n) throw ValidationError("core distance count does not match point count");
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  edges.reserve(n - 1);

  std::size_t m = n - 1;
  // Parent ids are kept as doubles so the update is a same-width select.
  std::vector<double> xs(m), ys(m), zs(m), core2(m), best(m, kInf), from(m, 0.0);
  std::vector<std::uint32_t> id(m);
  for (std::size_t s = 0; s < m; ++s) {
    const auto v = static_cast<std::uint32_t>(s + 1);
    id[s] = v;
    xs[s] = points[v].x();
    ys[s] = points[v].y();
    zs[s] = points[v].z();
    core2[s] = core[v] * core[v];
  }
  std::uint32_t current = 0;

  // Updates slots [lo, hi) against the newest tree vertex and returns the
  // best (weight, vertex) among them.
  auto scan = [&](std::size_t lo, std::size_t hi, double cx, double cy, double cz, double cc2, double cur) {
    double* __restrict bw = best.data();
    double* __restrict fr = from.data();
    const double* __restrict px = xs.data();
    const double* __restrict py = ys.data();
    const double* __restrict pz = zs.data();
    const double* __restrict pc = core2.data();
    double low = kInf;
#pragma omp simd reduction(min : low)
    for (std::size_t s = lo; s < hi; ++s) {
      const double dx = cx - px[s], dy = cy - py[s], dz = cz - pz[s];
      const double d2 = dx * dx + dy * dy + dz * dz;
      const double w2 = std::max(std::max(cc2, pc[s]), d2);
      const bool closer = w2 < bw[s];
      fr[s] = closer ? cur : fr[s];
      bw[s] = closer ? w2 : bw[s];
      low = std::min(low, bw[s]);
    }
    Candidate c;
    c.weight = low;
    for (std::size_t s = lo; s < hi; ++s)
      if (bw[s] == low && id[s] < c.vertex) {
        c.vertex = id[s];
        c.slot = s;
      }
    return c;
  };

  const int threads = parallel ? omp_get_max_threads() : 1;
  std::vector<Candidate> local(static_cast<std::size_t>(threads));
  while (m > 0) {
    const Eigen::Vector3d& cp = points[current];
    const double cc2 = core[current] * core[current];
    const double cur = static_cast<double>(current);
    Candidate pick;
    if (threads > 1 && m > 4096) {
      std::fill(local.begin(), local.end(), Candidate{});
#pragma omp parallel num_threads(threads)
      {
        const auto t = static_cast<std::size_t>(omp_get_thread_num());
        const auto T = static_cast<std::size_t>(omp_get_num_threads());
        local[t] = scan(m * t / T, m * (t + 1) / T, cp.x(), cp.y(), cp.z(), cc2, cur);
      }
      for (const auto& c : local)
        if (c.better_than(pick)) pick = c;
    } else {
      pick = scan(0, m, cp.x(), cp.y(), cp.z(), cc2, cur);
    }
    const std::size_t s = pick.slot;
    const std::uint32_t v = id[s];
    const auto u = static_cast<std::uint32_t>(from[s]);
    const double d = (points[u] - points[v]).norm();
    edges.push_back({std::min(u, v), std::max(u, v), std::max({core[u], core[v], d})});
    current = v;
    --m;
    xs[s] = xs[m];
    ys[s] = ys[m];
    zs[s] = zs[m];
    core2[s] = core2[m];
    best[s] = best[m];
    id[s] = id[m];
    from[s] = from[m];
  }
  return edges;
}

struct Linkage {
  std::vector<int> left, right;  // child node ids; < n are points
  std::vector<double> distance;
  std::vector<std::size_t> size;
};

Linkage single_linkage(std::span<const MstEdge> mst, std::size_t n) {
  std::vector<MstEdge> edges(mst.begin(), mst.end());
  std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  std::vector<std::uint32_t> uf(n);
  std::iota(uf.begin(), uf.end(), 0u);
  std::vector<int> node_of(n);
  std::iota(node_of.begin(), node_of.end(), 0);
  auto find = [&](std::uint32_t x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };
  Linkage L;
  const std::size_t merges = edges.size();
  L.left.resize(merges);
  L.right.resize(merges);
  L.distance.resize(merges);
  L.size.resize(merges);
  auto size_of = [&](int node) { return node < static_cast<int>(n) ? std::size_t{1} : L.size[node - n]; };
  for (std::size_t k = 0; k < merges; ++k) {
    const auto ra = find(edges[k].a);
    const auto rb = find(edges[k].b);
    if (ra == rb) throw ValidationError("spanning tree edge list contains a cycle");
    const int na = node_of[ra], nb = node_of[rb];
    L.left[k] = std::min(na, nb);
    L.right[k] = std::max(na, nb);
    L.distance[k] = edges[k].weight;
    L.size[k] = size_of(na) + size_of(nb);
    uf[rb] = ra;
    node_of[ra] = static_cast<int>(n + k);
  }
  return L;
}

struct CondensedEntry {
  int parent;  // cluster label (>= n)
  int child;   // point index (< n) or cluster label
  double lambda;
  std::size_t size;
};

double lambda_of(double distance) {
  if (std::isinf(distance)) return 0.0;
  return distance > 0.0 ? 1.0 / distance : kInf;
}

std::vector<CondensedEntry> condense(const Linkage& L, std::size_t n, std::size_t mu) {
  std::vector<CondensedEntry> out;
  const int root = static_cast<int>(n + L.left.size() - 1);
  std::vector<int> relabel(n + L.left.size(), -1);
  relabel[static_cast<std::size_t>(root)] = static_cast<int>(n);
  int next_label = static_cast<int>(n) + 1;
  auto size_of = [&](int node) { return node < static_cast<int>(n) ? std::size_t{1} : L.size[node - n]; };

  std::vector<int> leaves_stack;
  auto fall_out = [&](int sub, int parent_label, double lambda) {
    leaves_stack.assign(1, sub);
    while (!leaves_stack.empty()) {
      const int x = leaves_stack.back();
      leaves_stack.pop_back();
      if (x < static_cast<int>(n)) {
        out.push_back({parent_label, x, lambda, 1});
      } else {
        leaves_stack.push_back(L.right[x - n]);
        leaves_stack.push_back(L.left[x - n]);
      }
    }
  };

  // Breadth-first so that every cluster label exceeds its parent's. Merges at
  // the same distance are one level of the hierarchy: a split at distance d
  // removes every edge of weight d at once, so chains of equal-distance merges
  // are flattened into one multi-way split.
  std::vector<int> queue{root};
  std::vector<int> parts, pending;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const int node = queue[q];
    if (node < static_cast<int>(n)) continue;
    const std::size_t k = static_cast<std::size_t>(node) - n;
    const int label = relabel[static_cast<std::size_t>(node)];
    const double lambda = lambda_of(L.distance[k]);
    parts.clear();
    pending.assign({L.right[k], L.left[k]});
    while (!pending.empty()) {
      const int x = pending.back();
      pending.pop_back();
      if (x >= static_cast<int>(n) && L.distance[static_cast<std::size_t>(x) - n] == L.distance[k]) {
        pending.push_back(L.right[static_cast<std::size_t>(x) - n]);
        pending.push_back(L.left[static_cast<std::size_t>(x) - n]);
      } else {
        parts.push_back(x);
      }
    }
    std::size_t big = 0;
    for (int c : parts) big += size_of(c) >= mu;
    for (int c : parts) {
      if (size_of(c) < mu) {
        fall_out(c, label, lambda);
      } else if (big == 1) {
        relabel[static_cast<std::size_t>(c)] = label;
        queue.push_back(c);
      } else {
        relabel[static_cast<std::size_t>(c)] = next_label++;
        out.push_back({label, relabel[static_cast<std::size_t>(c)], lambda, size_of(c)});
        queue.push_back(c);
      }
    }
  }
  return out;
}

double lambda_gap(double later, double birth) { return later == birth ? 0.0 : later - birth; }

}  // namespace

void ClusterConfig::validate() const {
  if (min_cluster_size < 2) throw ConfigError("min_cluster_size must be >= 2");
  if (min_samples < 0) throw ConfigError("min_samples must be >= 1 (or 0 for the default)");
}

std::vector<double> core_distances(std::span<const Eigen::Vector3d> points, int k) {
  return core_distances_impl(points, k, true);
}

std::vector<MstEdge> mutual_reachability_mst(std::span<const Eigen::Vector3d> points,
                                             std::span<const double> core) {
  return prim_mst(points, core, true);
}

namespace serial {
std::vector<double> core_distances(std::span<const Eigen::Vector3d> points, int k) {
  return core_distances_impl(points, k, false);
}
std::vector<MstEdge> mutual_reachability_mst(std::span<const Eigen::Vector3d> points,
                                             std::span<const double> core) {
  return prim_mst(points, core, false);
}
}  // namespace serial

ClusterLabels extract_clusters(std::span<const MstEdge> mst, std::size_t n, int min_cluster_size) {
  if (min_cluster_size < 2) throw ConfigError("min_cluster_size must be >= 2");
  const auto mu = static_cast<std::size_t>(min_cluster_size);
  ClusterLabels labels(n, -1);
  if (n < mu || n < 2) return labels;
  if (mst.size() != n - 1)
    throw ValidationError("spanning tree over " + std::to_string(n) + " points must have " +
                          std::to_string(n - 1) + " edges, got " + std::to_string(mst.size()));

  const Linkage L = single_linkage(mst, n);
  const auto tree = condense(L, n, mu);

  int max_label = static_cast<int>(n);
  for (const auto& e : tree) max_label = std::max({max_label, e.parent, e.child});
  const std::size_t clusters = static_cast<std::size_t>(max_label) - n + 1;
  auto cid = [&](int label) { return static_cast<std::size_t>(label) - n; };

  std::vector<double> birth(clusters, 0.0);
  std::vector<int> parent_cluster(clusters, -1);
  std::vector<std::vector<std::size_t>> children(clusters);
  std::vector<int> point_parent(n, -1);
  for (const auto& e : tree) {
    if (e.child >= static_cast<int>(n)) {
      birth[cid(e.child)] = e.lambda;
      parent_cluster[cid(e.child)] = static_cast<int>(cid(e.parent));
      children[cid(e.parent)].push_back(cid(e.child));
    } else {
      point_parent[static_cast<std::size_t>(e.child)] = static_cast<int>(cid(e.parent));
    }
  }
  std::vector<double> stability(clusters, 0.0);
  for (const auto& e : tree)
    stability[cid(e.parent)] += lambda_gap(e.lambda, birth[cid(e.parent)]) * static_cast<double>(e.size);

  // Excess of mass, children before parents (children carry larger labels).
  std::vector<std::uint8_t> selected(clusters, 1);
  std::vector<double> score = stability;
  for (std::size_t c = clusters; c-- > 0;) {
    if (children[c].empty()) continue;
    double child_sum = 0.0;
    for (auto ch : children[c]) child_sum += score[ch];
    if (child_sum > score[c]) {
      selected[c] = 0;
      score[c] = child_sum;
    } else {
      std::vector<std::size_t> stack(children[c].begin(), children[c].end());
      while (!stack.empty()) {
        const auto x = stack.back();
        stack.pop_back();
        selected[x] = 0;
        stack.insert(stack.end(), children[x].begin(), children[x].end());
      }
    }
  }
  // A cluster with no excess of mass (everything at lambda 0, i.e. infinite
  // core distances) is not a cluster.
  for (std::size_t c = 0; c < clusters; ++c)
    if (selected[c] && !(stability[c] > 0.0)) selected[c] = 0;

  std::vector<int> raw(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    int c = point_parent[p];
    while (c >= 0 && !selected[static_cast<std::size_t>(c)]) c = parent_cluster[static_cast<std::size_t>(c)];
    raw[p] = c;
  }
  // Dense ids ordered by smallest member index.
  std::vector<int> remap(clusters, -1);
  int next = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (raw[p] < 0) continue;
    auto& r = remap[static_cast<std::size_t>(raw[p])];
    if (r < 0) r = next++;
    labels[p] = r;
  }
  return labels;
}

ClusterLabels hdbscan(std::span<const Eigen::Vector3d> points, const ClusterConfig& cfg) {
  cfg.validate();
  const auto core = core_distances(points, cfg.effective_min_samples());
  if (points.size() < static_cast<std::size_t>(cfg.min_cluster_size) || std::isinf(core.empty() ? kInf : core[0]))
    return ClusterLabels(points.size(), -1);
  const auto mst = mutual_reachability_mst(points, core);
  return extract_clusters(mst, points.size(), cfg.min_cluster_size);
}

std::size_t cluster_count(const ClusterLabels& labels) {
  int mx = -1;
  for (int l : labels) mx = std::max(mx, l);
  return static_cast<std::size_t>(mx + 1);
}

}  // namespace seedgrow
