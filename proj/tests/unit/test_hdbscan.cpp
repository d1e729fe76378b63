#include "seedgrow/errors.hpp"
#include "seedgrow/hdbscan.hpp"

#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

using namespace seedgrow;

namespace {

using Pts = std::vector<Eigen::Vector3d>;

Pts uniform_points(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Pts p(n);
  for (auto& x : p) x = {u(rng), u(rng), u(rng)};
  return p;
}

Pts blob(std::mt19937_64& rng, const Eigen::Vector3d& c, double sigma, std::size_t n) {
  std::normal_distribution<double> g(0.0, sigma);
  Pts p(n);
  for (auto& x : p) x = c + Eigen::Vector3d(g(rng), g(rng), g(rng));
  return p;
}

std::vector<double> sorted_core_oracle(const Pts& p, int k) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (j != i) d.push_back((p[i] - p[j]).squaredNorm());
    if (static_cast<int>(d.size()) < k) {
      out[i] = std::numeric_limits<double>::infinity();
      continue;
    }
    std::sort(d.begin(), d.end());
    out[i] = std::sqrt(d[static_cast<std::size_t>(k - 1)]);
  }
  return out;
}

// Kruskal over the explicitly materialized complete mutual-reachability graph.
double dense_mst_weight(const Pts& p, const std::vector<double>& core, std::size_t& edges_used) {
  struct E {
    double w;
    std::size_t a, b;
  };
  std::vector<E> all;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j)
      all.push_back({std::max({core[i], core[j], (p[i] - p[j]).norm()}), i, j});
  std::sort(all.begin(), all.end(), [](const E& x, const E& y) { return x.w < y.w; });
  std::vector<std::size_t> parent(p.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  double total = 0.0;
  edges_used = 0;
  for (const auto& e : all) {
    auto ra = find(e.a), rb = find(e.b);
    if (ra == rb) continue;
    parent[ra] = rb;
    total += e.w;
    ++edges_used;
  }
  return total;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, long> nij;
  std::map<int, long> ai, bj;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++nij[{a[i], b[i]}];
    ++ai[a[i]];
    ++bj[b[i]];
  }
  auto c2 = [](long x) { return x * (x - 1) / 2.0; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (auto& [k, v] : nij) sum_ij += c2(v);
  for (auto& [k, v] : ai) sum_a += c2(v);
  for (auto& [k, v] : bj) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<long>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  return (sum_ij - expected) / (max_index - expected);
}

}  // namespace

TEST_CASE("core distances: hand geometry and degenerate k") {
  Pts line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  CHECK(core_distances(line, 1) == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(core_distances(line, 2) == std::vector<double>{2.0, 1.0, 2.0});
  for (double d : core_distances(line, 3)) CHECK(std::isinf(d));
}

TEST_CASE("core distances match a brute-force sort") {
  std::mt19937_64 rng(1);
  auto p = uniform_points(rng, 300);
  auto want = sorted_core_oracle(p, 10);
  auto got = core_distances(p, 10);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
  CHECK(serial::core_distances(p, 10) == got);
}

TEST_CASE("MST small cases") {
  Pts two{{0, 0, 0}, {3, 0, 0}};
  std::vector<double> core{1.0, 4.0};
  auto e = mutual_reachability_mst(two, core);
  REQUIRE(e.size() == 1);
  CHECK(e[0].a == 0);
  CHECK(e[0].b == 1);
  CHECK(e[0].weight == 4.0);

  Pts square{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  auto sq = mutual_reachability_mst(square, core_distances(square, 1));
  REQUIRE(sq.size() == 3);
  double total = 0;
  for (auto& x : sq) total += x.weight;
  CHECK(total == doctest::Approx(3.0));
}

TEST_CASE("MST weight equals the dense-graph oracle") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    auto p = uniform_points(rng, 200);
    auto core = core_distances(p, 5);
    auto mst = mutual_reachability_mst(p, core);
    std::size_t used = 0;
    const double want = dense_mst_weight(p, core, used);
    REQUIRE(mst.size() == used);
    double total = 0;
    for (auto& e : mst) {
      CHECK(e.a < e.b);
      CHECK(e.weight == doctest::Approx(std::max({core[e.a], core[e.b], (p[e.a] - p[e.b]).norm()})).epsilon(1e-14));
      total += e.weight;
    }
    CHECK(total == doctest::Approx(want).epsilon(1e-12));
    auto ser = serial::mutual_reachability_mst(p, core);
    REQUIRE(ser.size() == mst.size());
    double st = 0;
    for (auto& e : ser) st += e.weight;
    CHECK(st == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("MST is thread-count independent") {
  std::mt19937_64 rng(8);
  auto p = uniform_points(rng, 9000);
  auto core = core_distances(p, 10);
  omp_set_num_threads(1);
  auto a = mutual_reachability_mst(p, core);
  omp_set_num_threads(3);
  auto b = mutual_reachability_mst(p, core);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].a == b[i].a);
    CHECK(a[i].b == b[i].b);
    CHECK(a[i].weight == b[i].weight);
  }
}

TEST_CASE("fewer points than mu are all noise") {
  std::mt19937_64 rng(3);
  auto p = uniform_points(rng, 20);
  ClusterConfig cfg;
  auto labels = hdbscan(p, cfg);
  CHECK(std::all_of(labels.begin(), labels.end(), [](int l) { return l == -1; }));
  CHECK(cluster_count(labels) == 0);
}

TEST_CASE("two blobs 10 sigma apart give two clusters") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = blob(rng, {0, 0, 0}, 0.1, 200);
    auto b = blob(rng, {1.0, 0, 0}, 0.1, 200);
    Pts p = a;
    p.insert(p.end(), b.begin(), b.end());
    std::vector<int> truth(400, 0);
    std::fill(truth.begin() + 200, truth.end(), 1);
    ClusterConfig cfg;
    cfg.min_cluster_size = 30;
    auto labels = hdbscan(p, cfg);
    CHECK(cluster_count(labels) == 2);
    INFO("seed " << seed << " noise " << std::count(labels.begin(), labels.end(), -1));
    CHECK(adjusted_rand_index(labels, truth) >= 0.99);
    CHECK(labels[0] == 0);  // ids ordered by smallest member
  }
}

TEST_CASE("one blob gives one cluster covering most points") {
  std::mt19937_64 rng(4);
  auto p = blob(rng, {0, 0, 0}, 0.1, 200);
  auto labels = hdbscan(p, ClusterConfig{});
  CHECK(cluster_count(labels) == 1);
  CHECK(std::count(labels.begin(), labels.end(), 0) >= 190);
}

TEST_CASE("ARI helper sanity") {
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {5, 5, 7, 7}) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}) < 0.0);
}

TEST_CASE("cluster config defaults") {
  ClusterConfig cfg;
  CHECK(cfg.min_cluster_size == kIndoorMinClusterSize);
  CHECK(kIndoorMinClusterSize == 30);
  CHECK(kOutdoorMinClusterSize == 150);
  CHECK(cfg.effective_min_samples() == 30);
  cfg.min_cluster_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
