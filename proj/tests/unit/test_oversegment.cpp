#include "seedgrow/errors.hpp"
#include "seedgrow/knn.hpp"
#include "seedgrow/oversegment.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

using namespace seedgrow;

namespace {

PointCloud grid(const Eigen::Vector3f& origin, int nx, int ny, int nz, float step) {
  PointCloud c;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < nz; ++z) c.positions.push_back(origin + step * Eigen::Vector3f(float(x), float(y), float(z)));
  return c;
}

std::map<std::pair<std::uint32_t, std::uint32_t>, double> brute_knn_edges(const PointCloud& c, int k) {
  const std::size_t n = c.size();
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::uint32_t>> d;
    const Eigen::Vector3d pi = c.positions[i].cast<double>();
    for (std::uint32_t j = 0; j < n; ++j)
      if (j != i) d.push_back({squared_distance(pi, c.positions[j].cast<double>()), j});
    std::sort(d.begin(), d.end());
    for (int r = 0; r < k; ++r) out[{std::min(i, d[r].second), std::max(i, d[r].second)}] = std::sqrt(d[r].first);
  }
  return out;
}

}  // namespace

TEST_CASE("kd-tree kNN equals brute force") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::Vector3d> pts(400);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  KnnIndex index(pts);
  std::vector<std::uint32_t> idx;
  std::vector<double> d2;
  for (int q = 0; q < 50; ++q) {
    Eigen::Vector3d query(u(rng), u(rng), u(rng));
    index.query(query, 7, idx, d2);
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t j = 0; j < pts.size(); ++j) all.push_back({squared_distance(query, pts[j]), j});
    std::sort(all.begin(), all.end());
    REQUIRE(idx.size() == 7);
    for (int r = 0; r < 7; ++r) {
      CHECK(idx[r] == all[r].second);
      CHECK(d2[r] == all[r].first);
    }
  }
}

TEST_CASE("three points, k=2: complete triangle") {
  PointCloud c;
  c.positions = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}};
  auto e = build_knn_graph(c, 2);
  REQUIRE(e.size() == 3);
  CHECK(e[0].weight == 1.0);
  CHECK(e[1].weight == doctest::Approx(2.0));
  CHECK(e[2].weight == doctest::Approx(std::sqrt(5.0)));
  for (auto& x : e) CHECK(x.a < x.b);
  CHECK_THROWS_AS(build_knn_graph(c, 3), ValidationError);
}

TEST_CASE("kNN graph equals the O(N^2) neighbor oracle") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  PointCloud c;
  for (int i = 0; i < 500; ++i) c.positions.emplace_back(u(rng), u(rng), u(rng));
  auto want = brute_knn_edges(c, 8);
  auto got = build_knn_graph(c, 8);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    auto it = want.find({got[i].a, got[i].b});
    REQUIRE(it != want.end());
    CHECK(got[i].weight == it->second);
    if (i > 0) CHECK(got[i - 1].weight <= got[i].weight);
  }
}

TEST_CASE("two separated clusters give two superpoints") {
  PointCloud c = grid({0, 0, 0}, 8, 8, 8, 0.01f);
  PointCloud b = grid({1.0f, 0, 0}, 8, 8, 8, 0.01f);
  c.positions.insert(c.positions.end(), b.positions.begin(), b.positions.end());
  auto part = oversegment(c, OversegConfig{});
  CHECK(part.count() == 2);
  CHECK(part.label(0) == 0);
  CHECK(part.label(600) == 1);
}

TEST_CASE("a uniform cluster is one superpoint at the default scale") {
  auto part = oversegment(grid({0, 0, 0}, 10, 10, 5, 0.01f), OversegConfig{});
  CHECK(part.count() == 1);
}

TEST_CASE("every superpoint reaches the size floor") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  PointCloud c;
  for (int i = 0; i < 3000; ++i) c.positions.emplace_back(u(rng), u(rng), 0.1f * u(rng));
  OversegConfig cfg;
  cfg.merge_threshold = 0.01;
  cfg.min_segment_size = 25;
  auto part = oversegment(c, cfg);
  CHECK(part.count() > 1);
  for (SuperpointId s = 0; s < part.count(); ++s) CHECK(part.size_of(s) >= 25);
  // ids dense and ordered by smallest member
  SuperpointId next = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto l = part.label(static_cast<PointIndex>(i));
    CHECK(l <= next);
    if (l == next) ++next;
  }
}

TEST_CASE("invalid overseg config") {
  OversegConfig cfg;
  cfg.merge_threshold = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
