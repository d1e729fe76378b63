#include "seedgrow/errors.hpp"
#include "seedgrow/semantic.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

using namespace seedgrow;

namespace {

// n points on a w x 1 strip; point i lands on pixel (i, 0) when visible.
ViewMapping strip(const std::string& id, const std::vector<std::uint8_t>& vis) {
  ViewMapping m;
  m.view_id = id;
  m.width = static_cast<int>(vis.size());
  m.height = 1;
  m.visible = vis;
  for (std::size_t i = 0; i < vis.size(); ++i) {
    m.pixel.push_back(vis[i] ? std::array<std::int32_t, 2>{static_cast<int>(i), 0} : std::array<std::int32_t, 2>{-1, -1});
    m.z.push_back(1.0);
  }
  return m;
}

PixelFeatureMap constant_map(const std::string& id, int w, std::vector<float> f) {
  PixelFeatureMap m{id, w, 1, f.size(), {}};
  for (int u = 0; u < w; ++u) m.values.insert(m.values.end(), f.begin(), f.end());
  return m;
}

PixelFeatureMap random_map(std::mt19937_64& rng, const std::string& id, int w, int h, std::size_t d) {
  std::normal_distribution<float> g;
  PixelFeatureMap m{id, w, h, d, std::vector<float>(static_cast<std::size_t>(w) * h * d)};
  for (auto& x : m.values) x = g(rng);
  return m;
}

}  // namespace

TEST_CASE("point feature from one view is that view's pixel feature") {
  PixelFeatureSource src{{constant_map("a", 3, {0.5f, -2.f})}};
  auto pf = aggregate_point_features({strip("a", {1, 0, 1})}, src);
  CHECK(pf.row(0)[0] == 0.5);
  CHECK(pf.row(0)[1] == -2.0);
  CHECK(pf.flagged == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(pf.row(1)[0] == 0.0);
}

TEST_CASE("opposite features cancel and are flagged") {
  PixelFeatureSource src{{constant_map("a", 1, {1.f, 2.f}), constant_map("b", 1, {-1.f, -2.f})}};
  auto pf = aggregate_point_features({strip("a", {1}), strip("b", {1})}, src);
  CHECK(pf.row(0)[0] == 0.0);
  CHECK(pf.flagged[0] == 1);
}

TEST_CASE("aggregation matches a loop oracle and commutes with view order") {
  std::mt19937_64 rng(3);
  const std::size_t n = 300, D = 6;
  const int W = 20, H = 15;
  std::vector<ViewMapping> maps;
  PixelFeatureSource src;
  for (int t = 0; t < 4; ++t) {
    ViewMapping m;
    m.view_id = "v" + std::to_string(t);
    m.width = W;
    m.height = H;
    for (std::size_t i = 0; i < n; ++i) {
      const bool vis = rng() % 3 != 0;
      m.visible.push_back(vis);
      m.pixel.push_back(vis ? std::array<std::int32_t, 2>{static_cast<int>(rng() % W), static_cast<int>(rng() % H)}
                            : std::array<std::int32_t, 2>{-1, -1});
      m.z.push_back(1.0);
    }
    maps.push_back(m);
    src.maps.push_back(random_map(rng, m.view_id, W, H, D));
  }
  auto pf = aggregate_point_features(maps, src);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(D, 0.0);
    int seen = 0;
    for (std::size_t t = 0; t < maps.size(); ++t) {
      if (!maps[t].visible[i]) continue;
      ++seen;
      const auto& fm = src.maps[t];
      for (std::size_t d = 0; d < D; ++d)
        sum[d] += fm.values[(static_cast<std::size_t>(maps[t].pixel[i][1]) * W + maps[t].pixel[i][0]) * D + d];
    }
    REQUIRE(static_cast<bool>(pf.flagged[i]) == (seen == 0));
    for (std::size_t d = 0; d < D; ++d) CHECK(std::abs(pf.row(i)[d] - (seen ? sum[d] / seen : 0.0)) < 1e-12);
  }
  std::vector<ViewMapping> rev(maps.rbegin(), maps.rend());
  auto pr = aggregate_point_features(rev, src);
  for (std::size_t k = 0; k < pf.values.size(); ++k) CHECK(std::abs(pr.values[k] - pf.values[k]) < 1e-12);
}

TEST_CASE("proposal feature") {
  PointFeatures pf{2, {1, 0, 1, 0, 0, 1, 0, 1, 9, 9}, {0, 0, 0, 0, 1}};
  PointSetInstance all_e1;
  all_e1.points = {0, 1};
  CHECK(proposal_feature(all_e1, pf) == std::vector<double>{1.0, 0.0});
  PointSetInstance half;
  half.points = {0, 1, 2, 3, 4};  // point 4 flagged, excluded
  CHECK(proposal_feature(half, pf) == std::vector<double>{0.5, 0.5});
  PointSetInstance flagged;
  flagged.points = {4};
  CHECK_THROWS_AS(proposal_feature(flagged, pf), PipelineError);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  PointFeatures r{3, std::vector<double>(300), std::vector<std::uint8_t>(100)};
  for (auto& x : r.values) x = g(rng);
  for (auto& f : r.flagged) f = rng() % 4 == 0;
  PointSetInstance p;
  for (PointIndex i = 0; i < 100; ++i)
    if (rng() % 2) p.points.push_back(i);
  std::vector<double> want(3, 0.0);
  int used = 0;
  for (auto i : p.points) {
    if (r.flagged[i]) continue;
    ++used;
    for (int d = 0; d < 3; ++d) want[static_cast<std::size_t>(d)] += r.values[i * 3 + static_cast<std::size_t>(d)];
  }
  auto got = proposal_feature(p, r);
  for (int d = 0; d < 3; ++d) CHECK(std::abs(got[static_cast<std::size_t>(d)] - want[static_cast<std::size_t>(d)] / used) < 1e-12);
}

TEST_CASE("ranking by query") {
  std::vector<std::vector<double>> feats{{1, 0, 0}, {0.6, 0.8, 0}, {0, 0, 2}};
  TextQuery q{"chair", {0.6, 0.8, 0}};
  auto r = rank_by_query(feats, q);
  CHECK(r[0].proposal == 1);
  CHECK(r[0].score == doctest::Approx(1.0));
  CHECK(r[1].proposal == 0);
  CHECK(r[2].proposal == 2);

  TextQuery orth{"none", {0, 0, 0, 1}};
  std::vector<std::vector<double>> f4{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}};
  auto o = rank_by_query(f4, orth);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(o[k].proposal == k);
    CHECK(o[k].score == 0.0);
  }
  CHECK_THROWS_AS(rank_by_query(feats, orth), ValidationError);
  TextQuery zero{"z", {0, 0, 0}};
  CHECK_THROWS(zero.validate());
}

TEST_CASE("positive scaling leaves the ranking unchanged") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> feats(20, std::vector<double>(8));
  for (auto& f : feats)
    for (auto& x : f) x = g(rng);
  TextQuery q{"q", std::vector<double>(8)};
  for (auto& x : q.embedding) x = g(rng);
  auto base = rank_by_query(feats, q);
  for (auto& f : feats)
    for (auto& x : f) x *= 3.7;
  auto scaled = rank_by_query(feats, q);
  for (std::size_t k = 0; k < base.size(); ++k) CHECK(scaled[k].proposal == base[k].proposal);
}

TEST_CASE("pixel features and queries round-trip through files") {
  seedgrow::testing::TempDir dir("semantic");
  std::mt19937_64 rng(7);
  auto m = random_map(rng, "cam0", 5, 4, 3);
  write_pixel_features(dir / "cam0.pf3d", m);
  auto back = read_pixel_features(dir / "cam0.pf3d", "cam0");
  CHECK(back.values == m.values);
  CHECK(back.width == 5);
  CHECK(back.height == 4);
  CHECK(back.dim == 3);

  std::vector<TextQuery> qs{{"lamp", {0.1, 0.2}}, {"desk", {1.0, -1.0}}};
  write_queries(dir / "q.json", qs);
  auto rq = read_queries(dir / "q.json");
  REQUIRE(rq.size() == 2);
  CHECK(rq[1].query == "desk");
  CHECK(rq[1].embedding == qs[1].embedding);

  std::ofstream(dir / "bad.pf3d") << "XXXX";
  CHECK_THROWS_AS(read_pixel_features(dir / "bad.pf3d", "x"), ParseError);
}
