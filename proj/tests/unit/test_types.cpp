#include "seedgrow/errors.hpp"
#include "seedgrow/types.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace seedgrow;

namespace {

SceneBundle minimal_scene() {
  SceneBundle s;
  s.cloud.positions = {{0, 0, 1}, {0.1f, 0, 1}, {0, 0.1f, 1}};
  s.views = {seedgrow::testing::make_view("v0", 8, 8, 4.0)};
  s.superpoints = SuperpointPartition::from_labels({0, 0, 0});
  s.features.rows = 1;
  s.features.dim = 2;
  s.features.values = {1.f, 0.f};
  return s;
}

}  // namespace

TEST_CASE("minimal scene validates") {
  auto s = minimal_scene();
  CHECK_NOTHROW(s.validate());
  CHECK(s.cloud.size() == 3);
  CHECK(s.superpoints.count() == 1);
  CHECK(s.views.size() == 1);
  CHECK(s.find_view("v0") != nullptr);
  CHECK(s.find_view("nope") == nullptr);
}

TEST_CASE("scene invariants are enforced") {
  SUBCASE("label out of range") {
    CHECK_THROWS_AS(SuperpointPartition({0, 1, 1}, 1), ValidationError);
  }
  SUBCASE("unused label") {
    CHECK_THROWS_AS(SuperpointPartition({0, 2, 2}, 3), ValidationError);
  }
  SUBCASE("feature rows") {
    auto s = minimal_scene();
    s.features.rows = 2;
    s.features.values.resize(4);
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("duplicate view ids") {
    auto s = minimal_scene();
    s.views.push_back(s.views[0]);
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("non-orthonormal pose") {
    auto s = minimal_scene();
    s.views[0].pose(0, 0) = 2.0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("non-finite point") {
    auto s = minimal_scene();
    s.cloud.positions[1].x() = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
}

TEST_CASE("partition members") {
  auto p = SuperpointPartition::from_labels({1, 0, 1, 2, 0});
  CHECK(p.count() == 3);
  auto m0 = p.members(0);
  CHECK(std::vector<PointIndex>(m0.begin(), m0.end()) == std::vector<PointIndex>{1, 4});
  auto m1 = p.members(1);
  CHECK(std::vector<PointIndex>(m1.begin(), m1.end()) == std::vector<PointIndex>{0, 2});
  CHECK(p.size_of(2) == 1);
}

TEST_CASE("set utilities against std::set") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    std::set<PointIndex> a, b;
    for (int i = 0; i < 40; ++i) {
      a.insert(static_cast<PointIndex>(rng() % 60));
      b.insert(static_cast<PointIndex>(rng() % 60));
    }
    std::vector<PointIndex> va(a.begin(), a.end()), vb(b.begin(), b.end());
    std::set<PointIndex> u = a;
    u.insert(b.begin(), b.end());
    std::size_t inter = 0;
    for (auto x : a) inter += b.count(x);
    CHECK(intersection_size(va, vb) == inter);
    CHECK(set_union(va, vb) == std::vector<PointIndex>(u.begin(), u.end()));
    CHECK(set_iou(va, vb) == doctest::Approx(double(inter) / double(u.size())));
  }
  CHECK(set_iou({}, {}) == 0.0);
}

TEST_CASE("view-support confidence") {
  CHECK(view_support_confidence(3, 10) == doctest::Approx(0.3));
  CHECK(view_support_confidence(0, 4) == 0.25);
  CHECK(view_support_confidence(7, 4) == 1.0);
}

TEST_CASE("stage names") {
  for (auto s : {Stage::lifted, Stage::seed, Stage::grown, Stage::merged}) CHECK(stage_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(stage_from_string("bogus"), ValidationError);
}
