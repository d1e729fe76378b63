#include "seedgrow/errors.hpp"
#include "seedgrow/png16.hpp"
#include "seedgrow/scene_io.hpp"
#include "seedgrow/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <numeric>
#include <random>

using namespace seedgrow;
using seedgrow::testing::TempDir;

namespace {

PointSetInstance inst(std::vector<PointIndex> pts, double conf) {
  PointSetInstance p;
  p.points = std::move(pts);
  p.confidence = conf;
  p.provenance.views = {"v0"};
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("PLY round trip") {
  TempDir dir("ply");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-5.f, 5.f), c(0.f, 1.f);
  PointCloud cloud;
  for (int i = 0; i < 1000; ++i) {
    cloud.positions.emplace_back(u(rng), u(rng), u(rng));
    cloud.colors.emplace_back(c(rng), c(rng), c(rng));
  }
  write_ply(dir / "a.ply", cloud);
  auto back = read_ply(dir / "a.ply");
  CHECK(back.positions == cloud.positions);
  REQUIRE(back.has_colors());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    CHECK((back.colors[i] - cloud.colors[i]).cwiseAbs().maxCoeff() <= 1.0f / 255.0f);
  cloud.colors.clear();
  write_ply(dir / "b.ply", cloud);
  CHECK_FALSE(read_ply(dir / "b.ply").has_colors());
}

TEST_CASE("malformed PLY reports the problem") {
  TempDir dir("badply");
  std::ofstream(dir / "ascii.ply") << "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n";
  CHECK_THROWS_AS(read_ply(dir / "ascii.ply"), ParseError);
  std::ofstream(dir / "short.ply") << "ply\nformat binary_little_endian 1.0\nelement vertex 5\nproperty float x\n"
                                      "property float y\nproperty float z\nend_header\n";
  try {
    read_ply(dir / "short.ply");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("short.ply") != std::string::npos);
  }
  CHECK_THROWS_AS(read_ply(dir / "missing.ply"), IoError);
}

TEST_CASE("superpoint and feature files") {
  TempDir dir("sp");
  auto part = SuperpointPartition::from_labels({0, 2, 1, 1, 0});
  write_superpoints(dir / "s.sp3d", part);
  CHECK(read_superpoints(dir / "s.sp3d").labels() == part.labels());

  // label id == U is rejected on load
  std::vector<std::int32_t> bad{0, 1, 2};
  write_label_array(dir / "bad.sp3d", kSuperpointMagic, bad);
  CHECK_NOTHROW(read_superpoints(dir / "bad.sp3d"));
  std::vector<std::int32_t> gap{0, 3, 1};
  write_label_array(dir / "gap.sp3d", kSuperpointMagic, gap);
  CHECK_THROWS_AS(read_superpoints(dir / "gap.sp3d"), ValidationError);

  FeatureTable t{3, 2, {1, 2, 3, 4, 5, 6}};
  write_features(dir / "f.ft3d", t);
  auto tb = read_features(dir / "f.ft3d");
  CHECK(tb.rows == 3);
  CHECK(tb.values == t.values);
}

TEST_CASE("16-bit PNG round trip") {
  TempDir dir("png");
  LabelRaster r{7, 5, std::vector<std::uint16_t>(35)};
  std::iota(r.values.begin(), r.values.end(), 60000);
  write_png16(dir / "r.png", r);
  auto b = read_png16(dir / "r.png");
  CHECK(b.width == 7);
  CHECK(b.values == r.values);
}

TEST_CASE("masks round trip including overlaps") {
  TempDir dir("masks");
  std::vector<CameraView> views{seedgrow::testing::make_view("a", 6, 4, 3.0), seedgrow::testing::make_view("b", 6, 4, 3.0)};
  Mask2D m1{"a", 17, 6, 4, std::vector<std::uint8_t>(24, 0)};
  Mask2D m2{"a", 23, 6, 4, std::vector<std::uint8_t>(24, 0)};
  Mask2D m3{"b", 5, 6, 4, std::vector<std::uint8_t>(24, 0)};
  for (int p = 0; p < 12; ++p) m1.pixels[static_cast<std::size_t>(p)] = 1;
  for (int p = 8; p < 20; ++p) m2.pixels[static_cast<std::size_t>(p)] = 1;  // overlaps m1
  m3.pixels[23] = 1;
  write_masks(dir.path(), {m1, m2, m3}, views);
  auto back = read_masks(dir.path(), views);
  REQUIRE(back.size() == 3);
  CHECK(back[0].mask_id == 17);
  CHECK(back[0].pixels == m1.pixels);
  CHECK(back[1].pixels == m2.pixels);
  CHECK(back[2].view_id == "b");
  CHECK(back[2].pixels == m3.pixels);

  // Without sidecars the raster alone defines the masks.
  fs::remove(dir / "a.masks.json");
  fs::remove(dir / "b.masks.json");
  auto raw = read_masks(dir.path(), views);
  REQUIRE(raw.size() == 3);
  CHECK(raw[2].mask_id == default_mask_id(1, 1));
}

TEST_CASE("cameras round trip") {
  TempDir dir("cams");
  std::mt19937_64 rng(2);
  std::vector<CameraView> views{seedgrow::testing::make_view("x", 10, 8, 7.5, seedgrow::testing::random_pose(rng, 1.0))};
  write_cameras(dir / "c.json", views);
  auto b = read_cameras(dir / "c.json");
  REQUIRE(b.size() == 1);
  CHECK(b[0].view_id == "x");
  CHECK(b[0].pose == views[0].pose);
  CHECK(b[0].intrinsics == views[0].intrinsics);
  std::ofstream(dir / "bad.json") << "[{\"view_id\": \"x\"}]";
  CHECK_THROWS(read_cameras(dir / "bad.json"));
}

TEST_CASE("instance labels: disjoint and overlapping proposals") {
  ProposalSet two;
  two.instances = {inst({0, 1, 2}, 0.5), inst({5, 6}, 0.9)};
  auto labels = resolve_instance_labels(two, 10);
  CHECK(labels == std::vector<std::int32_t>{1, 1, 1, -1, -1, 0, 0, -1, -1, -1});

  ProposalSet overlap;
  overlap.instances = {inst({0, 1, 2, 3}, 0.5), inst({2, 3, 4}, 0.9)};
  std::size_t contested = 0;
  auto ol = resolve_instance_labels(overlap, 6, &contested);
  CHECK(ol == std::vector<std::int32_t>{1, 1, 0, 0, 0, -1});
  CHECK(contested == 2);
}

TEST_CASE("instance file round trip") {
  TempDir dir("inst");
  ProposalSet p;
  p.view_count = 4;
  p.instances = {inst({0, 1, 2, 3}, 0.5), inst({2, 3, 4}, 0.75), inst({8}, 0.25)};
  auto summary = write_instances(dir / "i.in3d", p, 10);
  CHECK(summary.contested_points == 2);
  auto back = read_instances(dir / "i.in3d");
  REQUIRE(back.instances.size() == 3);
  // ids follow confidence order; overlaps resolved to the higher confidence
  CHECK(back.instances[0].points == std::vector<PointIndex>{2, 3, 4});
  CHECK(back.instances[1].points == std::vector<PointIndex>{0, 1});
  CHECK(back.instances[1].confidence == 0.5);

  write_instances(dir / "x.in3d", p, 10, true);
  auto exact = read_instances(dir / "x.in3d");
  REQUIRE(exact.instances.size() == 3);
  CHECK(exact.instances[1].points == std::vector<PointIndex>{0, 1, 2, 3});
  CHECK(exact.view_count == 4);
}

TEST_CASE("synthetic scene round-trips bit for bit") {
  TempDir dir("synthrt");
  SynthConfig sc;
  sc.rng_seed = 3;
  sc.object_count = 3;
  sc.points_per_object = 2000;
  sc.background_points = 8000;
  sc.camera_count = 5;
  auto s = generate_scene(sc);
  auto r = render_masks(s, sc);
  write_synth_scene(dir.path(), s, sc, r.masks);
  auto paths = ScenePaths::in_directory(dir.path());
  auto back = load_scene(paths);
  CHECK(back.cloud.positions == s.scene.cloud.positions);
  CHECK(back.superpoints.labels() == s.scene.superpoints.labels());
  CHECK(back.features.values == s.scene.features.values);
  REQUIRE(back.views.size() == s.scene.views.size());
  for (std::size_t k = 0; k < back.views.size(); ++k) {
    CHECK(back.views[k].pose == s.scene.views[k].pose);
    CHECK(back.views[k].intrinsics == s.scene.views[k].intrinsics);
  }
  auto masks = read_masks(paths.masks, back.views);
  REQUIRE(masks.size() == r.masks.size());
  for (std::size_t k = 0; k < masks.size(); ++k) {
    CHECK(masks[k].mask_id == r.masks[k].mask_id);
    CHECK(masks[k].pixels == r.masks[k].pixels);
  }
  CHECK(read_label_array(dir / "gt.in3d", kInstanceMagic) == s.gt.instance);

  // saving the loaded bundle reproduces the files byte for byte
  TempDir again("synthrt2");
  save_scene(ScenePaths::in_directory(again.path()), back);
  for (const char* f : {"points.ply", "cameras.json", "superpoints.sp3d", "features.ft3d"})
    CHECK(slurp(again / f) == slurp(dir / f));
}
