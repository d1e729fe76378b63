#include "seedgrow/errors.hpp"
#include "seedgrow/pipeline.hpp"
#include "seedgrow/scene_io.hpp"
#include "seedgrow/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <omp.h>

#include <fstream>

using namespace seedgrow;
using seedgrow::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Fixture {
  SynthScene s;
  RenderedMasks r;
};

Fixture small_scene(std::uint64_t seed) {
  SynthConfig sc;
  sc.rng_seed = seed;
  sc.object_count = 4;
  sc.points_per_object = 3000;
  sc.background_points = 12000;
  sc.camera_count = 8;
  sc.corruption.merge_mask_probability = 0.3;
  Fixture f{generate_scene(sc), {}};
  f.r = render_masks(f.s, sc);
  return f;
}

PipelineConfig half_views() {
  PipelineConfig cfg;
  cfg.view_fraction = 0.5;
  return cfg;
}

}  // namespace

TEST_CASE("default configuration") {
  PipelineConfig cfg;
  CHECK(cfg.mapping.tau_vis == 0.1);
  CHECK(cfg.filter.score_threshold == 0.2);
  CHECK(cfg.cluster.min_cluster_size == 30);
  CHECK(cfg.merge.thresholds == std::vector<double>{0.7, 0.6, 0.5, 0.4, 0.3});
  CHECK(cfg.view_fraction == 0.10);
}

TEST_CASE("view selection") {
  CHECK(select_views(20, 0.1, false, 0) == std::vector<std::size_t>{0, 10});
  CHECK(select_views(10, 0.25, false, 0) == std::vector<std::size_t>{0, 3, 6});
  CHECK(select_views(3, 1.0, false, 0) == std::vector<std::size_t>{0, 1, 2});
  CHECK(select_views(1, 0.01, false, 0) == std::vector<std::size_t>{0});
  auto r = select_views(50, 0.2, true, 9);
  CHECK(r.size() == 10);
  CHECK(std::is_sorted(r.begin(), r.end()));
  CHECK(select_views(50, 0.2, true, 9) == r);
  CHECK(select_views(50, 0.2, true, 10) != r);
}

TEST_CASE("config JSON round trip and validation") {
  PipelineConfig cfg;
  cfg.view_fraction = 0.3;
  cfg.mapping.strategy = VisibilityStrategy::min_depth;
  cfg.merge.thresholds = {0.8, 0.4};
  cfg.use_split = false;
  const auto j = cfg.to_json();
  CHECK(PipelineConfig::from_json(j).to_json() == j);
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json{{"view_fraction", 0.0}}).validate(), ConfigError);
  CHECK_THROWS(PipelineConfig::from_json(nlohmann::json{{"bogus", 1}}));
  auto partial = PipelineConfig::from_json(nlohmann::json{{"filter", {{"score_threshold", 0.3}}}});
  CHECK(partial.filter.score_threshold == 0.3);
  CHECK(partial.mapping.tau_vis == 0.1);
}

TEST_CASE("run_pipeline equals the composition of single stages") {
  auto f = small_scene(31);
  const auto cfg = half_views();
  TempDir all("pipe_all"), steps("pipe_steps");
  auto res = run_pipeline(f.s.scene, f.r.masks, cfg, all.path());
  for (auto st : kAllStages) run_stage_from_checkpoints(st, f.s.scene, f.r.masks, cfg, steps.path());
  for (const char* file : {"lift/lifted.in3d", "split/seeds.in3d", "grow/grown.in3d", "merge/merged.in3d",
                           "merge/merged.json", "filter/retained.json"})
    CHECK(slurp(all / file) == slurp(steps / file));

  write_pipeline_output(all / "out.in3d", res, f.s.scene.cloud.size());
  PipelineState st;
  load_state(PipelineStage::merge, st, f.s.scene, f.r.masks, steps.path());
  PipelineResult from_steps;
  from_steps.state = st;
  write_pipeline_output(steps / "out.in3d", from_steps, f.s.scene.cloud.size());
  CHECK(slurp(all / "out.in3d") == slurp(steps / "out.in3d"));
  CHECK(res.timings.size() == 6);
}

TEST_CASE("a stage without its upstream checkpoint names the stage to run") {
  auto f = small_scene(32);
  TempDir dir("pipe_missing");
  run_stage_from_checkpoints(PipelineStage::map, f.s.scene, f.r.masks, half_views(), dir.path());
  try {
    run_stage_from_checkpoints(PipelineStage::lift, f.s.scene, f.r.masks, half_views(), dir.path());
    FAIL("expected PipelineError");
  } catch (const PipelineError& e) {
    CHECK(e.stage() == "lift");
    CHECK(std::string(e.what()).find("'filter'") != std::string::npos);
  }
  CHECK(std::filesystem::exists(dir / "map/done.json"));
  CHECK_THROWS_AS(run_stage_from_checkpoints(PipelineStage::map, f.s.scene, f.r.masks, half_views(), {}), ConfigError);
}

TEST_CASE("map stage writes depth and visibility dumps") {
  auto f = small_scene(33);
  TempDir dir("pipe_map");
  run_stage_from_checkpoints(PipelineStage::map, f.s.scene, f.r.masks, half_views(), dir.path());
  const auto& v = f.s.scene.views[0];
  auto m = read_view_mapping(dir / "map" / (v.view_id + ".vmap"), v.view_id);
  auto want = build_mapping(f.s.scene.cloud, v, MappingConfig{});
  CHECK(m.visible == want.visible);
  CHECK(m.depth == want.depth);
  int w = 0, h = 0;
  auto d = read_depth_dump(dir / "map" / (v.view_id + ".db3d"), w, h);
  CHECK(w == v.width);
  CHECK(d.size() == want.depth.size());
}

TEST_CASE("output does not depend on the worker count") {
  auto f = small_scene(34);
  auto cfg = half_views();
  cfg.workers = 1;
  TempDir dir("pipe_workers");
  write_pipeline_output(dir / "a.in3d", run_pipeline(f.s.scene, f.r.masks, cfg), f.s.scene.cloud.size());
  cfg.workers = 3;
  write_pipeline_output(dir / "b.in3d", run_pipeline(f.s.scene, f.r.masks, cfg), f.s.scene.cloud.size());
  CHECK(slurp(dir / "a.in3d") == slurp(dir / "b.in3d"));
  apply_workers(0);
}

TEST_CASE("single-view scene degenerates gracefully") {
  auto f = small_scene(35);
  SceneBundle one = f.s.scene;
  one.views.resize(1);
  MaskSet masks;
  for (const auto& m : f.r.clean)
    if (m.view_id == one.views[0].view_id) masks.push_back(m);
  REQUIRE(!masks.empty());
  PipelineConfig cfg;
  cfg.view_fraction = 1.0;
  auto res = run_pipeline(one, masks, cfg);
  // one view: nothing to merge, so every grown proposal survives
  CHECK(res.state.merged.instances.size() == res.state.grown.size());
  for (const auto& p : res.state.merged.instances) CHECK(p.confidence == 1.0);
}

TEST_CASE("stage toggles") {
  auto f = small_scene(36);
  auto cfg = half_views();
  cfg.use_filter = false;
  cfg.use_split = false;
  cfg.use_grow = false;
  auto res = run_pipeline(f.s.scene, f.r.masks, cfg);
  std::size_t in_views = 0;
  for (const auto& m : f.r.masks)
    for (const auto& id : res.state.view_ids) in_views += m.view_id == id;
  CHECK(res.state.retained.size() == in_views);
  CHECK(res.state.seeds.size() == res.state.lifted.size());
  REQUIRE(res.state.grown.size() == res.state.seeds.size());
  for (std::size_t k = 0; k < res.state.seeds.size(); ++k) CHECK(res.state.grown[k].points == res.state.seeds[k].points);
}
