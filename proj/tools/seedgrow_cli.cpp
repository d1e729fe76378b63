#include "seedgrow/errors.hpp"
#include "seedgrow/evaluation.hpp"
#include "seedgrow/pipeline.hpp"
#include "seedgrow/scene_io.hpp"
#include "seedgrow/semantic.hpp"
#include "seedgrow/synth.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace seedgrow;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitPipeline = 3;

// Flags shared by every pipeline subcommand; unset flags leave the config
// file (or the defaults) alone.
struct PipelineFlags {
  std::string config;
  std::optional<double> view_fraction;
  std::optional<double> tau_vis;
  std::optional<double> cmin;
  std::optional<int> min_cluster_size;
  std::string merge_schedule;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string checkpoint_dir;
  std::string visibility;
  std::vector<std::string> skip;

  void attach(CLI::App* app, bool checkpoint_required) {
    app->add_option("--config", config, "JSON pipeline config");
    app->add_option("--views-fraction", view_fraction, "fraction of views used, in (0,1]");
    app->add_option("--tau-vis", tau_vis, "occlusion tolerance (m)");
    app->add_option("--cmin", cmin, "co-occurrence score threshold");
    app->add_option("--min-cluster-size", min_cluster_size, "HDBSCAN min cluster size");
    app->add_option("--merge-schedule", merge_schedule, "comma-separated decreasing IoU thresholds");
    app->add_option("--seed", seed, "view sampling seed");
    app->add_option("--workers", workers, "OpenMP threads (0: default)");
    app->add_option("--visibility", visibility, "naive | min_depth | occlusion_aware");
    app->add_option("--skip", skip, "disable stages: filter, split, grow");
    auto* cp = app->add_option("--checkpoint-dir", checkpoint_dir, "stage checkpoint directory");
    if (checkpoint_required) cp->required();
  }

  PipelineConfig build() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : PipelineConfig::load(config);
    if (view_fraction) cfg.view_fraction = *view_fraction;
    if (tau_vis) cfg.mapping.tau_vis = *tau_vis;
    if (cmin) cfg.filter.score_threshold = *cmin;
    if (min_cluster_size) cfg.cluster.min_cluster_size = *min_cluster_size;
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (!visibility.empty()) cfg.mapping.strategy = visibility_strategy_from_string(visibility);
    if (!merge_schedule.empty()) {
      cfg.merge.thresholds.clear();
      std::stringstream ss(merge_schedule);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          std::size_t used = 0;
          cfg.merge.thresholds.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw ConfigError("--merge-schedule: '" + tok + "' is not a number");
        }
      }
    }
    for (const auto& s : skip) {
      if (s == "filter") cfg.use_filter = false;
      else if (s == "split") cfg.use_split = false;
      else if (s == "grow") cfg.use_grow = false;
      else throw ConfigError("--skip: unknown stage '" + s + "' (filter, split or grow)");
    }
    cfg.validate();
    return cfg;
  }
};

struct SceneFlags {
  std::string scene;
  std::string masks;

  void attach(CLI::App* app) {
    app->add_option("--scene", scene, "scene directory (points.ply, cameras.json, ...)")->required();
    app->add_option("--masks", masks, "mask directory (default: <scene>/masks)");
  }
  SceneBundle load() const { return load_scene(ScenePaths::in_directory(scene)); }
  MaskSet load_masks(const SceneBundle& s) const {
    return read_masks(masks.empty() ? ScenePaths::in_directory(scene).masks : fs::path(masks), s.views);
  }
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seedgrow: training-free 3D instance segmentation from multi-view 2D masks"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene with ground truth");
  std::string synth_out, synth_config;
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> synth_objects, synth_cameras;
  std::optional<double> synth_merge, synth_split, synth_feature_noise;
  std::optional<int> synth_boundary, synth_clutter;
  bool synth_duplicate = false, synth_pixfeat = false;
  double synth_pixel_noise = 0.0;
  synth->add_option("--out", synth_out, "output scene directory")->required();
  synth->add_option("--config", synth_config, "JSON synth config");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--objects", synth_objects, "object count");
  synth->add_option("--cameras", synth_cameras, "camera count");
  synth->add_option("--merge-prob", synth_merge, "per-view probability of one merged mask");
  synth->add_option("--split-prob", synth_split, "per-mask probability of an over-segmenting cut");
  synth->add_option("--boundary-noise", synth_boundary, "max dilate/erode radius (px)");
  synth->add_option("--clutter", synth_clutter, "background clutter masks per view");
  synth->add_option("--feature-noise", synth_feature_noise, "superpoint feature noise sigma");
  synth->add_flag("--duplicate", synth_duplicate, "two distant objects share one appearance");
  synth->add_flag("--pixel-features", synth_pixfeat, "also write pixfeat/ and queries.json");
  synth->add_option("--pixel-noise", synth_pixel_noise, "pixel feature noise sigma");

  // single stages
  std::vector<std::pair<CLI::App*, PipelineStage>> stage_cmds;
  PipelineFlags stage_flags;
  SceneFlags stage_scene;
  for (auto st : kAllStages) {
    auto* c = app.add_subcommand(std::string(to_string(st)), "run the " + std::string(to_string(st)) +
                                                                  " stage against --checkpoint-dir");
    stage_flags.attach(c, true);
    stage_scene.attach(c);
    stage_cmds.emplace_back(c, st);
  }

  // run
  auto* run = app.add_subcommand("run", "run every stage and write instances");
  PipelineFlags run_flags;
  SceneFlags run_scene;
  std::string run_out;
  run_flags.attach(run, false);
  run_scene.attach(run);
  run->add_option("--out", run_out, "instance label file (default: <scene>/instances.in3d)");

  // eval
  auto* eval = app.add_subcommand("eval", "AP of an instance file against ground truth");
  std::string eval_pred, eval_gt, eval_out, eval_csv;
  eval->add_option("--pred", eval_pred, "predicted instance file")->required();
  eval->add_option("--gt", eval_gt, "ground-truth instance file")->required();
  eval->add_option("--out", eval_out, "report JSON (default: stdout)");
  eval->add_option("--csv", eval_csv, "per-threshold AP CSV");

  // occlude
  auto* occ = app.add_subcommand("occlude", "drop a percentage of every mask's pixels");
  SceneFlags occ_scene;
  std::string occ_out;
  double occ_percent = 0.0;
  std::uint64_t occ_seed = 0;
  occ_scene.attach(occ);
  occ->add_option("--out", occ_out, "output mask directory")->required();
  occ->add_option("--percent", occ_percent, "percentage of pixels dropped per mask")->required();
  occ->add_option("--seed", occ_seed, "drop seed");

  // search
  auto* search = app.add_subcommand("search", "rank instances against text-query embeddings");
  SceneFlags search_scene;
  PipelineFlags search_flags;
  std::string search_instances, search_pixfeat, search_queries, search_out;
  std::size_t search_top = 5;
  search_scene.attach(search);
  search_flags.attach(search, false);
  search->add_option("--instances", search_instances, "instance file")->required();
  search->add_option("--pixfeat", search_pixfeat, "pixel feature directory (default: <scene>/pixfeat)");
  search->add_option("--queries", search_queries, "query JSON (default: <scene>/queries.json)");
  search->add_option("--out", search_out, "ranking JSON (default: stdout)");
  search->add_option("--top", search_top, "entries kept per query");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*synth) {
      SynthConfig cfg;
      if (!synth_config.empty()) {
        std::ifstream in(synth_config);
        if (!in) throw IoError("cannot open " + synth_config);
        try {
          cfg = SynthConfig::from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
          throw ParseError(synth_config + ": byte " + std::to_string(e.byte) + ": " + e.what());
        }
      }
      if (synth_seed) cfg.rng_seed = *synth_seed;
      if (synth_objects) cfg.object_count = *synth_objects;
      if (synth_cameras) cfg.camera_count = *synth_cameras;
      if (synth_merge) cfg.corruption.merge_mask_probability = *synth_merge;
      if (synth_split) cfg.corruption.split_mask_probability = *synth_split;
      if (synth_boundary) cfg.corruption.boundary_noise_px = *synth_boundary;
      if (synth_clutter) cfg.corruption.clutter_masks_per_view = *synth_clutter;
      if (synth_feature_noise) cfg.corruption.feature_noise_sigma = *synth_feature_noise;
      if (synth_duplicate) cfg.corruption.duplicate_appearance = true;
      const auto scene = generate_scene(cfg);
      const auto masks = render_masks(scene, cfg);
      std::optional<PixelFeatureSource> pf;
      if (synth_pixfeat) pf = synthetic_pixel_features(scene, cfg, synth_pixel_noise, cfg.rng_seed + 1);
      write_synth_scene(synth_out, scene, cfg, masks.masks, pf ? &*pf : nullptr);
      spdlog::info("wrote {} points, {} views, {} masks to {}", scene.scene.cloud.size(), scene.scene.views.size(),
                   masks.masks.size(), synth_out);
      return 0;
    }

    for (const auto& [cmd, st] : stage_cmds) {
      if (!*cmd) continue;
      const auto cfg = stage_flags.build();
      const auto scene = stage_scene.load();
      const auto masks = stage_scene.load_masks(scene);
      run_stage_from_checkpoints(st, scene, masks, cfg, stage_flags.checkpoint_dir);
      spdlog::info("stage {} written to {}", to_string(st), (fs::path(stage_flags.checkpoint_dir) / std::string(to_string(st))).string());
      return 0;
    }

    if (*run) {
      const auto cfg = run_flags.build();
      const auto scene = run_scene.load();
      const auto masks = run_scene.load_masks(scene);
      const auto result = run_pipeline(scene, masks, cfg, run_flags.checkpoint_dir);
      const fs::path out = run_out.empty() ? fs::path(run_scene.scene) / "instances.in3d" : fs::path(run_out);
      write_pipeline_output(out, result, scene.cloud.size());
      spdlog::info("{} instances written to {}", result.state.merged.instances.size(), out.string());
      return 0;
    }

    if (*eval) {
      const auto pred = read_instances(eval_pred);
      const auto gt = read_label_array(eval_gt, kInstanceMagic);
      const auto report = evaluate(pred, gt);
      if (!eval_csv.empty()) write_ap_csv(eval_csv, report);
      if (eval_out.empty()) std::cout << report.to_json().dump(2) << '\n';
      else write_report_json(eval_out, report);
      spdlog::info("mAP {:.4f}  AP50 {:.4f}  AP25 {:.4f}", report.mAP, report.AP50, report.AP25);
      return 0;
    }

    if (*occ) {
      const auto scene = occ_scene.load();
      const auto masks = occ_scene.load_masks(scene);
      const auto dropped = patch_drop(masks, occ_percent, occ_seed);
      write_masks(occ_out, dropped, scene.views);
      spdlog::info("{} of {} masks kept after dropping {}% of pixels", dropped.size(), masks.size(), occ_percent);
      return 0;
    }

    if (*search) {
      const auto cfg = search_flags.build();
      const auto scene = search_scene.load();
      const fs::path pixdir = search_pixfeat.empty() ? fs::path(search_scene.scene) / "pixfeat" : fs::path(search_pixfeat);
      const fs::path qpath =
          search_queries.empty() ? fs::path(search_scene.scene) / "queries.json" : fs::path(search_queries);
      const auto source = load_pixel_features(pixdir, scene.views);
      if (source.maps.empty()) throw ValidationError("no pixel features in " + pixdir.string());
      std::vector<CameraView> views;
      for (const auto& m : source.maps) views.push_back(*scene.find_view(m.view_id));
      const auto mappings = build_mappings(scene.cloud, views, cfg.mapping);
      const auto point_features = aggregate_point_features(mappings, source);
      const auto proposals = read_instances(search_instances);
      std::vector<std::vector<double>> feats;
      std::vector<std::size_t> ids;
      for (std::size_t k = 0; k < proposals.instances.size(); ++k) {
        try {
          feats.push_back(proposal_feature(proposals.instances[k], point_features));
          ids.push_back(k);
        } catch (const PipelineError& e) {
          spdlog::warn("instance {} skipped: {}", k, e.what());
        }
      }
      nlohmann::json out = nlohmann::json::array();
      for (const auto& q : read_queries(qpath)) {
        const auto ranked = rank_by_query(feats, q);
        nlohmann::json hits = nlohmann::json::array();
        for (std::size_t r = 0; r < std::min(search_top, ranked.size()); ++r)
          hits.push_back({{"instance", ids[ranked[r].proposal]}, {"score", ranked[r].score}});
        out.push_back({{"query", q.query}, {"results", hits}});
      }
      if (search_out.empty()) std::cout << out.dump(2) << '\n';
      else write_json(search_out, out);
      return 0;
    }
  } catch (const PipelineError& e) {
    spdlog::error("pipeline error in stage '{}': {}", e.stage(), e.what());
    return kExitPipeline;
  } catch (const ParseError& e) {
    spdlog::error("parse error: {}", e.what());
    return kExitValidation;
  } catch (const ValidationError& e) {
    spdlog::error("validation error: {}", e.what());
    return kExitValidation;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitValidation;
  } catch (const IoError& e) {
    spdlog::error("i/o error: {}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitPipeline;
  }
  return 0;
}
