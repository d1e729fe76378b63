#include "seedgrow/pipeline.hpp"

#include "seedgrow/config_json.hpp"
#include "seedgrow/errors.hpp"
#include "seedgrow/scene_io.hpp"

#include <omp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

namespace seedgrow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(PipelineStage s) {
  switch (s) {
    case PipelineStage::map: return "map";
    case PipelineStage::filter: return "filter";
    case PipelineStage::lift: return "lift";
    case PipelineStage::split: return "split";
    case PipelineStage::grow: return "grow";
    case PipelineStage::merge: return "merge";
  }
  return "map";
}

PipelineStage pipeline_stage_from_string(std::string_view s) {
  for (auto st : kAllStages)
    if (to_string(st) == s) return st;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

void PipelineConfig::validate() const {
  mapping.validate();
  filter.validate();
  cluster.validate();
  grow.validate();
  merge.validate();
  eval.validate();
  if (!(view_fraction > 0.0 && view_fraction <= 1.0)) throw ConfigError("view_fraction must lie in (0, 1]");
  if (workers < 0) throw ConfigError("workers must be >= 0");
}

json PipelineConfig::to_json() const {
  return {{"mapping", seedgrow::to_json(mapping)},
          {"filter", seedgrow::to_json(filter)},
          {"cluster", seedgrow::to_json(cluster)},
          {"grow", seedgrow::to_json(grow)},
          {"merge_schedule", seedgrow::to_json(merge)},
          {"eval", {{"iou_thresholds", eval.iou_thresholds}}},
          {"view_fraction", view_fraction},
          {"seed", seed},
          {"random_view_sampling", random_view_sampling},
          {"stages", {{"filter", use_filter}, {"split", use_split}, {"grow", use_grow}}},
          {"workers", workers}};
}

PipelineConfig PipelineConfig::from_json(const json& j, const PipelineConfig& base) {
  reject_unknown_keys(j,
                      {"mapping", "filter", "cluster", "grow", "merge_schedule", "eval", "view_fraction", "seed",
                       "random_view_sampling", "stages", "workers"},
                      "config");
  PipelineConfig c = base;
  if (j.contains("mapping")) from_json_into(j.at("mapping"), c.mapping);
  if (j.contains("filter")) from_json_into(j.at("filter"), c.filter);
  if (j.contains("cluster")) from_json_into(j.at("cluster"), c.cluster);
  if (j.contains("grow")) from_json_into(j.at("grow"), c.grow);
  if (j.contains("merge_schedule")) from_json_into(j.at("merge_schedule"), c.merge);
  try {
    if (j.contains("eval")) {
      reject_unknown_keys(j.at("eval"), {"iou_thresholds"}, "eval");
      c.eval.iou_thresholds = j.at("eval").value("iou_thresholds", c.eval.iou_thresholds);
    }
    c.view_fraction = j.value("view_fraction", c.view_fraction);
    c.seed = j.value("seed", c.seed);
    c.random_view_sampling = j.value("random_view_sampling", c.random_view_sampling);
    if (j.contains("stages")) {
      const auto& s = j.at("stages");
      reject_unknown_keys(s, {"filter", "split", "grow"}, "stages");
      c.use_filter = s.value("filter", c.use_filter);
      c.use_split = s.value("split", c.use_split);
      c.use_grow = s.value("grow", c.use_grow);
    }
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::from_json(const json& j) { return from_json(j, PipelineConfig{}); }

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return from_json(j);
}

std::vector<std::size_t> select_views(std::size_t view_count, double fraction, bool random, std::uint64_t seed) {
  if (view_count == 0) throw ValidationError("scene has no views");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("view_fraction must lie in (0, 1]");
  // The epsilon keeps 0.1 * 20 from rounding up to 3.
  auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(view_count) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, view_count);
  std::vector<std::size_t> picked;
  if (random) {
    picked.resize(view_count);
    std::iota(picked.begin(), picked.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, view_count - 1);
      std::swap(picked[k], picked[pick(rng)]);
    }
    picked.resize(count);
    std::sort(picked.begin(), picked.end());
  } else {
    for (std::size_t k = 0; k < count; ++k) picked.push_back(k * view_count / count);
  }
  return picked;
}

void apply_workers(int workers) {
  if (workers > 0) omp_set_num_threads(workers);
}

namespace {

// Proposal order shared by memory and checkpoints: a checkpoint stores
// instances in confidence order, so every stage output is put in that order.
std::vector<PointSetInstance> canonical(std::vector<PointSetInstance> v, std::size_t view_count) {
  ProposalSet ps{std::move(v), view_count};
  const auto order = confidence_order(ps);
  std::vector<PointSetInstance> out;
  out.reserve(order.size());
  for (auto k : order) out.push_back(std::move(ps.instances[k]));
  return out;
}

std::vector<Seed> canonical(std::vector<Seed> seeds, std::size_t view_count) {
  const auto as = seeds_as_proposals(seeds, view_count);
  const auto order = confidence_order({as, view_count});
  std::vector<Seed> out;
  out.reserve(order.size());
  for (auto k : order) out.push_back(std::move(seeds[k]));
  return out;
}

fs::path stage_dir(const fs::path& root, PipelineStage s) { return root / std::string(to_string(s)); }

PipelineStage upstream_of(PipelineStage s) {
  return static_cast<PipelineStage>(static_cast<int>(s) - 1);
}

void require_upstream(PipelineStage stage, const fs::path& root) {
  if (stage == PipelineStage::map) return;
  const auto up = upstream_of(stage);
  const auto marker = stage_dir(root, up) / "done.json";
  if (!fs::exists(marker))
    throw PipelineError(std::string(to_string(stage)), "missing checkpoint " + stage_dir(root, up).string() +
                                                           "; run stage '" + std::string(to_string(up)) + "' first");
}

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const fs::path& path) {
  T v{};
  const auto at = in.tellg();
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path.string() + ": byte " + std::to_string(static_cast<long long>(at)) + ": truncated");
  return v;
}

ProposalSet as_set(const std::vector<PointSetInstance>& v, std::size_t T) { return {v, T}; }

}  // namespace

void write_view_mapping(const fs::path& path, const ViewMapping& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("VM3D", 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.height));
  put<std::uint64_t>(out, m.point_count());
  out.write(reinterpret_cast<const char*>(m.visible.data()), static_cast<std::streamsize>(m.visible.size()));
  out.write(reinterpret_cast<const char*>(m.pixel.data()),
            static_cast<std::streamsize>(m.pixel.size() * sizeof(m.pixel[0])));
  out.write(reinterpret_cast<const char*>(m.z.data()), static_cast<std::streamsize>(m.z.size() * sizeof(double)));
  put<std::uint64_t>(out, m.depth.size());
  out.write(reinterpret_cast<const char*>(m.depth.data()),
            static_cast<std::streamsize>(m.depth.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path.string());
}

ViewMapping read_view_mapping(const fs::path& path, const std::string& view_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != "VM3D") throw ParseError(path.string() + ": byte 0: bad magic");
  ViewMapping m;
  m.view_id = view_id;
  m.width = static_cast<int>(get<std::uint32_t>(in, path));
  m.height = static_cast<int>(get<std::uint32_t>(in, path));
  const auto n = get<std::uint64_t>(in, path);
  m.visible.resize(n);
  m.pixel.resize(n);
  m.z.resize(n);
  auto read_block = [&](void* dst, std::size_t bytes) {
    const auto at = in.tellg();
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (!in) throw ParseError(path.string() + ": byte " + std::to_string(static_cast<long long>(at)) + ": truncated");
  };
  read_block(m.visible.data(), n);
  read_block(m.pixel.data(), n * sizeof(m.pixel[0]));
  read_block(m.z.data(), n * sizeof(double));
  const auto d = get<std::uint64_t>(in, path);
  m.depth.resize(d);
  read_block(m.depth.data(), d * sizeof(double));
  return m;
}

void save_state(PipelineStage stage, const PipelineState& st, const fs::path& root) {
  const fs::path dir = stage_dir(root, stage);
  fs::create_directories(dir);
  const std::size_t T = st.view_ids.size();
  const std::size_t N = st.mappings.empty() ? 0 : st.mappings.front().point_count();
  switch (stage) {
    case PipelineStage::map:
      for (const auto& m : st.mappings) {
        write_view_mapping(dir / (m.view_id + ".vmap"), m);
        if (!m.depth.empty()) write_depth_dump(dir / (m.view_id + ".db3d"), m.width, m.height, m.depth);
      }
      {
        std::ofstream out(dir / "views.json");
        out << json({{"views", st.view_ids}}).dump(2) << '\n';
      }
      break;
    case PipelineStage::filter: {
      std::vector<MaskId> ids;
      for (const auto& m : st.retained) ids.push_back(m.mask_id);
      std::ofstream out(dir / "retained.json");
      out << json({{"retained", ids}}).dump(2) << '\n';
      break;
    }
    case PipelineStage::lift: write_instances(dir / "lifted.in3d", as_set(st.lifted, T), N, true); break;
    case PipelineStage::split:
      write_instances(dir / "seeds.in3d", as_set(seeds_as_proposals(st.seeds, T), T), N, true);
      break;
    case PipelineStage::grow: write_instances(dir / "grown.in3d", as_set(st.grown, T), N, true); break;
    case PipelineStage::merge: write_instances(dir / "merged.in3d", st.merged, N, true); break;
  }
  std::ofstream done(dir / "done.json");
  done << json({{"stage", to_string(stage)}}).dump() << '\n';
  if (!done) throw IoError("write failed: " + (dir / "done.json").string());
}

void load_state(PipelineStage stage, PipelineState& st, const SceneBundle& scene, const MaskSet& masks,
                const fs::path& root) {
  const fs::path dir = stage_dir(root, stage);
  auto read_json = [&](const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(p.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
    }
  };
  switch (stage) {
    case PipelineStage::map: {
      st.view_ids = read_json(dir / "views.json").at("views").get<std::vector<std::string>>();
      st.mappings.clear();
      for (const auto& id : st.view_ids) {
        if (!scene.find_view(id)) throw ValidationError("checkpoint view '" + id + "' is not in the scene");
        st.mappings.push_back(read_view_mapping(dir / (id + ".vmap"), id));
        if (st.mappings.back().point_count() != scene.cloud.size())
          throw ValidationError("checkpoint mapping of view '" + id + "' does not match the scene's point count");
      }
      break;
    }
    case PipelineStage::filter: {
      const auto ids = read_json(dir / "retained.json").at("retained").get<std::vector<MaskId>>();
      const std::unordered_set<MaskId> keep(ids.begin(), ids.end());
      st.retained.clear();
      for (const auto& m : masks)
        if (keep.count(m.mask_id)) st.retained.push_back(m);
      if (st.retained.size() != keep.size())
        throw ValidationError("filter checkpoint names masks that are not in the input");
      break;
    }
    case PipelineStage::lift: st.lifted = read_instances(dir / "lifted.in3d").instances; break;
    case PipelineStage::split: {
      st.seeds.clear();
      for (auto& inst : read_instances(dir / "seeds.in3d").instances) {
        Seed s;
        s.points = std::move(inst.points);
        s.origin_view = inst.provenance.views.empty() ? std::string{} : inst.provenance.views.front();
        s.origin_mask = inst.provenance.masks.empty() ? 0 : inst.provenance.masks.front();
        s.feature = seed_feature(s.points, scene.superpoints, scene.features);
        st.seeds.push_back(std::move(s));
      }
      break;
    }
    case PipelineStage::grow: st.grown = read_instances(dir / "grown.in3d").instances; break;
    case PipelineStage::merge: st.merged = read_instances(dir / "merged.in3d"); break;
  }
}

void run_stage(PipelineStage stage, const SceneBundle& scene, const MaskSet& masks, const PipelineConfig& cfg,
               PipelineState& st, const fs::path& checkpoint_dir) {
  cfg.validate();
  apply_workers(cfg.workers);
  const std::string name(to_string(stage));
  try {
    const std::size_t T = st.view_ids.size();
    switch (stage) {
      case PipelineStage::map: {
        const auto picked = select_views(scene.views.size(), cfg.view_fraction, cfg.random_view_sampling, cfg.seed);
        std::vector<CameraView> views;
        st.view_ids.clear();
        for (auto k : picked) {
          views.push_back(scene.views[k]);
          st.view_ids.push_back(scene.views[k].view_id);
        }
        st.mappings = build_mappings(scene.cloud, views, cfg.mapping);
        break;
      }
      case PipelineStage::filter: {
        const std::unordered_set<std::string> selected(st.view_ids.begin(), st.view_ids.end());
        MaskSet in_views;
        for (const auto& m : masks)
          if (selected.count(m.view_id)) in_views.push_back(m);
        if (in_views.empty()) throw PipelineError(name, "no masks in the selected views");
        const auto table = build_superpoint_table(in_views, st.mappings, scene.superpoints, cfg.filter.inclusion_fraction);
        st.scores = cooccurrence_scores(table, cfg.filter.normalization);
        st.scored_ids = table.mask_ids;
        // Scores need other views to vote; with a single view every mask passes.
        const bool filtering = cfg.use_filter && st.view_ids.size() >= 2;
        if (cfg.use_filter && !filtering) spdlog::warn("filter: single view, co-occurrence filter skipped");
        st.retained = filtering ? filter_masks(in_views, st.scores, cfg.filter) : in_views;
        if (!checkpoint_dir.empty()) {
          fs::create_directories(stage_dir(checkpoint_dir, stage));
          write_score_csv(stage_dir(checkpoint_dir, stage) / "scores.csv", table, st.scores,
                          filtering ? cfg.filter.score_threshold : 0.0);
        }
        spdlog::info("filter: kept {} of {} masks", st.retained.size(), in_views.size());
        break;
      }
      case PipelineStage::lift: {
        std::vector<PointSetInstance> flat;
        for (auto& per_view : lift_masks(st.retained, st.mappings))
          for (auto& inst : per_view) flat.push_back(std::move(inst));
        if (flat.empty()) throw PipelineError(name, "no mask lifted onto any point");
        st.lifted = canonical(std::move(flat), T);
        break;
      }
      case PipelineStage::split: {
        std::vector<Seed> seeds;
        if (cfg.use_split) {
          seeds = split_seeds(st.lifted, scene.cloud, cfg.cluster, scene.superpoints, scene.features);
        } else {
          for (const auto& inst : st.lifted) {
            Seed s;
            s.points = inst.points;
            s.origin_view = inst.provenance.views.front();
            s.origin_mask = inst.provenance.masks.front();
            s.feature = seed_feature(s.points, scene.superpoints, scene.features);
            seeds.push_back(std::move(s));
          }
        }
        if (seeds.empty()) throw PipelineError(name, "every lifted mask was classified as noise");
        st.seeds = canonical(std::move(seeds), T);
        spdlog::info("split: {} lifted masks -> {} seeds", st.lifted.size(), st.seeds.size());
        break;
      }
      case PipelineStage::grow: {
        std::vector<PointSetInstance> grown;
        if (cfg.use_grow) {
          const auto adjacency = build_superpoint_adjacency(scene.cloud, scene.superpoints, cfg.grow.adjacency_k);
          grown = grow_seeds(st.seeds, scene.superpoints, scene.features, adjacency, cfg.grow, T);
        } else {
          grown = seeds_as_proposals(st.seeds, T);
        }
        st.grown = canonical(std::move(grown), T);
        break;
      }
      case PipelineStage::merge: {
        auto merged = merge_views(st.grown, cfg.merge, T);
        merged.instances = canonical(std::move(merged.instances), T);
        st.merged = std::move(merged);
        spdlog::info("merge: {} proposals -> {} instances", st.grown.size(), st.merged.instances.size());
        break;
      }
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError&) {
    throw;
  } catch (const ParseError&) {
    throw;
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
  if (!checkpoint_dir.empty()) save_state(stage, st, checkpoint_dir);
}

void run_stage_from_checkpoints(PipelineStage stage, const SceneBundle& scene, const MaskSet& masks,
                                const PipelineConfig& cfg, const fs::path& checkpoint_dir) {
  if (checkpoint_dir.empty()) throw ConfigError("running a single stage needs --checkpoint-dir");
  require_upstream(stage, checkpoint_dir);
  PipelineState st;
  // Every stage needs the view selection; lift also needs the mappings.
  if (stage != PipelineStage::map) load_state(PipelineStage::map, st, scene, masks, checkpoint_dir);
  if (stage != PipelineStage::map && stage != PipelineStage::filter)
    load_state(upstream_of(stage), st, scene, masks, checkpoint_dir);
  run_stage(stage, scene, masks, cfg, st, checkpoint_dir);
}

PipelineResult run_pipeline(const SceneBundle& scene, const MaskSet& masks, const PipelineConfig& cfg,
                            const fs::path& checkpoint_dir) {
  cfg.validate();
  PipelineResult res;
  for (auto stage : kAllStages) {
    const auto t0 = std::chrono::steady_clock::now();
    run_stage(stage, scene, masks, cfg, res.state, checkpoint_dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.timings.push_back({std::string(to_string(stage)), secs});
    spdlog::info("stage {} took {:.3f} s", to_string(stage), secs);
  }
  resolve_instance_labels(res.state.merged, scene.cloud.size(), &res.contested_points);
  return res;
}

ProposalSet PipelineResult::resolved(std::size_t point_count) const {
  const auto labels = resolve_instance_labels(state.merged, point_count);
  const auto order = confidence_order(state.merged);
  std::vector<std::vector<PointIndex>> members(order.size());
  for (std::size_t p = 0; p < labels.size(); ++p)
    if (labels[p] >= 0) members[static_cast<std::size_t>(labels[p])].push_back(static_cast<PointIndex>(p));
  ProposalSet out;
  out.view_count = state.merged.view_count;
  for (std::size_t id = 0; id < order.size(); ++id) {
    if (members[id].empty()) continue;
    PointSetInstance inst = state.merged.instances[order[id]];
    inst.points = std::move(members[id]);
    out.instances.push_back(std::move(inst));
  }
  return out;
}

json PipelineResult::report() const {
  json j;
  j["views"] = state.view_ids;
  j["masks_retained"] = state.retained.size();
  j["lifted"] = state.lifted.size();
  j["seeds"] = state.seeds.size();
  j["grown"] = state.grown.size();
  j["instances"] = state.merged.instances.size();
  j["contested_points"] = contested_points;
  auto& t = j["timings"] = json::array();
  for (const auto& s : timings) t.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
  return j;
}

void write_pipeline_output(const fs::path& labels_path, const PipelineResult& result, std::size_t point_count) {
  if (labels_path.has_parent_path()) fs::create_directories(labels_path.parent_path());
  write_instances(labels_path, result.state.merged, point_count);
  fs::path report = labels_path;
  report.replace_extension(".report.json");
  std::ofstream out(report);
  out << result.report().dump(2) << '\n';
  if (!out) throw IoError("write failed: " + report.string());
}

}  // namespace seedgrow
