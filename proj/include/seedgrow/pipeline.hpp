#pragma once

#include "seedgrow/evaluation.hpp"
#include "seedgrow/hdbscan.hpp"
#include "seedgrow/lift_grow_merge.hpp"
#include "seedgrow/mask_filter.hpp"
#include "seedgrow/projection.hpp"
#include "seedgrow/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace seedgrow {

enum class PipelineStage { map, filter, lift, split, grow, merge };
std::string_view to_string(PipelineStage s);
PipelineStage pipeline_stage_from_string(std::string_view s);
inline constexpr PipelineStage kAllStages[] = {PipelineStage::map,  PipelineStage::filter, PipelineStage::lift,
                                               PipelineStage::split, PipelineStage::grow,  PipelineStage::merge};

struct PipelineConfig {
  MappingConfig mapping;
  FilterConfig filter;
  ClusterConfig cluster;
  GrowConfig grow;
  MergeSchedule merge;
  EvalConfig eval;
  double view_fraction = 0.10;
  std::uint64_t seed = 0;             // view sampling seed
  bool random_view_sampling = false;  // default: uniform stride over the ordered views
  // Ablation toggles. A disabled stage passes its input through: no filter
  // keeps every mask, no split makes each lifted mask one seed, no grow takes
  // seeds as proposals.
  bool use_filter = true;
  bool use_split = true;
  bool use_grow = true;
  int workers = 0;  // 0: OpenMP default

  void validate() const;
  nlohmann::json to_json() const;
  /// Starts from `base` and applies the keys present in `j`.
  static PipelineConfig from_json(const nlohmann::json& j, const PipelineConfig& base);
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// ceil(fraction * T) view indices, ascending. Uniform stride picks
/// floor(k * T / count); the random variant is a seeded shuffle.
std::vector<std::size_t> select_views(std::size_t view_count, double fraction, bool random, std::uint64_t seed);

/// Sets the OpenMP thread count when workers > 0.
void apply_workers(int workers);

/// Everything one stage may read. Filled progressively by run_stage, or
/// restored from checkpoints.
struct PipelineState {
  std::vector<std::string> view_ids;      // selected views, scene order
  std::vector<ViewMapping> mappings;      // one per selected view
  MaskSet retained;                       // masks surviving the filter
  std::vector<double> scores;             // per mask of the selected views, for inspection
  std::vector<MaskId> scored_ids;
  std::vector<PointSetInstance> lifted;
  std::vector<Seed> seeds;
  std::vector<PointSetInstance> grown;
  ProposalSet merged;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  PipelineState state;
  std::vector<StageTiming> timings;
  std::size_t contested_points = 0;

  /// Final instances as written: overlaps resolved by the precedence rule,
  /// instances left empty dropped.
  ProposalSet resolved(std::size_t point_count) const;
  nlohmann::json report() const;
};

/// Executes one stage on `state`. When `checkpoint_dir` is non-empty the
/// stage output is written to `<dir>/<stage>/`.
void run_stage(PipelineStage stage, const SceneBundle& scene, const MaskSet& masks, const PipelineConfig& cfg,
               PipelineState& state, const std::filesystem::path& checkpoint_dir = {});

/// Loads the checkpoint `stage` needs from `<dir>/<upstream>/`, runs the stage
/// and writes its own checkpoint. Throws PipelineError naming the stage to run
/// first when an upstream checkpoint is missing.
void run_stage_from_checkpoints(PipelineStage stage, const SceneBundle& scene, const MaskSet& masks,
                                const PipelineConfig& cfg, const std::filesystem::path& checkpoint_dir);

/// map -> filter -> lift -> split -> grow -> merge, with per-stage timings.
PipelineResult run_pipeline(const SceneBundle& scene, const MaskSet& masks, const PipelineConfig& cfg,
                            const std::filesystem::path& checkpoint_dir = {});

/// Instances file plus `<stem>.report.json` next to it.
void write_pipeline_output(const std::filesystem::path& labels_path, const PipelineResult& result,
                           std::size_t point_count);

// Checkpoint pieces, exposed for tests.
// "VM3D" u32 W, u32 H, u64 N, u8 visible[N], i32 pixel[2N], f64 z[N],
// u64 D, f64 depth[D]
void write_view_mapping(const std::filesystem::path& path, const ViewMapping& m);
ViewMapping read_view_mapping(const std::filesystem::path& path, const std::string& view_id);
void save_state(PipelineStage stage, const PipelineState& state, const std::filesystem::path& checkpoint_dir);
/// Restores the output of `stage` into `state`.
void load_state(PipelineStage stage, PipelineState& state, const SceneBundle& scene, const MaskSet& masks,
                const std::filesystem::path& checkpoint_dir);

}  // namespace seedgrow
