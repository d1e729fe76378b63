#pragma once

#include "seedgrow/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace seedgrow {

namespace fs = std::filesystem;

// ---- point cloud: binary little-endian PLY -------------------------------
PointCloud read_ply(const fs::path& path);
void write_ply(const fs::path& path, const PointCloud& cloud);

// ---- cameras: JSON array of {view_id, width, height, K[9], T[16]} ----------
std::vector<CameraView> read_cameras(const fs::path& path);
void write_cameras(const fs::path& path, const std::vector<CameraView>& views);
nlohmann::json cameras_to_json(const std::vector<CameraView>& views);
std::vector<CameraView> cameras_from_json(const nlohmann::json& j, const std::string& origin);

// ---- superpoints: "SP3D" u32 version, u64 N, int32[N] ---------------------
SuperpointPartition read_superpoints(const fs::path& path);
void write_superpoints(const fs::path& path, const SuperpointPartition& partition);

// ---- features: "FT3D" u64 U, u64 D, float32[U*D] ---------------------------
FeatureTable read_features(const fs::path& path);
void write_features(const fs::path& path, const FeatureTable& table);

// ---- per-point int32 label arrays sharing the SP3D header scheme ------------
inline constexpr char kInstanceMagic[4] = {'I', 'N', '3', 'D'};
inline constexpr char kSuperpointMagic[4] = {'S', 'P', '3', 'D'};
std::vector<std::int32_t> read_label_array(const fs::path& path, const char (&magic)[4]);
void write_label_array(const fs::path& path, const char (&magic)[4], std::span<const std::int32_t> labels);

// ---- masks: <view_id>.png 16-bit label raster + optional <view_id>.masks.json
/// Reads the masks of every view found in `dir`. Mask ids come from the
/// sidecar JSON when present, otherwise (view ordinal << 16) | label.
MaskSet read_masks(const fs::path& dir, const std::vector<CameraView>& views);
/// Writes one label raster per view. Overlapping masks are flattened with the
/// later mask winning; the sidecar also stores every mask run-length encoded
/// so the loader can restore overlaps exactly.
void write_masks(const fs::path& dir, const MaskSet& masks, const std::vector<CameraView>& views);
MaskId default_mask_id(std::size_t view_ordinal, std::uint16_t label);

// ---- instances out: IN3D labels + JSON manifest ----------------------------
struct InstanceWriteSummary {
  std::size_t contested_points = 0;  // points claimed by more than one proposal
  std::vector<std::int32_t> labels;
};
/// Instance ids are assigned in descending confidence order. Points claimed by
/// several proposals go to the highest-confidence one. When `exact_sets` is
/// set the manifest also carries every member list so overlapping sets (stage
/// checkpoints) load back exactly.
InstanceWriteSummary write_instances(const fs::path& labels_path, const ProposalSet& proposals,
                                     std::size_t point_count, bool exact_sets = false);
/// Loads instances from the label file and its manifest (`<stem>.json`).
ProposalSet read_instances(const fs::path& labels_path);
fs::path manifest_path_for(const fs::path& labels_path);
/// Per-point labels produced by the precedence rule, without touching disk.
std::vector<std::int32_t> resolve_instance_labels(const ProposalSet& proposals, std::size_t point_count,
                                                  std::size_t* contested = nullptr);
/// Proposal order used for id assignment: confidence desc, size desc, first point asc.
std::vector<std::size_t> confidence_order(const ProposalSet& proposals);

// ---- whole scenes -----------------------------------------------------------
struct ScenePaths {
  fs::path cloud;
  fs::path cameras;
  fs::path superpoints;
  fs::path features;
  fs::path masks;  // directory

  static ScenePaths in_directory(const fs::path& dir);
};

SceneBundle load_scene(const ScenePaths& paths);
void save_scene(const ScenePaths& paths, const SceneBundle& scene);

// ---- raw float grids: depth dumps and pixel features ------------------------
void write_depth_dump(const fs::path& path, int width, int height, std::span<const double> depth);
std::vector<float> read_depth_dump(const fs::path& path, int& width, int& height);

}  // namespace seedgrow
