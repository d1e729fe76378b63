#pragma once

#include "seedgrow/oversegment.hpp"
#include "seedgrow/projection.hpp"
#include "seedgrow/semantic.hpp"
#include "seedgrow/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <vector>

namespace seedgrow {

struct SynthCorruption {
  double merge_mask_probability = 0.0;  // per view: union two visible objects' masks
  double split_mask_probability = 0.0;  // per mask: cut in two along a line through its centroid
  int boundary_noise_px = 0;            // per mask: dilate or erode by this radius
  double feature_noise_sigma = 0.05;    // per-component noise on superpoint features
  bool duplicate_appearance = false;    // two distant objects share a look; their masks fuse
  int clutter_masks_per_view = 0;       // masks over random patches of walls/floor
};

struct SynthConfig {
  std::uint64_t rng_seed = 0;
  Eigen::Vector3d room_size{6.0, 5.0, 3.0};
  int object_count = 8;
  int points_per_object = 8000;  // mean; objects get shares proportional to surface area
  int background_points = 36000;
  int camera_count = 20;
  int image_width = 160;
  int image_height = 120;
  double horizontal_fov_deg = 80.0;
  int feature_dim = 32;
  double object_clearance = 0.15;  // minimum gap between objects and to the walls (m)
  bool clustered = false;          // objects placed against one another at exactly the clearance
  SynthCorruption corruption;
  // Applied to each surface (object, floor, wall) on its own; coarse, so
  // roughly one segment per object.
  OversegConfig overseg{16, 2.0, 20};
  MappingConfig render;  // visibility used to decide which pixels a point owns

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct GroundTruth {
  std::vector<std::int32_t> instance;           // per point, -1 background
  std::vector<std::vector<float>> prototypes;  // per object, unit length
  std::vector<float> background_prototype;
  std::array<int, 2> look_alike{-1, -1};        // objects sharing a prototype
};

struct SynthScene {
  SceneBundle scene;
  GroundTruth gt;
};

/// Room shell (floor + four walls) plus lidless boxes, capped cylinders and
/// domes standing on the floor, surface-sampled at one density;
/// cameras on an elevated inward orbit. Throws PipelineError when objects
/// cannot be placed or seen by 3 cameras within the retry budget.
SynthScene generate_scene(const SynthConfig& cfg);

/// Per-object count of views that see at least 5% of the object's points.
std::vector<int> object_view_coverage(const SynthScene& s, const MappingConfig& mapping);

struct RenderedMasks {
  MaskSet clean;                    // one exact mask per visible object per view
  std::vector<int> clean_object;    // object of each clean mask
  MaskSet masks;                    // after corruption
};

/// Each pixel belongs to the object of the point that wins the depth test
/// there (lowest index among exact ties); background pixels own no mask.
RenderedMasks render_masks(const SynthScene& s, const SynthConfig& cfg);

/// Pixel features = owning object's prototype (background prototype where the
/// wall or floor wins, zero where nothing projects) plus per-component noise.
PixelFeatureSource synthetic_pixel_features(const SynthScene& s, const SynthConfig& cfg, double noise_sigma,
                                            std::uint64_t rng_seed);

/// points.ply, cameras.json, superpoints.sp3d, features.ft3d, masks/, gt.in3d,
/// synth.json and, when given, pixfeat/ and queries.json.
void write_synth_scene(const std::filesystem::path& dir, const SynthScene& s, const SynthConfig& cfg,
                       const MaskSet& masks, const PixelFeatureSource* pixel_features = nullptr);

}  // namespace seedgrow
