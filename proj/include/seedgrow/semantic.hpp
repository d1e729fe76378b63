#pragma once

#include "seedgrow/projection.hpp"
#include "seedgrow/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace seedgrow {

/// Dense per-pixel features of one view, row-major H x W x D.
struct PixelFeatureMap {
  std::string view_id;
  int width = 0;
  int height = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  std::span<const float> at(int u, int v) const {
    return {values.data() + (static_cast<std::size_t>(v) * width + u) * dim, dim};
  }
};

struct PixelFeatureSource {
  std::vector<PixelFeatureMap> maps;

  std::size_t dim() const { return maps.empty() ? 0 : maps.front().dim; }
  const PixelFeatureMap* find(std::string_view view_id) const;
  void validate(const std::vector<CameraView>& views) const;
};

// "PF3D" u32 W, u32 H, u32 D, float32[H*W*D]
PixelFeatureMap read_pixel_features(const std::filesystem::path& path, const std::string& view_id);
void write_pixel_features(const std::filesystem::path& path, const PixelFeatureMap& map);
/// Loads `<dir>/<view_id>.pf3d` for every view.
PixelFeatureSource load_pixel_features(const std::filesystem::path& dir, const std::vector<CameraView>& views);
void save_pixel_features(const std::filesystem::path& dir, const PixelFeatureSource& source);

struct TextQuery {
  std::string query;
  std::vector<double> embedding;

  void validate() const;
};

/// Accepts a single {query, embedding} object or an array of them.
std::vector<TextQuery> read_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, const std::vector<TextQuery>& queries);

struct PointFeatures {
  std::size_t dim = 0;
  std::vector<double> values;       // N x D
  std::vector<std::uint8_t> flagged;  // 1: visible nowhere, or the mean cancelled to zero

  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

/// Mean of the pixel features a point lands on, over the views that see it.
PointFeatures aggregate_point_features(const std::vector<ViewMapping>& mappings, const PixelFeatureSource& source);

/// Mean over the proposal's unflagged points. Throws PipelineError when every
/// member is flagged.
std::vector<double> proposal_feature(const PointSetInstance& proposal, const PointFeatures& features);

struct RankedProposal {
  std::size_t proposal = 0;
  double score = 0.0;
};

/// Cosine between every proposal feature and the query, descending; ties by
/// proposal index.
std::vector<RankedProposal> rank_by_query(const std::vector<std::vector<double>>& proposal_features,
                                          const TextQuery& query);

double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace seedgrow
