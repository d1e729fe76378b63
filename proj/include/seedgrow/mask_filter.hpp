#pragma once

#include "seedgrow/projection.hpp"
#include "seedgrow/types.hpp"

#include <filesystem>
#include <string_view>
#include <vector>

namespace seedgrow {

/// How the double sum of normalized intersections is turned into a score.
///   literal          divide by (K-1) * T
///   nonempty_views   divide by (K-1) * (views where the mask's own set is non-empty)
///   cooccurring      divide by the number of (peer, view) terms with a non-empty
///                    intersection, i.e. mean agreement with the peers that see
///                    the same superpoints
enum class ScoreNormalization { literal, nonempty_views, cooccurring };
std::string_view to_string(ScoreNormalization n);
ScoreNormalization score_normalization_from_string(std::string_view s);

struct FilterConfig {
  double score_threshold = 0.2;
  double inclusion_fraction = 0.5;
  ScoreNormalization normalization = ScoreNormalization::cooccurring;

  void validate() const;
};

/// Superpoints with more than `frac` of their points visible in the mapping's
/// view and inside the mask.
std::vector<SuperpointId> visible_superpoints(const ViewMapping& mapping, const Mask2D& mask,
                                              const SuperpointPartition& partition, double frac);

/// Superpoints with more than `frac` of their points visible in the view.
std::vector<SuperpointId> superpoints_visible_in_view(const ViewMapping& mapping,
                                                      const SuperpointPartition& partition, double frac);

/// Sparse per (mask, view) superpoint sets. A mask's set in its own view is
/// the inclusion test above; in any other view j it is that set restricted to
/// the superpoints view j actually sees.
struct MaskSuperpointTable {
  std::vector<MaskId> mask_ids;
  std::vector<std::string> origin_views;
  std::vector<std::string> view_ids;
  std::vector<std::vector<std::vector<SuperpointId>>> sets;  // [mask][view], sorted

  std::size_t mask_count() const { return sets.size(); }
  std::size_t view_count() const { return view_ids.size(); }
  const std::vector<SuperpointId>& at(std::size_t m, std::size_t j) const { return sets[m][j]; }
};

MaskSuperpointTable build_superpoint_table(const MaskSet& masks, const std::vector<ViewMapping>& mappings,
                                           const SuperpointPartition& partition, double frac);

/// One score per mask. With fewer than two masks there is no peer evidence and
/// every score is 1 (a warning is logged).
std::vector<double> cooccurrence_scores(const MaskSuperpointTable& table,
                                        ScoreNormalization normalization = ScoreNormalization::cooccurring);

/// Keeps masks with score >= threshold, preserving order and ids. Throws
/// PipelineError when nothing survives.
MaskSet filter_masks(const MaskSet& masks, const std::vector<double>& scores, const FilterConfig& cfg);

/// CSV with columns mask_id, view_id_of_origin, c_m, retained.
void write_score_csv(const std::filesystem::path& path, const MaskSuperpointTable& table,
                     const std::vector<double>& scores, double threshold);

namespace serial {
std::vector<double> cooccurrence_scores(const MaskSuperpointTable& table, ScoreNormalization normalization);
}  // namespace serial

}  // namespace seedgrow
