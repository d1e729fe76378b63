#include "seedgrow/mask_filter.hpp"

#include "seedgrow/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <fstream>
#include <unordered_map>

namespace seedgrow {

std::string_view to_string(ScoreNormalization n) {
  switch (n) {
    case ScoreNormalization::literal: return "literal";
    case ScoreNormalization::nonempty_views: return "nonempty_views";
    case ScoreNormalization::cooccurring: return "cooccurring";
  }
  return "cooccurring";
}

ScoreNormalization score_normalization_from_string(std::string_view s) {
  if (s == "literal") return ScoreNormalization::literal;
  if (s == "nonempty_views") return ScoreNormalization::nonempty_views;
  if (s == "cooccurring") return ScoreNormalization::cooccurring;
  throw ConfigError("unknown score normalization '" + std::string(s) + "'");
}

void FilterConfig::validate() const {
  if (!(score_threshold >= 0.0 && score_threshold < 1.0))
    throw ConfigError("score_threshold must lie in [0, 1)");
  if (!(inclusion_fraction > 0.0 && inclusion_fraction <= 1.0))
    throw ConfigError("inclusion_fraction must lie in (0, 1]");
}

namespace {

std::vector<SuperpointId> superpoints_over_fraction(const std::vector<std::uint32_t>& hits,
                                                    const SuperpointPartition& partition, double frac) {
  std::vector<SuperpointId> out;
  for (SuperpointId u = 0; u < partition.count(); ++u) {
    const auto h = hits[static_cast<std::size_t>(u)];
    if (h == 0) continue;
    if (static_cast<double>(h) / static_cast<double>(partition.size_of(u)) > frac) out.push_back(u);
  }
  return out;
}

std::size_t sorted_overlap(const std::vector<SuperpointId>& a, const std::vector<SuperpointId>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

std::vector<SuperpointId> sorted_intersection(const std::vector<SuperpointId>& a,
                                              const std::vector<SuperpointId>& b) {
  std::vector<SuperpointId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

double score_one(const MaskSuperpointTable& table, std::size_t m, ScoreNormalization normalization) {
  const std::size_t K = table.mask_count();
  const std::size_t T = table.view_count();
  double sum = 0.0;
  std::size_t cooccurring = 0;
  std::size_t own_views = 0;
  for (std::size_t j = 0; j < T; ++j) {
    const auto& pm = table.at(m, j);
    if (pm.empty()) continue;
    ++own_views;
    for (std::size_t n = 0; n < K; ++n) {
      if (n == m) continue;
      const auto& pn = table.at(n, j);
      if (pn.empty()) continue;
      const std::size_t inter = sorted_overlap(pm, pn);
      if (inter == 0) continue;
      ++cooccurring;
      sum += static_cast<double>(inter) /
             std::sqrt(static_cast<double>(pm.size()) * static_cast<double>(pn.size()));
    }
  }
  double denom = 0.0;
  switch (normalization) {
    case ScoreNormalization::literal: denom = static_cast<double>(K - 1) * static_cast<double>(T); break;
    case ScoreNormalization::nonempty_views:
      denom = static_cast<double>(K - 1) * static_cast<double>(own_views);
      break;
    case ScoreNormalization::cooccurring: denom = static_cast<double>(cooccurring); break;
  }
  return denom > 0.0 ? sum / denom : 0.0;
}

bool degenerate_table(const MaskSuperpointTable& table, std::vector<double>& scores) {
  if (table.mask_count() >= 2) return false;
  spdlog::warn("co-occurrence filter: {} candidate mask(s), no peer evidence; all masks pass",
               table.mask_count());
  scores.assign(table.mask_count(), 1.0);
  return true;
}

}  // namespace

std::vector<SuperpointId> visible_superpoints(const ViewMapping& mapping, const Mask2D& mask,
                                              const SuperpointPartition& partition, double frac) {
  if (mapping.view_id != mask.view_id)
    throw ValidationError("mask " + std::to_string(mask.mask_id) + " belongs to view '" + mask.view_id +
                          "' but the mapping is for '" + mapping.view_id + "'");
  std::vector<std::uint32_t> hits(static_cast<std::size_t>(partition.count()), 0);
  for (std::size_t i = 0; i < mapping.point_count(); ++i) {
    if (!mapping.visible[i]) continue;
    const auto [u, v] = mapping.pixel[i];
    if (mask.at(u, v)) ++hits[static_cast<std::size_t>(partition.label(static_cast<PointIndex>(i)))];
  }
  return superpoints_over_fraction(hits, partition, frac);
}

std::vector<SuperpointId> superpoints_visible_in_view(const ViewMapping& mapping,
                                                      const SuperpointPartition& partition, double frac) {
  std::vector<std::uint32_t> hits(static_cast<std::size_t>(partition.count()), 0);
  for (std::size_t i = 0; i < mapping.point_count(); ++i)
    if (mapping.visible[i]) ++hits[static_cast<std::size_t>(partition.label(static_cast<PointIndex>(i)))];
  return superpoints_over_fraction(hits, partition, frac);
}

MaskSuperpointTable build_superpoint_table(const MaskSet& masks, const std::vector<ViewMapping>& mappings,
                                           const SuperpointPartition& partition, double frac) {
  MaskSuperpointTable table;
  std::unordered_map<std::string, std::size_t> view_index;
  for (std::size_t j = 0; j < mappings.size(); ++j) {
    if (mappings[j].point_count() != partition.point_count())
      throw ValidationError("mapping for view '" + mappings[j].view_id + "' covers " +
                            std::to_string(mappings[j].point_count()) + " points, partition has " +
                            std::to_string(partition.point_count()));
    table.view_ids.push_back(mappings[j].view_id);
    view_index.emplace(mappings[j].view_id, j);
  }
  std::vector<std::vector<SuperpointId>> seen_in_view(mappings.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(mappings.size()); ++j)
    seen_in_view[static_cast<std::size_t>(j)] =
        superpoints_visible_in_view(mappings[static_cast<std::size_t>(j)], partition, frac);

  const auto K = static_cast<std::ptrdiff_t>(masks.size());
  table.mask_ids.resize(masks.size());
  table.origin_views.resize(masks.size());
  table.sets.resize(masks.size());
  for (std::size_t m = 0; m < masks.size(); ++m)
    if (!view_index.count(masks[m].view_id))
      throw ValidationError("mask " + std::to_string(masks[m].mask_id) + " refers to unmapped view '" +
                            masks[m].view_id + "'");
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t mi = 0; mi < K; ++mi) {
    const auto m = static_cast<std::size_t>(mi);
    const std::size_t own = view_index.at(masks[m].view_id);
    const auto base = visible_superpoints(mappings[own], masks[m], partition, frac);
    table.mask_ids[m] = masks[m].mask_id;
    table.origin_views[m] = masks[m].view_id;
    table.sets[m].resize(mappings.size());
    for (std::size_t j = 0; j < mappings.size(); ++j)
      table.sets[m][j] = j == own ? base : sorted_intersection(base, seen_in_view[j]);
  }
  return table;
}

std::vector<double> cooccurrence_scores(const MaskSuperpointTable& table, ScoreNormalization normalization) {
  std::vector<double> scores;
  if (degenerate_table(table, scores)) return scores;
  scores.resize(table.mask_count());
  // Each mask's sum runs in a fixed order inside one thread, so the result is
  // independent of the schedule.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(table.mask_count()); ++m)
    scores[static_cast<std::size_t>(m)] = score_one(table, static_cast<std::size_t>(m), normalization);
  return scores;
}

namespace serial {
std::vector<double> cooccurrence_scores(const MaskSuperpointTable& table, ScoreNormalization normalization) {
  std::vector<double> scores;
  if (degenerate_table(table, scores)) return scores;
  scores.resize(table.mask_count());
  for (std::size_t m = 0; m < table.mask_count(); ++m) scores[m] = score_one(table, m, normalization);
  return scores;
}
}  // namespace serial

MaskSet filter_masks(const MaskSet& masks, const std::vector<double>& scores, const FilterConfig& cfg) {
  cfg.validate();
  if (scores.size() != masks.size())
    throw ValidationError("score count " + std::to_string(scores.size()) + " does not match mask count " +
                          std::to_string(masks.size()));
  MaskSet kept;
  for (std::size_t m = 0; m < masks.size(); ++m)
    if (scores[m] >= cfg.score_threshold) kept.push_back(masks[m]);
  if (kept.empty() && !masks.empty())
    throw PipelineError("filter", "co-occurrence filtering removed all " + std::to_string(masks.size()) +
                                      " masks; lower the score threshold (--cmin)");
  return kept;
}

void write_score_csv(const std::filesystem::path& path, const MaskSuperpointTable& table,
                     const std::vector<double>& scores, double threshold) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "mask_id,view_id_of_origin,c_m,retained\n";
  out.precision(17);
  for (std::size_t m = 0; m < table.mask_count(); ++m)
    out << table.mask_ids[m] << ',' << table.origin_views[m] << ',' << scores[m] << ','
        << (scores[m] >= threshold ? 1 : 0) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace seedgrow
