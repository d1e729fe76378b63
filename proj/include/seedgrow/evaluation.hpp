#pragma once

#include "seedgrow/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace seedgrow {

struct EvalConfig {
  /// Thresholds averaged into mAP; AP50 and AP25 are always reported too.
  std::vector<double> iou_thresholds{0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};

  void validate() const;
};

struct MatchRecord {
  std::size_t prediction = 0;  // index into the evaluated ProposalSet
  std::int32_t gt = -1;        // ground-truth instance id, -1 for a false positive
  double iou = 0.0;
};

struct ApResult {
  double ap = 0.0;
  std::vector<MatchRecord> matches;  // in ranking order
};

/// Ranking used for matching: confidence desc, size desc, first point asc.
/// Each prediction takes the unmatched ground-truth instance it overlaps most
/// (ties: the instance with the smallest point index) and is a true positive
/// when that IoU reaches theta. AP is the all-point interpolated PR area.
/// Ground-truth label -1 marks unlabeled points. Throws ValidationError when
/// the ground truth has no instances.
ApResult match_and_ap(const ProposalSet& predictions, std::span<const std::int32_t> ground_truth, double theta);

struct EvalReport {
  std::map<double, double> ap_per_threshold;
  double mAP = 0.0;
  double AP50 = 0.0;
  double AP25 = 0.0;
  std::vector<MatchRecord> matches;  // at IoU 0.5
  std::size_t instance_count = 0;     // predicted
  std::size_t gt_instance_count = 0;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const ProposalSet& predictions, std::span<const std::int32_t> ground_truth,
                    const EvalConfig& cfg = {});

void write_report_json(const std::filesystem::path& path, const EvalReport& report);
/// Columns theta, ap.
void write_ap_csv(const std::filesystem::path& path, const EvalReport& report);

/// Removes floor(percentage% of its set pixels) from every mask, chosen
/// uniformly at random; masks left empty are dropped.
MaskSet patch_drop(const MaskSet& masks, double percentage, std::uint64_t rng_seed);

}  // namespace seedgrow
