#include "seedgrow/evaluation.hpp"

#include "seedgrow/errors.hpp"
#include "seedgrow/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

namespace seedgrow {

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("no IoU thresholds");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    if (!(iou_thresholds[i] > 0.0 && iou_thresholds[i] < 1.0))
      throw ConfigError("IoU thresholds must lie in (0, 1)");
    if (i > 0 && !(iou_thresholds[i] > iou_thresholds[i - 1]))
      throw ConfigError("IoU thresholds must be sorted ascending");
  }
}

namespace {

struct GroundTruthIndex {
  std::vector<std::int32_t> ids;              // gt instance ids, ordered by first point
  std::unordered_map<std::int32_t, std::size_t> slot;
  std::vector<std::size_t> sizes;
};

GroundTruthIndex index_ground_truth(std::span<const std::int32_t> gt) {
  GroundTruthIndex g;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] < 0) continue;
    auto [it, fresh] = g.slot.emplace(gt[i], g.ids.size());
    if (fresh) {
      g.ids.push_back(gt[i]);
      g.sizes.push_back(0);
    }
    ++g.sizes[it->second];
  }
  return g;
}

// IoU of one prediction against every gt instance it touches, keyed by slot.
std::vector<std::pair<std::size_t, double>> overlaps(const PointSetInstance& pred,
                                                     std::span<const std::int32_t> gt,
                                                     const GroundTruthIndex& g) {
  std::unordered_map<std::size_t, std::size_t> inter;
  for (PointIndex i : pred.points) {
    if (i >= gt.size()) throw ValidationError("prediction point index exceeds ground-truth length");
    if (gt[i] >= 0) ++inter[g.slot.at(gt[i])];
  }
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& [s, c] : inter) {
    const double u = static_cast<double>(pred.points.size() + g.sizes[s] - c);
    out.emplace_back(s, static_cast<double>(c) / u);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double interpolated_ap(const std::vector<std::uint8_t>& tp, std::size_t gt_count) {
  if (tp.empty()) return 0.0;
  std::vector<double> recall(tp.size()), precision(tp.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < tp.size(); ++r) {
    hits += tp[r];
    recall[r] = static_cast<double>(hits) / static_cast<double>(gt_count);
    precision[r] = static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  // Precision envelope from the right, then area over recall steps.
  for (std::size_t r = tp.size() - 1; r-- > 0;) precision[r] = std::max(precision[r], precision[r + 1]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t r = 0; r < tp.size(); ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return ap;
}

ApResult match_with(const GroundTruthIndex& g, const std::vector<std::vector<std::pair<std::size_t, double>>>& ious,
                    const std::vector<std::size_t>& order, double theta) {
  ApResult res;
  std::vector<std::uint8_t> taken(g.ids.size(), 0);
  std::vector<std::uint8_t> tp;
  tp.reserve(order.size());
  for (std::size_t p : order) {
    double best = -1.0;
    std::size_t best_slot = 0;
    for (const auto& [s, v] : ious[p]) {
      // Slots follow first-point order, so the strict > keeps the earliest on ties.
      if (!taken[s] && v > best) {
        best = v;
        best_slot = s;
      }
    }
    MatchRecord rec{p, -1, best < 0.0 ? 0.0 : best};
    if (best >= theta) {
      taken[best_slot] = 1;
      rec.gt = g.ids[best_slot];
      tp.push_back(1);
    } else {
      tp.push_back(0);
    }
    res.matches.push_back(rec);
  }
  res.ap = interpolated_ap(tp, g.ids.size());
  return res;
}

}  // namespace

ApResult match_and_ap(const ProposalSet& predictions, std::span<const std::int32_t> ground_truth, double theta) {
  const auto g = index_ground_truth(ground_truth);
  if (g.ids.empty()) throw ValidationError("ground truth has no instances; AP is undefined");
  std::vector<std::vector<std::pair<std::size_t, double>>> ious(predictions.instances.size());
  for (std::size_t p = 0; p < predictions.instances.size(); ++p)
    ious[p] = overlaps(predictions.instances[p], ground_truth, g);
  return match_with(g, ious, confidence_order(predictions), theta);
}

EvalReport evaluate(const ProposalSet& predictions, std::span<const std::int32_t> ground_truth,
                    const EvalConfig& cfg) {
  cfg.validate();
  const auto g = index_ground_truth(ground_truth);
  if (g.ids.empty()) throw ValidationError("ground truth has no instances; AP is undefined");
  for (const auto& inst : predictions.instances)
    if (!inst.points.empty() && inst.points.back() >= ground_truth.size())
      throw ValidationError("prediction point index exceeds ground-truth length");
  std::vector<std::vector<std::pair<std::size_t, double>>> ious(predictions.instances.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(predictions.instances.size()); ++p)
    ious[static_cast<std::size_t>(p)] = overlaps(predictions.instances[static_cast<std::size_t>(p)], ground_truth, g);
  const auto order = confidence_order(predictions);

  EvalReport rep;
  double sum = 0.0;
  for (double t : cfg.iou_thresholds) {
    const double ap = match_with(g, ious, order, t).ap;
    rep.ap_per_threshold[t] = ap;
    sum += ap;
  }
  rep.mAP = sum / static_cast<double>(cfg.iou_thresholds.size());
  auto at50 = match_with(g, ious, order, 0.5);
  rep.AP50 = at50.ap;
  rep.matches = std::move(at50.matches);
  rep.AP25 = match_with(g, ious, order, 0.25).ap;
  rep.instance_count = predictions.instances.size();
  rep.gt_instance_count = g.ids.size();
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["mAP"] = mAP;
  j["AP50"] = AP50;
  j["AP25"] = AP25;
  j["instance_count"] = instance_count;
  j["gt_instance_count"] = gt_instance_count;
  auto& per = j["ap_per_threshold"] = nlohmann::json::array();
  for (const auto& [t, ap] : ap_per_threshold) per.push_back({{"iou", t}, {"ap", ap}});
  auto& m = j["matches"] = nlohmann::json::array();
  for (const auto& r : matches) m.push_back({{"prediction", r.prediction}, {"gt", r.gt}, {"iou", r.iou}});
  return j;
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << report.to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void write_ap_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "theta,ap\n";
  out.precision(17);
  for (const auto& [t, ap] : report.ap_per_threshold) out << t << ',' << ap << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

MaskSet patch_drop(const MaskSet& masks, double percentage, std::uint64_t rng_seed) {
  if (!(percentage >= 0.0 && percentage < 100.0)) throw ConfigError("patch-drop percentage must lie in [0, 100)");
  std::mt19937_64 rng(rng_seed);
  MaskSet out;
  out.reserve(masks.size());
  std::vector<std::size_t> on;
  for (const auto& mask : masks) {
    on.clear();
    for (std::size_t p = 0; p < mask.pixels.size(); ++p)
      if (mask.pixels[p]) on.push_back(p);
    const auto drop = static_cast<std::size_t>(std::floor(percentage * static_cast<double>(on.size()) / 100.0));
    Mask2D m = mask;
    // Partial Fisher-Yates: the first `drop` slots become a uniform sample.
    for (std::size_t k = 0; k < drop; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, on.size() - 1);
      std::swap(on[k], on[pick(rng)]);
      m.pixels[on[k]] = 0;
    }
    if (drop < on.size()) out.push_back(std::move(m));
  }
  return out;
}

}  // namespace seedgrow
