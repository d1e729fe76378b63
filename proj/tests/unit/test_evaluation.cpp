#include "seedgrow/errors.hpp"
#include "seedgrow/evaluation.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace seedgrow;

namespace {

PointSetInstance inst(std::vector<PointIndex> pts, double conf) {
  PointSetInstance p;
  std::sort(pts.begin(), pts.end());
  p.points = std::move(pts);
  p.confidence = conf;
  return p;
}

std::vector<PointIndex> range(PointIndex a, PointIndex b) {
  std::vector<PointIndex> v(b - a);
  std::iota(v.begin(), v.end(), a);
  return v;
}

// 30 points: G0 = 0..9, G1 = 10..19, G2 = 20..24, 25..29 unlabeled.
std::vector<std::int32_t> fixture_gt() {
  std::vector<std::int32_t> gt(30, -1);
  for (int i = 0; i < 25; ++i) gt[static_cast<std::size_t>(i)] = i < 10 ? 0 : i < 20 ? 1 : 2;
  return gt;
}

ProposalSet fixture_predictions() {
  ProposalSet p;
  p.instances.push_back(inst(range(0, 9), 0.9));                              // IoU(G0) 0.9
  p.instances.push_back(inst({20, 25, 26, 27, 28, 29}, 0.8));                 // IoU(G2) 0.1
  p.instances.push_back(inst(range(10, 17), 0.7));                            // IoU(G1) 0.7
  p.instances.push_back(inst(range(0, 5), 0.6));                              // G0 again, already taken
  return p;
}

}  // namespace

TEST_CASE("hand fixture: 3 ground-truth instances, 4 predictions") {
  const auto gt = fixture_gt();
  const auto pred = fixture_predictions();
  // theta 0.5: TP FP TP FP -> 1/3 * 1 + 1/3 * 2/3
  CHECK(std::abs(match_and_ap(pred, gt, 0.5).ap - 5.0 / 9.0) < 1e-9);
  CHECK(std::abs(match_and_ap(pred, gt, 0.75).ap - 1.0 / 3.0) < 1e-9);
  CHECK(match_and_ap(pred, gt, 0.95).ap == 0.0);
  // theta 0.1 makes the second prediction a hit: TP TP TP FP
  CHECK(std::abs(match_and_ap(pred, gt, 0.1).ap - 1.0) < 1e-9);

  auto m = match_and_ap(pred, gt, 0.5).matches;
  REQUIRE(m.size() == 4);
  CHECK(m[0].gt == 0);
  CHECK(m[1].gt == -1);
  CHECK(m[2].gt == 1);
  CHECK(m[3].gt == -1);
  CHECK(m[2].iou == doctest::Approx(0.7));

  auto rep = evaluate(pred, gt);
  CHECK(std::abs(rep.mAP - 37.0 / 90.0) < 1e-9);
  CHECK(std::abs(rep.AP50 - 5.0 / 9.0) < 1e-9);
  CHECK(std::abs(rep.AP25 - 5.0 / 9.0) < 1e-9);
  CHECK(rep.gt_instance_count == 3);
  CHECK(rep.instance_count == 4);
}

TEST_CASE("perfect predictor and empty predictor") {
  const auto gt = fixture_gt();
  ProposalSet perfect;
  perfect.instances = {inst(range(0, 10), 1.0), inst(range(10, 20), 1.0), inst(range(20, 25), 1.0)};
  auto rep = evaluate(perfect, gt);
  for (auto& [theta, ap] : rep.ap_per_threshold) CHECK(ap == 1.0);
  CHECK(rep.mAP == 1.0);
  CHECK(rep.AP50 == 1.0);
  CHECK(rep.AP25 == 1.0);
  CHECK(evaluate(ProposalSet{}, gt).mAP == 0.0);
}

TEST_CASE("one all-points instance on a 2-instance scene") {
  std::vector<std::int32_t> gt(10, 0);
  std::fill(gt.begin() + 6, gt.end(), 1);  // sizes 6 and 4
  ProposalSet p;
  p.instances = {inst(range(0, 10), 1.0)};
  auto rep = evaluate(p, gt);
  CHECK(rep.AP25 == doctest::Approx(0.5));  // IoU 0.6 with the larger one, recall 1/2
  CHECK(rep.AP50 == doctest::Approx(0.5));
  CHECK(rep.ap_per_threshold.at(0.60) == doctest::Approx(0.5));
  CHECK(rep.ap_per_threshold.at(0.65) == 0.0);
}

TEST_CASE("empty ground truth is rejected") {
  std::vector<std::int32_t> gt(5, -1);
  CHECK_THROWS_AS(evaluate(ProposalSet{}, gt), ValidationError);
}

TEST_CASE("metric invariances") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 200;
    const int objects = 2 + static_cast<int>(rng() % 6);
    std::vector<std::int32_t> gt(n);
    for (auto& g : gt) g = static_cast<std::int32_t>(rng() % (objects + 1)) - 1;
    ProposalSet pred;
    const int preds = 1 + static_cast<int>(rng() % 10);
    for (int k = 0; k < preds; ++k) {
      // a noisy copy of one object, or random junk
      const int target = static_cast<int>(rng() % objects);
      std::vector<PointIndex> pts;
      for (PointIndex i = 0; i < n; ++i)
        if ((gt[i] == target && rng() % 10 < 8) || rng() % 40 == 0) pts.push_back(i);
      if (pts.empty()) pts.push_back(static_cast<PointIndex>(rng() % n));
      pred.instances.push_back(inst(pts, 0.05 + 0.9 * std::uniform_real_distribution<double>(0, 1)(rng)));
    }
    const auto base = evaluate(pred, gt);

    // relabel ground-truth ids with a permutation plus offset
    std::vector<std::int32_t> perm(static_cast<std::size_t>(objects));
    std::iota(perm.begin(), perm.end(), 100);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::int32_t> relabeled(gt);
    for (auto& g : relabeled)
      if (g >= 0) g = perm[static_cast<std::size_t>(g)];
    CHECK(evaluate(pred, relabeled).mAP == doctest::Approx(base.mAP).epsilon(1e-12));

    // a false positive ranked below everything changes nothing
    ProposalSet extra = pred;
    std::vector<PointIndex> bg;
    for (PointIndex i = 0; i < n; ++i)
      if (gt[i] < 0) bg.push_back(i);
    if (bg.empty()) bg.push_back(0);
    extra.instances.push_back(inst(bg, 0.01));
    const auto with_fp = evaluate(extra, gt);
    for (auto& [theta, ap] : base.ap_per_threshold)
      CHECK(with_fp.ap_per_threshold.at(theta) == doctest::Approx(ap).epsilon(1e-12));

    // prediction order in the container does not matter
    ProposalSet shuffled = pred;
    std::shuffle(shuffled.instances.begin(), shuffled.instances.end(), rng);
    CHECK(evaluate(shuffled, gt).mAP == doctest::Approx(base.mAP).epsilon(1e-12));
    CHECK((base.mAP >= 0.0 && base.mAP <= 1.0));
  }
}

TEST_CASE("patch drop") {
  Mask2D m{"v", 1, 10, 10, std::vector<std::uint8_t>(100, 1)};
  Mask2D small{"v", 2, 10, 10, std::vector<std::uint8_t>(100, 0)};
  small.pixels[3] = 1;
  MaskSet masks{m, small};
  CHECK(patch_drop(masks, 0.0, 1)[0].pixels == m.pixels);
  auto d = patch_drop(masks, 90.0, 1);
  REQUIRE(d.size() == 2);
  CHECK(d[0].area() == 10);
  CHECK(d[1].area() == 1);  // floor(0.9) = 0 pixels removed
  CHECK(patch_drop(masks, 90.0, 1)[0].pixels == d[0].pixels);
  CHECK(patch_drop(masks, 90.0, 2)[0].pixels != d[0].pixels);
  auto nearly = patch_drop(masks, 99.5, 1);
  REQUIRE(nearly.size() == 2);
  CHECK(nearly[0].area() == 1);
  CHECK_THROWS(patch_drop(masks, 100.0, 1));
  CHECK_THROWS(patch_drop(masks, -1.0, 1));
}
