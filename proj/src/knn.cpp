#include "seedgrow/knn.hpp"

#include <nanoflann.hpp>

#include <algorithm>
#include <numeric>

namespace seedgrow {

namespace {

struct PointAdaptor {
  std::span<const Eigen::Vector3d> pts;

  std::size_t kdtree_get_point_count() const { return pts.size(); }
  double kdtree_get_pt(std::uint32_t i, std::size_t dim) const { return pts[i][static_cast<int>(dim)]; }
  template <class Box>
  bool kdtree_get_bbox(Box&) const {
    return false;
  }
};

using Tree3 = nanoflann::KDTreeSingleIndexAdaptor<nanoflann::L2_Simple_Adaptor<double, PointAdaptor>,
                                                  PointAdaptor, 3, std::uint32_t>;

}  // namespace

struct KnnIndex::Tree {
  PointAdaptor adaptor;
  Tree3 index;

  explicit Tree(std::span<const Eigen::Vector3d> pts)
      : adaptor{pts}, index(3, adaptor, nanoflann::KDTreeSingleIndexAdaptorParams(10)) {}
};

KnnIndex::KnnIndex(std::span<const Eigen::Vector3d> points)
    : points_(points), tree_(std::make_unique<Tree>(points)) {}

KnnIndex::~KnnIndex() = default;

void KnnIndex::query(const Eigen::Vector3d& q, std::size_t k, std::vector<std::uint32_t>& indices,
                     std::vector<double>& sq_dists) const {
  k = std::min(k, points_.size());
  indices.resize(k);
  sq_dists.resize(k);
  if (k == 0) return;
  const std::size_t found = tree_->index.knnSearch(q.data(), k, indices.data(), sq_dists.data());
  indices.resize(found);
  sq_dists.resize(found);
  // The tree's order among equal distances is arbitrary; make it canonical.
  std::vector<std::size_t> order(found);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sq_dists[a] != sq_dists[b]) return sq_dists[a] < sq_dists[b];
    return indices[a] < indices[b];
  });
  std::vector<std::uint32_t> idx(found);
  std::vector<double> d(found);
  for (std::size_t r = 0; r < found; ++r) {
    idx[r] = indices[order[r]];
    d[r] = sq_dists[order[r]];
  }
  indices.swap(idx);
  sq_dists.swap(d);
}

}  // namespace seedgrow
