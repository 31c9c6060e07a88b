#include "forest_coreg/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fcoreg {

KdTree::KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
  if (points_.empty()) return;
  std::vector<std::int32_t> index(points_.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    index[i] = static_cast<std::int32_t>(i);
  }
  nodes_.reserve(points_.size());
  root_ = build(index, 0, static_cast<std::int32_t>(index.size()));
}

std::int32_t KdTree::build(std::vector<std::int32_t>& index, std::int32_t lo,
                           std::int32_t hi) {
  if (lo >= hi) return -1;

  // Split along the axis of largest extent within this subrange.
  Eigen::Vector3d mn = points_[index[lo]];
  Eigen::Vector3d mx = mn;
  for (std::int32_t i = lo + 1; i < hi; ++i) {
    mn = mn.cwiseMin(points_[index[i]]);
    mx = mx.cwiseMax(points_[index[i]]);
  }
  std::uint8_t axis = 0;
  const Eigen::Vector3d extent = mx - mn;
  if (extent.y() > extent.x()) axis = 1;
  if (extent.z() > extent[axis]) axis = 2;

  const std::int32_t mid = lo + (hi - lo) / 2;
  std::nth_element(index.begin() + lo, index.begin() + mid, index.begin() + hi,
                   [&](std::int32_t a, std::int32_t b) {
                     const double ca = points_[a][axis];
                     const double cb = points_[b][axis];
                     if (ca != cb) return ca < cb;
                     return a < b;
                   });

  const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{index[mid], -1, -1, axis});
  const std::int32_t left = build(index, lo, mid);
  const std::int32_t right = build(index, mid + 1, hi);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::pair<std::int32_t, double> KdTree::nearest(const Eigen::Vector3d& query) const {
  std::int32_t best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  if (root_ >= 0) nearest_impl(root_, query, best, best_d2);
  return {best, best_d2};
}

void KdTree::nearest_impl(std::int32_t node, const Eigen::Vector3d& q,
                          std::int32_t& best, double& best_d2) const {
  const Node& n = nodes_[node];
  const Eigen::Vector3d& p = points_[n.point];
  const double d2 = (p - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best = n.point;
    best_d2 = d2;
  }
  const double delta = q[n.axis] - p[n.axis];
  const std::int32_t near = delta < 0.0 ? n.left : n.right;
  const std::int32_t far = delta < 0.0 ? n.right : n.left;
  if (near >= 0) nearest_impl(near, q, best, best_d2);
  if (far >= 0 && delta * delta <= best_d2) nearest_impl(far, q, best, best_d2);
}

std::vector<std::int32_t> KdTree::k_nearest(const Eigen::Vector3d& query,
                                            std::size_t k) const {
  std::vector<std::pair<double, std::int32_t>> heap;  // max-heap on (d2, idx)
  if (root_ >= 0 && k > 0) {
    heap.reserve(k + 1);
    knn_impl(root_, query, k, heap);
  }
  std::sort(heap.begin(), heap.end());
  std::vector<std::int32_t> out;
  out.reserve(heap.size());
  for (const auto& [d2, idx] : heap) out.push_back(idx);
  return out;
}

void KdTree::knn_impl(std::int32_t node, const Eigen::Vector3d& q, std::size_t k,
                      std::vector<std::pair<double, std::int32_t>>& heap) const {
  const Node& n = nodes_[node];
  const Eigen::Vector3d& p = points_[n.point];
  const double d2 = (p - q).squaredNorm();
  const std::pair<double, std::int32_t> cand{d2, n.point};
  if (heap.size() < k) {
    heap.push_back(cand);
    std::push_heap(heap.begin(), heap.end());
  } else if (cand < heap.front()) {
    std::pop_heap(heap.begin(), heap.end());
    heap.back() = cand;
    std::push_heap(heap.begin(), heap.end());
  }
  const double delta = q[n.axis] - p[n.axis];
  const std::int32_t near = delta < 0.0 ? n.left : n.right;
  const std::int32_t far = delta < 0.0 ? n.right : n.left;
  if (near >= 0) knn_impl(near, q, k, heap);
  const double worst = heap.size() < k
                           ? std::numeric_limits<double>::infinity()
                           : heap.front().first;
  if (far >= 0 && delta * delta <= worst) knn_impl(far, q, k, heap);
}

std::vector<std::int32_t> KdTree::radius_search(const Eigen::Vector3d& query,
                                                double radius) const {
  std::vector<std::int32_t> out;
  if (root_ >= 0 && radius >= 0.0) {
    radius_impl(root_, query, radius * radius, out);
    std::sort(out.begin(), out.end());
  }
  return out;
}

void KdTree::radius_impl(std::int32_t node, const Eigen::Vector3d& q, double r2,
                         std::vector<std::int32_t>& out) const {
  const Node& n = nodes_[node];
  const Eigen::Vector3d& p = points_[n.point];
  if ((p - q).squaredNorm() <= r2) out.push_back(n.point);
  const double delta = q[n.axis] - p[n.axis];
  const std::int32_t near = delta < 0.0 ? n.left : n.right;
  const std::int32_t far = delta < 0.0 ? n.right : n.left;
  if (near >= 0) radius_impl(near, q, r2, out);
  if (far >= 0 && delta * delta <= r2) radius_impl(far, q, r2, out);
}

}  // namespace fcoreg
