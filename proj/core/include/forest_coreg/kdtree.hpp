#ifndef FOREST_COREG_KDTREE_HPP
#define FOREST_COREG_KDTREE_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace fcoreg {

/// Static kd-tree over 3-D points. Built once, queried concurrently
/// (all queries are const). Ties in distance are broken by the lower point
/// index so query results are deterministic.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Eigen::Vector3d> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Eigen::Vector3d>& points() const { return points_; }

  /// Index and squared distance of the nearest point; {-1, inf} if empty.
  std::pair<std::int32_t, double> nearest(const Eigen::Vector3d& query) const;

  /// Up to k nearest points, ordered by (distance, index) ascending.
  std::vector<std::int32_t> k_nearest(const Eigen::Vector3d& query,
                                      std::size_t k) const;

  /// All points within radius (inclusive), indices ascending.
  std::vector<std::int32_t> radius_search(const Eigen::Vector3d& query,
                                          double radius) const;

 private:
  struct Node {
    std::int32_t point = -1;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint8_t axis = 0;
  };

  std::int32_t build(std::vector<std::int32_t>& index, std::int32_t lo,
                     std::int32_t hi);

  void nearest_impl(std::int32_t node, const Eigen::Vector3d& q,
                    std::int32_t& best, double& best_d2) const;
  void knn_impl(std::int32_t node, const Eigen::Vector3d& q, std::size_t k,
                std::vector<std::pair<double, std::int32_t>>& heap) const;
  void radius_impl(std::int32_t node, const Eigen::Vector3d& q, double r2,
                   std::vector<std::int32_t>& out) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace fcoreg

#endif  // FOREST_COREG_KDTREE_HPP
