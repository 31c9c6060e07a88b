#ifndef FOREST_COREG_POINT_CLOUD_HPP
#define FOREST_COREG_POINT_CLOUD_HPP

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "forest_coreg/lie.hpp"

namespace fcoreg {

enum class CloudSource { kAls, kMls };

/// A 3-D point cloud in meters (gravity-aligned frame). Normals are either
/// absent or one unit vector per point.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;
  CloudSource source = CloudSource::kMls;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const {
    return !normals.empty() && normals.size() == points.size();
  }

  void reserve(std::size_t n) { points.reserve(n); }
};

/// Applies p to every point (R x + t); normals are rotated only.
PointCloud transform_cloud(const PointCloud& cloud, const Pose& p);

/// Replaces all points falling into the same cubic voxel by their centroid.
/// Voxel index = floor(coordinate / resolution) per axis; output is sorted
/// by (ix, iy, iz) index, which makes the operation order-independent and
/// idempotent at fixed resolution. Normals, when present, are averaged and
/// renormalized. Throws NonPositiveResolution.
PointCloud voxel_downsample(const PointCloud& cloud, double resolution);

/// Axis-aligned bounding box helpers.
Eigen::Vector3d min_corner(const PointCloud& cloud);
Eigen::Vector3d max_corner(const PointCloud& cloud);

}  // namespace fcoreg

#endif  // FOREST_COREG_POINT_CLOUD_HPP
