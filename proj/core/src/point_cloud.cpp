#include "forest_coreg/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>

#include "forest_coreg/errors.hpp"

namespace fcoreg {

PointCloud transform_cloud(const PointCloud& cloud, const Pose& p) {
  PointCloud out;
  out.source = cloud.source;
  out.points.resize(cloud.points.size());
  const Eigen::Matrix3d r = p.rotation_matrix();
  const Eigen::Vector3d t = p.translation();
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    out.points[i] = r * cloud.points[i] + t;
  }
  if (cloud.has_normals()) {
    out.normals.resize(cloud.normals.size());
    for (std::size_t i = 0; i < cloud.normals.size(); ++i) {
      out.normals[i] = r * cloud.normals[i];
    }
  }
  return out;
}

namespace {

struct VoxelKey {
  std::int64_t ix, iy, iz;
  bool operator==(const VoxelKey& o) const {
    return ix == o.ix && iy == o.iy && iz == o.iz;
  }
  bool operator<(const VoxelKey& o) const {
    if (ix != o.ix) return ix < o.ix;
    if (iy != o.iy) return iy < o.iy;
    return iz < o.iz;
  }
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.ix, k.iy, k.iz}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

struct VoxelAccum {
  Eigen::Vector3d point_sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal_sum = Eigen::Vector3d::Zero();
  std::size_t count = 0;
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0.0)) {
    throw NonPositiveResolution("voxel_downsample: resolution must be > 0, got " +
                                std::to_string(resolution));
  }
  const bool with_normals = cloud.has_normals();
  std::unordered_map<VoxelKey, VoxelAccum, VoxelKeyHash> grid;
  grid.reserve(cloud.size());
  const double inv = 1.0 / resolution;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    const VoxelKey key{static_cast<std::int64_t>(std::floor(p.x() * inv)),
                       static_cast<std::int64_t>(std::floor(p.y() * inv)),
                       static_cast<std::int64_t>(std::floor(p.z() * inv))};
    VoxelAccum& acc = grid[key];
    acc.point_sum += p;
    acc.count += 1;
    if (with_normals) acc.normal_sum += cloud.normals[i];
  }

  std::vector<std::pair<VoxelKey, VoxelAccum>> cells(grid.begin(), grid.end());
  std::sort(cells.begin(), cells.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  PointCloud out;
  out.source = cloud.source;
  out.points.reserve(cells.size());
  if (with_normals) out.normals.reserve(cells.size());
  for (const auto& [key, acc] : cells) {
    out.points.push_back(acc.point_sum / static_cast<double>(acc.count));
    if (with_normals) {
      const double n = acc.normal_sum.norm();
      out.normals.push_back(n > 1e-12 ? Eigen::Vector3d(acc.normal_sum / n)
                                      : Eigen::Vector3d::UnitZ());
    }
  }
  return out;
}

Eigen::Vector3d min_corner(const PointCloud& cloud) {
  Eigen::Vector3d m =
      Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  for (const auto& p : cloud.points) m = m.cwiseMin(p);
  return m;
}

Eigen::Vector3d max_corner(const PointCloud& cloud) {
  Eigen::Vector3d m =
      Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());
  for (const auto& p : cloud.points) m = m.cwiseMax(p);
  return m;
}

}  // namespace fcoreg
