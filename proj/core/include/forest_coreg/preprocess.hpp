#ifndef FOREST_COREG_PREPROCESS_HPP
#define FOREST_COREG_PREPROCESS_HPP

#include <cstdint>
#include <optional>

#include "forest_coreg/point_cloud.hpp"

namespace fcoreg {

/// Plane n . x + d = 0 with canonical upward orientation (n.z >= 0).
struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double d = 0.0;
  int inlier_count = 0;
  double inlier_rms = 0.0;

  /// Signed height of a point above the plane.
  double height_above(const Eigen::Vector3d& p) const {
    return normal.dot(p) + d;
  }
  /// z of the plane at a horizontal position (requires non-horizontal normal).
  double z_at(const Eigen::Vector2d& xy) const {
    return -(d + normal.x() * xy.x() + normal.y() * xy.y()) / normal.z();
  }
};

struct GroundFitParams {
  int normal_knn = 16;             // k-NN for PCA normals when absent
  double max_normal_tilt_deg = 30; // ground candidates: normal near vertical
  double height_band_fraction = 0.3;  // candidates drawn from lowest heights
  double inlier_threshold = 0.10;  // m
  int max_iterations = 1000;
  double confidence = 0.99;        // early-exit confidence
  std::uint64_t seed = 0;
};

/// Axis-aligned square crop in x,y around center; full z range retained.
/// Throws EmptyCrop when no point falls inside the window.
PointCloud crop_als(const PointCloud& als, const Eigen::Vector2d& center_xy,
                    double half_extent);

/// Per-point normals from k-NN PCA, oriented upward (n.z >= 0).
std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud, int k);

/// RANSAC plane fit over ground candidates (points in the lowest height band
/// whose normal is near vertical), refined by least squares on the inliers.
/// Throws DegenerateGround when candidates are too few or the inlier ratio
/// is below 5%.
Plane fit_ground_plane(const PointCloud& cloud, const GroundFitParams& params = {});

/// Pose that rotates the MLS ground normal onto the ALS ground normal
/// (minimal rotation about their cross product) and shifts along z so the
/// planes coincide at center_xy. Throws AntiparallelNormals when the normals
/// disagree by more than 90 degrees.
Pose vertical_alignment(const Plane& mls_plane, const Plane& als_plane,
                        const Eigen::Vector2d& center_xy = Eigen::Vector2d::Zero());

}  // namespace fcoreg

#endif  // FOREST_COREG_PREPROCESS_HPP
