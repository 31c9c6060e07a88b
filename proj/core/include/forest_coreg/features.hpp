#ifndef FOREST_COREG_FEATURES_HPP
#define FOREST_COREG_FEATURES_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forest_coreg/point_cloud.hpp"
#include "forest_coreg/preprocess.hpp"

namespace fcoreg {

/// Top-down raster of maximum point height. Cells without points hold NaN.
struct CanopyHeightMap {
  Eigen::Vector2d origin_xy = Eigen::Vector2d::Zero();
  double resolution = 0.5;
  int rows = 0;
  int cols = 0;
  std::vector<double> cells;  // row-major

  double at(int row, int col) const { return cells[row * cols + col]; }
  double& at(int row, int col) { return cells[row * cols + col]; }
  Eigen::Vector2d cell_center(int row, int col) const {
    return {origin_xy.x() + (col + 0.5) * resolution,
            origin_xy.y() + (row + 0.5) * resolution};
  }
};

/// A detected tree: planar position plus whatever the source modality can
/// measure (peak height for ALS, stem radius/axis for MLS).
struct TreeFeature {
  Eigen::Vector2d position_xy = Eigen::Vector2d::Zero();
  std::optional<double> height;           // m above ground
  std::optional<double> radius;           // m, stem radius at breast height
  std::optional<Eigen::Vector3d> axis;    // unit, stem direction
  CloudSource source = CloudSource::kAls;
};

struct StemExtractionParams {
  double slice_min = 0.5;   // m above ground
  double slice_max = 5.0;
  double dbscan_eps = 0.5;
  int dbscan_min_pts = 20;
  double cylinder_inlier_threshold = 0.03;  // m
  double min_radius = 0.05;
  double max_radius = 1.0;
  double max_axis_tilt_deg = 30.0;
  int min_cylinder_inliers = 20;
  double breast_height = 1.3;  // m, center reporting convention
  std::uint64_t seed = 0;
};

struct CylinderFit {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // unit
  Eigen::Vector3d center = Eigen::Vector3d::Zero(); // point on the axis
  double radius = 0.0;
  int inliers = 0;
  double inlier_rms = 0.0;
};

/// Max-z binning over the cloud's xy bounding box.
/// Throws NonPositiveResolution.
CanopyHeightMap rasterize_chm(const PointCloud& cloud, double resolution);

/// Non-maxima suppression: a cell is a peak iff it is the strict maximum of
/// its (2w+1)^2 neighborhood and at least min_height above the ground
/// reference (the plane when given, otherwise the lowest finite cell).
/// Output is ordered by (row, col).
std::vector<TreeFeature> extract_peaks(const CanopyHeightMap& chm, int window_radius,
                                       double min_height,
                                       const std::optional<Plane>& ground = std::nullopt);

/// Density-based clustering; returns one label per point, -1 for noise.
/// Cluster ids are assigned in order of the first core point encountered,
/// so the labeling is deterministic.
std::vector<int> dbscan_cluster(const std::vector<Eigen::Vector3d>& points,
                                double eps, int min_pts);

/// RANSAC cylinder fit with vertical-prior axis sampling and Gauss-Newton
/// refinement on the inliers. Throws FitFailed when fewer than 20 points are
/// given or the inlier ratio stays below 30%.
CylinderFit fit_cylinder(const std::vector<Eigen::Vector3d>& points,
                         double inlier_threshold = 0.03,
                         double max_axis_tilt_deg = 30.0,
                         std::uint64_t seed = 0);

/// Stem detection: slice [slice_min, slice_max] above the ground plane,
/// cluster by density, fit a cylinder per cluster, and report the stem
/// center at breast height. Clusters whose fit fails the radius/tilt/inlier
/// gates are dropped.
std::vector<TreeFeature> extract_stems(const PointCloud& cloud, const Plane& ground,
                                       const StemExtractionParams& params = {});

/// Debug exports.
void save_chm(const CanopyHeightMap& chm, const std::string& path);
void save_features_csv(const std::vector<TreeFeature>& features, const std::string& path);

}  // namespace fcoreg

#endif  // FOREST_COREG_FEATURES_HPP
