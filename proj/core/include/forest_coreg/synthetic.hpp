#ifndef FOREST_COREG_SYNTHETIC_HPP
#define FOREST_COREG_SYNTHETIC_HPP

#include <cstdint>
#include <vector>

#include "forest_coreg/mission.hpp"
#include "forest_coreg/point_cloud.hpp"
#include "forest_coreg/preprocess.hpp"

namespace fcoreg {

/// One synthetic tree: a vertical-ish cylinder stem capped by an ellipsoidal
/// crown shell whose top sits at `height` above the terrain.
struct SyntheticTree {
  Eigen::Vector2d position_xy = Eigen::Vector2d::Zero();
  double height = 15.0;        // m
  double crown_radius = 2.5;   // m, horizontal semi-axis
  double stem_radius = 0.2;    // m
  Eigen::Vector3d lean = Eigen::Vector3d::UnitZ();  // unit stem direction
};

struct ForestParams {
  double min_spacing = 2.0;      // m, Poisson-disk spacing
  double min_height = 10.0, max_height = 28.0;
  double min_crown_radius = 1.5, max_crown_radius = 3.5;
  double min_stem_radius = 0.12, max_stem_radius = 0.35;
  double max_lean_deg = 2.0;
  double terrain_slope = 0.0;    // dz/dx of the ground plane
};

struct ForestModel {
  std::vector<SyntheticTree> trees;
  double extent = 100.0;  // trees live in [0, extent]^2
  Plane terrain;          // ground plane
  std::uint64_t rng_seed = 0;

  double ground_z(const Eigen::Vector2d& xy) const { return terrain.z_at(xy); }
};

/// Poisson-disk (dart throwing) tree placement with documented uniform
/// parameter ranges; deterministic per seed. Throws PackingFailed when
/// n_trees cannot be placed at the minimum spacing.
ForestModel generate_forest(int n_trees, double extent, std::uint64_t seed,
                            const ForestParams& params = {});

struct AlsScanParams {
  double ground_density = 12.0;      // points per m^2
  double crown_density = 80.0;       // points per m^2 of crown footprint
  double stem_points_per_meter = 2.0;  // sparse understory returns
  double noise_sigma = 0.01;         // m
  std::uint64_t seed = 0;
};

/// Aerial view: dense crowns (upper-shell biased), dense-ish ground in the
/// gaps, sparse stems. The crown apex is sampled explicitly, so the cloud's
/// max z over a tree equals its height up to noise.
PointCloud simulate_als_scan(const ForestModel& forest, const AlsScanParams& params = {});

struct MlsScanParams {
  double payload_distance = 20.0;    // m of travel aggregated per payload
  double sensing_range = 18.0;       // m from the trajectory segment
  double stem_points_per_meter = 120.0;  // per m of stem height
  double stem_visible_fraction = 0.5;    // stems sampled up to this * height
  double ground_density = 30.0;          // per m^2 in the corridor
  double canopy_keep_fraction = 0.05;    // sparse canopy visibility
  double noise_sigma = 0.01;             // m
  double sensor_height = 1.3;            // m above ground
  double drift_magnitude = 0.0;          // m, final-node drift (0 = none)
  double odom_sigma_t = 0.05;            // edge information: translation
  double odom_sigma_r = 0.005;           // edge information: rotation
  std::uint64_t seed = 0;
};

struct MlsSimulation {
  Mission mission;               // drifted poses, payloads in node-local frames
  std::vector<Pose> true_poses;  // ground truth, one per mission node
};

/// Walks the trajectory, aggregates one payload every payload_distance
/// meters (stems and ground dense, canopy sparse), and injects a smooth
/// SE(3) random-walk drift into the mission poses. Payload clouds stay
/// locally rigid: they are stored in the true local frame of their node.
/// The drift walk is rescaled so the final node's translation drift equals
/// drift_magnitude exactly. Throws EmptyTrajectory.
MlsSimulation simulate_mls_mission(const ForestModel& forest,
                                   const std::vector<Eigen::Vector2d>& trajectory,
                                   const MlsScanParams& params = {});

/// Back-and-forth coverage path over [margin, extent-margin]^2.
std::vector<Eigen::Vector2d> serpentine_trajectory(double extent, double lane_spacing,
                                                   double margin = 10.0);

}  // namespace fcoreg

#endif  // FOREST_COREG_SYNTHETIC_HPP
