#ifndef FOREST_COREG_ICP_HPP
#define FOREST_COREG_ICP_HPP

#include <cstdint>
#include <vector>

#include "forest_coreg/kdtree.hpp"
#include "forest_coreg/point_cloud.hpp"

namespace fcoreg {

/// Outcome of registering one MLS cloud against the ALS crop. `transform`
/// maps the source (MLS) cloud into the target (ALS) frame.
struct RegistrationResult {
  std::int64_t cloud_id = -1;
  Pose transform;
  double fitness = 0.0;      // fraction of source points with a correspondence
  double inlier_rmse = 0.0;  // m, over those correspondences
  int num_inliers = 0;
  bool accepted = false;
  int iterations = 0;
};

struct IcpParams {
  double max_corr_dist = 0.5;  // m
  int max_iterations = 50;
  double translation_epsilon = 1e-6;  // ||log|| of the per-iteration update
};

/// Point-to-point ICP: nearest-neighbor correspondences through a kd-tree on
/// the target, closed-form rigid update per iteration, termination on
/// max_iterations or an update smaller than translation_epsilon. Fitness and
/// inlier RMSE are evaluated at the final transform. Throws
/// NoCorrespondences when no pair is within max_corr_dist at init.
RegistrationResult icp(const PointCloud& source, const PointCloud& target,
                       const Pose& init, const IcpParams& params = {});

/// Same, reusing a prebuilt tree over the target points.
RegistrationResult icp(const PointCloud& source, const KdTree& target_tree,
                       const Pose& init, const IcpParams& params = {});

/// Sets the accepted flag: a result passes when num_inliers >= min_inliers
/// and fitness >= min_fitness. Idempotent.
std::vector<RegistrationResult> filter_matches(std::vector<RegistrationResult> results,
                                               int min_inliers, double min_fitness);

/// Closed-form least-squares rigid alignment of paired 3-D points
/// (Umeyama / Kabsch, no scale): minimizes sum ||R a_i + t - b_i||^2.
Pose umeyama_alignment(const std::vector<Eigen::Vector3d>& source,
                       const std::vector<Eigen::Vector3d>& target);

}  // namespace fcoreg

#endif  // FOREST_COREG_ICP_HPP
