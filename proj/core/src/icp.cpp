#include "forest_coreg/icp.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "forest_coreg/errors.hpp"
#include "forest_coreg/lie.hpp"

namespace fcoreg {

Pose umeyama_alignment(const std::vector<Eigen::Vector3d>& source,
                       const std::vector<Eigen::Vector3d>& target) {
  Eigen::Vector3d mean_a = Eigen::Vector3d::Zero();
  Eigen::Vector3d mean_b = Eigen::Vector3d::Zero();
  const double n = static_cast<double>(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    mean_a += source[i];
    mean_b += target[i];
  }
  mean_a /= n;
  mean_b /= n;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    h += (source[i] - mean_a) * (target[i] - mean_b).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  return Pose(r, mean_b - r * mean_a);
}

RegistrationResult icp(const PointCloud& source, const PointCloud& target,
                       const Pose& init, const IcpParams& params) {
  if (target.empty()) throw NoCorrespondences("icp: target cloud is empty");
  return icp(source, KdTree(target.points), init, params);
}

RegistrationResult icp(const PointCloud& source, const KdTree& target_tree,
                       const Pose& init, const IcpParams& params) {
  if (source.empty() || target_tree.empty()) {
    throw NoCorrespondences("icp: empty input cloud");
  }
  const double max_d2 = params.max_corr_dist * params.max_corr_dist;

  RegistrationResult result;
  result.transform = init;

  std::vector<Eigen::Vector3d> src, dst;
  src.reserve(source.size());
  dst.reserve(source.size());

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    src.clear();
    dst.clear();
    for (const auto& p : source.points) {
      const Eigen::Vector3d q = result.transform * p;
      const auto [idx, d2] = target_tree.nearest(q);
      if (idx >= 0 && d2 <= max_d2) {
        src.push_back(q);
        dst.push_back(target_tree.points()[idx]);
      }
    }
    if (src.size() < 3) {
      if (iter == 0) {
        throw NoCorrespondences("icp: no correspondences within max_corr_dist at init");
      }
      break;
    }
    const Pose update = umeyama_alignment(src, dst);
    result.transform = update * result.transform;
    result.iterations = iter + 1;
    if (se3_log(update).norm() < params.translation_epsilon) break;
  }

  // Fitness and RMSE at the final transform.
  std::size_t inliers = 0;
  double ss = 0.0;
  for (const auto& p : source.points) {
    const Eigen::Vector3d q = result.transform * p;
    const auto [idx, d2] = target_tree.nearest(q);
    if (idx >= 0 && d2 <= max_d2) {
      ++inliers;
      ss += d2;
    }
  }
  if (inliers == 0) {
    throw NoCorrespondences("icp: no correspondences at the final transform");
  }
  result.num_inliers = static_cast<int>(inliers);
  result.fitness = static_cast<double>(inliers) / static_cast<double>(source.size());
  result.inlier_rmse = std::sqrt(ss / static_cast<double>(inliers));
  return result;
}

std::vector<RegistrationResult> filter_matches(std::vector<RegistrationResult> results,
                                               int min_inliers, double min_fitness) {
  for (auto& r : results) {
    r.accepted = r.num_inliers >= min_inliers && r.fitness >= min_fitness;
  }
  return results;
}

}  // namespace fcoreg
