#include "forest_coreg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "forest_coreg/errors.hpp"
#include "forest_coreg/kdtree.hpp"
#include "forest_coreg/random.hpp"

namespace fcoreg {

PointCloud crop_als(const PointCloud& als, const Eigen::Vector2d& center_xy,
                    double half_extent) {
  if (!(half_extent > 0.0)) {
    throw EmptyCrop("crop_als: half_extent must be > 0");
  }
  PointCloud out;
  out.source = als.source;
  const bool with_normals = als.has_normals();
  for (std::size_t i = 0; i < als.points.size(); ++i) {
    const auto& p = als.points[i];
    if (std::abs(p.x() - center_xy.x()) <= half_extent &&
        std::abs(p.y() - center_xy.y()) <= half_extent) {
      out.points.push_back(p);
      if (with_normals) out.normals.push_back(als.normals[i]);
    }
  }
  if (out.empty()) {
    throw EmptyCrop("crop_als: no points in the crop window (GNSS prior off?)");
  }
  return out;
}

std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud, int k) {
  const KdTree tree(cloud.points);
  std::vector<Eigen::Vector3d> normals(cloud.size(), Eigen::Vector3d::UnitZ());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nn = tree.k_nearest(cloud.points[i], static_cast<std::size_t>(k));
    if (nn.size() < 3) continue;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (auto j : nn) mean += cloud.points[j];
    mean /= static_cast<double>(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (auto j : nn) {
      const Eigen::Vector3d d = cloud.points[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Eigen::Vector3d n = es.eigenvectors().col(0);  // smallest eigenvalue
    if (n.z() < 0.0) n = -n;
    normals[i] = n;
  }
  return normals;
}

namespace {

Plane plane_from_points(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                        const Eigen::Vector3d& c) {
  Plane plane;
  Eigen::Vector3d n = (b - a).cross(c - a);
  const double norm = n.norm();
  if (norm < 1e-12) {
    plane.normal.setZero();
    return plane;
  }
  n /= norm;
  if (n.z() < 0.0) n = -n;
  plane.normal = n;
  plane.d = -n.dot(a);
  return plane;
}

// Least-squares plane through a point set (PCA), upward-oriented.
Plane refine_plane(const std::vector<Eigen::Vector3d>& pts,
                   const std::vector<std::int32_t>& idx) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (auto i : idx) mean += pts[i];
  mean /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (auto i : idx) {
    const Eigen::Vector3d d = pts[i] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Eigen::Vector3d n = es.eigenvectors().col(0);
  if (n.z() < 0.0) n = -n;
  Plane plane;
  plane.normal = n;
  plane.d = -n.dot(mean);
  return plane;
}

}  // namespace

Plane fit_ground_plane(const PointCloud& cloud, const GroundFitParams& params) {
  if (cloud.size() < 100) {
    throw DegenerateGround("fit_ground_plane: need at least 100 points, got " +
                           std::to_string(cloud.size()));
  }
  const std::vector<Eigen::Vector3d>& normals =
      cloud.has_normals() ? cloud.normals : estimate_normals(cloud, params.normal_knn);

  // Ground candidates: near-vertical normal, in the lowest height band.
  std::vector<double> zs(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) zs[i] = cloud.points[i].z();
  std::vector<double> sorted_z = zs;
  std::sort(sorted_z.begin(), sorted_z.end());
  const std::size_t band_idx = std::min(
      cloud.size() - 1,
      static_cast<std::size_t>(params.height_band_fraction * cloud.size()));
  const double z_cut = sorted_z[band_idx];
  const double min_nz = std::cos(params.max_normal_tilt_deg * M_PI / 180.0);

  // Seeds come from the lowest height band (keeps canopy planes out of the
  // hypotheses); inliers are counted over every near-vertical-normal point,
  // so the refit is not biased toward the low tail of the ground noise.
  std::vector<std::int32_t> pool;
  std::vector<std::int32_t> seeds;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (std::abs(normals[i].z()) < min_nz) continue;
    pool.push_back(static_cast<std::int32_t>(i));
    if (zs[i] <= z_cut) seeds.push_back(static_cast<std::int32_t>(i));
  }
  if (seeds.size() < 3) {
    throw DegenerateGround("fit_ground_plane: fewer than 3 ground candidates");
  }

  Rng rng(params.seed);
  const auto& pts = cloud.points;
  std::vector<std::int32_t> best_inliers;
  int iterations = params.max_iterations;
  for (int it = 0; it < iterations; ++it) {
    const std::int32_t n = static_cast<std::int32_t>(seeds.size());
    const std::int32_t a = seeds[rng.uniform_int(0, n - 1)];
    const std::int32_t b = seeds[rng.uniform_int(0, n - 1)];
    const std::int32_t c = seeds[rng.uniform_int(0, n - 1)];
    if (a == b || b == c || a == c) continue;
    const Plane hyp = plane_from_points(pts[a], pts[b], pts[c]);
    if (hyp.normal.isZero() || std::abs(hyp.normal.z()) < min_nz) continue;

    std::vector<std::int32_t> inliers;
    for (auto i : pool) {
      if (std::abs(hyp.height_above(pts[i])) <= params.inlier_threshold) {
        inliers.push_back(i);
      }
    }
    if (inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
      // Adaptive iteration count for the requested confidence.
      const double w = static_cast<double>(best_inliers.size()) / pool.size();
      const double p_all = w * w * w;
      if (p_all > 1e-12 && p_all < 1.0) {
        const int needed = static_cast<int>(
            std::ceil(std::log(1.0 - params.confidence) / std::log(1.0 - p_all)));
        iterations = std::min(iterations, std::max(it + 1, needed));
      } else if (p_all >= 1.0) {
        break;
      }
    }
  }

  if (best_inliers.size() < std::max<std::size_t>(3, pool.size() / 20)) {
    throw DegenerateGround("fit_ground_plane: inlier ratio below 5%");
  }

  Plane plane = refine_plane(pts, best_inliers);
  double ss = 0.0;
  int count = 0;
  for (auto i : best_inliers) {
    const double h = plane.height_above(pts[i]);
    if (std::abs(h) <= params.inlier_threshold) {
      ss += h * h;
      ++count;
    }
  }
  plane.inlier_count = count;
  plane.inlier_rms = count > 0 ? std::sqrt(ss / count) : 0.0;
  return plane;
}

Pose vertical_alignment(const Plane& mls_plane, const Plane& als_plane,
                        const Eigen::Vector2d& center_xy) {
  const Eigen::Vector3d& nm = mls_plane.normal;
  const Eigen::Vector3d& na = als_plane.normal;
  const double cos_angle = nm.dot(na);
  if (cos_angle <= 0.0) {
    throw AntiparallelNormals("vertical_alignment: ground normals disagree by > 90 deg");
  }

  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  const Eigen::Vector3d axis = nm.cross(na);
  const double sin_angle = axis.norm();
  if (sin_angle > 1e-15) {
    const double angle = std::atan2(sin_angle, cos_angle);
    q = so3_exp((angle / sin_angle) * axis);
  }

  // Rotate about the point of the MLS plane under the crop center, then
  // shift along z so both planes agree there.
  const Eigen::Vector3d pivot(center_xy.x(), center_xy.y(), mls_plane.z_at(center_xy));
  const double dz = als_plane.z_at(center_xy) - mls_plane.z_at(center_xy);
  const Eigen::Vector3d t = pivot - q * pivot + Eigen::Vector3d(0.0, 0.0, dz);
  return Pose(q, t);
}

}  // namespace fcoreg
