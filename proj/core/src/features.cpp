#include "forest_coreg/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

#include "forest_coreg/errors.hpp"
#include "forest_coreg/kdtree.hpp"
#include "forest_coreg/random.hpp"

namespace fcoreg {

CanopyHeightMap rasterize_chm(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0.0)) {
    throw NonPositiveResolution("rasterize_chm: resolution must be > 0");
  }
  CanopyHeightMap chm;
  chm.resolution = resolution;
  if (cloud.empty()) return chm;

  const Eigen::Vector3d mn = min_corner(cloud);
  const Eigen::Vector3d mx = max_corner(cloud);
  chm.origin_xy = {mn.x(), mn.y()};
  chm.cols = static_cast<int>(std::floor((mx.x() - mn.x()) / resolution)) + 1;
  chm.rows = static_cast<int>(std::floor((mx.y() - mn.y()) / resolution)) + 1;
  chm.cells.assign(static_cast<std::size_t>(chm.rows) * chm.cols,
                   std::numeric_limits<double>::quiet_NaN());

  for (const auto& p : cloud.points) {
    int col = static_cast<int>(std::floor((p.x() - chm.origin_xy.x()) / resolution));
    int row = static_cast<int>(std::floor((p.y() - chm.origin_xy.y()) / resolution));
    col = std::clamp(col, 0, chm.cols - 1);
    row = std::clamp(row, 0, chm.rows - 1);
    double& cell = chm.at(row, col);
    if (std::isnan(cell) || p.z() > cell) cell = p.z();
  }
  return chm;
}

std::vector<TreeFeature> extract_peaks(const CanopyHeightMap& chm, int window_radius,
                                       double min_height,
                                       const std::optional<Plane>& ground) {
  std::vector<TreeFeature> peaks;
  if (chm.rows == 0 || chm.cols == 0) return peaks;

  double min_cell = std::numeric_limits<double>::infinity();
  for (double v : chm.cells) {
    if (!std::isnan(v)) min_cell = std::min(min_cell, v);
  }
  if (!std::isfinite(min_cell)) return peaks;

  for (int r = 0; r < chm.rows; ++r) {
    for (int c = 0; c < chm.cols; ++c) {
      const double v = chm.at(r, c);
      if (std::isnan(v)) continue;

      const Eigen::Vector2d center = chm.cell_center(r, c);
      const double ref_z = ground ? ground->z_at(center) : min_cell;
      if (v - ref_z < min_height) continue;

      bool strict_max = true;
      for (int dr = -window_radius; dr <= window_radius && strict_max; ++dr) {
        for (int dc = -window_radius; dc <= window_radius; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || rr >= chm.rows || cc < 0 || cc >= chm.cols) continue;
          const double u = chm.at(rr, cc);
          if (!std::isnan(u) && u >= v) {
            strict_max = false;
            break;
          }
        }
      }
      if (!strict_max) continue;

      TreeFeature f;
      f.position_xy = center;
      f.height = v - ref_z;
      f.source = CloudSource::kAls;
      peaks.push_back(f);
    }
  }
  return peaks;
}

std::vector<int> dbscan_cluster(const std::vector<Eigen::Vector3d>& points,
                                double eps, int min_pts) {
  const int n = static_cast<int>(points.size());
  std::vector<int> labels(n, -2);  // -2 unvisited, -1 noise
  if (n == 0) return labels;
  const KdTree tree(points);

  int next_cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] != -2) continue;
    auto neighbors = tree.radius_search(points[i], eps);
    if (static_cast<int>(neighbors.size()) < min_pts) {
      labels[i] = -1;
      continue;
    }
    const int cluster = next_cluster++;
    labels[i] = cluster;
    std::deque<std::int32_t> frontier(neighbors.begin(), neighbors.end());
    while (!frontier.empty()) {
      const std::int32_t j = frontier.front();
      frontier.pop_front();
      if (labels[j] == -1) labels[j] = cluster;  // border point
      if (labels[j] != -2) continue;
      labels[j] = cluster;
      auto nb = tree.radius_search(points[j], eps);
      if (static_cast<int>(nb.size()) >= min_pts) {
        frontier.insert(frontier.end(), nb.begin(), nb.end());
      }
    }
  }
  for (auto& l : labels) {
    if (l == -2) l = -1;
  }
  return labels;
}

namespace {

double cylinder_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& axis,
                         const Eigen::Vector3d& center, double radius) {
  const Eigen::Vector3d u = p - center;
  const Eigen::Vector3d w = u - axis * axis.dot(u);
  return std::abs(w.norm() - radius);
}

// Circumcircle of three 2-D points; false when nearly collinear.
bool circumcircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                  const Eigen::Vector2d& c, Eigen::Vector2d& center, double& radius) {
  const double det = 2.0 * ((b.x() - a.x()) * (c.y() - a.y()) -
                            (b.y() - a.y()) * (c.x() - a.x()));
  if (std::abs(det) < 1e-12) return false;
  const double a2 = a.squaredNorm();
  const double b2 = b.squaredNorm();
  const double c2 = c.squaredNorm();
  center.x() = (a2 * (b.y() - c.y()) + b2 * (c.y() - a.y()) + c2 * (a.y() - b.y())) / det;
  center.y() = (a2 * (c.x() - b.x()) + b2 * (a.x() - c.x()) + c2 * (b.x() - a.x())) / det;
  radius = (a - center).norm();
  return true;
}

void axis_basis(const Eigen::Vector3d& axis, Eigen::Vector3d& u, Eigen::Vector3d& v) {
  u = axis.cross(std::abs(axis.z()) < 0.9 ? Eigen::Vector3d::UnitZ()
                                          : Eigen::Vector3d::UnitX());
  u.normalize();
  v = axis.cross(u);
}

// Gauss-Newton over (center in the axis-normal plane, axis on the sphere,
// radius); analytic Jacobians of |(p-c)_perp| - r.
void refine_cylinder(const std::vector<Eigen::Vector3d>& pts,
                     const std::vector<std::int32_t>& inliers, CylinderFit& fit) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (auto i : inliers) centroid += pts[i];
  centroid /= static_cast<double>(inliers.size());

  for (int iter = 0; iter < 25; ++iter) {
    // Pin the free axial position of the center to the centroid's level.
    fit.center += fit.axis * fit.axis.dot(centroid - fit.center);

    Eigen::Vector3d cu, cv;
    axis_basis(fit.axis, cu, cv);

    Eigen::Matrix<double, 5, 5> h = Eigen::Matrix<double, 5, 5>::Zero();
    Eigen::Matrix<double, 5, 1> g = Eigen::Matrix<double, 5, 1>::Zero();
    for (auto i : inliers) {
      const Eigen::Vector3d u = pts[i] - fit.center;
      const double au = fit.axis.dot(u);
      const Eigen::Vector3d w = u - fit.axis * au;
      const double rho = w.norm();
      if (rho < 1e-12) continue;
      const double res = rho - fit.radius;
      Eigen::Matrix<double, 5, 1> j;
      j(0) = -w.dot(cu) / rho;
      j(1) = -w.dot(cv) / rho;
      j(2) = -au * u.dot(cu) / rho;
      j(3) = -au * u.dot(cv) / rho;
      j(4) = -1.0;
      h += j * j.transpose();
      g += j * res;
    }
    Eigen::Matrix<double, 5, 1> step =
        h.ldlt().solve(-g);
    if (!step.allFinite()) break;
    fit.center += step(0) * cu + step(1) * cv;
    fit.axis = (fit.axis + step(2) * cu + step(3) * cv).normalized();
    fit.radius += step(4);
    if (step.norm() < 1e-12) break;
  }
  if (fit.axis.z() < 0.0) fit.axis = -fit.axis;
}

}  // namespace

CylinderFit fit_cylinder(const std::vector<Eigen::Vector3d>& points,
                         double inlier_threshold, double max_axis_tilt_deg,
                         std::uint64_t seed) {
  if (points.size() < 20) {
    throw FitFailed("fit_cylinder: need at least 20 points, got " +
                    std::to_string(points.size()));
  }
  Rng rng(seed);
  const int n = static_cast<int>(points.size());
  const double max_tilt = max_axis_tilt_deg * M_PI / 180.0;
  const double min_axis_z = std::cos(max_tilt);
  constexpr double kMaxHypothesisRadius = 2.0;

  // Axis hypotheses: the vertical prior, the cluster's principal direction
  // (stems are elongated along their axis), and small perturbations of both.
  // Blind sampling of the 30-degree cone almost never hits the fraction of
  // a degree that a meter-scale stem demands.
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Eigen::Vector3d pca = es.eigenvectors().col(2);  // largest eigenvalue
  if (pca.z() < 0.0) pca = -pca;

  std::vector<Eigen::Vector3d> axes;
  axes.push_back(Eigen::Vector3d::UnitZ());
  if (pca.z() >= min_axis_z) axes.push_back(pca);
  const std::size_t n_bases = axes.size();
  while (axes.size() < 40) {
    const Eigen::Vector3d base = axes[axes.size() % n_bases];
    const double sigma = axes.size() < 20 ? 0.01 : 0.04;
    Eigen::Vector3d candidate = (base + rng.normal3(sigma)).normalized();
    if (candidate.z() < 0.0) candidate = -candidate;
    if (candidate.z() >= min_axis_z) axes.push_back(candidate);
  }

  CylinderFit best;
  std::vector<std::int32_t> best_inliers;
  for (const auto& axis : axes) {
    Eigen::Vector3d bu, bv;
    axis_basis(axis, bu, bv);
    auto project = [&](const Eigen::Vector3d& p) {
      return Eigen::Vector2d(p.dot(bu), p.dot(bv));
    };
    for (int triple = 0; triple < 5; ++triple) {
      const int ia = static_cast<int>(rng.uniform_int(0, n - 1));
      const int ib = static_cast<int>(rng.uniform_int(0, n - 1));
      const int ic = static_cast<int>(rng.uniform_int(0, n - 1));
      if (ia == ib || ib == ic || ia == ic) continue;
      Eigen::Vector2d cc;
      double cr;
      if (!circumcircle(project(points[ia]), project(points[ib]), project(points[ic]),
                        cc, cr)) {
        continue;
      }
      if (cr < 0.01 || cr > kMaxHypothesisRadius) continue;
      const Eigen::Vector3d center = cc.x() * bu + cc.y() * bv;

      std::vector<std::int32_t> inliers;
      for (int i = 0; i < n; ++i) {
        if (cylinder_distance(points[i], axis, center, cr) <= inlier_threshold) {
          inliers.push_back(i);
        }
      }
      if (inliers.size() > best_inliers.size()) {
        best_inliers = std::move(inliers);
        best.axis = axis;
        best.center = center;
        best.radius = cr;
      }
    }
  }

  if (best_inliers.size() < static_cast<std::size_t>(0.3 * n)) {
    throw FitFailed("fit_cylinder: inlier ratio below 30%");
  }

  refine_cylinder(points, best_inliers, best);

  // Recount at the refined parameters, refine once more, then report
  // statistics at the final fit.
  auto count_inliers = [&](std::vector<std::int32_t>& inliers, double& rms) {
    inliers.clear();
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = cylinder_distance(points[i], best.axis, best.center, best.radius);
      if (d <= inlier_threshold) {
        inliers.push_back(i);
        ss += d * d;
      }
    }
    rms = inliers.empty() ? 0.0 : std::sqrt(ss / inliers.size());
  };

  std::vector<std::int32_t> final_inliers;
  double rms = 0.0;
  count_inliers(final_inliers, rms);
  if (final_inliers.size() < static_cast<std::size_t>(0.3 * n)) {
    throw FitFailed("fit_cylinder: inlier ratio below 30% after refinement");
  }
  refine_cylinder(points, final_inliers, best);
  count_inliers(final_inliers, rms);
  best.inliers = static_cast<int>(final_inliers.size());
  best.inlier_rms = rms;
  return best;
}

std::vector<TreeFeature> extract_stems(const PointCloud& cloud, const Plane& ground,
                                       const StemExtractionParams& params) {
  std::vector<Eigen::Vector3d> slice;
  for (const auto& p : cloud.points) {
    const double h = ground.height_above(p);
    if (h >= params.slice_min && h <= params.slice_max) slice.push_back(p);
  }
  std::vector<TreeFeature> stems;
  if (slice.empty()) return stems;

  const std::vector<int> labels =
      dbscan_cluster(slice, params.dbscan_eps, params.dbscan_min_pts);
  int n_clusters = 0;
  for (int l : labels) n_clusters = std::max(n_clusters, l + 1);

  const double max_tilt_cos = std::cos(params.max_axis_tilt_deg * M_PI / 180.0);
  for (int cluster = 0; cluster < n_clusters; ++cluster) {
    std::vector<Eigen::Vector3d> member;
    for (std::size_t i = 0; i < slice.size(); ++i) {
      if (labels[i] == cluster) member.push_back(slice[i]);
    }
    if (member.size() < 20) continue;

    CylinderFit fit;
    try {
      fit = fit_cylinder(member, params.cylinder_inlier_threshold,
                         params.max_axis_tilt_deg,
                         derive_seed(params.seed, static_cast<std::uint64_t>(cluster)));
    } catch (const FitFailed&) {
      continue;
    }
    if (fit.radius < params.min_radius || fit.radius > params.max_radius) continue;
    if (fit.axis.dot(Eigen::Vector3d::UnitZ()) < max_tilt_cos) continue;
    if (fit.inliers < params.min_cylinder_inliers) continue;

    // Slide the center along the axis to breast height above the ground.
    const double denom = ground.normal.dot(fit.axis);
    if (std::abs(denom) < 1e-6) continue;
    const double s = (params.breast_height - ground.height_above(fit.center)) / denom;
    const Eigen::Vector3d at_bh = fit.center + s * fit.axis;

    TreeFeature f;
    f.position_xy = at_bh.head<2>();
    f.radius = fit.radius;
    f.axis = fit.axis;
    f.source = CloudSource::kMls;
    stems.push_back(f);
  }
  return stems;
}

void save_chm(const CanopyHeightMap& chm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "# origin %.9g %.9g resolution %.6g\n",
                chm.origin_xy.x(), chm.origin_xy.y(), chm.resolution);
  out << buf;
  for (int r = 0; r < chm.rows; ++r) {
    for (int c = 0; c < chm.cols; ++c) {
      std::snprintf(buf, sizeof(buf), c + 1 == chm.cols ? "%.6g\n" : "%.6g ",
                    chm.at(r, c));
      out << buf;
    }
  }
}

void save_features_csv(const std::vector<TreeFeature>& features, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << "x,y,height,radius,source\n";
  char buf[160];
  for (const auto& f : features) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%s\n", f.position_xy.x(),
                  f.position_xy.y(), f.height.value_or(-1.0), f.radius.value_or(-1.0),
                  f.source == CloudSource::kAls ? "ALS" : "MLS");
    out << buf;
  }
}

}  // namespace fcoreg
