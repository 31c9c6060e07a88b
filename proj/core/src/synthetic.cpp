#include "forest_coreg/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "forest_coreg/errors.hpp"
#include "forest_coreg/random.hpp"

namespace fcoreg {

ForestModel generate_forest(int n_trees, double extent, std::uint64_t seed,
                            const ForestParams& params) {
  ForestModel forest;
  forest.extent = extent;
  forest.rng_seed = seed;
  const Eigen::Vector3d n(-params.terrain_slope, 0.0, 1.0);
  forest.terrain.normal = n.normalized();
  forest.terrain.d = 0.0;

  Rng rng(seed);
  const double spacing2 = params.min_spacing * params.min_spacing;
  constexpr int kMaxAttempts = 2000;
  for (int i = 0; i < n_trees; ++i) {
    Eigen::Vector2d pos;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      pos = {rng.uniform(0.0, extent), rng.uniform(0.0, extent)};
      placed = true;
      for (const auto& t : forest.trees) {
        if ((t.position_xy - pos).squaredNorm() < spacing2) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      throw PackingFailed("generate_forest: cannot place " + std::to_string(n_trees) +
                          " trees in " + std::to_string(extent) + " m at " +
                          std::to_string(params.min_spacing) + " m spacing");
    }
    SyntheticTree tree;
    tree.position_xy = pos;
    tree.height = rng.uniform(params.min_height, params.max_height);
    tree.crown_radius = rng.uniform(params.min_crown_radius, params.max_crown_radius);
    tree.stem_radius = rng.uniform(params.min_stem_radius, params.max_stem_radius);
    const double tilt = rng.uniform(0.0, params.max_lean_deg * M_PI / 180.0);
    const double az = rng.uniform(0.0, 2.0 * M_PI);
    tree.lean = {std::sin(tilt) * std::cos(az), std::sin(tilt) * std::sin(az),
                 std::cos(tilt)};
    forest.trees.push_back(tree);
  }
  return forest;
}

namespace {

// Points on the stem cylinder between heights [z0, z1] above ground.
void sample_stem(const SyntheticTree& tree, double ground_z, double z0, double z1,
                 int count, double noise, Rng& rng, std::vector<Eigen::Vector3d>& out) {
  if (count <= 0 || z1 <= z0) return;
  const Eigen::Vector2d slope = tree.lean.head<2>() / tree.lean.z();
  for (int i = 0; i < count; ++i) {
    const double h = rng.uniform(z0, z1);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const Eigen::Vector2d axis_xy = tree.position_xy + slope * h;
    out.emplace_back(axis_xy.x() + tree.stem_radius * std::cos(phi) + rng.normal(0.0, noise),
                     axis_xy.y() + tree.stem_radius * std::sin(phi) + rng.normal(0.0, noise),
                     ground_z + h + rng.normal(0.0, noise));
  }
}

// Points on the crown ellipsoid shell; `upward_bias` keeps only a fraction
// of the lower hemisphere (aerial view) when < 1.
void sample_crown(const SyntheticTree& tree, double ground_z, int count,
                  double lower_keep, double noise, Rng& rng,
                  std::vector<Eigen::Vector3d>& out) {
  const double rz = 0.25 * tree.height;  // vertical semi-axis
  const Eigen::Vector2d top_offset = tree.lean.head<2>() / tree.lean.z() * tree.height;
  const Eigen::Vector3d center(tree.position_xy.x() + top_offset.x(),
                               tree.position_xy.y() + top_offset.y(),
                               ground_z + tree.height - rz);
  for (int i = 0; i < count; ++i) {
    const double w = rng.uniform(-1.0, 1.0);
    if (w < 0.0 && rng.uniform() > lower_keep) continue;
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
    out.emplace_back(center.x() + tree.crown_radius * s * std::cos(phi) + rng.normal(0.0, noise),
                     center.y() + tree.crown_radius * s * std::sin(phi) + rng.normal(0.0, noise),
                     center.z() + rz * w + rng.normal(0.0, noise));
  }
}

}  // namespace

PointCloud simulate_als_scan(const ForestModel& forest, const AlsScanParams& params) {
  Rng rng(derive_seed(params.seed != 0 ? params.seed : forest.rng_seed, 0xA15));
  std::vector<Eigen::Vector3d> pts;

  const int n_ground = static_cast<int>(params.ground_density * forest.extent * forest.extent);
  pts.reserve(static_cast<std::size_t>(n_ground) + forest.trees.size() * 256);
  for (int i = 0; i < n_ground; ++i) {
    const Eigen::Vector2d xy(rng.uniform(0.0, forest.extent),
                             rng.uniform(0.0, forest.extent));
    pts.emplace_back(xy.x(), xy.y(), forest.ground_z(xy) + rng.normal(0.0, params.noise_sigma));
  }

  for (const auto& tree : forest.trees) {
    const double g = forest.ground_z(tree.position_xy);
    const int n_crown = static_cast<int>(params.crown_density * M_PI *
                                         tree.crown_radius * tree.crown_radius);
    sample_crown(tree, g, n_crown, 0.25, params.noise_sigma, rng, pts);
    // Exact apex so the CHM peak sits at the tree height.
    const Eigen::Vector2d top = tree.position_xy + tree.lean.head<2>() / tree.lean.z() * tree.height;
    pts.emplace_back(top.x(), top.y(), g + tree.height);
    const int n_stem =
        static_cast<int>(params.stem_points_per_meter * 0.7 * tree.height);
    sample_stem(tree, g, 0.0, 0.7 * tree.height, n_stem, params.noise_sigma, rng, pts);
  }

  PointCloud cloud;
  cloud.points = std::move(pts);
  cloud.source = CloudSource::kAls;
  return cloud;
}

std::vector<Eigen::Vector2d> serpentine_trajectory(double extent, double lane_spacing,
                                                   double margin) {
  std::vector<Eigen::Vector2d> waypoints;
  const double lo = margin;
  const double hi = extent - margin;
  bool forward = true;
  for (double y = lo; y <= hi + 1e-9; y += lane_spacing) {
    if (forward) {
      waypoints.emplace_back(lo, y);
      waypoints.emplace_back(hi, y);
    } else {
      waypoints.emplace_back(hi, y);
      waypoints.emplace_back(lo, y);
    }
    forward = !forward;
  }
  return waypoints;
}

namespace {

struct ArcSample {
  Eigen::Vector2d position;
  Eigen::Vector2d tangent;
};

double polyline_length(const std::vector<Eigen::Vector2d>& poly) {
  double length = 0.0;
  for (std::size_t i = 1; i < poly.size(); ++i) length += (poly[i] - poly[i - 1]).norm();
  return length;
}

ArcSample sample_polyline(const std::vector<Eigen::Vector2d>& poly, double s) {
  double walked = 0.0;
  for (std::size_t i = 1; i < poly.size(); ++i) {
    const double seg = (poly[i] - poly[i - 1]).norm();
    if (walked + seg >= s || i + 1 == poly.size()) {
      const double t = seg > 0.0 ? std::clamp((s - walked) / seg, 0.0, 1.0) : 0.0;
      ArcSample out;
      out.position = poly[i - 1] + t * (poly[i] - poly[i - 1]);
      out.tangent = seg > 0.0 ? ((poly[i] - poly[i - 1]) / seg).eval()
                              : Eigen::Vector2d(1.0, 0.0);
      return out;
    }
    walked += seg;
  }
  return {poly.back(), Eigen::Vector2d(1.0, 0.0)};
}

}  // namespace

MlsSimulation simulate_mls_mission(const ForestModel& forest,
                                   const std::vector<Eigen::Vector2d>& trajectory,
                                   const MlsScanParams& params) {
  if (trajectory.size() < 2) {
    throw EmptyTrajectory("simulate_mls_mission: trajectory needs at least 2 waypoints");
  }
  const double total = polyline_length(trajectory);
  if (total <= 0.0) {
    throw EmptyTrajectory("simulate_mls_mission: trajectory has zero length");
  }

  const std::uint64_t base_seed =
      params.seed != 0 ? params.seed : derive_seed(forest.rng_seed, 0x315);

  // Node anchors every payload_distance meters of travel.
  std::vector<double> arcs;
  for (double s = 0.0; s < total + 1e-9; s += params.payload_distance) {
    arcs.push_back(std::min(s, total));
  }

  // True poses: position on the path at sensor height, yaw along the tangent.
  std::vector<Pose> true_poses;
  true_poses.reserve(arcs.size());
  for (double s : arcs) {
    const ArcSample at = sample_polyline(trajectory, s);
    const double yaw = std::atan2(at.tangent.y(), at.tangent.x());
    const Eigen::Vector3d pos(at.position.x(), at.position.y(),
                              forest.ground_z(at.position) + params.sensor_height);
    true_poses.emplace_back(so3_exp(Eigen::Vector3d(0.0, 0.0, yaw)), pos);
  }

  // Smooth SE(3) random-walk drift, rescaled so the final node's translation
  // drift equals drift_magnitude.
  const std::size_t n = arcs.size();
  std::vector<Eigen::Vector3d> walk(n, Eigen::Vector3d::Zero());
  std::vector<double> yaw_walk(n, 0.0);
  double drift_sigma_per_sqrt_m = 0.0;
  double yaw_sigma_per_sqrt_m = 0.0;
  if (params.drift_magnitude > 0.0 && n > 1) {
    Rng drift_rng(derive_seed(base_seed, 0xD31F7));
    for (std::size_t k = 1; k < n; ++k) {
      const double ds = arcs[k] - arcs[k - 1];
      walk[k] = walk[k - 1] + drift_rng.normal3(std::sqrt(std::max(ds, 1e-9)));
      yaw_walk[k] = yaw_walk[k - 1] + drift_rng.normal(0.0, std::sqrt(std::max(ds, 1e-9)));
    }
    const double wnorm = walk.back().norm();
    const double tscale = wnorm > 1e-12 ? params.drift_magnitude / wnorm : 0.0;
    const double yaw_target = 0.005 * params.drift_magnitude;  // rad
    const double yscale =
        std::abs(yaw_walk.back()) > 1e-12 ? yaw_target / std::abs(yaw_walk.back()) : 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      walk[k] *= tscale;
      yaw_walk[k] *= yscale;
    }
    drift_sigma_per_sqrt_m = tscale;
    yaw_sigma_per_sqrt_m = yscale;
  }

  MlsSimulation sim;
  sim.true_poses = true_poses;
  for (std::size_t k = 0; k < n; ++k) {
    Rng rng(derive_seed(base_seed, k));
    const double s0 = std::max(0.0, arcs[k] - 0.5 * params.payload_distance);
    const double s1 = std::min(total, arcs[k] + 0.5 * params.payload_distance);
    const ArcSample mid = sample_polyline(trajectory, arcs[k]);

    std::vector<Eigen::Vector3d> world;
    // Ground corridor around the travelled segment.
    const int n_ground = static_cast<int>(params.ground_density * 2.0 *
                                          params.sensing_range * (s1 - s0));
    const Eigen::Vector2d lateral(-mid.tangent.y(), mid.tangent.x());
    for (int i = 0; i < n_ground; ++i) {
      const ArcSample at = sample_polyline(trajectory, rng.uniform(s0, s1));
      const Eigen::Vector2d xy =
          at.position + lateral * rng.uniform(-params.sensing_range, params.sensing_range);
      world.emplace_back(xy.x(), xy.y(),
                         forest.ground_z(xy) + rng.normal(0.0, params.noise_sigma));
    }
    // Trees within sensing range of the payload.
    const double reach = params.sensing_range + 0.5 * params.payload_distance;
    for (const auto& tree : forest.trees) {
      if ((tree.position_xy - mid.position).norm() > reach) continue;
      const double g = forest.ground_z(tree.position_xy);
      const double visible = params.stem_visible_fraction * tree.height;
      const int n_stem = static_cast<int>(params.stem_points_per_meter * visible);
      sample_stem(tree, g, 0.0, visible, n_stem, params.noise_sigma, rng, world);
      const int n_crown = static_cast<int>(params.canopy_keep_fraction * 80.0 * M_PI *
                                           tree.crown_radius * tree.crown_radius);
      sample_crown(tree, g, n_crown, 1.0, params.noise_sigma, rng, world);
    }

    // Payload stored in the true local frame; mission pose carries the drift.
    const Pose true_inv = true_poses[k].inverse();
    PointCloud payload;
    payload.source = CloudSource::kMls;
    payload.points.reserve(world.size());
    for (const auto& p : world) payload.points.push_back(true_inv * p);

    const Eigen::Quaterniond q_drift =
        so3_exp(Eigen::Vector3d(0.0, 0.0, yaw_walk[k])) * true_poses[k].rotation();
    const Pose drifted(q_drift, true_poses[k].translation() + walk[k]);

    MissionNode node;
    node.id = static_cast<std::int64_t>(k);
    node.timestamp = arcs[k];
    node.pose = drifted;
    node.payload_path = "payloads/node_" + std::to_string(k) + ".ply";
    sim.mission.nodes.push_back(node);
    sim.mission.payloads[node.id] = std::move(payload);
  }

  // Odometry edges consistent with the drifted trajectory, so all odometry
  // residuals vanish at the drifted initialization. The per-edge information
  // must predict the odometry's actual error, which includes the injected
  // drift increments.
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double ds = std::max(arcs[k + 1] - arcs[k], 1e-9);
    const double sigma_t =
        std::max(params.odom_sigma_t, drift_sigma_per_sqrt_m * std::sqrt(ds));
    const double sigma_r =
        std::max(params.odom_sigma_r, yaw_sigma_per_sqrt_m * std::sqrt(ds));
    Matrix6d info = Matrix6d::Identity();
    const double wt = 1.0 / (sigma_t * sigma_t);
    const double wr = 1.0 / (sigma_r * sigma_r);
    info.diagonal() << wt, wt, wt, wr, wr, wr;
    MissionEdge e;
    e.from = static_cast<std::int64_t>(k);
    e.to = static_cast<std::int64_t>(k + 1);
    e.delta = sim.mission.nodes[k].pose.inverse() * sim.mission.nodes[k + 1].pose;
    e.information = info;
    sim.mission.odometry_edges.push_back(e);
  }
  return sim;
}

}  // namespace fcoreg
