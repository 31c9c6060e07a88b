#include "forest_coreg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <unordered_set>

#include "forest_coreg/convex_hull.hpp"
#include "forest_coreg/errors.hpp"
#include "forest_coreg/random.hpp"

namespace fcoreg {

CloudErrorStats cloud_to_cloud_error(const PointCloud& source, const PointCloud& target,
                                     double max_dist) {
  if (target.empty()) throw NoOverlap("cloud_to_cloud_error: empty target");
  return cloud_to_cloud_error(source, KdTree(target.points), max_dist);
}

CloudErrorStats cloud_to_cloud_error(const PointCloud& source, const KdTree& target_tree,
                                     double max_dist) {
  if (source.empty() || target_tree.empty()) {
    throw NoOverlap("cloud_to_cloud_error: empty cloud");
  }
  const double max_d2 = max_dist * max_dist;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (const auto& p : source.points) {
    const auto [idx, d2] = target_tree.nearest(p);
    if (idx < 0 || d2 > max_d2) continue;
    const double d = std::sqrt(d2);
    sum += d;
    sum_sq += d2;
    ++count;
  }
  if (count == 0) {
    throw NoOverlap("cloud_to_cloud_error: no source point within max_dist of target");
  }
  CloudErrorStats stats;
  stats.count = count;
  stats.mean = sum / count;
  stats.rmse = std::sqrt(sum_sq / count);
  const double var = std::max(0.0, sum_sq / count - stats.mean * stats.mean);
  stats.stddev = std::sqrt(var);
  return stats;
}

namespace {

struct VoxelKey {
  std::int64_t ix, iy, iz;
  bool operator==(const VoxelKey& o) const {
    return ix == o.ix && iy == o.iy && iz == o.iz;
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

}  // namespace

OccupancyProfile voxel_occupancy_profile(const PointCloud& cloud, const Plane& ground,
                                         double resolution, double bin_height) {
  if (!(resolution > 0.0) || !(bin_height > 0.0)) {
    throw NonPositiveResolution("voxel_occupancy_profile: resolution and bin height must be > 0");
  }
  OccupancyProfile profile;
  profile.resolution = resolution;
  profile.bin_height = bin_height;
  if (cloud.empty()) return profile;

  std::unordered_set<VoxelKey, VoxelKeyHash> seen;
  seen.reserve(cloud.size());
  std::map<int, std::size_t> bins;
  const double inv = 1.0 / resolution;
  for (const auto& p : cloud.points) {
    const VoxelKey key{static_cast<std::int64_t>(std::floor(p.x() * inv)),
                       static_cast<std::int64_t>(std::floor(p.y() * inv)),
                       static_cast<std::int64_t>(std::floor(p.z() * inv))};
    if (!seen.insert(key).second) continue;
    const Eigen::Vector3d center((key.ix + 0.5) * resolution, (key.iy + 0.5) * resolution,
                                 (key.iz + 0.5) * resolution);
    const int bin = static_cast<int>(std::floor(ground.height_above(center) / bin_height));
    bins[bin]++;
  }
  if (bins.empty()) return profile;
  profile.first_bin = bins.begin()->first;
  profile.counts.assign(bins.rbegin()->first - profile.first_bin + 1, 0);
  for (const auto& [bin, count] : bins) profile.counts[bin - profile.first_bin] = count;
  return profile;
}

TraitSummary extract_tree_traits(const PointCloud& cloud,
                                 const std::vector<TreeFeature>& features,
                                 const Plane& ground, const TraitParams& params) {
  TraitSummary summary;
  if (cloud.empty() || features.empty()) return summary;

  // Nearest-feature segmentation in the plane.
  std::vector<Eigen::Vector3d> flat;
  flat.reserve(features.size());
  for (const auto& f : features) {
    flat.emplace_back(f.position_xy.x(), f.position_xy.y(), 0.0);
  }
  const KdTree feature_tree(flat);
  std::vector<std::vector<int>> members(features.size());
  const double r2 = params.assign_radius * params.assign_radius;
  for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
    const auto& p = cloud.points[i];
    const auto [idx, d2] = feature_tree.nearest({p.x(), p.y(), 0.0});
    if (idx >= 0 && d2 <= r2) members[idx].push_back(i);
  }

  for (int tree_id = 0; tree_id < static_cast<int>(features.size()); ++tree_id) {
    const auto& idx = members[tree_id];
    if (idx.empty()) {
      ++summary.skipped;
      continue;
    }

    // Stacked cylinder stem model in 1 m slabs, bottom up. Slabs start above
    // the ground returns and each slab searches a small disc around the
    // previous slab center, so plane clutter cannot swamp the fit.
    struct Slab {
      Eigen::Vector2d center;
      double radius;
    };
    const double base = 0.5;        // m above ground, below is ground returns
    const double track_radius = 1.2;
    std::vector<Slab> slabs;
    double stem_top = 0.0;
    Eigen::Vector2d track_center = features[tree_id].position_xy;
    for (int k = 0;; ++k) {
      const double lo = base + k * params.slab_height;
      const double hi = lo + params.slab_height;
      std::vector<Eigen::Vector3d> slab_pts;
      for (int i : idx) {
        const auto& p = cloud.points[i];
        const double h = ground.height_above(p);
        if (h >= lo && h < hi &&
            (p.head<2>() - track_center).norm() <= track_radius) {
          slab_pts.push_back(p);
        }
      }
      if (static_cast<int>(slab_pts.size()) < params.min_slab_points) break;
      CylinderFit fit;
      try {
        fit = fit_cylinder(slab_pts, params.cylinder_inlier_threshold, 30.0,
                           derive_seed(params.seed, (static_cast<std::uint64_t>(tree_id) << 8) + k));
      } catch (const FitFailed&) {
        break;
      }
      if (fit.radius < 0.03 || fit.radius > 1.0) break;
      const Eigen::Vector2d center = fit.center.head<2>();
      if (!slabs.empty() && (center - slabs.back().center).norm() > params.max_center_jump) {
        break;
      }
      slabs.push_back({center, fit.radius});
      stem_top = hi;
      track_center = center;
    }
    if (slabs.empty()) {
      ++summary.skipped;
      continue;
    }

    double max_h = 0.0;
    for (int i : idx) max_h = std::max(max_h, ground.height_above(cloud.points[i]));

    // Canopy = segment points not claimed by the stem model.
    std::vector<Eigen::Vector3d> crown;
    for (int i : idx) {
      const auto& p = cloud.points[i];
      const double h = ground.height_above(p);
      bool is_stem = false;
      if (h >= base && h < stem_top) {
        const int k = static_cast<int>((h - base) / params.slab_height);
        if (k < static_cast<int>(slabs.size())) {
          const double d = (p.head<2>() - slabs[k].center).norm();
          is_stem = d <= slabs[k].radius + 0.15;
        }
      }
      if (!is_stem) crown.push_back(p);
    }

    if (crown.size() > 4000) {
      PointCloud thin;
      thin.points = std::move(crown);
      crown = voxel_downsample(thin, 0.15).points;
    }

    TreeTraits traits;
    traits.tree_id = tree_id;
    traits.height = std::max(stem_top, max_h);
    traits.canopy_volume = convex_hull_volume(crown);
    summary.traits.push_back(traits);
  }
  return summary;
}

void write_errors_csv(const std::string& path, const std::vector<ErrorCsvRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << "cloud_id,pre_mean,post_mean,rmse,std\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", r.cloud_id.c_str(),
                  r.pre_mean, r.post_mean, r.rmse, r.stddev);
    out << buf;
  }
}

void write_occupancy_csv(const std::string& path, const OccupancyProfile& als,
                         const OccupancyProfile& mls, const OccupancyProfile& combined) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << "height_bin,als,mls,combined\n";
  int lo = std::min({als.first_bin, mls.first_bin, combined.first_bin});
  int hi = std::max({als.last_bin(), mls.last_bin(), combined.last_bin()});
  if (als.counts.empty() && mls.counts.empty() && combined.counts.empty()) {
    lo = 0;
    hi = -1;
  }
  char buf[160];
  for (int bin = lo; bin <= hi; ++bin) {
    std::snprintf(buf, sizeof(buf), "%d,%zu,%zu,%zu\n", bin, als.count_at(bin),
                  mls.count_at(bin), combined.count_at(bin));
    out << buf;
  }
}

void write_traits_csv(const std::string& path, const std::vector<TraitCsvRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << "tree_id,height_m,canopy_volume_m3,source\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%s\n", r.tree_id, r.height,
                  r.canopy_volume, r.source.c_str());
    out << buf;
  }
}

}  // namespace fcoreg
