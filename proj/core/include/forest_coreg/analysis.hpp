#ifndef FOREST_COREG_ANALYSIS_HPP
#define FOREST_COREG_ANALYSIS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "forest_coreg/features.hpp"
#include "forest_coreg/kdtree.hpp"
#include "forest_coreg/point_cloud.hpp"
#include "forest_coreg/preprocess.hpp"

namespace fcoreg {

struct CloudErrorStats {
  double mean = 0.0;
  double rmse = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;  // source points within max_dist of the target
};

/// Point-to-point error over the overlapping subset: statistics of the
/// nearest-target-neighbor distances of source points, restricted to
/// distances within max_dist. Throws NoOverlap when nothing is in range.
CloudErrorStats cloud_to_cloud_error(const PointCloud& source, const PointCloud& target,
                                     double max_dist);
CloudErrorStats cloud_to_cloud_error(const PointCloud& source, const KdTree& target_tree,
                                     double max_dist);

/// Occupied-voxel counts per height bin. Voxels are cubes of `resolution` in
/// the world frame; each occupied voxel lands in the bin of its center's
/// height above the ground plane. Bin i covers heights
/// [(first_bin + i) * bin_height, (first_bin + i + 1) * bin_height).
struct OccupancyProfile {
  double resolution = 0.05;
  double bin_height = 1.0;
  int first_bin = 0;
  std::vector<std::size_t> counts;

  std::size_t count_at(int bin) const {
    const int i = bin - first_bin;
    return (i >= 0 && i < static_cast<int>(counts.size())) ? counts[i] : 0;
  }
  int last_bin() const { return first_bin + static_cast<int>(counts.size()) - 1; }
};

OccupancyProfile voxel_occupancy_profile(const PointCloud& cloud, const Plane& ground,
                                         double resolution = 0.05,
                                         double bin_height = 1.0);

struct TreeTraits {
  int tree_id = -1;
  double height = 0.0;         // m above ground
  double canopy_volume = 0.0;  // m^3, convex hull of non-stem points
};

struct TraitParams {
  double assign_radius = 4.0;  // m, point-to-feature segmentation radius
  double slab_height = 1.0;
  double cylinder_inlier_threshold = 0.03;
  int min_slab_points = 20;
  double max_center_jump = 0.5;  // m, slab-to-slab stem continuity
  std::uint64_t seed = 0;
};

struct TraitSummary {
  std::vector<TreeTraits> traits;
  int skipped = 0;  // trees where no stem slab could be modeled
};

/// Segments the cloud by nearest feature within assign_radius, models each
/// stem as stacked 1 m cylinders, and reports tree height (stem top extended
/// by the highest segmented point) and canopy volume (hull of the points not
/// claimed by the stem model).
TraitSummary extract_tree_traits(const PointCloud& cloud,
                                 const std::vector<TreeFeature>& features,
                                 const Plane& ground, const TraitParams& params = {});

// CSV outputs.
struct ErrorCsvRow {
  std::string cloud_id;
  double pre_mean = 0.0;
  double post_mean = 0.0;
  double rmse = 0.0;
  double stddev = 0.0;
};
void write_errors_csv(const std::string& path, const std::vector<ErrorCsvRow>& rows);
void write_occupancy_csv(const std::string& path, const OccupancyProfile& als,
                         const OccupancyProfile& mls, const OccupancyProfile& combined);
struct TraitCsvRow {
  int tree_id = -1;
  double height = 0.0;
  double canopy_volume = 0.0;
  std::string source;
};
void write_traits_csv(const std::string& path, const std::vector<TraitCsvRow>& rows);

}  // namespace fcoreg

#endif  // FOREST_COREG_ANALYSIS_HPP
