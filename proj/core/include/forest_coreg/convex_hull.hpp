#ifndef FOREST_COREG_CONVEX_HULL_HPP
#define FOREST_COREG_CONVEX_HULL_HPP

#include <vector>

#include <Eigen/Core>

namespace fcoreg {

/// Volume of the 3-D convex hull of a point set (incremental hull).
/// Degenerate inputs (fewer than 4 points, collinear or coplanar sets)
/// have volume 0.
double convex_hull_volume(const std::vector<Eigen::Vector3d>& points);

}  // namespace fcoreg

#endif  // FOREST_COREG_CONVEX_HULL_HPP
