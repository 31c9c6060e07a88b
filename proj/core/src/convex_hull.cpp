#include "forest_coreg/convex_hull.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <utility>

#include <Eigen/Geometry>

namespace fcoreg {

namespace {

struct Face {
  std::array<int, 3> v;
  Eigen::Vector3d normal;  // outward, not normalized
  double offset;           // normal . x = offset on the face plane
  bool alive = true;
};

double signed_dist(const Face& f, const Eigen::Vector3d& p) {
  return f.normal.dot(p) - f.offset;
}

Face make_face(int a, int b, int c, const std::vector<Eigen::Vector3d>& pts,
               const Eigen::Vector3d& inside) {
  Face f;
  f.v = {a, b, c};
  f.normal = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
  f.offset = f.normal.dot(pts[a]);
  if (signed_dist(f, inside) > 0.0) {  // flip to outward
    std::swap(f.v[1], f.v[2]);
    f.normal = -f.normal;
    f.offset = -f.offset;
  }
  return f;
}

}  // namespace

double convex_hull_volume(const std::vector<Eigen::Vector3d>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 4) return 0.0;

  Eigen::Vector3d mn = points[0], mx = points[0];
  for (const auto& p : points) {
    mn = mn.cwiseMin(p);
    mx = mx.cwiseMax(p);
  }
  const double scale = (mx - mn).norm();
  if (scale <= 0.0) return 0.0;
  const double eps = 1e-9 * scale;

  // Initial simplex: two extreme points, then the farthest from their line,
  // then the farthest from that plane.
  int i0 = 0, i1 = 0;
  for (int i = 1; i < n; ++i) {
    if (points[i].x() < points[i0].x()) i0 = i;
    if (points[i].x() > points[i1].x()) i1 = i;
  }
  if ((points[i1] - points[i0]).norm() < eps) return 0.0;

  int i2 = -1;
  double best = eps;
  const Eigen::Vector3d dir = (points[i1] - points[i0]).normalized();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d r = points[i] - points[i0];
    const double d = (r - dir * dir.dot(r)).norm();
    if (d > best) {
      best = d;
      i2 = i;
    }
  }
  if (i2 < 0) return 0.0;  // collinear

  const Eigen::Vector3d plane_n =
      (points[i1] - points[i0]).cross(points[i2] - points[i0]);
  int i3 = -1;
  best = eps * scale;  // area-scaled threshold for the plane test
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(plane_n.dot(points[i] - points[i0]));
    if (d > best) {
      best = d;
      i3 = i;
    }
  }
  if (i3 < 0) return 0.0;  // coplanar

  const Eigen::Vector3d inside =
      0.25 * (points[i0] + points[i1] + points[i2] + points[i3]);
  std::vector<Face> faces;
  faces.push_back(make_face(i0, i1, i2, points, inside));
  faces.push_back(make_face(i0, i1, i3, points, inside));
  faces.push_back(make_face(i0, i2, i3, points, inside));
  faces.push_back(make_face(i1, i2, i3, points, inside));

  for (int i = 0; i < n; ++i) {
    if (i == i0 || i == i1 || i == i2 || i == i3) continue;

    std::vector<int> visible;
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
      if (faces[f].alive && signed_dist(faces[f], points[i]) > eps) {
        visible.push_back(f);
      }
    }
    if (visible.empty()) continue;

    // Horizon: directed edges of visible faces whose reverse edge is not in
    // a visible face.
    std::map<std::pair<int, int>, int> edge_count;
    for (int f : visible) {
      const auto& v = faces[f].v;
      for (int e = 0; e < 3; ++e) {
        edge_count[{v[e], v[(e + 1) % 3]}]++;
      }
    }
    std::vector<std::pair<int, int>> horizon;
    for (const auto& [edge, count] : edge_count) {
      if (!edge_count.count({edge.second, edge.first})) horizon.push_back(edge);
    }
    for (int f : visible) faces[f].alive = false;
    for (const auto& [u, v] : horizon) {
      faces.push_back(make_face(u, v, i, points, inside));
    }
  }

  double volume = 0.0;
  for (const auto& f : faces) {
    if (!f.alive) continue;
    volume += (points[f.v[0]] - inside)
                  .dot((points[f.v[1]] - inside).cross(points[f.v[2]] - inside));
  }
  return std::abs(volume) / 6.0;
}

}  // namespace fcoreg
