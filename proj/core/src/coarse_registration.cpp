#include "forest_coreg/coarse_registration.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "forest_coreg/errors.hpp"
#include "forest_coreg/random.hpp"

namespace fcoreg {

CorrespondenceGraph::CorrespondenceGraph(std::vector<std::pair<int, int>> vertices,
                                         double tau)
    : vertices_(std::move(vertices)), tau_(tau) {
  row_words_ = (vertices_.size() + 63) / 64;
  adjacency_.assign(vertices_.size() * row_words_, 0ull);
}

void CorrespondenceGraph::add_edge(int u, int v) {
  adjacency_[static_cast<std::size_t>(u) * row_words_ + (v >> 6)] |= 1ull << (v & 63);
  adjacency_[static_cast<std::size_t>(v) * row_words_ + (u >> 6)] |= 1ull << (u & 63);
}

std::size_t CorrespondenceGraph::edge_count() const {
  std::size_t bits = 0;
  for (std::uint64_t w : adjacency_) bits += static_cast<std::size_t>(__builtin_popcountll(w));
  return bits / 2;
}

std::string to_string(RegistrationStatus status) {
  switch (status) {
    case RegistrationStatus::kOk: return "ok";
    case RegistrationStatus::kMatchFailed: return "match_failed";
    case RegistrationStatus::kEmptyCrop: return "empty_crop";
    case RegistrationStatus::kDegenerateGround: return "degenerate_ground";
    case RegistrationStatus::kNoCorrespondences: return "no_correspondences";
    case RegistrationStatus::kError: return "error";
  }
  return "unknown";
}

CorrespondenceGraph build_correspondence_graph(const std::vector<TreeFeature>& aerial,
                                               const std::vector<TreeFeature>& terrestrial,
                                               double tau, int max_vertices) {
  const int na = static_cast<int>(aerial.size());
  const int nt = static_cast<int>(terrestrial.size());
  const long long count = static_cast<long long>(na) * nt;
  if (count > max_vertices) {
    throw GraphTooLarge("build_correspondence_graph: " + std::to_string(count) +
                        " vertices exceed the cap of " + std::to_string(max_vertices));
  }

  std::vector<std::pair<int, int>> vertices;
  vertices.reserve(static_cast<std::size_t>(count));
  for (int a = 0; a < na; ++a) {
    for (int t = 0; t < nt; ++t) vertices.emplace_back(a, t);
  }
  CorrespondenceGraph graph(std::move(vertices), tau);

  // Pairwise planar distances on each side.
  Eigen::MatrixXd da(na, na), dt(nt, nt);
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < na; ++j) {
      da(i, j) = (aerial[i].position_xy - aerial[j].position_xy).norm();
    }
  }
  for (int i = 0; i < nt; ++i) {
    for (int j = 0; j < nt; ++j) {
      dt(i, j) = (terrestrial[i].position_xy - terrestrial[j].position_xy).norm();
    }
  }

  const int n = graph.vertex_count();
  for (int u = 0; u < n; ++u) {
    const auto [a1, t1] = graph.vertex(u);
    for (int v = u + 1; v < n; ++v) {
      const auto [a2, t2] = graph.vertex(v);
      if (a1 == a2 || t1 == t2) continue;
      if (std::abs(da(a1, a2) - dt(t1, t2)) < tau) graph.add_edge(u, v);
    }
  }
  return graph;
}

namespace {

// Greedy coloring of the candidate set; the color count bounds the largest
// clique inside it.
int color_bound(const CorrespondenceGraph& g, const std::vector<int>& candidates) {
  std::vector<std::vector<int>> color_classes;
  for (int v : candidates) {
    bool placed = false;
    for (auto& cls : color_classes) {
      bool conflicts = false;
      for (int u : cls) {
        if (g.adjacent(u, v)) {
          conflicts = true;
          break;
        }
      }
      if (!conflicts) {
        cls.push_back(v);
        placed = true;
        break;
      }
    }
    if (!placed) color_classes.push_back({v});
  }
  return static_cast<int>(color_classes.size());
}

// Branch in ascending vertex order so cliques are visited in lexicographic
// order of their sorted vertex lists; with strict improvement the final best
// is the lexicographically smallest maximum clique.
void expand_max(const CorrespondenceGraph& g, std::vector<int>& current,
                const std::vector<int>& candidates, std::vector<int>& best) {
  if (candidates.empty()) {
    if (current.size() > best.size()) best = current;
    return;
  }
  if (current.size() + candidates.size() <= best.size()) return;
  if (current.size() + color_bound(g, candidates) <= best.size()) return;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (current.size() + (candidates.size() - i) <= best.size()) break;
    const int v = candidates[i];
    std::vector<int> next;
    next.reserve(candidates.size() - i);
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      if (g.adjacent(v, candidates[j])) next.push_back(candidates[j]);
    }
    current.push_back(v);
    expand_max(g, current, next, best);
    current.pop_back();
  }
}

void expand_collect(const CorrespondenceGraph& g, std::vector<int>& current,
                    const std::vector<int>& candidates, std::size_t target,
                    std::size_t limit, std::vector<std::vector<int>>& out) {
  if (out.size() >= limit) return;
  if (current.size() == target) {
    out.push_back(current);
    return;
  }
  if (current.size() + candidates.size() < target) return;
  if (current.size() + color_bound(g, candidates) < target) return;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (current.size() + (candidates.size() - i) < target) break;
    if (out.size() >= limit) return;
    const int v = candidates[i];
    std::vector<int> next;
    next.reserve(candidates.size() - i);
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      if (g.adjacent(v, candidates[j])) next.push_back(candidates[j]);
    }
    current.push_back(v);
    expand_collect(g, current, next, target, limit, out);
    current.pop_back();
  }
}

}  // namespace

std::vector<int> max_clique(const CorrespondenceGraph& graph) {
  std::vector<int> best;
  if (graph.vertex_count() == 0) return best;
  std::vector<int> all(graph.vertex_count());
  for (int i = 0; i < graph.vertex_count(); ++i) all[i] = i;
  std::vector<int> current;
  expand_max(graph, current, all, best);
  return best;
}

std::vector<std::vector<int>> enumerate_maximum_cliques(const CorrespondenceGraph& graph,
                                                        int limit) {
  std::vector<std::vector<int>> out;
  const std::vector<int> best = max_clique(graph);
  if (best.empty()) return out;
  std::vector<int> all(graph.vertex_count());
  for (int i = 0; i < graph.vertex_count(); ++i) all[i] = i;
  std::vector<int> current;
  expand_collect(graph, current, all, best.size(),
                 static_cast<std::size_t>(limit), out);
  return out;
}

PlanarPose estimate_planar_pose(
    const std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>>& matches,
    double* residual_rms) {
  if (matches.size() < 3) {
    throw InsufficientMatches("estimate_planar_pose: need >= 3 matches, got " +
                              std::to_string(matches.size()));
  }
  Eigen::Vector2d mean_a = Eigen::Vector2d::Zero();
  Eigen::Vector2d mean_b = Eigen::Vector2d::Zero();
  for (const auto& [a, b] : matches) {
    mean_a += a;
    mean_b += b;
  }
  mean_a /= static_cast<double>(matches.size());
  mean_b /= static_cast<double>(matches.size());

  Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
  for (const auto& [a, b] : matches) {
    h += (a - mean_a) * (b - mean_b).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s_max = svd.singularValues()(0);
  const double s_min = svd.singularValues()(1);
  if (s_max <= 0.0 || s_min <= 1e-12 * s_max) {
    throw DegenerateConfiguration("estimate_planar_pose: singular cross-covariance");
  }
  Eigen::Matrix2d d = Eigen::Matrix2d::Identity();
  d(1, 1) = ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) ? -1.0 : 1.0;
  const Eigen::Matrix2d r = svd.matrixV() * d * svd.matrixU().transpose();

  PlanarPose pose;
  pose.theta = std::atan2(r(1, 0), r(0, 0));
  pose.t_xy = mean_b - r * mean_a;

  if (residual_rms) {
    double ss = 0.0;
    for (const auto& [a, b] : matches) {
      ss += (pose.apply(a) - b).squaredNorm();
    }
    *residual_rms = std::sqrt(ss / matches.size());
  }
  return pose;
}

double compute_crop_half_extent(const PointCloud& mls,
                                const CoarseRegistrationConfig& config) {
  const Eigen::Vector3d mn = min_corner(mls);
  const Eigen::Vector3d mx = max_corner(mls);
  const double half_diag = 0.5 * (mx - mn).head<2>().norm();
  return std::min(half_diag + config.crop_padding, config.max_crop_half_extent);
}

CoarseResult coarse_register(const PointCloud& mls, const PointCloud& als,
                             const Eigen::Vector2d& gnss_center,
                             const CoarseRegistrationConfig& config) {
  CoarseResult result;
  const double half_extent = compute_crop_half_extent(mls, config);

  PointCloud crop;
  try {
    crop = crop_als(als, gnss_center, half_extent);
  } catch (const EmptyCrop&) {
    result.diagnostics.status = RegistrationStatus::kEmptyCrop;
    return result;
  }

  // The plane fits need a few thousand points, not the full clouds; the
  // k-NN normal estimation dominates otherwise.
  Plane als_plane, mls_plane;
  GroundFitParams ground = config.ground;
  ground.seed = derive_seed(config.seed, 1);
  try {
    const PointCloud crop_thin = voxel_downsample(crop, 0.15);
    als_plane = fit_ground_plane(crop_thin.size() >= 100 ? crop_thin : crop, ground);
    ground.seed = derive_seed(config.seed, 2);
    const PointCloud mls_thin = voxel_downsample(mls, 0.15);
    mls_plane = fit_ground_plane(mls_thin.size() >= 100 ? mls_thin : mls, ground);
  } catch (const DegenerateGround&) {
    result.diagnostics.status = RegistrationStatus::kDegenerateGround;
    return result;
  }

  Eigen::Vector2d mls_center = Eigen::Vector2d::Zero();
  for (const auto& p : mls.points) mls_center += p.head<2>();
  mls_center /= static_cast<double>(mls.size());

  Pose t_vertical;
  try {
    t_vertical = vertical_alignment(mls_plane, als_plane, mls_center);
  } catch (const AntiparallelNormals&) {
    result.diagnostics.status = RegistrationStatus::kDegenerateGround;
    return result;
  }
  const PointCloud leveled = transform_cloud(mls, t_vertical);

  const CanopyHeightMap chm = rasterize_chm(crop, config.chm_resolution);
  const std::vector<TreeFeature> aerial =
      extract_peaks(chm, config.nms_window_cells, config.min_peak_height, als_plane);

  StemExtractionParams stems = config.stems;
  stems.seed = derive_seed(config.seed, 3);
  const std::vector<TreeFeature> terrestrial = extract_stems(leveled, als_plane, stems);

  result.diagnostics.n_aerial = static_cast<int>(aerial.size());
  result.diagnostics.n_terrestrial = static_cast<int>(terrestrial.size());
  if (aerial.empty() || terrestrial.empty()) {
    result.diagnostics.status = RegistrationStatus::kMatchFailed;
    return result;
  }

  const CorrespondenceGraph graph = build_correspondence_graph(
      aerial, terrestrial, config.tau, config.max_graph_vertices);
  const auto cliques = enumerate_maximum_cliques(graph, config.max_clique_enumeration);
  const int clique_size = cliques.empty() ? 0 : static_cast<int>(cliques[0].size());
  result.diagnostics.clique_size = clique_size;
  if (clique_size < config.min_matches) {
    result.diagnostics.status = RegistrationStatus::kMatchFailed;
    return result;
  }

  // Tie-break equal-size maximum cliques by Umeyama residual, then by
  // lexicographic order (the enumeration order).
  bool have_pose = false;
  PlanarPose planar;
  double best_rms = 0.0;
  for (const auto& clique : cliques) {
    std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> matches;
    matches.reserve(clique.size());
    for (int v : clique) {
      const auto [a, t] = graph.vertex(v);
      matches.emplace_back(terrestrial[t].position_xy, aerial[a].position_xy);
    }
    double rms = 0.0;
    PlanarPose candidate;
    try {
      candidate = estimate_planar_pose(matches, &rms);
    } catch (const Error&) {
      continue;  // collinear clique; try the next one
    }
    if (!have_pose || rms < best_rms) {
      have_pose = true;
      planar = candidate;
      best_rms = rms;
    }
  }
  if (!have_pose) {
    result.diagnostics.status = RegistrationStatus::kMatchFailed;
    return result;
  }

  result.diagnostics.residual_rms = best_rms;
  const Eigen::Quaterniond yaw = so3_exp(Eigen::Vector3d(0.0, 0.0, planar.theta));
  const Pose t_planar(yaw, Eigen::Vector3d(planar.t_xy.x(), planar.t_xy.y(), 0.0));
  result.transform = t_planar * t_vertical;
  result.diagnostics.status = RegistrationStatus::kOk;
  return result;
}

}  // namespace fcoreg
