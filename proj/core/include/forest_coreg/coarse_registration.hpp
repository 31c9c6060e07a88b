#ifndef FOREST_COREG_COARSE_REGISTRATION_HPP
#define FOREST_COREG_COARSE_REGISTRATION_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "forest_coreg/features.hpp"
#include "forest_coreg/point_cloud.hpp"
#include "forest_coreg/preprocess.hpp"

namespace fcoreg {

/// Vertices are (aerial index, terrestrial index) pairings; an edge connects
/// two pairings whose aerial and terrestrial pairwise distances agree
/// within tau (strict inequality).
class CorrespondenceGraph {
 public:
  CorrespondenceGraph(std::vector<std::pair<int, int>> vertices, double tau);

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  const std::pair<int, int>& vertex(int v) const { return vertices_[v]; }
  double tau() const { return tau_; }

  void add_edge(int u, int v);
  bool adjacent(int u, int v) const {
    return (adjacency_[static_cast<std::size_t>(u) * row_words_ + (v >> 6)] >>
            (v & 63)) & 1ull;
  }
  std::size_t edge_count() const;

 private:
  std::vector<std::pair<int, int>> vertices_;
  double tau_ = 0.0;
  std::size_t row_words_ = 0;
  std::vector<std::uint64_t> adjacency_;
};

/// Planar rigid transform: rotation theta in (-pi, pi] plus 2-D translation.
struct PlanarPose {
  double theta = 0.0;
  Eigen::Vector2d t_xy = Eigen::Vector2d::Zero();

  Eigen::Vector2d apply(const Eigen::Vector2d& p) const {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {c * p.x() - s * p.y() + t_xy.x(), s * p.x() + c * p.y() + t_xy.y()};
  }
};

struct CoarseRegistrationConfig {
  double tau = 0.5;                  // m, pairwise consistency tolerance
  int max_graph_vertices = 10000;
  int min_matches = 4;               // clique size required to accept
  int max_clique_enumeration = 512;  // cap on enumerated maximum cliques
  double chm_resolution = 0.5;       // m
  int nms_window_cells = 4;          // 2 m at the default resolution
  double min_peak_height = 5.0;      // m
  double crop_padding = 10.0;        // m added to the MLS half-diagonal
  double max_crop_half_extent = 15.0;  // caps crops near the typical 30 m
  GroundFitParams ground;
  StemExtractionParams stems;
  std::uint64_t seed = 0;
};

enum class RegistrationStatus {
  kOk,
  kMatchFailed,        // clique smaller than min_matches
  kEmptyCrop,          // GNSS prior outside the ALS cloud
  kDegenerateGround,   // ground plane fit failed
  kNoCorrespondences,  // ICP found no pairs (fine stage)
  kError,              // unexpected failure, see the record's message
};

std::string to_string(RegistrationStatus status);

struct CoarseDiagnostics {
  RegistrationStatus status = RegistrationStatus::kOk;
  int clique_size = 0;
  int n_aerial = 0;
  int n_terrestrial = 0;
  double residual_rms = 0.0;
};

struct CoarseResult {
  Pose transform;  // T_AM: maps the MLS cloud into the ALS frame
  CoarseDiagnostics diagnostics;
  bool ok() const { return diagnostics.status == RegistrationStatus::kOk; }
};

/// Builds the full Cartesian-product correspondence graph between aerial and
/// terrestrial features. Throws GraphTooLarge above max_vertices.
CorrespondenceGraph build_correspondence_graph(const std::vector<TreeFeature>& aerial,
                                               const std::vector<TreeFeature>& terrestrial,
                                               double tau, int max_vertices = 10000);

/// Exact maximum clique via branch-and-bound with a greedy-coloring bound.
/// Among all maximum cliques the lexicographically smallest vertex set is
/// returned; vertices come back ascending.
std::vector<int> max_clique(const CorrespondenceGraph& graph);

/// All maximum cliques (size of max_clique), capped at `limit`; each clique
/// ascending, cliques in lexicographic order.
std::vector<std::vector<int>> enumerate_maximum_cliques(const CorrespondenceGraph& graph,
                                                        int limit = 512);

/// Least-squares rigid 2-D alignment (Umeyama without scale): finds the
/// planar pose minimizing sum ||R a_i + t - b_i||^2 over (a, b) matches.
/// residual_rms, when given, receives the post-fit RMS. Throws
/// InsufficientMatches (< 3) and DegenerateConfiguration.
PlanarPose estimate_planar_pose(const std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>>& matches,
                                double* residual_rms = nullptr);

/// Crop window half-extent for an MLS cloud: its horizontal half-diagonal
/// plus the configured padding, capped at max_crop_half_extent.
double compute_crop_half_extent(const PointCloud& mls,
                                const CoarseRegistrationConfig& config);

/// Full coarse pipeline for one MLS cloud: ALS crop, ground-plane leveling,
/// feature extraction on both sides, clique matching and the planar pose.
/// MatchFailed is reported through diagnostics.status, not thrown; the
/// caller skips unregistered clouds.
CoarseResult coarse_register(const PointCloud& mls, const PointCloud& als,
                             const Eigen::Vector2d& gnss_center,
                             const CoarseRegistrationConfig& config = {});

}  // namespace fcoreg

#endif  // FOREST_COREG_COARSE_REGISTRATION_HPP
