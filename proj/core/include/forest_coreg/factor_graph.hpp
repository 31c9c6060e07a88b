#ifndef FOREST_COREG_FACTOR_GRAPH_HPP
#define FOREST_COREG_FACTOR_GRAPH_HPP

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "forest_coreg/icp.hpp"
#include "forest_coreg/lie.hpp"
#include "forest_coreg/mission.hpp"

namespace fcoreg {

enum class FactorKind { kOdometry, kLoop, kGrid, kAerialPrior };

std::string to_string(FactorKind kind);

/// One constraint of the joint objective. Odometry/Loop/Grid are binary
/// (measurement = relative transform between the two nodes); AerialPrior is
/// unary (measurement = the node's registered pose in the ALS frame).
struct Factor {
  FactorKind kind = FactorKind::kOdometry;
  std::array<std::int64_t, 2> nodes = {0, -1};
  Pose measurement;
  Matrix6d information = Matrix6d::Identity();
  double huber_delta = 0.0;  // 0 disables the robust kernel

  bool unary() const { return kind == FactorKind::kAerialPrior; }
};

struct OptimizerConfig {
  int max_iterations = 100;
  double step_tolerance = 1e-8;
  double cost_tolerance = 1e-10;
  double initial_lambda = 1e-6;
  std::vector<std::int64_t> fixed_nodes;  // alternative gauge fixing
};

struct FactorGraph {
  std::map<std::int64_t, Pose> nodes;
  std::vector<Factor> factors;
  OptimizerConfig config;
};

struct ResidualEval {
  Twist residual = Twist::Zero();
  // Jacobians of the residual w.r.t. a right perturbation of each involved
  // node (T <- T * exp(delta)); jacobians[1] is unused for unary factors.
  std::array<Matrix6d, 2> jacobians = {Matrix6d::Zero(), Matrix6d::Zero()};
};

struct OptimizationReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::map<std::string, double> cost_by_factor_kind;
  double node_shift_mean_m = 0.0;
  double node_shift_max_m = 0.0;
};

struct AerialFactorParams {
  double translation_sigma_floor = 0.05;  // m; sigma_t = max(rmse, floor)
  double rotation_sigma = 0.02;           // rad
  double huber_delta = 0.5;
};

struct GridFactorParams {
  double translation_sigma = 0.1;   // m   -> information 100 on t
  double rotation_sigma = 0.02;     // rad -> information 2500 on r
};

/// One node per mission node at the mission pose; one odometry factor per
/// mission odometry edge and one loop factor per loop edge, with the edge's
/// measurement and information. Throws DisconnectedGraph when the binary
/// factors do not connect all nodes.
FactorGraph build_graph_from_mission(const Mission& mission);

/// One node per occupied tile at the tile's grid pose (identity rotation,
/// cell-center translation); one grid factor per 4-neighborhood pair with
/// the relative grid offset as measurement. Node ids are the tiles' indices
/// in (row, col) order.
FactorGraph build_graph_from_tiles(const TileSet& tiles,
                                   const GridFactorParams& params = {});

/// One unary prior per accepted registration: measurement
/// T_prior = T_AM * T_init, information scaled by the ICP inlier RMSE, Huber
/// kernel on to bound the damage of a surviving wrong match. Results with
/// accepted == false are ignored. Throws UnknownNode.
void add_aerial_factors(FactorGraph& graph, const std::vector<RegistrationResult>& results,
                        const AerialFactorParams& params = {});

/// Residual and analytic Jacobians of one factor at the given node poses:
///   binary: r = Log(measurement^-1 * T_i^-1 * T_j)
///   unary:  r = Log(measurement^-1 * T_i)
ResidualEval evaluate_residual(const Factor& factor,
                               const std::map<std::int64_t, Pose>& nodes);

/// Total robust cost of the graph at its current poses.
double graph_cost(const FactorGraph& graph);

/// Levenberg-Marquardt over the pose manifold: damped sparse normal
/// equations, right-multiplicative updates, until the step or cost change
/// falls under the configured tolerances. Throws GaugeUnconstrained when
/// nothing anchors the graph, DisconnectedGraph, and SolverDiverged when the
/// cost turns non-finite or the linear solve fails.
OptimizationReport optimize(FactorGraph& graph);

}  // namespace fcoreg

#endif  // FOREST_COREG_FACTOR_GRAPH_HPP
