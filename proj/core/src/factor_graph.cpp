#include "forest_coreg/factor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "forest_coreg/errors.hpp"

namespace fcoreg {

std::string to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::kOdometry: return "odometry";
    case FactorKind::kLoop: return "loop";
    case FactorKind::kGrid: return "grid";
    case FactorKind::kAerialPrior: return "aerial_prior";
  }
  return "unknown";
}

namespace {

// Union-find connectivity over the binary factors.
struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

void check_connected(const FactorGraph& graph, const std::string& context) {
  if (graph.nodes.size() <= 1) return;
  std::map<std::int64_t, int> index;
  for (const auto& [id, pose] : graph.nodes) {
    index.emplace(id, static_cast<int>(index.size()));
  }
  DisjointSet ds(graph.nodes.size());
  for (const auto& f : graph.factors) {
    if (f.unary()) continue;
    ds.unite(index.at(f.nodes[0]), index.at(f.nodes[1]));
  }
  const int root = ds.find(0);
  for (std::size_t i = 1; i < graph.nodes.size(); ++i) {
    if (ds.find(static_cast<int>(i)) != root) {
      throw DisconnectedGraph(context + ": pose graph is not connected");
    }
  }
}

}  // namespace

FactorGraph build_graph_from_mission(const Mission& mission) {
  FactorGraph graph;
  for (const auto& n : mission.nodes) graph.nodes[n.id] = n.pose;

  for (const auto& e : mission.odometry_edges) {
    Factor f;
    f.kind = FactorKind::kOdometry;
    f.nodes = {e.from, e.to};
    f.measurement = e.delta;
    f.information = e.information;
    graph.factors.push_back(f);
  }
  for (const auto& e : mission.loop_edges) {
    Factor f;
    f.kind = FactorKind::kLoop;
    f.nodes = {e.from, e.to};
    f.measurement = e.delta;
    f.information = e.information;
    graph.factors.push_back(f);
  }
  for (const auto& f : graph.factors) {
    if (!graph.nodes.count(f.nodes[0]) || !graph.nodes.count(f.nodes[1])) {
      throw DanglingEdge("build_graph_from_mission: factor references a missing node");
    }
  }
  check_connected(graph, "build_graph_from_mission");
  return graph;
}

FactorGraph build_graph_from_tiles(const TileSet& tiles, const GridFactorParams& params) {
  FactorGraph graph;
  std::map<std::pair<int, int>, std::int64_t> ids;
  for (const auto& [key, cloud] : tiles.tiles) {
    const std::int64_t id = static_cast<std::int64_t>(ids.size());
    ids[key] = id;
    const Eigen::Vector2d c = tiles.tile_center(key.first, key.second);
    graph.nodes[id] = Pose(Eigen::Quaterniond::Identity(),
                           Eigen::Vector3d(c.x(), c.y(), 0.0));
  }

  Matrix6d info = Matrix6d::Identity();
  const double wt = 1.0 / (params.translation_sigma * params.translation_sigma);
  const double wr = 1.0 / (params.rotation_sigma * params.rotation_sigma);
  info.diagonal() << wt, wt, wt, wr, wr, wr;

  for (const auto& [key, id] : ids) {
    // 4-neighborhood; emitting only +row and +col avoids duplicates.
    for (const auto& nb : {std::pair<int, int>{key.first + 1, key.second},
                           std::pair<int, int>{key.first, key.second + 1}}) {
      auto it = ids.find(nb);
      if (it == ids.end()) continue;
      Factor f;
      f.kind = FactorKind::kGrid;
      f.nodes = {id, it->second};
      f.measurement = graph.nodes[id].inverse() * graph.nodes[it->second];
      f.information = info;
      graph.factors.push_back(f);
    }
  }
  return graph;
}

void add_aerial_factors(FactorGraph& graph, const std::vector<RegistrationResult>& results,
                        const AerialFactorParams& params) {
  for (const auto& r : results) {
    if (!r.accepted) continue;
    auto it = graph.nodes.find(r.cloud_id);
    if (it == graph.nodes.end()) {
      throw UnknownNode("add_aerial_factors: no node with id " +
                        std::to_string(r.cloud_id));
    }
    const double sigma_t = std::max(r.inlier_rmse, params.translation_sigma_floor);
    Factor f;
    f.kind = FactorKind::kAerialPrior;
    f.nodes = {r.cloud_id, -1};
    f.measurement = r.transform * it->second;  // node's registered pose in ALS frame
    const double wt = 1.0 / (sigma_t * sigma_t);
    const double wr = 1.0 / (params.rotation_sigma * params.rotation_sigma);
    f.information.setIdentity();
    f.information.diagonal() << wt, wt, wt, wr, wr, wr;
    f.huber_delta = params.huber_delta;
    graph.factors.push_back(f);
  }
}

ResidualEval evaluate_residual(const Factor& factor,
                               const std::map<std::int64_t, Pose>& nodes) {
  ResidualEval eval;
  const Pose& ti = nodes.at(factor.nodes[0]);
  if (factor.unary()) {
    eval.residual = se3_log(factor.measurement.inverse() * ti);
    eval.jacobians[0] = se3_right_jacobian_inverse(eval.residual);
    return eval;
  }
  const Pose& tj = nodes.at(factor.nodes[1]);
  const Pose rel = ti.inverse() * tj;  // T_i^-1 T_j
  eval.residual = se3_log(factor.measurement.inverse() * rel);
  const Matrix6d jr_inv = se3_right_jacobian_inverse(eval.residual);
  eval.jacobians[0] = -jr_inv * adjoint(rel.inverse());
  eval.jacobians[1] = jr_inv;
  return eval;
}

namespace {

struct FactorCost {
  double cost = 0.0;    // robust cost contribution
  double weight = 1.0;  // IRLS weight for the normal equations
};

FactorCost robust_cost(const Factor& factor, const Twist& r) {
  FactorCost out;
  const double s2 = r.dot(factor.information * r);
  const double e = std::sqrt(std::max(s2, 0.0));
  if (factor.huber_delta > 0.0 && e > factor.huber_delta) {
    out.cost = factor.huber_delta * (e - 0.5 * factor.huber_delta);
    out.weight = factor.huber_delta / e;
  } else {
    out.cost = 0.5 * s2;
  }
  return out;
}

double total_cost(const std::vector<Factor>& factors,
                  const std::map<std::int64_t, Pose>& nodes,
                  std::map<std::string, double>* by_kind = nullptr) {
  double cost = 0.0;
  for (const auto& f : factors) {
    Twist r;
    if (f.unary()) {
      r = se3_log(f.measurement.inverse() * nodes.at(f.nodes[0]));
    } else {
      r = se3_log(f.measurement.inverse() *
                  (nodes.at(f.nodes[0]).inverse() * nodes.at(f.nodes[1])));
    }
    const double c = robust_cost(f, r).cost;
    cost += c;
    if (by_kind) (*by_kind)[to_string(f.kind)] += c;
  }
  return cost;
}

}  // namespace

double graph_cost(const FactorGraph& graph) {
  return total_cost(graph.factors, graph.nodes);
}

OptimizationReport optimize(FactorGraph& graph) {
  check_connected(graph, "optimize");

  const bool has_unary = std::any_of(graph.factors.begin(), graph.factors.end(),
                                     [](const Factor& f) { return f.unary(); });
  if (!has_unary && graph.config.fixed_nodes.empty()) {
    throw GaugeUnconstrained(
        "optimize: no aerial prior and no fixed node; the solution would not "
        "be georeferenced");
  }

  // Block index per free node; fixed nodes keep their pose.
  std::map<std::int64_t, int> block;
  int n_free = 0;
  for (const auto& [id, pose] : graph.nodes) {
    const bool fixed =
        std::find(graph.config.fixed_nodes.begin(), graph.config.fixed_nodes.end(),
                  id) != graph.config.fixed_nodes.end();
    block[id] = fixed ? -1 : n_free++;
  }
  if (n_free == 0) {
    throw GaugeUnconstrained("optimize: all nodes are fixed");
  }
  const int dim = 6 * n_free;

  OptimizationReport report;
  const std::map<std::int64_t, Pose> initial_nodes = graph.nodes;
  report.initial_cost = total_cost(graph.factors, graph.nodes);
  double cost = report.initial_cost;
  if (!std::isfinite(cost)) throw SolverDiverged("optimize: non-finite initial cost");

  double lambda = graph.config.initial_lambda;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool pattern_analyzed = false;

  for (int iter = 0; iter < graph.config.max_iterations; ++iter) {
    // Assemble the damped normal equations.
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(graph.factors.size() * 144);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);

    for (const auto& f : graph.factors) {
      const ResidualEval eval = evaluate_residual(f, graph.nodes);
      const double w = robust_cost(f, eval.residual).weight;
      const Matrix6d winfo = w * f.information;
      const int arity = f.unary() ? 1 : 2;
      for (int a = 0; a < arity; ++a) {
        const int ba = block.at(f.nodes[a]);
        if (ba < 0) continue;
        rhs.segment<6>(6 * ba) -=
            eval.jacobians[a].transpose() * (winfo * eval.residual);
        for (int b = 0; b < arity; ++b) {
          const int bb = block.at(f.nodes[b]);
          if (bb < 0) continue;
          const Matrix6d h = eval.jacobians[a].transpose() * winfo * eval.jacobians[b];
          for (int r = 0; r < 6; ++r) {
            for (int c = 0; c < 6; ++c) {
              triplets.emplace_back(6 * ba + r, 6 * bb + c, h(r, c));
            }
          }
        }
      }
    }

    Eigen::SparseMatrix<double> hessian(dim, dim);
    hessian.setFromTriplets(triplets.begin(), triplets.end());

    bool accepted = false;
    for (int attempt = 0; attempt < 50 && !accepted; ++attempt) {
      Eigen::SparseMatrix<double> damped = hessian;
      for (int k = 0; k < dim; ++k) {
        damped.coeffRef(k, k) += lambda * std::max(hessian.coeff(k, k), 1e-12);
      }
      if (!pattern_analyzed) {
        solver.analyzePattern(damped);
        pattern_analyzed = true;
      }
      solver.factorize(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= 4.0;
        continue;
      }
      const Eigen::VectorXd step = solver.solve(rhs);
      if (!step.allFinite()) throw SolverDiverged("optimize: linear solve failed");

      std::map<std::int64_t, Pose> candidate = graph.nodes;
      for (auto& [id, pose] : candidate) {
        const int b = block.at(id);
        if (b < 0) continue;
        pose = pose * se3_exp(step.segment<6>(6 * b));
      }
      const double new_cost = total_cost(graph.factors, candidate);
      if (!std::isfinite(new_cost)) throw SolverDiverged("optimize: non-finite cost");

      if (new_cost <= cost) {
        graph.nodes = std::move(candidate);
        report.iterations = iter + 1;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        const double decrease = cost - new_cost;
        cost = new_cost;
        if (step.norm() < graph.config.step_tolerance ||
            decrease < graph.config.cost_tolerance) {
          iter = graph.config.max_iterations;  // converged
        }
      } else {
        lambda *= 4.0;
        if (lambda > 1e12) {
          iter = graph.config.max_iterations;  // cannot improve further
          accepted = true;
        }
      }
    }
    if (!accepted) break;
  }

  report.final_cost = total_cost(graph.factors, graph.nodes, &report.cost_by_factor_kind);

  double shift_sum = 0.0;
  double shift_max = 0.0;
  for (const auto& [id, pose] : graph.nodes) {
    const double d = (pose.translation() - initial_nodes.at(id).translation()).norm();
    shift_sum += d;
    shift_max = std::max(shift_max, d);
  }
  report.node_shift_mean_m = graph.nodes.empty() ? 0.0 : shift_sum / graph.nodes.size();
  report.node_shift_max_m = shift_max;
  return report;
}

}  // namespace fcoreg
