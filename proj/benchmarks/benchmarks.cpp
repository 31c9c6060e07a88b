#include <benchmark/benchmark.h>

#include "forest_coreg/coarse_registration.hpp"
#include "forest_coreg/factor_graph.hpp"
#include "forest_coreg/icp.hpp"
#include "forest_coreg/kdtree.hpp"
#include "forest_coreg/lie.hpp"
#include "forest_coreg/random.hpp"
#include "forest_coreg/synthetic.hpp"

using namespace fcoreg;

namespace {

std::vector<Eigen::Vector3d> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts.emplace_back(rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0),
                     rng.uniform(0.0, 30.0));
  }
  return pts;
}

void BM_se3_exp_log(benchmark::State& state) {
  Rng rng(1);
  std::vector<Twist> twists;
  for (int i = 0; i < 1024; ++i) {
    Twist xi;
    xi.head<3>() = rng.normal3(2.0);
    xi.tail<3>() = rng.normal3(0.5);
    twists.push_back(xi);
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(se3_log(se3_exp(twists[i++ & 1023])));
  }
}
BENCHMARK(BM_se3_exp_log);

void BM_voxel_downsample(benchmark::State& state) {
  PointCloud cloud;
  cloud.points = random_points(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(voxel_downsample(cloud, 0.05));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_voxel_downsample)->Arg(100000)->Arg(1000000);

void BM_kdtree_build(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    KdTree tree(pts);
    benchmark::DoNotOptimize(tree.size());
  }
}
BENCHMARK(BM_kdtree_build)->Arg(100000)->Arg(1000000);

void BM_kdtree_nearest(benchmark::State& state) {
  const KdTree tree(random_points(1000000, 4));
  const auto queries = random_points(4096, 5);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tree.nearest(queries[i++ & 4095]));
  }
}
BENCHMARK(BM_kdtree_nearest);

void BM_max_clique_forest(benchmark::State& state) {
  // Representative coarse-matching instance: subset + jitter + spurious.
  Rng rng(6);
  const ForestModel forest = generate_forest(50, 80.0, 7);
  std::vector<TreeFeature> aerial, terrestrial;
  for (const auto& t : forest.trees) {
    TreeFeature f;
    f.position_xy = t.position_xy;
    f.source = CloudSource::kAls;
    aerial.push_back(f);
  }
  for (int i = 0; i < 12; ++i) {
    TreeFeature f;
    f.position_xy = forest.trees[i * 3].position_xy +
                    Eigen::Vector2d(rng.normal(0.0, 0.05), rng.normal(0.0, 0.05));
    f.source = CloudSource::kMls;
    terrestrial.push_back(f);
  }
  for (auto _ : state) {
    const auto graph = build_correspondence_graph(aerial, terrestrial, 0.5, 10000);
    benchmark::DoNotOptimize(max_clique(graph));
  }
}
BENCHMARK(BM_max_clique_forest)->Unit(benchmark::kMillisecond);

void BM_icp_forest_pair(benchmark::State& state) {
  Rng rng(8);
  PointCloud target;
  target.points = random_points(60000, 9);
  PointCloud source = target;
  for (auto& p : source.points) p += rng.normal3(0.01);
  const Pose init(Eigen::Quaterniond::Identity(), Eigen::Vector3d(0.15, -0.1, 0.05));
  const KdTree tree(target.points);
  for (auto _ : state) {
    benchmark::DoNotOptimize(icp(source, tree, init));
  }
}
BENCHMARK(BM_icp_forest_pair)->Unit(benchmark::kMillisecond);

void BM_optimize_chain(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(10);
  for (auto _ : state) {
    state.PauseTiming();
    FactorGraph graph;
    for (int i = 0; i < n; ++i) {
      graph.nodes[i] = Pose(Eigen::Quaterniond::Identity(),
                            Eigen::Vector3d(2.0 * i, rng.normal(0.0, 0.3), 0.0));
    }
    Matrix6d info = Matrix6d::Identity();
    info.diagonal() << 400, 400, 400, 1600, 1600, 1600;
    for (int i = 0; i + 1 < n; ++i) {
      Factor f;
      f.kind = FactorKind::kOdometry;
      f.nodes = {i, i + 1};
      f.measurement = Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(2.0, 0, 0));
      f.information = info;
      graph.factors.push_back(f);
    }
    for (int i = 0; i < n; i += 4) {
      Factor f;
      f.kind = FactorKind::kAerialPrior;
      f.nodes = {i, -1};
      f.measurement = Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d(2.0 * i, 0, 0));
      f.information = info;
      graph.factors.push_back(f);
    }
    state.ResumeTiming();
    benchmark::DoNotOptimize(optimize(graph));
  }
}
BENCHMARK(BM_optimize_chain)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
