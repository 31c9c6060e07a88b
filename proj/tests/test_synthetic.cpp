#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "forest_coreg/analysis.hpp"
#include "forest_coreg/errors.hpp"
#include "forest_coreg/synthetic.hpp"
#include "test_support.hpp"

using namespace fcoreg;

TEST_CASE("generate_forest with zero trees is empty") {
  const ForestModel forest = generate_forest(0, 100.0, 1);
  CHECK(forest.trees.empty());
}

TEST_CASE("generate_forest is deterministic per seed") {
  const ForestModel a = generate_forest(50, 100.0, 7);
  const ForestModel b = generate_forest(50, 100.0, 7);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t i = 0; i < a.trees.size(); ++i) {
    CHECK(a.trees[i].position_xy == b.trees[i].position_xy);
    CHECK(a.trees[i].height == b.trees[i].height);
    CHECK(a.trees[i].stem_radius == b.trees[i].stem_radius);
    CHECK(a.trees[i].lean == b.trees[i].lean);
  }
  const ForestModel c = generate_forest(50, 100.0, 8);
  CHECK(a.trees[0].position_xy != c.trees[0].position_xy);
}

TEST_CASE("generate_forest honors the minimum spacing") {
  const ForestModel forest = generate_forest(100, 100.0, 3);
  REQUIRE(forest.trees.size() == 100);
  for (std::size_t i = 0; i < forest.trees.size(); ++i) {
    for (std::size_t j = i + 1; j < forest.trees.size(); ++j) {
      CHECK((forest.trees[i].position_xy - forest.trees[j].position_xy).norm() >= 2.0);
    }
    CHECK(forest.trees[i].height >= 2.0);
    CHECK(forest.trees[i].height <= 50.0);
    CHECK(forest.trees[i].stem_radius >= 0.05);
    CHECK(forest.trees[i].stem_radius <= 1.0);
  }
}

TEST_CASE("generate_forest fails on infeasible packing") {
  CHECK_THROWS_AS(generate_forest(1000, 10.0, 4), PackingFailed);
}

TEST_CASE("ALS scan max height equals the tallest tree") {
  ForestParams params;
  params.min_height = 18.0;
  params.max_height = 18.0;
  const ForestModel forest = generate_forest(1, 30.0, 5, params);
  AlsScanParams als;
  als.seed = 6;
  als.noise_sigma = 0.01;
  const PointCloud cloud = simulate_als_scan(forest, als);
  double max_z = -1e9;
  for (const auto& p : cloud.points) max_z = std::max(max_z, p.z());
  CHECK(max_z == doctest::Approx(18.0).epsilon(0.005));
  CHECK(cloud.source == CloudSource::kAls);
}

TEST_CASE("MLS payloads reassemble the world exactly with true poses") {
  const ForestModel forest = generate_forest(20, 60.0, 7);
  MlsScanParams params;
  params.seed = 8;
  params.noise_sigma = 0.0;
  params.drift_magnitude = 0.0;
  const MlsSimulation sim =
      simulate_mls_mission(forest, serpentine_trajectory(60.0, 20.0), params);

  REQUIRE(sim.mission.nodes.size() == sim.true_poses.size());
  for (std::size_t k = 0; k < sim.mission.nodes.size(); ++k) {
    // No drift: mission poses equal the true poses.
    CHECK(test::pose_difference(sim.mission.nodes[k].pose, sim.true_poses[k]) < 1e-12);
  }
  // Payload points, mapped through their node pose, match the direct
  // world-frame reconstruction of the same points.
  const auto& node = sim.mission.nodes.front();
  const PointCloud& payload = sim.mission.payloads.at(node.id);
  const PointCloud world = transform_cloud(payload, node.pose);
  for (const auto& p : world.points) {
    CHECK(p.z() > -1.0);
    CHECK(p.z() < 50.0);
  }
}

TEST_CASE("drift reaches the requested final magnitude") {
  const ForestModel forest = generate_forest(30, 120.0, 9);
  MlsScanParams params;
  params.seed = 10;
  params.drift_magnitude = 2.0;
  params.stem_points_per_meter = 5.0;  // geometry irrelevant here
  params.ground_density = 0.5;
  // A long serpentine: roughly a kilometer of travel.
  const auto path = serpentine_trajectory(120.0, 12.0);
  const MlsSimulation sim = simulate_mls_mission(forest, path, params);

  const auto& last = sim.mission.nodes.back();
  const double final_err =
      (last.pose.translation() - sim.true_poses.back().translation()).norm();
  CHECK(final_err >= 1.0);
  CHECK(final_err <= 3.0);
  CHECK(final_err == doctest::Approx(2.0).epsilon(1e-6));

  // Odometry information predicts at least the drift increments.
  for (const auto& e : sim.mission.odometry_edges) {
    CHECK(e.information(0, 0) > 0.0);
    CHECK(e.information(0, 0) <= 1.0 / (0.05 * 0.05) + 1e-9);
  }
}

TEST_CASE("ALS occupies the canopy, MLS the understory") {
  const ForestModel forest = generate_forest(40, 80.0, 11);
  AlsScanParams als_params;
  als_params.seed = 12;
  const PointCloud als = simulate_als_scan(forest, als_params);
  MlsScanParams mls_params;
  mls_params.seed = 13;
  const MlsSimulation sim =
      simulate_mls_mission(forest, serpentine_trajectory(80.0, 20.0), mls_params);

  PointCloud mls;
  for (std::size_t k = 0; k < sim.mission.nodes.size(); ++k) {
    const PointCloud world = transform_cloud(
        sim.mission.payloads.at(sim.mission.nodes[k].id), sim.true_poses[k]);
    mls.points.insert(mls.points.end(), world.points.begin(), world.points.end());
  }

  // The occupancy-profile crossover: MLS dominates the understory bins, ALS
  // the canopy bins.
  Plane ground;
  const auto pa = voxel_occupancy_profile(als, ground, 0.05, 1.0);
  const auto pm = voxel_occupancy_profile(mls, ground, 0.05, 1.0);
  std::size_t als_low = 0, mls_low = 0, als_canopy = 0, mls_canopy = 0;
  for (int bin = 1; bin < 5; ++bin) {
    als_low += pa.count_at(bin);
    mls_low += pm.count_at(bin);
  }
  for (int bin = 15; bin <= std::max(pa.last_bin(), pm.last_bin()); ++bin) {
    als_canopy += pa.count_at(bin);
    mls_canopy += pm.count_at(bin);
  }
  CHECK(mls_low > 2 * als_low);
  CHECK(als_canopy > 2 * mls_canopy);
}

TEST_CASE("simulate_mls_mission rejects an unusable trajectory") {
  const ForestModel forest = generate_forest(5, 30.0, 14);
  CHECK_THROWS_AS(simulate_mls_mission(forest, {}, {}), EmptyTrajectory);
  CHECK_THROWS_AS(simulate_mls_mission(forest, {{1.0, 1.0}}, {}), EmptyTrajectory);
  CHECK_THROWS_AS(simulate_mls_mission(forest, {{1.0, 1.0}, {1.0, 1.0}}, {}),
                  EmptyTrajectory);
}

TEST_CASE("mission files from the generator run through the real ingest code") {
  test::TempDir tmp("synth_ingest");
  const ForestModel forest = generate_forest(15, 50.0, 15);
  MlsScanParams params;
  params.seed = 16;
  params.drift_magnitude = 0.5;
  const MlsSimulation sim =
      simulate_mls_mission(forest, serpentine_trajectory(50.0, 25.0), params);
  save_mission(sim.mission, tmp.file("mission.txt"));
  const Mission back = load_mission(tmp.file("mission.txt"));
  REQUIRE(back.nodes.size() == sim.mission.nodes.size());
  REQUIRE(back.payloads.size() == sim.mission.payloads.size());
  for (std::size_t i = 0; i < back.nodes.size(); ++i) {
    CHECK(test::pose_difference(back.nodes[i].pose, sim.mission.nodes[i].pose) < 1e-12);
  }
}
