#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "forest_coreg/config.hpp"
#include "forest_coreg/errors.hpp"
#include "forest_coreg/pipeline.hpp"
#include "forest_coreg/ply_io.hpp"
#include "forest_coreg/synthetic.hpp"
#include "test_support.hpp"

using namespace fcoreg;

TEST_CASE("config file roundtrip covers every key") {
  test::TempDir tmp("config_rt");
  PipelineConfig config;
  config.coarse.tau = 0.75;
  config.coarse.min_matches = 5;
  config.icp.max_corr_dist = 0.4;
  config.min_fitness = 0.45;
  config.aerial.huber_delta = 0.9;
  config.optimizer.max_iterations = 37;
  config.threads = 3;
  config.seed = 1234;
  save_config(config, tmp.file("cfg.toml"));
  const PipelineConfig back = load_config(tmp.file("cfg.toml"));
  CHECK(back.coarse.tau == 0.75);
  CHECK(back.coarse.min_matches == 5);
  CHECK(back.icp.max_corr_dist == 0.4);
  CHECK(back.min_fitness == 0.45);
  CHECK(back.aerial.huber_delta == 0.9);
  CHECK(back.optimizer.max_iterations == 37);
  CHECK(back.threads == 3);
  CHECK(back.seed == 1234);
}

TEST_CASE("config parser accepts comments and rejects unknown keys") {
  test::TempDir tmp("config_err");
  {
    std::ofstream out(tmp.file("ok.toml"));
    out << "# a comment\n\ncoarse.tau = 0.6  # inline comment\n";
  }
  CHECK(load_config(tmp.file("ok.toml")).coarse.tau == 0.6);

  {
    std::ofstream out(tmp.file("bad.toml"));
    out << "coarse.typo = 1\n";
  }
  CHECK_THROWS_AS(load_config(tmp.file("bad.toml")), ParseError);

  {
    std::ofstream out(tmp.file("noval.toml"));
    out << "coarse.tau 0.6\n";
  }
  CHECK_THROWS_AS(load_config(tmp.file("noval.toml")), ParseError);
  CHECK_THROWS_AS(load_config(tmp.file("missing.toml")), ParseError);
}

TEST_CASE("registration JSON roundtrip") {
  test::TempDir tmp("reg_json");
  std::vector<RegistrationRecord> records(2);
  records[0].cloud_id = 3;
  records[0].status = RegistrationStatus::kOk;
  records[0].coarse.clique_size = 9;
  records[0].coarse.n_aerial = 40;
  records[0].coarse.n_terrestrial = 12;
  records[0].coarse.residual_rms = 0.07;
  records[0].fine.cloud_id = 3;
  records[0].fine.transform =
      Pose(Eigen::Quaterniond(0.9, 0.1, 0.2, 0.3).normalized(),
           Eigen::Vector3d(1.5, -2.5, 0.25));
  records[0].fine.fitness = 0.82;
  records[0].fine.inlier_rmse = 0.013;
  records[0].fine.num_inliers = 15231;
  records[0].fine.accepted = true;
  records[1].cloud_id = 4;
  records[1].status = RegistrationStatus::kMatchFailed;
  records[1].coarse.clique_size = 2;

  write_registration_json(tmp.file("registration.json"), records);
  const auto results = load_registration_json(tmp.file("registration.json"));
  REQUIRE(results.size() == 1);  // only "ok" entries come back
  CHECK(results[0].cloud_id == 3);
  CHECK(results[0].accepted);
  CHECK(results[0].num_inliers == 15231);
  CHECK(test::pose_difference(results[0].transform, records[0].fine.transform) < 1e-12);
}

TEST_CASE("thread pool runs every index exactly once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("resolve_thread_count honors the environment cap") {
  ::setenv("FOREST_COREG_THREADS", "2", 1);
  CHECK(resolve_thread_count(8) == 2);
  CHECK(resolve_thread_count(1) == 1);
  ::unsetenv("FOREST_COREG_THREADS");
  CHECK(resolve_thread_count(8) == 8);
  CHECK(resolve_thread_count(0) >= 1);
}

TEST_CASE("run_pipeline end to end on a small synthetic scene") {
  test::TempDir tmp("run_small");

  // Data on disk, exercising the real ingest path.
  const ForestModel forest = generate_forest(60, 90.0, 21);
  AlsScanParams als_params;
  als_params.seed = 22;
  const PointCloud als = simulate_als_scan(forest, als_params);
  save_cloud(als, tmp.file("als.ply"));
  MlsScanParams mls_params;
  mls_params.seed = 23;
  mls_params.drift_magnitude = 1.0;
  const MlsSimulation sim =
      simulate_mls_mission(forest, serpentine_trajectory(90.0, 25.0), mls_params);
  save_mission(sim.mission, tmp.file("mission.txt"));

  RunOptions options;
  options.als_path = tmp.file("als.ply");
  options.mission_path = tmp.file("mission.txt");
  options.out_dir = tmp.file("out");
  options.config.seed = 24;
  options.config.threads = 2;
  options.config.min_inliers = 50;  // light synthetic clouds

  const RunSummary summary = run_pipeline(options);
  CHECK(summary.exit_code == 0);
  CHECK(summary.clouds_accepted > 0);
  for (const char* name : {"registration.json", "report.json", "optimized_mission.txt",
                           "fused.ply", "errors.csv", "occupancy.csv", "traits.csv"}) {
    CHECK(std::filesystem::exists(std::filesystem::path(tmp.file("out")) / name));
  }

  // The optimized trajectory must beat the drifted one against ground truth.
  const Mission optimized = load_mission(tmp.file("out/optimized_mission.txt"), false);
  double pre = 0.0, post = 0.0;
  for (std::size_t k = 0; k < sim.true_poses.size(); ++k) {
    pre += (sim.mission.nodes[k].pose.translation() -
            sim.true_poses[k].translation()).squaredNorm();
    post += (optimized.nodes[k].pose.translation() -
             sim.true_poses[k].translation()).squaredNorm();
  }
  CHECK(post < pre);
}

TEST_CASE("run_pipeline reports I/O errors with exit code 1") {
  test::TempDir tmp("run_io");
  RunOptions options;
  options.als_path = tmp.file("does_not_exist.ply");
  options.mission_path = tmp.file("nope.txt");
  options.out_dir = tmp.file("out");
  const RunSummary summary = run_pipeline(options);
  CHECK(summary.exit_code == 1);
  CHECK(!summary.message.empty());
}

TEST_CASE("run_pipeline refuses optimization when nothing registers") {
  test::TempDir tmp("run_none");
  const ForestModel forest = generate_forest(30, 60.0, 31);
  AlsScanParams als_params;
  als_params.seed = 32;
  const PointCloud als = simulate_als_scan(forest, als_params);
  save_cloud(als, tmp.file("als.ply"));
  MlsScanParams mls_params;
  mls_params.seed = 33;
  const MlsSimulation sim = simulate_mls_mission(
      forest, {{20.0, 30.0}, {40.0, 30.0}}, mls_params);
  save_mission(sim.mission, tmp.file("mission.txt"));

  RunOptions options;
  options.als_path = tmp.file("als.ply");
  options.mission_path = tmp.file("mission.txt");
  options.out_dir = tmp.file("out");
  options.config.min_fitness = 1.01;  // impossible acceptance gate
  const RunSummary summary = run_pipeline(options);
  CHECK(summary.exit_code == 2);
}
