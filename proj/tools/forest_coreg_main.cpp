#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "forest_coreg/analysis.hpp"
#include "forest_coreg/config.hpp"
#include "forest_coreg/errors.hpp"
#include "forest_coreg/factor_graph.hpp"
#include "forest_coreg/pipeline.hpp"
#include "forest_coreg/ply_io.hpp"
#include "forest_coreg/random.hpp"
#include "forest_coreg/synthetic.hpp"

namespace fs = std::filesystem;
using namespace fcoreg;

namespace {

struct CommonArgs {
  std::string als_path;
  std::string mission_path;
  std::string tiles_dir;
  std::string config_path;
  std::string out_dir;
  int threads = -1;       // -1 = leave config untouched
  double tile_size = 0.0; // 0 = take the tiles manifest's value
};

// The tiles manifest records the grid geometry; an explicit --tile-size must
// agree with it.
void check_tile_size(const TileSet& tiles, double requested) {
  if (requested > 0.0 && std::abs(requested - tiles.tile_size) > 1e-9) {
    throw ParseError("--tile-size " + std::to_string(requested) +
                     " does not match the tiles manifest (" +
                     std::to_string(tiles.tile_size) + ")");
  }
}

PipelineConfig resolve_config(const CommonArgs& args) {
  PipelineConfig config;
  if (!args.config_path.empty()) config = load_config(args.config_path);
  if (args.threads >= 0) config.threads = args.threads;
  return config;
}

void add_input_options(CLI::App* cmd, CommonArgs& args, bool need_als) {
  if (need_als) {
    cmd->add_option("--als", args.als_path, "ALS point cloud (PLY)")->required();
  }
  auto* mission = cmd->add_option("--mission", args.mission_path, "mission file");
  auto* tiles = cmd->add_option("--tiles", args.tiles_dir, "tiles directory");
  mission->excludes(tiles);
  tiles->excludes(mission);
  cmd->add_option("--tile-size", args.tile_size, "tile cell size [m], checked against the manifest")
      ->needs(tiles);
  cmd->add_option("--config", args.config_path, "pipeline configuration file");
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--threads", args.threads, "worker pool size (0 = hardware)");
}

struct SynthArgs {
  int n_trees = 200;
  double extent = 150.0;
  double drift = 2.0;
  double lane_spacing = 20.0;
  std::uint64_t seed = 7;
  std::string out_dir;
  double tile_size = 0.0;  // > 0: also emit a tiles directory
  double als_crown_density = 80.0;
  double mls_stem_ppm = 120.0;
  double mls_ground_density = 30.0;
};

int cmd_synth(const SynthArgs& args) {
  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  const ForestModel forest = generate_forest(args.n_trees, args.extent, args.seed);
  AlsScanParams als_params;
  als_params.seed = derive_seed(args.seed, 1);
  als_params.crown_density = args.als_crown_density;
  const PointCloud als = simulate_als_scan(forest, als_params);
  save_cloud(als, (out / "als.ply").string());

  MlsScanParams mls_params;
  mls_params.seed = derive_seed(args.seed, 2);
  mls_params.drift_magnitude = args.drift;
  mls_params.stem_points_per_meter = args.mls_stem_ppm;
  mls_params.ground_density = args.mls_ground_density;
  const MlsSimulation sim = simulate_mls_mission(
      forest, serpentine_trajectory(args.extent, args.lane_spacing), mls_params);
  save_mission(sim.mission, (out / "mission.txt").string());

  // Ground-truth poses in the mission format (no payload references).
  Mission truth;
  for (std::size_t k = 0; k < sim.true_poses.size(); ++k) {
    MissionNode node;
    node.id = static_cast<std::int64_t>(k);
    node.timestamp = sim.mission.nodes[k].timestamp;
    node.pose = sim.true_poses[k];
    truth.nodes.push_back(node);
  }
  save_mission(truth, (out / "truth.txt").string());

  if (args.tile_size > 0.0) {
    // Tiles inherit the drifted reconstruction, exactly like joining the
    // mission payloads at their SLAM poses.
    save_tiles(partition_tiles(sim.mission, args.tile_size), (out / "tiles").string());
  }

  PipelineConfig config;
  config.seed = args.seed;
  save_config(config, (out / "config.toml").string());

  std::size_t mls_points = 0;
  for (const auto& [id, cloud] : sim.mission.payloads) mls_points += cloud.size();
  std::printf("synth: %zu trees, als %zu points, %zu payloads, %zu mls points\n",
              forest.trees.size(), als.size(), sim.mission.payloads.size(), mls_points);
  return 0;
}

std::vector<CloudJob> jobs_from_mission(const Mission& mission) {
  std::vector<CloudJob> jobs;
  for (const auto& node : mission.nodes) {
    auto it = mission.payloads.find(node.id);
    if (it == mission.payloads.end()) continue;
    CloudJob job;
    job.id = node.id;
    job.world_cloud = transform_cloud(it->second, node.pose);
    job.gnss_center = node.pose.translation().head<2>();
    jobs.push_back(std::move(job));
  }
  return jobs;
}

std::vector<CloudJob> jobs_from_tiles(const TileSet& tiles) {
  std::vector<CloudJob> jobs;
  std::int64_t id = 0;
  for (const auto& [key, cloud] : tiles.tiles) {
    CloudJob job;
    job.id = id++;
    job.world_cloud = cloud;
    job.gnss_center = tiles.tile_center(key.first, key.second);
    jobs.push_back(std::move(job));
  }
  return jobs;
}

int cmd_register(const CommonArgs& args) {
  const PipelineConfig config = resolve_config(args);
  PointCloud als = load_cloud(args.als_path);
  als.source = CloudSource::kAls;

  std::vector<CloudJob> jobs;
  if (!args.mission_path.empty()) {
    jobs = jobs_from_mission(load_mission(args.mission_path));
  } else if (!args.tiles_dir.empty()) {
    const TileSet tiles = load_tiles(args.tiles_dir);
    check_tile_size(tiles, args.tile_size);
    jobs = jobs_from_tiles(tiles);
  } else {
    std::fprintf(stderr, "register: need --mission or --tiles\n");
    return 1;
  }

  auto records = register_clouds(jobs, als, config);
  const auto accepted = accepted_results(records, config);
  for (auto& r : records) {
    for (const auto& a : accepted) {
      if (a.cloud_id == r.cloud_id) r.fine.accepted = true;
    }
  }
  fs::create_directories(args.out_dir);
  write_registration_json((fs::path(args.out_dir) / "registration.json").string(),
                          records);
  std::printf("register: %zu clouds, %zu accepted\n", jobs.size(), accepted.size());
  return 0;
}

int cmd_optimize(const CommonArgs& args, const std::string& registrations_path) {
  const PipelineConfig config = resolve_config(args);

  FactorGraph graph;
  Mission mission;
  TileSet tiles;
  const bool tiles_mode = !args.tiles_dir.empty();
  if (tiles_mode) {
    tiles = load_tiles(args.tiles_dir);
    check_tile_size(tiles, args.tile_size);
    graph = build_graph_from_tiles(tiles, config.grid);
  } else if (!args.mission_path.empty()) {
    mission = load_mission(args.mission_path);
    graph = build_graph_from_mission(mission);
  } else {
    std::fprintf(stderr, "optimize: need --mission or --tiles\n");
    return 1;
  }
  graph.config = config.optimizer;

  std::vector<RegistrationResult> results = load_registration_json(registrations_path);
  std::erase_if(results, [](const RegistrationResult& r) { return !r.accepted; });
  const std::map<std::int64_t, Pose> initial = graph.nodes;

  OptimizationReport report;
  try {
    add_aerial_factors(graph, results, config.aerial);
    report = optimize(graph);
  } catch (const GaugeUnconstrained& e) {
    std::fprintf(stderr, "optimize: %s\n", e.what());
    return 2;
  }

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  write_report_json((out / "report.json").string(), report);
  if (tiles_mode) {
    TileSet optimized = tiles;
    std::int64_t id = 0;
    for (auto& [key, cloud] : optimized.tiles) {
      cloud = transform_cloud(cloud, graph.nodes.at(id) * initial.at(id).inverse());
      ++id;
    }
    save_tiles(optimized, (out / "optimized_tiles").string());
  } else {
    for (auto& node : mission.nodes) node.pose = graph.nodes.at(node.id);
    save_mission(mission, (out / "optimized_mission.txt").string());
  }
  std::printf("optimize: cost %.6g -> %.6g in %d iterations\n", report.initial_cost,
              report.final_cost, report.iterations);
  return 0;
}

int cmd_run(const CommonArgs& args) {
  RunOptions options;
  options.als_path = args.als_path;
  options.mission_path = args.mission_path;
  options.tiles_dir = args.tiles_dir;
  options.out_dir = args.out_dir;
  options.config = resolve_config(args);
  options.expected_tile_size = args.tile_size;
  if (options.mission_path.empty() && options.tiles_dir.empty()) {
    std::fprintf(stderr, "run: need --mission or --tiles\n");
    return 1;
  }
  const RunSummary summary = run_pipeline(options);
  if (summary.exit_code == 0) {
    std::printf("run: %d/%d clouds registered, artifacts in %s\n",
                summary.clouds_accepted, summary.clouds_total, args.out_dir.c_str());
  } else {
    std::fprintf(stderr, "run: %s\n", summary.message.c_str());
  }
  return summary.exit_code;
}

int cmd_analyze(const CommonArgs& args) {
  const PipelineConfig config = resolve_config(args);
  PointCloud als = load_cloud(args.als_path);
  als.source = CloudSource::kAls;

  PointCloud mls;
  if (!args.mission_path.empty()) {
    const Mission mission = load_mission(args.mission_path);
    for (const auto& node : mission.nodes) {
      auto it = mission.payloads.find(node.id);
      if (it == mission.payloads.end()) continue;
      const PointCloud world = transform_cloud(it->second, node.pose);
      mls.points.insert(mls.points.end(), world.points.begin(), world.points.end());
    }
  } else if (!args.tiles_dir.empty()) {
    const TileSet tiles = load_tiles(args.tiles_dir);
    check_tile_size(tiles, args.tile_size);
    for (const auto& [key, cloud] : tiles.tiles) {
      mls.points.insert(mls.points.end(), cloud.points.begin(), cloud.points.end());
    }
  } else {
    std::fprintf(stderr, "analyze: need --mission or --tiles\n");
    return 1;
  }
  if (mls.empty()) {
    std::fprintf(stderr, "analyze: no MLS points\n");
    return 1;
  }

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  const Eigen::Vector3d mn = min_corner(mls);
  const Eigen::Vector3d mx = max_corner(mls);
  PointCloud als_region =
      crop_als(als, 0.5 * (mn + mx).head<2>(),
               0.5 * std::max(mx.x() - mn.x(), mx.y() - mn.y()) + 5.0);

  const CloudErrorStats stats = cloud_to_cloud_error(mls, als_region, config.error_max_dist);
  write_errors_csv((out / "errors.csv").string(),
                   {{"all", stats.mean, stats.mean, stats.rmse, stats.stddev}});

  GroundFitParams ground_params = config.coarse.ground;
  ground_params.seed = derive_seed(config.seed, 0xA7A);
  const Plane ground = fit_ground_plane(voxel_downsample(als_region, 0.2), ground_params);

  PointCloud combined = als_region;
  combined.points.insert(combined.points.end(), mls.points.begin(), mls.points.end());
  write_occupancy_csv(
      (out / "occupancy.csv").string(),
      voxel_occupancy_profile(als_region, ground, config.occupancy_resolution,
                              config.occupancy_bin_height),
      voxel_occupancy_profile(mls, ground, config.occupancy_resolution,
                              config.occupancy_bin_height),
      voxel_occupancy_profile(combined, ground, config.occupancy_resolution,
                              config.occupancy_bin_height));

  StemExtractionParams stem_params = config.coarse.stems;
  stem_params.seed = derive_seed(config.seed, 0x7F0);
  const PointCloud combined_thin = voxel_downsample(combined, config.occupancy_resolution);
  const auto features = extract_stems(combined_thin, ground, stem_params);
  TraitParams trait_params = config.traits;
  trait_params.seed = derive_seed(config.seed, 0x77A);
  std::vector<TraitCsvRow> rows;
  auto add_rows = [&](const PointCloud& cloud, const char* source) {
    const TraitSummary summary = extract_tree_traits(
        voxel_downsample(cloud, config.occupancy_resolution), features, ground,
        trait_params);
    for (const auto& t : summary.traits) {
      rows.push_back({t.tree_id, t.height, t.canopy_volume, source});
    }
  };
  add_rows(als_region, "als");
  add_rows(mls, "mls");
  add_rows(combined, "combined");
  write_traits_csv((out / "traits.csv").string(), rows);

  std::printf("analyze: error mean %.3f m over %zu points, %zu features\n", stats.mean,
              stats.count, features.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Marker-free co-registration of terrestrial and aerial forest scans"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic forest dataset");
  synth->add_option("--n-trees", synth_args.n_trees, "number of trees");
  synth->add_option("--extent", synth_args.extent, "forest side length [m]");
  synth->add_option("--drift", synth_args.drift, "final trajectory drift [m]");
  synth->add_option("--lane-spacing", synth_args.lane_spacing, "survey lane spacing [m]");
  synth->add_option("--seed", synth_args.seed, "RNG seed");
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();
  synth->add_option("--tile-size", synth_args.tile_size,
                    "also emit a tiles directory at this cell size [m]");
  synth->add_option("--als-crown-density", synth_args.als_crown_density,
                    "ALS crown points per m^2");
  synth->add_option("--mls-stem-points", synth_args.mls_stem_ppm,
                    "MLS stem points per meter of height");
  synth->add_option("--mls-ground-density", synth_args.mls_ground_density,
                    "MLS ground points per m^2");

  CommonArgs register_args, optimize_args, run_args, analyze_args;
  std::string registrations_path;

  auto* register_cmd = app.add_subcommand("register", "per-cloud registration only");
  add_input_options(register_cmd, register_args, true);

  auto* optimize_cmd =
      app.add_subcommand("optimize", "pose graph refinement from a registration JSON");
  add_input_options(optimize_cmd, optimize_args, false);
  optimize_cmd->add_option("--registrations", registrations_path, "registration.json")
      ->required();

  auto* run_cmd = app.add_subcommand("run", "end-to-end pipeline");
  add_input_options(run_cmd, run_args, true);

  auto* analyze_cmd = app.add_subcommand("analyze", "error/occupancy/trait reports");
  add_input_options(analyze_cmd, analyze_args, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (register_cmd->parsed()) return cmd_register(register_args);
    if (optimize_cmd->parsed()) return cmd_optimize(optimize_args, registrations_path);
    if (run_cmd->parsed()) return cmd_run(run_args);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze_args);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
