#include "forest_coreg/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "forest_coreg/analysis.hpp"
#include "forest_coreg/errors.hpp"
#include "forest_coreg/ply_io.hpp"
#include "forest_coreg/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fcoreg {

int resolve_thread_count(int requested) {
  int threads = requested > 0 ? requested
                              : static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  if (const char* env = std::getenv("FOREST_COREG_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) threads = std::min(threads, cap);
  }
  return threads;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::vector<RegistrationRecord> register_clouds(const std::vector<CloudJob>& jobs,
                                                const PointCloud& als,
                                                const PipelineConfig& config) {
  std::vector<RegistrationRecord> records(jobs.size());
  const int threads = resolve_thread_count(config.threads);

  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    const CloudJob& job = jobs[i];
    RegistrationRecord& record = records[i];
    record.cloud_id = job.id;
    try {
      CoarseRegistrationConfig coarse_cfg = config.coarse;
      coarse_cfg.seed = derive_seed(config.seed, static_cast<std::uint64_t>(job.id));
      const CoarseResult coarse = coarse_register(job.world_cloud, als,
                                                  job.gnss_center, coarse_cfg);
      record.coarse = coarse.diagnostics;
      record.status = coarse.diagnostics.status;
      if (!coarse.ok()) return;

      // ICP against the same neighborhood, with margin for the coarse shift.
      const double half_extent = compute_crop_half_extent(job.world_cloud, coarse_cfg) + 2.0;
      const PointCloud crop = crop_als(als, job.gnss_center, half_extent);
      const PointCloud source = voxel_downsample(job.world_cloud, config.icp_voxel);
      RegistrationResult fine = icp(source, crop, coarse.transform, config.icp);
      fine.cloud_id = job.id;
      record.fine = fine;
      record.status = RegistrationStatus::kOk;
    } catch (const NoCorrespondences&) {
      record.status = RegistrationStatus::kNoCorrespondences;
    } catch (const EmptyCrop&) {
      record.status = RegistrationStatus::kEmptyCrop;
    } catch (const Error& e) {
      record.status = RegistrationStatus::kError;
      record.message = e.what();
    }
  });
  return records;
}

std::vector<RegistrationResult> accepted_results(const std::vector<RegistrationRecord>& records,
                                                 const PipelineConfig& config) {
  std::vector<RegistrationResult> results;
  for (const auto& r : records) {
    if (r.status == RegistrationStatus::kOk) results.push_back(r.fine);
  }
  results = filter_matches(std::move(results), config.min_inliers, config.min_fitness);
  std::erase_if(results, [](const RegistrationResult& r) { return !r.accepted; });
  return results;
}

namespace {

json pose_to_json(const Pose& p) {
  const auto& t = p.translation();
  const auto& q = p.rotation();
  return json{{"x", t.x()},  {"y", t.y()},  {"z", t.z()},  {"qx", q.x()},
              {"qy", q.y()}, {"qz", q.z()}, {"qw", q.w()}};
}

Pose pose_from_json(const json& j) {
  return Pose(Eigen::Quaterniond(j.at("qw").get<double>(), j.at("qx").get<double>(),
                                 j.at("qy").get<double>(), j.at("qz").get<double>()),
              Eigen::Vector3d(j.at("x").get<double>(), j.at("y").get<double>(),
                              j.at("z").get<double>()));
}

}  // namespace

void write_registration_json(const std::string& path,
                             const std::vector<RegistrationRecord>& records) {
  json clouds = json::array();
  for (const auto& r : records) {
    json entry{{"cloud_id", r.cloud_id},
               {"status", to_string(r.status)},
               {"clique_size", r.coarse.clique_size},
               {"n_aerial", r.coarse.n_aerial},
               {"n_terrestrial", r.coarse.n_terrestrial},
               {"residual_rms", r.coarse.residual_rms}};
    if (r.status == RegistrationStatus::kOk) {
      entry["transform"] = pose_to_json(r.fine.transform);
      entry["fitness"] = r.fine.fitness;
      entry["inlier_rmse"] = r.fine.inlier_rmse;
      entry["num_inliers"] = r.fine.num_inliers;
      entry["iterations"] = r.fine.iterations;
      entry["accepted"] = r.fine.accepted;
    }
    if (!r.message.empty()) entry["message"] = r.message;
    clouds.push_back(entry);
  }
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << json{{"clouds", clouds}}.dump(2) << "\n";
}

std::vector<RegistrationResult> load_registration_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open registration file");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  std::vector<RegistrationResult> results;
  for (const auto& entry : doc.at("clouds")) {
    if (entry.at("status").get<std::string>() != "ok") continue;
    RegistrationResult r;
    r.cloud_id = entry.at("cloud_id").get<std::int64_t>();
    r.transform = pose_from_json(entry.at("transform"));
    r.fitness = entry.at("fitness").get<double>();
    r.inlier_rmse = entry.at("inlier_rmse").get<double>();
    r.num_inliers = entry.at("num_inliers").get<int>();
    r.accepted = entry.value("accepted", false);
    results.push_back(r);
  }
  return results;
}

void write_report_json(const std::string& path, const OptimizationReport& report) {
  json by_kind = json::object();
  for (const auto& [kind, cost] : report.cost_by_factor_kind) by_kind[kind] = cost;
  const json doc{{"initial_cost", report.initial_cost},
                 {"final_cost", report.final_cost},
                 {"iterations", report.iterations},
                 {"cost_by_factor_kind", by_kind},
                 {"node_shift_mean_m", report.node_shift_mean_m},
                 {"node_shift_max_m", report.node_shift_max_m}};
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << doc.dump(2) << "\n";
}

namespace {

struct LoadedInput {
  bool tiles_mode = false;
  Mission mission;
  TileSet tiles;
  FactorGraph graph;
  std::vector<CloudJob> jobs;
};

LoadedInput load_input(const RunOptions& options) {
  LoadedInput input;
  if (!options.mission_path.empty()) {
    input.mission = load_mission(options.mission_path);
    input.graph = build_graph_from_mission(input.mission);
    for (const auto& node : input.mission.nodes) {
      auto it = input.mission.payloads.find(node.id);
      if (it == input.mission.payloads.end()) continue;
      CloudJob job;
      job.id = node.id;
      job.world_cloud = transform_cloud(it->second, node.pose);
      job.gnss_center = node.pose.translation().head<2>();
      input.jobs.push_back(std::move(job));
    }
  } else {
    input.tiles_mode = true;
    input.tiles = load_tiles(options.tiles_dir);
    if (options.expected_tile_size > 0.0 &&
        std::abs(options.expected_tile_size - input.tiles.tile_size) > 1e-9) {
      throw ParseError("tile size " + std::to_string(options.expected_tile_size) +
                       " does not match the tiles manifest (" +
                       std::to_string(input.tiles.tile_size) + ")");
    }
    input.graph = build_graph_from_tiles(input.tiles, options.config.grid);
    std::int64_t id = 0;
    for (const auto& [key, cloud] : input.tiles.tiles) {
      CloudJob job;
      job.id = id++;
      job.world_cloud = cloud;
      job.gnss_center = input.tiles.tile_center(key.first, key.second);
      input.jobs.push_back(std::move(job));
    }
  }
  return input;
}

}  // namespace

RunSummary run_pipeline(const RunOptions& options) {
  RunSummary summary;

  PointCloud als;
  LoadedInput input;
  try {
    als = load_cloud(options.als_path);
    als.source = CloudSource::kAls;
    input = load_input(options);
    fs::create_directories(options.out_dir);
  } catch (const Error& e) {
    summary.exit_code = 1;
    summary.message = e.what();
    return summary;
  }
  const fs::path out(options.out_dir);
  const PipelineConfig& config = options.config;

  // Stage 1: per-cloud registration.
  const auto records = register_clouds(input.jobs, als, config);
  std::vector<RegistrationResult> accepted = accepted_results(records, config);
  {
    // Mark acceptance in the diagnostics before writing them.
    std::vector<RegistrationRecord> annotated = records;
    for (auto& r : annotated) {
      r.fine.accepted = false;
      for (const auto& a : accepted) {
        if (a.cloud_id == r.cloud_id) r.fine.accepted = true;
      }
    }
    write_registration_json((out / "registration.json").string(), annotated);
  }
  summary.clouds_total = static_cast<int>(input.jobs.size());
  summary.clouds_accepted = static_cast<int>(accepted.size());
  if (accepted.empty()) {
    summary.exit_code = 2;
    summary.message =
        "no registration passed the acceptance thresholds; graph optimization "
        "refused (gauge unconstrained)";
    return summary;
  }

  // Stage 2: deformable refinement.
  const std::map<std::int64_t, Pose> initial_poses = input.graph.nodes;
  OptimizationReport report;
  try {
    input.graph.config = config.optimizer;
    add_aerial_factors(input.graph, accepted, config.aerial);
    report = optimize(input.graph);
  } catch (const Error& e) {
    summary.exit_code = 1;
    summary.message = e.what();
    return summary;
  }
  write_report_json((out / "report.json").string(), report);

  // Stage 3: exports.
  PointCloud fused;
  fused.source = CloudSource::kMls;
  PointCloud fused_initial;
  if (!input.tiles_mode) {
    Mission optimized = input.mission;
    for (auto& node : optimized.nodes) node.pose = input.graph.nodes.at(node.id);
    save_mission(optimized, (out / "optimized_mission.txt").string());
    for (const auto& node : optimized.nodes) {
      auto it = optimized.payloads.find(node.id);
      if (it == optimized.payloads.end()) continue;
      const PointCloud world = transform_cloud(it->second, node.pose);
      fused.points.insert(fused.points.end(), world.points.begin(), world.points.end());
      const PointCloud before =
          transform_cloud(it->second, initial_poses.at(node.id));
      fused_initial.points.insert(fused_initial.points.end(), before.points.begin(),
                                  before.points.end());
    }
  } else {
    TileSet optimized = input.tiles;
    std::int64_t id = 0;
    for (auto& [key, cloud] : optimized.tiles) {
      const Pose correction = input.graph.nodes.at(id) * initial_poses.at(id).inverse();
      cloud = transform_cloud(cloud, correction);
      fused.points.insert(fused.points.end(), cloud.points.begin(), cloud.points.end());
      const auto& before = input.tiles.tiles.at(key);
      fused_initial.points.insert(fused_initial.points.end(), before.points.begin(),
                                  before.points.end());
      ++id;
    }
    save_tiles(optimized, (out / "optimized_tiles").string());
  }
  save_cloud(fused, (out / "fused.ply").string());

  // Stage 4: analysis. Work on the ALS neighborhood of the mission.
  try {
    const Eigen::Vector3d mn = min_corner(fused);
    const Eigen::Vector3d mx = max_corner(fused);
    const Eigen::Vector2d center = 0.5 * (mn + mx).head<2>();
    const double half = 0.5 * std::max(mx.x() - mn.x(), mx.y() - mn.y()) + 5.0;
    PointCloud als_region = crop_als(als, center, half);
    als_region.source = CloudSource::kAls;
    const KdTree als_tree(als_region.points);

    std::vector<ErrorCsvRow> error_rows;
    for (std::size_t i = 0; i < input.jobs.size(); ++i) {
      const auto& job = input.jobs[i];
      const Pose correction =
          input.graph.nodes.at(job.id) * initial_poses.at(job.id).inverse();
      ErrorCsvRow row;
      row.cloud_id = std::to_string(job.id);
      try {
        const CloudErrorStats pre =
            cloud_to_cloud_error(job.world_cloud, als_tree, config.error_max_dist);
        const CloudErrorStats post = cloud_to_cloud_error(
            transform_cloud(job.world_cloud, correction), als_tree, config.error_max_dist);
        row.pre_mean = pre.mean;
        row.post_mean = post.mean;
        row.rmse = post.rmse;
        row.stddev = post.stddev;
      } catch (const NoOverlap&) {
        continue;
      }
      error_rows.push_back(row);
    }
    {
      ErrorCsvRow all;
      all.cloud_id = "all";
      const CloudErrorStats pre =
          cloud_to_cloud_error(fused_initial, als_tree, config.error_max_dist);
      const CloudErrorStats post =
          cloud_to_cloud_error(fused, als_tree, config.error_max_dist);
      all.pre_mean = pre.mean;
      all.post_mean = post.mean;
      all.rmse = post.rmse;
      all.stddev = post.stddev;
      error_rows.push_back(all);
    }
    write_errors_csv((out / "errors.csv").string(), error_rows);

    // Occupancy and traits on voxel-thinned clouds.
    GroundFitParams ground_params = config.coarse.ground;
    ground_params.seed = derive_seed(config.seed, 0xA7A);
    const Plane ground =
        fit_ground_plane(voxel_downsample(als_region, 0.2), ground_params);

    PointCloud combined = als_region;
    combined.normals.clear();
    combined.points.insert(combined.points.end(), fused.points.begin(), fused.points.end());

    const OccupancyProfile prof_als = voxel_occupancy_profile(
        als_region, ground, config.occupancy_resolution, config.occupancy_bin_height);
    const OccupancyProfile prof_mls = voxel_occupancy_profile(
        fused, ground, config.occupancy_resolution, config.occupancy_bin_height);
    const OccupancyProfile prof_combined = voxel_occupancy_profile(
        combined, ground, config.occupancy_resolution, config.occupancy_bin_height);
    write_occupancy_csv((out / "occupancy.csv").string(), prof_als, prof_mls,
                        prof_combined);

    StemExtractionParams stem_params = config.coarse.stems;
    stem_params.seed = derive_seed(config.seed, 0x7F0);
    const PointCloud combined_thin = voxel_downsample(combined, config.occupancy_resolution);
    const std::vector<TreeFeature> trait_features =
        extract_stems(combined_thin, ground, stem_params);

    TraitParams trait_params = config.traits;
    trait_params.seed = derive_seed(config.seed, 0x77A);
    std::vector<TraitCsvRow> trait_rows;
    auto add_traits = [&](const PointCloud& cloud, const std::string& source) {
      const TraitSummary traits = extract_tree_traits(
          voxel_downsample(cloud, config.occupancy_resolution), trait_features, ground,
          trait_params);
      for (const auto& t : traits.traits) {
        trait_rows.push_back({t.tree_id, t.height, t.canopy_volume, source});
      }
    };
    add_traits(als_region, "als");
    add_traits(fused, "mls");
    add_traits(combined, "combined");
    write_traits_csv((out / "traits.csv").string(), trait_rows);
  } catch (const Error& e) {
    summary.exit_code = 1;
    summary.message = std::string("analysis failed: ") + e.what();
    return summary;
  }

  summary.message = "ok";
  return summary;
}

}  // namespace fcoreg
