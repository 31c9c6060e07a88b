#ifndef FOREST_COREG_PIPELINE_HPP
#define FOREST_COREG_PIPELINE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "forest_coreg/config.hpp"
#include "forest_coreg/factor_graph.hpp"
#include "forest_coreg/mission.hpp"

namespace fcoreg {

/// One MLS cloud (payload or tile) queued for registration, already
/// positioned by its initial pose.
struct CloudJob {
  std::int64_t id = -1;
  PointCloud world_cloud;
  Eigen::Vector2d gnss_center = Eigen::Vector2d::Zero();
};

/// Per-cloud outcome of the coarse + fine stages, serialized to the
/// diagnostics JSON.
struct RegistrationRecord {
  std::int64_t cloud_id = -1;
  RegistrationStatus status = RegistrationStatus::kOk;
  CoarseDiagnostics coarse;
  RegistrationResult fine;  // meaningful when status == kOk
  std::string message;      // populated for kError
};

/// Worker count: `requested` (0 = hardware concurrency), capped by the
/// FOREST_COREG_THREADS environment variable when set.
int resolve_thread_count(int requested);

/// Runs fn(0..n-1) on a worker pool. Results must be written to
/// pre-allocated slots; the iteration order is unspecified but the set of
/// calls is exactly 0..n-1.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Registers every cloud against the ALS map (coarse clique matching + ICP),
/// in parallel, with per-cloud derived seeds so results do not depend on
/// scheduling. Records come back in job order.
std::vector<RegistrationRecord> register_clouds(const std::vector<CloudJob>& jobs,
                                                const PointCloud& als,
                                                const PipelineConfig& config);

/// Accepted fine-registration results (after filter_matches) from records.
std::vector<RegistrationResult> accepted_results(const std::vector<RegistrationRecord>& records,
                                                 const PipelineConfig& config);

// Diagnostics and report files.
void write_registration_json(const std::string& path,
                             const std::vector<RegistrationRecord>& records);
std::vector<RegistrationResult> load_registration_json(const std::string& path);
void write_report_json(const std::string& path, const OptimizationReport& report);

struct RunOptions {
  std::string als_path;
  std::string mission_path;  // exactly one of mission_path / tiles_dir
  std::string tiles_dir;
  std::string out_dir;
  PipelineConfig config;
  double expected_tile_size = 0.0;  // > 0: must match the tiles manifest
};

struct RunSummary {
  int exit_code = 0;  // 0 ok, 1 I/O or config error, 2 nothing registered
  std::string message;
  int clouds_total = 0;
  int clouds_accepted = 0;
};

/// End-to-end pipeline: register -> optimize -> export -> analyze. Writes
/// registration.json, report.json, the optimized mission (or tiles), the
/// fused cloud, and errors/occupancy/traits CSVs into out_dir.
RunSummary run_pipeline(const RunOptions& options);

}  // namespace fcoreg

#endif  // FOREST_COREG_PIPELINE_HPP
