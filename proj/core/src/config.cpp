#include "forest_coreg/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "forest_coreg/errors.hpp"

namespace fcoreg {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  const double v = std::stod(value, &used);
  if (used != value.size()) {
    throw ParseError("config: bad numeric value '" + value + "' for " + key);
  }
  return v;
}

int to_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  const int v = std::stoi(value, &used);
  if (used != value.size()) {
    throw ParseError("config: bad integer value '" + value + "' for " + key);
  }
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(value, &used);
  if (used != value.size()) {
    throw ParseError("config: bad integer value '" + value + "' for " + key);
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace

void apply_config_entry(PipelineConfig& c, const std::string& key,
                        const std::string& value) {
  // coarse registration
  if (key == "coarse.tau") c.coarse.tau = to_double(key, value);
  else if (key == "coarse.max_graph_vertices") c.coarse.max_graph_vertices = to_int(key, value);
  else if (key == "coarse.min_matches") c.coarse.min_matches = to_int(key, value);
  else if (key == "coarse.max_clique_enumeration") c.coarse.max_clique_enumeration = to_int(key, value);
  else if (key == "coarse.chm_resolution") c.coarse.chm_resolution = to_double(key, value);
  else if (key == "coarse.nms_window_cells") c.coarse.nms_window_cells = to_int(key, value);
  else if (key == "coarse.min_peak_height") c.coarse.min_peak_height = to_double(key, value);
  else if (key == "coarse.crop_padding") c.coarse.crop_padding = to_double(key, value);
  else if (key == "coarse.max_crop_half_extent") c.coarse.max_crop_half_extent = to_double(key, value);
  // ground plane fitting
  else if (key == "ground.normal_knn") c.coarse.ground.normal_knn = to_int(key, value);
  else if (key == "ground.max_normal_tilt_deg") c.coarse.ground.max_normal_tilt_deg = to_double(key, value);
  else if (key == "ground.height_band_fraction") c.coarse.ground.height_band_fraction = to_double(key, value);
  else if (key == "ground.inlier_threshold") c.coarse.ground.inlier_threshold = to_double(key, value);
  else if (key == "ground.max_iterations") c.coarse.ground.max_iterations = to_int(key, value);
  else if (key == "ground.confidence") c.coarse.ground.confidence = to_double(key, value);
  // stem extraction
  else if (key == "stems.slice_min") c.coarse.stems.slice_min = to_double(key, value);
  else if (key == "stems.slice_max") c.coarse.stems.slice_max = to_double(key, value);
  else if (key == "stems.dbscan_eps") c.coarse.stems.dbscan_eps = to_double(key, value);
  else if (key == "stems.dbscan_min_pts") c.coarse.stems.dbscan_min_pts = to_int(key, value);
  else if (key == "stems.cylinder_inlier_threshold") c.coarse.stems.cylinder_inlier_threshold = to_double(key, value);
  else if (key == "stems.min_radius") c.coarse.stems.min_radius = to_double(key, value);
  else if (key == "stems.max_radius") c.coarse.stems.max_radius = to_double(key, value);
  else if (key == "stems.max_axis_tilt_deg") c.coarse.stems.max_axis_tilt_deg = to_double(key, value);
  else if (key == "stems.min_cylinder_inliers") c.coarse.stems.min_cylinder_inliers = to_int(key, value);
  else if (key == "stems.breast_height") c.coarse.stems.breast_height = to_double(key, value);
  // fine registration
  else if (key == "icp.max_corr_dist") c.icp.max_corr_dist = to_double(key, value);
  else if (key == "icp.max_iterations") c.icp.max_iterations = to_int(key, value);
  else if (key == "icp.translation_epsilon") c.icp.translation_epsilon = to_double(key, value);
  else if (key == "icp.voxel") c.icp_voxel = to_double(key, value);
  else if (key == "fine.min_inliers") c.min_inliers = to_int(key, value);
  else if (key == "fine.min_fitness") c.min_fitness = to_double(key, value);
  // factor graph
  else if (key == "aerial.translation_sigma_floor") c.aerial.translation_sigma_floor = to_double(key, value);
  else if (key == "aerial.rotation_sigma") c.aerial.rotation_sigma = to_double(key, value);
  else if (key == "aerial.huber_delta") c.aerial.huber_delta = to_double(key, value);
  else if (key == "grid.translation_sigma") c.grid.translation_sigma = to_double(key, value);
  else if (key == "grid.rotation_sigma") c.grid.rotation_sigma = to_double(key, value);
  else if (key == "optimizer.max_iterations") c.optimizer.max_iterations = to_int(key, value);
  else if (key == "optimizer.step_tolerance") c.optimizer.step_tolerance = to_double(key, value);
  else if (key == "optimizer.cost_tolerance") c.optimizer.cost_tolerance = to_double(key, value);
  // tiling and analysis
  else if (key == "tile_size") c.tile_size = to_double(key, value);
  else if (key == "analysis.error_max_dist") c.error_max_dist = to_double(key, value);
  else if (key == "analysis.occupancy_resolution") c.occupancy_resolution = to_double(key, value);
  else if (key == "analysis.occupancy_bin_height") c.occupancy_bin_height = to_double(key, value);
  else if (key == "analysis.traits_assign_radius") c.traits.assign_radius = to_double(key, value);
  // runtime
  else if (key == "threads") c.threads = to_int(key, value);
  else if (key == "seed") c.seed = to_u64(key, value);
  else throw ParseError("config: unknown key '" + key + "'");
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open config file");
  PipelineConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply_config_entry(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

void save_config(const PipelineConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  char buf[160];
  auto put_d = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    out << buf;
  };
  auto put_i = [&](const char* key, long long v) {
    std::snprintf(buf, sizeof(buf), "%s = %lld\n", key, v);
    out << buf;
  };

  out << "# forest-coreg pipeline configuration\n";
  put_d("coarse.tau", c.coarse.tau);
  put_i("coarse.max_graph_vertices", c.coarse.max_graph_vertices);
  put_i("coarse.min_matches", c.coarse.min_matches);
  put_i("coarse.max_clique_enumeration", c.coarse.max_clique_enumeration);
  put_d("coarse.chm_resolution", c.coarse.chm_resolution);
  put_i("coarse.nms_window_cells", c.coarse.nms_window_cells);
  put_d("coarse.min_peak_height", c.coarse.min_peak_height);
  put_d("coarse.crop_padding", c.coarse.crop_padding);
  put_d("coarse.max_crop_half_extent", c.coarse.max_crop_half_extent);
  put_i("ground.normal_knn", c.coarse.ground.normal_knn);
  put_d("ground.max_normal_tilt_deg", c.coarse.ground.max_normal_tilt_deg);
  put_d("ground.height_band_fraction", c.coarse.ground.height_band_fraction);
  put_d("ground.inlier_threshold", c.coarse.ground.inlier_threshold);
  put_i("ground.max_iterations", c.coarse.ground.max_iterations);
  put_d("ground.confidence", c.coarse.ground.confidence);
  put_d("stems.slice_min", c.coarse.stems.slice_min);
  put_d("stems.slice_max", c.coarse.stems.slice_max);
  put_d("stems.dbscan_eps", c.coarse.stems.dbscan_eps);
  put_i("stems.dbscan_min_pts", c.coarse.stems.dbscan_min_pts);
  put_d("stems.cylinder_inlier_threshold", c.coarse.stems.cylinder_inlier_threshold);
  put_d("stems.min_radius", c.coarse.stems.min_radius);
  put_d("stems.max_radius", c.coarse.stems.max_radius);
  put_d("stems.max_axis_tilt_deg", c.coarse.stems.max_axis_tilt_deg);
  put_i("stems.min_cylinder_inliers", c.coarse.stems.min_cylinder_inliers);
  put_d("stems.breast_height", c.coarse.stems.breast_height);
  put_d("icp.max_corr_dist", c.icp.max_corr_dist);
  put_i("icp.max_iterations", c.icp.max_iterations);
  put_d("icp.translation_epsilon", c.icp.translation_epsilon);
  put_d("icp.voxel", c.icp_voxel);
  put_i("fine.min_inliers", c.min_inliers);
  put_d("fine.min_fitness", c.min_fitness);
  put_d("aerial.translation_sigma_floor", c.aerial.translation_sigma_floor);
  put_d("aerial.rotation_sigma", c.aerial.rotation_sigma);
  put_d("aerial.huber_delta", c.aerial.huber_delta);
  put_d("grid.translation_sigma", c.grid.translation_sigma);
  put_d("grid.rotation_sigma", c.grid.rotation_sigma);
  put_i("optimizer.max_iterations", c.optimizer.max_iterations);
  put_d("optimizer.step_tolerance", c.optimizer.step_tolerance);
  put_d("optimizer.cost_tolerance", c.optimizer.cost_tolerance);
  put_d("tile_size", c.tile_size);
  put_d("analysis.error_max_dist", c.error_max_dist);
  put_d("analysis.occupancy_resolution", c.occupancy_resolution);
  put_d("analysis.occupancy_bin_height", c.occupancy_bin_height);
  put_d("analysis.traits_assign_radius", c.traits.assign_radius);
  put_i("threads", c.threads);
  put_i("seed", static_cast<long long>(c.seed));
}

}  // namespace fcoreg
