#ifndef FOREST_COREG_CONFIG_HPP
#define FOREST_COREG_CONFIG_HPP

#include <cstdint>
#include <string>

#include "forest_coreg/analysis.hpp"
#include "forest_coreg/coarse_registration.hpp"
#include "forest_coreg/factor_graph.hpp"
#include "forest_coreg/icp.hpp"

namespace fcoreg {

/// Every tunable of the pipeline with its default. All keys can be
/// overridden from a `key = value` text file (see load_config).
struct PipelineConfig {
  CoarseRegistrationConfig coarse;
  IcpParams icp;
  double icp_voxel = 0.1;     // m, source downsampling before ICP
  int min_inliers = 500;      // fine-registration acceptance
  double min_fitness = 0.3;
  AerialFactorParams aerial;
  GridFactorParams grid;
  OptimizerConfig optimizer;
  double tile_size = 20.0;    // m
  double error_max_dist = 1.0;        // analysis overlap cutoff
  double occupancy_resolution = 0.05; // m
  double occupancy_bin_height = 1.0;  // m
  TraitParams traits;
  int threads = 0;            // 0 = hardware concurrency
  std::uint64_t seed = 0;
};

/// Parses `key = value` lines ('#' starts a comment; dotted keys group by
/// stage). Unknown keys raise ParseError. Missing file raises ParseError.
PipelineConfig load_config(const std::string& path);

/// Applies one key/value pair to the config (the parser building block).
void apply_config_entry(PipelineConfig& config, const std::string& key,
                        const std::string& value);

/// Writes the full key set with current values; the output parses back.
void save_config(const PipelineConfig& config, const std::string& path);

}  // namespace fcoreg

#endif  // FOREST_COREG_CONFIG_HPP
