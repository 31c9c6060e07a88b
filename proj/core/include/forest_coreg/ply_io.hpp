#ifndef FOREST_COREG_PLY_IO_HPP
#define FOREST_COREG_PLY_IO_HPP

#include <string>
#include <vector>

#include "forest_coreg/point_cloud.hpp"

namespace fcoreg {

/// Loads a PLY point cloud (ASCII or binary little-endian). The vertex
/// element must provide x, y, z; nx, ny, nz are picked up when present and
/// any other vertex property is skipped. Skipped property names are appended
/// to `warnings` when given. Throws ParseError on malformed input.
PointCloud load_cloud(const std::string& path,
                      std::vector<std::string>* warnings = nullptr);

enum class PlyFormat { kBinaryLittleEndian, kAscii };

/// Writes x,y,z as float64 (plus nx,ny,nz as float32 when the cloud has
/// normals). Binary little-endian by default; coordinates roundtrip
/// losslessly in either format.
void save_cloud(const PointCloud& cloud, const std::string& path,
                PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace fcoreg

#endif  // FOREST_COREG_PLY_IO_HPP
