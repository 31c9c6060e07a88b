#ifndef FOREST_COREG_MISSION_HPP
#define FOREST_COREG_MISSION_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "forest_coreg/lie.hpp"
#include "forest_coreg/point_cloud.hpp"

namespace fcoreg {

struct MissionNode {
  std::int64_t id = 0;
  double timestamp = 0.0;       // seconds
  Pose pose;                    // UTM-anchored frame
  std::string payload_path;     // relative to the mission file; empty = none
};

struct MissionEdge {
  std::int64_t from = 0;
  std::int64_t to = 0;
  Pose delta;                   // relative transform T_from^-1 * T_to
  Matrix6d information = Matrix6d::Identity();
};

/// A SLAM mission: pose-graph nodes with point-cloud payloads attached.
/// Nodes are ordered by timestamp; edges reference node ids.
struct Mission {
  std::vector<MissionNode> nodes;
  std::map<std::int64_t, PointCloud> payloads;
  std::vector<MissionEdge> odometry_edges;
  std::vector<MissionEdge> loop_edges;

  const MissionNode* find_node(std::int64_t id) const;
};

/// The merged MLS cloud partitioned into a fixed-size, gravity-aligned
/// 2-D grid. Keys are (row, col) grid indices; row indexes y, col indexes x.
struct TileSet {
  Eigen::Vector2d origin_xy = Eigen::Vector2d::Zero();
  double tile_size = 20.0;
  std::map<std::pair<int, int>, PointCloud> tiles;

  Eigen::Vector2d tile_center(int row, int col) const {
    return {origin_xy.x() + (col + 0.5) * tile_size,
            origin_xy.y() + (row + 0.5) * tile_size};
  }
};

/// Reads a mission text file (NODE / EDGE_ODOM / EDGE_LOOP records, see
/// save_mission) and loads payload clouds relative to the file's directory.
/// Throws ParseError, DuplicateNodeId, DanglingEdge, NonSpdInformation.
Mission load_mission(const std::string& path, bool load_payloads = true);

/// Writes the mission file plus one PLY per payload. Payload files go to the
/// node's payload_path when set, otherwise to payloads/node_<id>.ply next to
/// the mission file.
void save_mission(const Mission& mission, const std::string& path,
                  bool save_payloads = true);

/// Merges all payloads into the world frame and buckets points into
/// tile_size x tile_size cells. The grid origin is the merged cloud's min
/// x,y rounded down to a tile_size multiple. Point counts are conserved.
/// Throws EmptyMission when there are no payload points.
TileSet partition_tiles(const Mission& mission, double tile_size);

/// Tile-set directory I/O: a tiles.txt manifest plus one PLY per tile.
void save_tiles(const TileSet& tiles, const std::string& dir);
TileSet load_tiles(const std::string& dir);

}  // namespace fcoreg

#endif  // FOREST_COREG_MISSION_HPP
