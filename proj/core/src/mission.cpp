#include "forest_coreg/mission.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>

#include "forest_coreg/errors.hpp"
#include "forest_coreg/ply_io.hpp"

namespace fs = std::filesystem;

namespace fcoreg {

const MissionNode* Mission::find_node(std::int64_t id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

namespace {

void check_spd(const Matrix6d& info, const std::string& context) {
  Eigen::LLT<Matrix6d> llt(info);
  if (llt.info() != Eigen::Success) {
    throw NonSpdInformation(context + ": information matrix is not positive definite");
  }
}

Matrix6d read_upper_triangular(std::istringstream& ls, const std::string& context) {
  Matrix6d info;
  for (int r = 0; r < 6; ++r) {
    for (int c = r; c < 6; ++c) {
      double v;
      if (!(ls >> v)) throw ParseError(context + ": expected 21 information entries");
      info(r, c) = v;
      info(c, r) = v;
    }
  }
  return info;
}

void write_pose(std::ostringstream& os, const Pose& p) {
  char buf[256];
  const auto& t = p.translation();
  const auto& q = p.rotation();
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g",
                t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
  os << buf;
}

void write_upper_triangular(std::ostringstream& os, const Matrix6d& info) {
  char buf[64];
  for (int r = 0; r < 6; ++r) {
    for (int c = r; c < 6; ++c) {
      std::snprintf(buf, sizeof(buf), " %.17g", info(r, c));
      os << buf;
    }
  }
}

MissionEdge parse_edge(std::istringstream& ls, const std::string& context) {
  MissionEdge e;
  double x, y, z, qx, qy, qz, qw;
  if (!(ls >> e.from >> e.to >> x >> y >> z >> qx >> qy >> qz >> qw)) {
    throw ParseError(context + ": malformed edge record");
  }
  e.delta = Pose(Eigen::Quaterniond(qw, qx, qy, qz), Eigen::Vector3d(x, y, z));
  e.information = read_upper_triangular(ls, context);
  check_spd(e.information, context);
  return e;
}

}  // namespace

Mission load_mission(const std::string& path, bool load_payloads) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open mission file");
  const fs::path base = fs::path(path).parent_path();

  Mission mission;
  std::set<std::int64_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.ends_with('\r')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    const std::string context = path + ":" + std::to_string(line_no);
    if (tag == "NODE") {
      MissionNode n;
      double x, y, z, qx, qy, qz, qw;
      if (!(ls >> n.id >> n.timestamp >> x >> y >> z >> qx >> qy >> qz >> qw >>
            n.payload_path)) {
        throw ParseError(context + ": malformed NODE record");
      }
      if (n.payload_path == "-") n.payload_path.clear();
      n.pose = Pose(Eigen::Quaterniond(qw, qx, qy, qz), Eigen::Vector3d(x, y, z));
      if (!ids.insert(n.id).second) {
        throw DuplicateNodeId(context + ": duplicate node id " + std::to_string(n.id));
      }
      if (!mission.nodes.empty() && n.timestamp <= mission.nodes.back().timestamp) {
        throw ParseError(context + ": node timestamps must be strictly increasing");
      }
      mission.nodes.push_back(std::move(n));
    } else if (tag == "EDGE_ODOM") {
      mission.odometry_edges.push_back(parse_edge(ls, context));
    } else if (tag == "EDGE_LOOP") {
      mission.loop_edges.push_back(parse_edge(ls, context));
    } else {
      throw ParseError(context + ": unknown record '" + tag + "'");
    }
  }

  for (const auto* edges : {&mission.odometry_edges, &mission.loop_edges}) {
    for (const auto& e : *edges) {
      if (!ids.count(e.from) || !ids.count(e.to)) {
        throw DanglingEdge(path + ": edge " + std::to_string(e.from) + " -> " +
                           std::to_string(e.to) + " references a missing node");
      }
    }
  }

  if (load_payloads) {
    for (const auto& n : mission.nodes) {
      if (n.payload_path.empty()) continue;
      const fs::path p = base / n.payload_path;
      mission.payloads[n.id] = load_cloud(p.string());
    }
  }
  return mission;
}

void save_mission(const Mission& mission, const std::string& path, bool save_payloads) {
  const fs::path base = fs::path(path).parent_path();

  std::vector<std::string> payload_paths(mission.nodes.size());
  for (std::size_t i = 0; i < mission.nodes.size(); ++i) {
    const auto& n = mission.nodes[i];
    if (!mission.payloads.count(n.id)) continue;
    payload_paths[i] = n.payload_path.empty()
                           ? "payloads/node_" + std::to_string(n.id) + ".ply"
                           : n.payload_path;
  }

  std::ostringstream os;
  for (std::size_t i = 0; i < mission.nodes.size(); ++i) {
    const auto& n = mission.nodes[i];
    char buf[64];
    std::snprintf(buf, sizeof(buf), "NODE %lld %.17g ",
                  static_cast<long long>(n.id), n.timestamp);
    os << buf;
    write_pose(os, n.pose);
    os << " " << (payload_paths[i].empty() ? "-" : payload_paths[i]) << "\n";
  }
  for (const auto* edges : {&mission.odometry_edges, &mission.loop_edges}) {
    const char* tag = edges == &mission.odometry_edges ? "EDGE_ODOM" : "EDGE_LOOP";
    for (const auto& e : *edges) {
      os << tag << " " << e.from << " " << e.to << " ";
      write_pose(os, e.delta);
      write_upper_triangular(os, e.information);
      os << "\n";
    }
  }

  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open mission file for writing");
  out << os.str();
  if (!out) throw ParseError(path + ": write failed");

  if (save_payloads) {
    for (std::size_t i = 0; i < mission.nodes.size(); ++i) {
      if (payload_paths[i].empty()) continue;
      const fs::path p = base / payload_paths[i];
      fs::create_directories(p.parent_path());
      save_cloud(mission.payloads.at(mission.nodes[i].id), p.string());
    }
  }
}

TileSet partition_tiles(const Mission& mission, double tile_size) {
  if (!(tile_size > 0.0)) {
    throw NonPositiveResolution("partition_tiles: tile_size must be > 0");
  }
  if (mission.nodes.empty()) throw EmptyMission("partition_tiles: mission has no nodes");

  PointCloud merged;
  std::size_t total = 0;
  for (const auto& [id, cloud] : mission.payloads) total += cloud.size();
  if (total == 0) throw EmptyMission("partition_tiles: mission has no payload points");
  merged.reserve(total);
  for (const auto& n : mission.nodes) {
    auto it = mission.payloads.find(n.id);
    if (it == mission.payloads.end()) continue;
    const PointCloud world = transform_cloud(it->second, n.pose);
    merged.points.insert(merged.points.end(), world.points.begin(), world.points.end());
  }

  TileSet out;
  out.tile_size = tile_size;
  const Eigen::Vector3d mn = min_corner(merged);
  out.origin_xy = {std::floor(mn.x() / tile_size) * tile_size,
                   std::floor(mn.y() / tile_size) * tile_size};
  for (const auto& p : merged.points) {
    const int col = static_cast<int>(std::floor((p.x() - out.origin_xy.x()) / tile_size));
    const int row = static_cast<int>(std::floor((p.y() - out.origin_xy.y()) / tile_size));
    out.tiles[{row, col}].points.push_back(p);
  }
  for (auto& [key, tile] : out.tiles) tile.source = CloudSource::kMls;
  return out;
}

void save_tiles(const TileSet& tiles, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "tiles.txt");
  if (!out) throw ParseError(dir + ": cannot write tiles.txt");
  char buf[128];
  std::snprintf(buf, sizeof(buf), "origin %.17g %.17g\ntile_size %.17g\n",
                tiles.origin_xy.x(), tiles.origin_xy.y(), tiles.tile_size);
  out << buf;
  for (const auto& [key, cloud] : tiles.tiles) {
    const std::string name =
        "tile_" + std::to_string(key.first) + "_" + std::to_string(key.second) + ".ply";
    out << "TILE " << key.first << " " << key.second << " " << name << "\n";
    save_cloud(cloud, (fs::path(dir) / name).string());
  }
}

TileSet load_tiles(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "tiles.txt");
  if (!in) throw ParseError(dir + ": cannot open tiles.txt");
  TileSet tiles;
  std::string line;
  while (std::getline(in, line)) {
    if (line.ends_with('\r')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "origin") {
      ls >> tiles.origin_xy.x() >> tiles.origin_xy.y();
    } else if (tag == "tile_size") {
      ls >> tiles.tile_size;
    } else if (tag == "TILE") {
      int row, col;
      std::string name;
      if (!(ls >> row >> col >> name)) throw ParseError(dir + ": malformed TILE record");
      tiles.tiles[{row, col}] = load_cloud((fs::path(dir) / name).string());
      tiles.tiles[{row, col}].source = CloudSource::kMls;
    } else {
      throw ParseError(dir + ": unknown tiles.txt record '" + tag + "'");
    }
  }
  return tiles;
}

}  // namespace fcoreg
