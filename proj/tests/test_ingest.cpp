#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <fstream>

#include "forest_coreg/errors.hpp"
#include "forest_coreg/mission.hpp"
#include "forest_coreg/ply_io.hpp"
#include "forest_coreg/random.hpp"
#include "test_support.hpp"

using namespace fcoreg;

namespace {

// Order-independent coordinate checksum.
std::uint64_t coordinate_checksum(const PointCloud& cloud) {
  std::uint64_t sum = 0;
  for (const auto& p : cloud.points) {
    for (int k = 0; k < 3; ++k) {
      std::uint64_t bits;
      const double v = p[k];
      std::memcpy(&bits, &v, 8);
      sum += bits * 0x9e3779b97f4a7c15ull;
    }
  }
  return sum;
}

Mission make_synthetic_mission(int n_nodes, Rng& rng) {
  Mission mission;
  Pose pose;
  for (int i = 0; i < n_nodes; ++i) {
    MissionNode node;
    node.id = i;
    node.timestamp = i * 0.7;
    node.pose = pose;
    mission.nodes.push_back(node);
    PointCloud payload;
    for (int k = 0; k < 5; ++k) payload.points.push_back(rng.normal3(2.0));
    mission.payloads[i] = payload;
    const Pose step = test::random_pose(rng, 1.0, 0.2);
    if (i + 1 < n_nodes) {
      MissionEdge e;
      e.from = i;
      e.to = i + 1;
      e.delta = step;
      e.information = Matrix6d::Identity() * 10.0;
      mission.odometry_edges.push_back(e);
    }
    pose = pose * step;
  }
  return mission;
}

}  // namespace

TEST_CASE("PLY roundtrip of a small cloud is lossless") {
  test::TempDir tmp("ply_small");
  PointCloud cloud;
  cloud.points = {{0.1, -2.5, 3.75}, {1e-9, 1e9, -0.25}, {M_PI, -M_E, 0.0}};
  for (auto format : {PlyFormat::kBinaryLittleEndian, PlyFormat::kAscii}) {
    const std::string path = tmp.file(format == PlyFormat::kAscii ? "a.ply" : "b.ply");
    save_cloud(cloud, path, format);
    const PointCloud back = load_cloud(path);
    REQUIRE(back.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      CHECK(back.points[i] == cloud.points[i]);  // float64 exact
    }
  }
}

TEST_CASE("ASCII PLY with normals keeps them unit length") {
  test::TempDir tmp("ply_normals");
  Rng rng(2);
  PointCloud cloud;
  for (int i = 0; i < 50; ++i) {
    cloud.points.push_back(rng.normal3(5.0));
    cloud.normals.push_back(rng.normal3().normalized());
  }
  save_cloud(cloud, tmp.file("n.ply"), PlyFormat::kAscii);
  const PointCloud back = load_cloud(tmp.file("n.ply"));
  REQUIRE(back.has_normals());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back.normals[i].norm() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK((back.normals[i] - cloud.normals[i]).norm() < 1e-6);
  }
}

TEST_CASE("binary PLY of 1e6 random points preserves the coordinate checksum") {
  test::TempDir tmp("ply_large");
  Rng rng(3);
  PointCloud cloud;
  cloud.points.reserve(1000000);
  for (int i = 0; i < 1000000; ++i) {
    cloud.points.emplace_back(rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0),
                              rng.uniform(0.0, 40.0));
  }
  const std::uint64_t before = coordinate_checksum(cloud);
  save_cloud(cloud, tmp.file("big.ply"));
  const PointCloud back = load_cloud(tmp.file("big.ply"));
  CHECK(coordinate_checksum(back) == before);
}

TEST_CASE("PLY loader skips unknown properties with a warning") {
  test::TempDir tmp("ply_extra");
  std::ofstream out(tmp.file("extra.ply"));
  out << "ply\nformat ascii 1.0\nelement vertex 2\n"
         "property double x\nproperty double y\nproperty double z\n"
         "property float intensity\nend_header\n"
         "1 2 3 0.5\n4 5 6 0.7\n";
  out.close();
  std::vector<std::string> warnings;
  const PointCloud cloud = load_cloud(tmp.file("extra.ply"), &warnings);
  REQUIRE(cloud.size() == 2);
  CHECK(cloud.points[1] == Eigen::Vector3d(4, 5, 6));
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("intensity") != std::string::npos);
}

TEST_CASE("PLY loader rejects malformed input") {
  test::TempDir tmp("ply_bad");
  SUBCASE("missing magic") {
    std::ofstream(tmp.file("bad.ply")) << "not a ply\n";
    CHECK_THROWS_AS(load_cloud(tmp.file("bad.ply")), ParseError);
  }
  SUBCASE("truncated payload") {
    std::ofstream(tmp.file("short.ply"))
        << "ply\nformat ascii 1.0\nelement vertex 3\n"
           "property double x\nproperty double y\nproperty double z\nend_header\n"
           "1 2 3\n";
    CHECK_THROWS_AS(load_cloud(tmp.file("short.ply")), ParseError);
  }
  SUBCASE("no vertex element") {
    std::ofstream(tmp.file("novtx.ply")) << "ply\nformat ascii 1.0\nend_header\n";
    CHECK_THROWS_AS(load_cloud(tmp.file("novtx.ply")), ParseError);
  }
}

TEST_CASE("two-node mission parses with one odometry edge") {
  test::TempDir tmp("mission_small");
  std::ofstream out(tmp.file("m.txt"));
  out << "NODE 0 0.0 0 0 0 0 0 0 1 -\n"
      << "NODE 1 1.0 1 0 0 0 0 0 1 -\n"
      << "EDGE_ODOM 0 1 1 0 0 0 0 0 1"
      << " 1 0 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1\n";
  out.close();
  const Mission m = load_mission(tmp.file("m.txt"));
  CHECK(m.nodes.size() == 2);
  CHECK(m.odometry_edges.size() == 1);
  CHECK(m.loop_edges.empty());
  CHECK(m.payloads.empty());
}

TEST_CASE("mission loader rejects structural errors") {
  test::TempDir tmp("mission_bad");
  const std::string info = " 1 0 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1";
  SUBCASE("dangling edge") {
    std::ofstream(tmp.file("d.txt"))
        << "NODE 0 0.0 0 0 0 0 0 0 1 -\n"
        << "EDGE_ODOM 0 99 0 0 0 0 0 0 1" << info << "\n";
    CHECK_THROWS_AS(load_mission(tmp.file("d.txt")), DanglingEdge);
  }
  SUBCASE("duplicate node id") {
    std::ofstream(tmp.file("u.txt")) << "NODE 0 0.0 0 0 0 0 0 0 1 -\n"
                                     << "NODE 0 1.0 0 0 0 0 0 0 1 -\n";
    CHECK_THROWS_AS(load_mission(tmp.file("u.txt")), DuplicateNodeId);
  }
  SUBCASE("non-SPD information") {
    std::ofstream(tmp.file("s.txt"))
        << "NODE 0 0.0 0 0 0 0 0 0 1 -\n"
        << "NODE 1 1.0 0 0 0 0 0 0 1 -\n"
        << "EDGE_ODOM 0 1 0 0 0 0 0 0 1"
        << " -1 0 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1\n";
    CHECK_THROWS_AS(load_mission(tmp.file("s.txt")), NonSpdInformation);
  }
  SUBCASE("timestamps must increase") {
    std::ofstream(tmp.file("t.txt")) << "NODE 0 1.0 0 0 0 0 0 0 1 -\n"
                                     << "NODE 1 0.5 0 0 0 0 0 0 1 -\n";
    CHECK_THROWS_AS(load_mission(tmp.file("t.txt")), ParseError);
  }
}

TEST_CASE("mission roundtrip preserves poses, edges, and payloads") {
  test::TempDir tmp("mission_rt");
  Rng rng(5);
  const Mission mission = make_synthetic_mission(100, rng);
  save_mission(mission, tmp.file("mission.txt"));
  const Mission back = load_mission(tmp.file("mission.txt"));

  REQUIRE(back.nodes.size() == mission.nodes.size());
  for (std::size_t i = 0; i < mission.nodes.size(); ++i) {
    CHECK(back.nodes[i].id == mission.nodes[i].id);
    CHECK(back.nodes[i].timestamp ==
          doctest::Approx(mission.nodes[i].timestamp).epsilon(1e-15));
    CHECK(test::pose_difference(back.nodes[i].pose, mission.nodes[i].pose) < 1e-12);
  }
  REQUIRE(back.odometry_edges.size() == mission.odometry_edges.size());
  for (std::size_t i = 0; i < mission.odometry_edges.size(); ++i) {
    CHECK(test::pose_difference(back.odometry_edges[i].delta,
                                mission.odometry_edges[i].delta) < 1e-12);
    CHECK((back.odometry_edges[i].information - mission.odometry_edges[i].information)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
  REQUIRE(back.payloads.size() == mission.payloads.size());
  for (const auto& [id, cloud] : mission.payloads) {
    const PointCloud& other = back.payloads.at(id);
    REQUIRE(other.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      CHECK((other.points[i] - cloud.points[i]).norm() < 1e-12);
    }
  }
}

TEST_CASE("partition_tiles splits at tile boundaries") {
  Mission mission;
  MissionNode node;
  node.id = 0;
  node.timestamp = 0.0;
  mission.nodes.push_back(node);
  PointCloud payload;
  payload.points = {{19.5, 5.0, 1.0}, {19.9, 6.0, 1.0}, {20.1, 5.5, 1.0}, {20.5, 6.5, 1.0}};
  mission.payloads[0] = payload;

  const TileSet tiles = partition_tiles(mission, 20.0);
  REQUIRE(tiles.tiles.size() == 2);
  std::size_t total = 0;
  for (const auto& [key, cloud] : tiles.tiles) {
    CHECK(cloud.size() == 2);
    total += cloud.size();
  }
  CHECK(total == payload.size());
}

TEST_CASE("partition_tiles keeps a single cell for a compact cloud") {
  Mission mission;
  MissionNode node;
  node.id = 0;
  mission.nodes.push_back(node);
  PointCloud payload;
  payload.points = {{1.0, 1.0, 0.0}, {2.0, 2.0, 0.0}, {3.0, 1.0, 0.0}};
  mission.payloads[0] = payload;
  CHECK(partition_tiles(mission, 20.0).tiles.size() == 1);
}

TEST_CASE("partition_tiles conserves point counts on a synthetic hectare") {
  Rng rng(6);
  Mission mission;
  std::size_t total_points = 0;
  for (int i = 0; i < 10; ++i) {
    MissionNode node;
    node.id = i;
    node.timestamp = i;
    node.pose = Pose(Eigen::Quaterniond::Identity(),
                     Eigen::Vector3d(rng.uniform(10.0, 90.0), rng.uniform(10.0, 90.0), 0.0));
    mission.nodes.push_back(node);
    PointCloud payload;
    for (int k = 0; k < 2000; ++k) {
      payload.points.emplace_back(rng.uniform(-9.0, 9.0), rng.uniform(-9.0, 9.0),
                                  rng.uniform(0.0, 15.0));
    }
    total_points += payload.size();
    mission.payloads[i] = payload;
  }
  const TileSet tiles = partition_tiles(mission, 20.0);
  CHECK(tiles.tiles.size() <= 30);
  std::size_t sum = 0;
  for (const auto& [key, cloud] : tiles.tiles) {
    sum += cloud.size();
    for (const auto& p : cloud.points) {
      const double fx = (p.x() - tiles.origin_xy.x()) / tiles.tile_size;
      const double fy = (p.y() - tiles.origin_xy.y()) / tiles.tile_size;
      CHECK(static_cast<int>(std::floor(fx)) == key.second);
      CHECK(static_cast<int>(std::floor(fy)) == key.first);
    }
  }
  CHECK(sum == total_points);
}

TEST_CASE("partition_tiles rejects an empty mission") {
  Mission mission;
  CHECK_THROWS_AS(partition_tiles(mission, 20.0), EmptyMission);
  MissionNode node;
  node.id = 0;
  mission.nodes.push_back(node);
  CHECK_THROWS_AS(partition_tiles(mission, 20.0), EmptyMission);
}

TEST_CASE("tiles directory roundtrip") {
  test::TempDir tmp("tiles_rt");
  Rng rng(7);
  TileSet tiles;
  tiles.origin_xy = {40.0, -20.0};
  tiles.tile_size = 20.0;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      PointCloud cloud;
      for (int k = 0; k < 10; ++k) {
        const Eigen::Vector2d center = tiles.tile_center(r, c);
        cloud.points.emplace_back(center.x() + rng.uniform(-9.0, 9.0),
                                  center.y() + rng.uniform(-9.0, 9.0),
                                  rng.uniform(0.0, 5.0));
      }
      tiles.tiles[{r, c}] = cloud;
    }
  }
  save_tiles(tiles, tmp.file("tiles"));
  const TileSet back = load_tiles(tmp.file("tiles"));
  CHECK(back.origin_xy == tiles.origin_xy);
  CHECK(back.tile_size == tiles.tile_size);
  REQUIRE(back.tiles.size() == tiles.tiles.size());
  for (const auto& [key, cloud] : tiles.tiles) {
    REQUIRE(back.tiles.count(key) == 1);
    CHECK(back.tiles.at(key).size() == cloud.size());
  }
}
