#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "forest_coreg/errors.hpp"
#include "forest_coreg/features.hpp"
#include "forest_coreg/random.hpp"
#include "test_support.hpp"

using namespace fcoreg;
using fcoreg::test::sample_cylinder;

namespace {

// Cone-shaped tree: radius shrinks with height, apex at `height`.
void add_cone(PointCloud& cloud, const Eigen::Vector2d& center, double height,
              double base_radius, int count, Rng& rng) {
  for (int i = 0; i < count; ++i) {
    const double h = rng.uniform(0.0, height);
    const double r = base_radius * (1.0 - h / height);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double rr = r * std::sqrt(rng.uniform());
    cloud.points.emplace_back(center.x() + rr * std::cos(phi),
                              center.y() + rr * std::sin(phi), h);
  }
  cloud.points.emplace_back(center.x(), center.y(), height);  // apex
}

}  // namespace

TEST_CASE("rasterize_chm bins one point per cell") {
  PointCloud cloud;
  cloud.points = {{0.25, 0.25, 3.0}, {1.25, 0.25, 5.0}, {0.25, 1.25, 7.0}};
  const CanopyHeightMap chm = rasterize_chm(cloud, 1.0);
  CHECK(chm.rows == 2);
  CHECK(chm.cols == 2);
  CHECK(chm.at(0, 0) == 3.0);
  CHECK(chm.at(0, 1) == 5.0);
  CHECK(chm.at(1, 0) == 7.0);
  CHECK(std::isnan(chm.at(1, 1)));
}

TEST_CASE("rasterize_chm keeps the max of stacked points") {
  PointCloud cloud;
  cloud.points = {{0.5, 0.5, 2.0}, {0.5, 0.5, 9.0}, {0.5, 0.5, 4.0}};
  const CanopyHeightMap chm = rasterize_chm(cloud, 1.0);
  CHECK(chm.rows == 1);
  CHECK(chm.cols == 1);
  CHECK(chm.at(0, 0) == 9.0);
}

TEST_CASE("rasterize_chm captures a synthetic cone apex") {
  Rng rng(1);
  PointCloud cloud;
  add_cone(cloud, {10.0, 10.0}, 18.0, 3.0, 4000, rng);
  const CanopyHeightMap chm = rasterize_chm(cloud, 0.5);
  double max_cell = 0.0;
  for (double v : chm.cells) {
    if (!std::isnan(v)) max_cell = std::max(max_cell, v);
  }
  CHECK(max_cell == doctest::Approx(18.0).epsilon(0.03));
}

TEST_CASE("rasterize_chm rejects non-positive resolution") {
  PointCloud cloud;
  cloud.points = {{0, 0, 0}};
  CHECK_THROWS_AS(rasterize_chm(cloud, 0.0), NonPositiveResolution);
}

TEST_CASE("extract_peaks finds a single synthetic tree at its apex") {
  Rng rng(2);
  PointCloud cloud;
  for (int i = 0; i < 3000; ++i) {
    cloud.points.emplace_back(rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0), 0.0);
  }
  add_cone(cloud, {10.0, 10.0}, 15.0, 2.5, 3000, rng);
  const CanopyHeightMap chm = rasterize_chm(cloud, 0.5);
  const auto peaks = extract_peaks(chm, 4, 5.0);
  REQUIRE(peaks.size() == 1);
  CHECK((peaks[0].position_xy - Eigen::Vector2d(10.0, 10.0)).norm() < 0.75);
  CHECK(peaks[0].height.value() == doctest::Approx(15.0).epsilon(0.05));
}

TEST_CASE("extract_peaks separates two trees 10 m apart with a 2 m window") {
  Rng rng(3);
  PointCloud cloud;
  for (int i = 0; i < 3000; ++i) {
    cloud.points.emplace_back(rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0), 0.0);
  }
  add_cone(cloud, {10.0, 15.0}, 14.0, 2.5, 3000, rng);
  add_cone(cloud, {20.0, 15.0}, 17.0, 2.5, 3000, rng);
  const CanopyHeightMap chm = rasterize_chm(cloud, 0.5);
  const auto peaks = extract_peaks(chm, 4, 5.0);  // 4 cells = 2 m
  REQUIRE(peaks.size() == 2);
  std::vector<double> xs = {peaks[0].position_xy.x(), peaks[1].position_xy.x()};
  std::sort(xs.begin(), xs.end());
  CHECK(xs[0] == doctest::Approx(10.0).epsilon(0.1));
  CHECK(xs[1] == doctest::Approx(20.0).epsilon(0.1));
}

TEST_CASE("extract_peaks of a flat CHM is empty") {
  PointCloud cloud;
  for (int x = 0; x < 10; ++x) {
    for (int y = 0; y < 10; ++y) cloud.points.emplace_back(x + 0.5, y + 0.5, 7.0);
  }
  const CanopyHeightMap chm = rasterize_chm(cloud, 1.0);
  CHECK(extract_peaks(chm, 2, 0.0).empty());
}

TEST_CASE("extract_peaks count is non-increasing in the window radius") {
  Rng rng(4);
  PointCloud cloud;
  for (int i = 0; i < 2000; ++i) {
    cloud.points.emplace_back(rng.uniform(0.0, 40.0), rng.uniform(0.0, 40.0),
                              rng.uniform(0.0, 12.0));
  }
  const CanopyHeightMap chm = rasterize_chm(cloud, 1.0);
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  for (int w = 1; w <= 6; ++w) {
    const std::size_t count = extract_peaks(chm, w, 0.0).size();
    CHECK(count <= previous);
    previous = count;
  }
}

TEST_CASE("dbscan_cluster separates two blobs and flags sparse noise") {
  Rng rng(5);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(Eigen::Vector3d(0, 0, 0) + rng.normal3(0.1));
  for (int i = 0; i < 100; ++i) pts.push_back(Eigen::Vector3d(5, 0, 0) + rng.normal3(0.1));
  pts.emplace_back(2.5, 5.0, 0.0);  // isolated
  const auto labels = dbscan_cluster(pts, 0.5, 10);
  CHECK(labels.back() == -1);
  for (int i = 0; i < 100; ++i) CHECK(labels[i] == 0);
  for (int i = 100; i < 200; ++i) CHECK(labels[i] == 1);
}

TEST_CASE("fit_cylinder on exact samples recovers the radius to 1e-6") {
  Rng rng(6);
  const auto pts = sample_cylinder({1.0, 2.0, 0.0}, Eigen::Vector3d::UnitZ(), 0.2,
                                   4.0, 400, 0.0, rng);
  const CylinderFit fit = fit_cylinder(pts, 0.03, 30.0, 7);
  CHECK(std::abs(fit.radius - 0.2) < 1e-6);
  CHECK(fit.axis.dot(Eigen::Vector3d::UnitZ()) > 1.0 - 1e-9);
  CHECK((fit.center.head<2>() - Eigen::Vector2d(1.0, 2.0)).norm() < 1e-6);
}

TEST_CASE("fit_cylinder tolerates 20% outliers, Monte Carlo") {
  int good = 0;
  for (int seed = 0; seed < 60; ++seed) {
    Rng rng(100 + seed);
    auto pts = sample_cylinder({0.0, 0.0, 0.0}, Eigen::Vector3d::UnitZ(), 0.25, 4.0,
                               320, 0.005, rng);
    for (int i = 0; i < 80; ++i) {
      pts.emplace_back(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                       rng.uniform(0.0, 4.0));
    }
    try {
      const CylinderFit fit = fit_cylinder(pts, 0.03, 30.0, seed);
      if (std::abs(fit.radius - 0.25) < 0.02) ++good;
    } catch (const FitFailed&) {
    }
  }
  CHECK(good >= 57);  // 95% of seeds
}

TEST_CASE("fit_cylinder fails on planar points") {
  Rng rng(7);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 200; ++i) {
    pts.emplace_back(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0);
  }
  CHECK_THROWS_AS(fit_cylinder(pts, 0.03, 30.0, 8), FitFailed);
}

TEST_CASE("fit_cylinder requires 20 points") {
  std::vector<Eigen::Vector3d> pts(10, Eigen::Vector3d::Zero());
  CHECK_THROWS_AS(fit_cylinder(pts), FitFailed);
}

TEST_CASE("extract_stems finds a single noisy trunk") {
  Rng rng(8);
  PointCloud cloud;
  for (int i = 0; i < 2000; ++i) {
    cloud.points.emplace_back(rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0),
                              rng.normal(0.0, 0.01));
  }
  const auto stem_pts = sample_cylinder({3.0, -2.0, 0.0}, Eigen::Vector3d::UnitZ(),
                                        0.2, 6.0, 900, 0.01, rng);
  cloud.points.insert(cloud.points.end(), stem_pts.begin(), stem_pts.end());

  Plane ground;  // z = 0
  StemExtractionParams params;
  params.seed = 9;
  const auto stems = extract_stems(cloud, ground, params);
  REQUIRE(stems.size() == 1);
  CHECK(std::abs(stems[0].radius.value() - 0.2) < 0.02);
  CHECK((stems[0].position_xy - Eigen::Vector2d(3.0, -2.0)).norm() < 0.03);
  CHECK(stems[0].source == CloudSource::kMls);
}

TEST_CASE("extract_stems of an empty slice is empty") {
  Rng rng(9);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) {
    cloud.points.emplace_back(rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0),
                              rng.uniform(8.0, 20.0));  // everything above 5 m
  }
  Plane ground;
  CHECK(extract_stems(cloud, ground).empty());
}

TEST_CASE("extract_stems separates two trunks 4 m apart") {
  Rng rng(10);
  PointCloud cloud;
  const auto a = sample_cylinder({2.0, 2.0, 0.0}, Eigen::Vector3d::UnitZ(), 0.18, 6.0,
                                 900, 0.01, rng);
  const auto b = sample_cylinder({6.0, 2.0, 0.0}, Eigen::Vector3d::UnitZ(), 0.25, 6.0,
                                 900, 0.01, rng);
  cloud.points.insert(cloud.points.end(), a.begin(), a.end());
  cloud.points.insert(cloud.points.end(), b.begin(), b.end());

  Plane ground;
  StemExtractionParams params;
  params.seed = 11;
  const auto stems = extract_stems(cloud, ground, params);
  REQUIRE(stems.size() == 2);
  const double dist = (stems[0].position_xy - stems[1].position_xy).norm();
  CHECK(std::abs(dist - 4.0) < 0.05);
}

TEST_CASE("extract_stems positions are equivariant under planar motion") {
  Rng rng(11);
  PointCloud cloud;
  for (const auto& center : {Eigen::Vector2d(2.0, 1.0), Eigen::Vector2d(7.0, 4.0),
                             Eigen::Vector2d(4.0, 8.0)}) {
    const auto pts = sample_cylinder({center.x(), center.y(), 0.0},
                                     Eigen::Vector3d::UnitZ(), 0.2, 6.0, 900, 0.01, rng);
    cloud.points.insert(cloud.points.end(), pts.begin(), pts.end());
  }
  Plane ground;
  StemExtractionParams params;
  params.seed = 12;
  auto stems = extract_stems(cloud, ground, params);
  REQUIRE(stems.size() == 3);

  const double yaw = 0.7;
  const Eigen::Vector2d shift(30.0, -12.0);
  const Pose motion(so3_exp(Eigen::Vector3d(0.0, 0.0, yaw)),
                    Eigen::Vector3d(shift.x(), shift.y(), 0.0));
  auto moved = extract_stems(transform_cloud(cloud, motion), ground, params);
  REQUIRE(moved.size() == 3);

  auto planar = [&](const Eigen::Vector2d& p) {
    const Eigen::Vector3d q = motion * Eigen::Vector3d(p.x(), p.y(), 0.0);
    return Eigen::Vector2d(q.x(), q.y());
  };
  for (const auto& stem : stems) {
    const Eigen::Vector2d expected = planar(stem.position_xy);
    double best = 1e9;
    for (const auto& m : moved) best = std::min(best, (m.position_xy - expected).norm());
    CHECK(best < 0.02);
  }
}

TEST_CASE("extract_stems enforces the feature invariants") {
  Rng rng(12);
  PointCloud cloud;
  for (const auto& center :
       {Eigen::Vector2d(2.0, 2.0), Eigen::Vector2d(8.0, 3.0), Eigen::Vector2d(5.0, 9.0)}) {
    const auto pts = sample_cylinder({center.x(), center.y(), 0.0},
                                     Eigen::Vector3d(0.05, 0.0, 1.0).normalized(), 0.3,
                                     6.0, 900, 0.01, rng);
    cloud.points.insert(cloud.points.end(), pts.begin(), pts.end());
  }
  Plane ground;
  const auto stems = extract_stems(cloud, ground);
  for (const auto& stem : stems) {
    CHECK(stem.radius.value() >= 0.05);
    CHECK(stem.radius.value() <= 1.0);
    CHECK(stem.axis.value().dot(Eigen::Vector3d::UnitZ()) >=
          std::cos(30.0 * M_PI / 180.0));
  }
}

TEST_CASE("debug exports write readable CHM and feature tables") {
  test::TempDir tmp("feat_export");
  PointCloud cloud;
  cloud.points = {{0.25, 0.25, 3.0}, {1.25, 0.25, 5.0}};
  save_chm(rasterize_chm(cloud, 1.0), tmp.file("chm.txt"));

  TreeFeature f;
  f.position_xy = {4.5, -2.25};
  f.height = 17.0;
  f.source = CloudSource::kAls;
  save_features_csv({f}, tmp.file("features.csv"));

  std::ifstream chm_in(tmp.file("chm.txt"));
  std::string line;
  REQUIRE(std::getline(chm_in, line));
  CHECK(line.find("# origin") == 0);
  std::ifstream csv_in(tmp.file("features.csv"));
  REQUIRE(std::getline(csv_in, line));
  CHECK(line == "x,y,height,radius,source");
  REQUIRE(std::getline(csv_in, line));
  CHECK(line.find("4.5") != std::string::npos);
  CHECK(line.find("ALS") != std::string::npos);
}
