#include "emap/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace emap;
using geometry::Index;
using geometry::Matrix;
using geometry::PointCloud;
using geometry::Rng;
using geometry::Seed;
using geometry::Vector;

namespace {

PointCloud random_cloud(Index n, Index dim, Seed seed) {
  Rng rng(seed);
  Matrix pts(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < dim; ++c) pts(i, c) = rng.uniform();
  return PointCloud(std::move(pts));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("pairwise distances: single point") {
  Matrix pts(1, 2);
  pts << 0.0, 0.0;
  const auto d = geometry::pairwise_distances(PointCloud(pts));
  CHECK(d.rows() == 1);
  CHECK(d(0, 0) == 0.0);
}

TEST_CASE("pairwise distances: 3-4-5 triangle") {
  Matrix pts(2, 2);
  pts << 0.0, 0.0, 3.0, 4.0;
  const auto d = geometry::pairwise_distances(PointCloud(pts));
  CHECK(d(0, 1) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(d(1, 0) == d(0, 1));
  CHECK(d(0, 0) == 0.0);
  CHECK(d(1, 1) == 0.0);
}

TEST_CASE("pairwise distances match a direct double-loop recomputation") {
  const auto cloud = random_cloud(10, 4, Seed{42, 0});
  const auto d = geometry::pairwise_distances(cloud);
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 10; ++j) {
      double total = 0.0;
      for (Index c = 0; c < 4; ++c) {
        const double gap = cloud.points(i, c) - cloud.points(j, c);
        total += gap * gap;
      }
      CHECK(d(i, j) == doctest::Approx(std::sqrt(total)).epsilon(1e-14));
    }
}

TEST_CASE("pairwise distances satisfy the triangle inequality") {
  const auto cloud = random_cloud(30, 3, Seed{7, 1});
  const auto d = geometry::pairwise_distances(cloud);
  Rng rng(Seed{7, 2});
  for (int sample = 0; sample < 500; ++sample) {
    const auto i = static_cast<Index>(rng.uniform_int(30));
    const auto j = static_cast<Index>(rng.uniform_int(30));
    const auto k = static_cast<Index>(rng.uniform_int(30));
    CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-9 * d.maxCoeff());
  }
}

TEST_CASE("synthetic spiral has the requested size") {
  geometry::ShapeParams params;
  params.radius = 2.0;
  const auto cloud = geometry::generate_synthetic(
      geometry::SyntheticShape::spiral, params, 1000, 0.02, Seed{1, 0});
  CHECK(cloud.size() == 1000);
  CHECK(cloud.dim() == 3);
}

TEST_CASE("zero-noise line is exactly collinear") {
  geometry::ShapeParams params;
  params.length = 10.0;
  const auto cloud = geometry::generate_synthetic(
      geometry::SyntheticShape::line, params, 100, 0.0, Seed{5, 0});
  CHECK(cloud.size() == 100);
  for (Index i = 0; i < cloud.size(); ++i) {
    CHECK(std::abs(cloud.points(i, 1)) < 1e-12);
    CHECK(std::abs(cloud.points(i, 2)) < 1e-12);
    CHECK(std::abs(cloud.points(i, 0)) <= 5.0);
  }
}

TEST_CASE("zero-noise shapes sit exactly on their parametric sets") {
  geometry::ShapeParams params;
  const auto circle = geometry::generate_synthetic(
      geometry::SyntheticShape::circle, params, 200, 0.0, Seed{6, 0});
  for (Index i = 0; i < circle.size(); ++i) {
    const double r = std::hypot(circle.points(i, 0), circle.points(i, 1));
    CHECK(std::abs(r - 1.0) < 1e-12);
    CHECK(circle.points(i, 2) == 0.0);
  }

  const auto spiral = geometry::generate_synthetic(
      geometry::SyntheticShape::spiral, params, 200, 0.0, Seed{6, 1});
  for (Index i = 0; i < spiral.size(); ++i)
    CHECK(std::hypot(spiral.points(i, 0), spiral.points(i, 1)) <=
          params.radius + 1e-12);
}

TEST_CASE("circle noise level matches a Monte-Carlo oracle of the noise model") {
  // Distance from a noise-displaced circle point to the circle, estimated
  // directly from the noise model over 1e5 draws.
  const double noise = 0.1;
  Rng rng(Seed{99, 0});
  double oracle_mean = 0.0;
  const int draws = 100'000;
  for (int i = 0; i < draws; ++i) {
    const Vector z = rng.isotropic_noise(3, noise);
    const double radial = std::hypot(1.0 + z(0), z(1)) - 1.0;
    oracle_mean += std::hypot(radial, z(2));
  }
  oracle_mean /= draws;

  const auto cloud = geometry::generate_synthetic(
      geometry::SyntheticShape::circle, geometry::ShapeParams{}, 400, noise,
      Seed{99, 1});
  double cloud_mean = 0.0;
  for (Index i = 0; i < cloud.size(); ++i) {
    const double radial =
        std::hypot(cloud.points(i, 0), cloud.points(i, 1)) - 1.0;
    cloud_mean += std::hypot(radial, cloud.points(i, 2));
  }
  cloud_mean /= static_cast<double>(cloud.size());

  CHECK(cloud_mean == doctest::Approx(oracle_mean).epsilon(0.15));
}

TEST_CASE("two-component shapes carry component labels") {
  const auto cloud = geometry::generate_synthetic(
      geometry::SyntheticShape::two_concentric_circles, geometry::ShapeParams{},
      100, 0.01, Seed{3, 0});
  REQUIRE(cloud.labels.has_value());
  int zeros = 0, ones = 0;
  for (const int label : *cloud.labels) (label == 0 ? zeros : ones)++;
  CHECK(zeros == 50);
  CHECK(ones == 50);

  const auto plain = geometry::generate_synthetic(
      geometry::SyntheticShape::circle, geometry::ShapeParams{}, 10, 0.0,
      Seed{3, 1});
  CHECK(!plain.labels.has_value());
}

TEST_CASE("synthetic generation is bit-identical for equal seeds") {
  const auto a = geometry::generate_synthetic(
      geometry::SyntheticShape::spiral, geometry::ShapeParams{}, 300, 0.05,
      Seed{2024, 7});
  const auto b = geometry::generate_synthetic(
      geometry::SyntheticShape::spiral, geometry::ShapeParams{}, 300, 0.05,
      Seed{2024, 7});
  CHECK(a.points == b.points);

  const auto c = geometry::generate_synthetic(
      geometry::SyntheticShape::spiral, geometry::ShapeParams{}, 300, 0.05,
      Seed{2024, 8});
  CHECK(a.points != c.points);
}

TEST_CASE("synthetic generation rejects bad arguments") {
  geometry::ShapeParams params;
  CHECK_THROWS_AS(geometry::generate_synthetic(geometry::SyntheticShape::circle,
                                               params, 0, 0.0, Seed{}),
                  std::invalid_argument);
  params.radius = -1.0;
  CHECK_THROWS_AS(geometry::generate_synthetic(geometry::SyntheticShape::circle,
                                               params, 10, 0.0, Seed{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(geometry::parse_shape("triangle"), std::invalid_argument);
}

TEST_CASE("csv round trip is exact") {
  const auto cloud = random_cloud(5, 3, Seed{11, 0});
  const auto path = temp_path("emap_roundtrip.csv");
  geometry::save_csv(cloud, path);
  const auto loaded = geometry::load_csv(path);
  CHECK(loaded.points == cloud.points);
  CHECK(!loaded.labels.has_value());
  std::filesystem::remove(path);
}

TEST_CASE("csv preserves labels") {
  Matrix pts(2, 2);
  pts << 0.25, 0.5, 0.75, 1.0;
  const PointCloud cloud(pts, std::vector<int>{0, 1});
  const auto path = temp_path("emap_labels.csv");
  geometry::save_csv(cloud, path);
  const auto loaded = geometry::load_csv(path);
  REQUIRE(loaded.labels.has_value());
  CHECK((*loaded.labels)[0] == 0);
  CHECK((*loaded.labels)[1] == 1);
  CHECK(loaded.points == cloud.points);
  std::filesystem::remove(path);
}

TEST_CASE("csv rejects degenerate and malformed files") {
  const auto path = temp_path("emap_bad.csv");
  {
    std::ofstream out(path);
    out << "x0,x1\n";
  }
  CHECK_THROWS_WITH_AS(geometry::load_csv(path),
                       doctest::Contains("empty cloud"), std::runtime_error);
  {
    std::ofstream out(path);
    out << "x0,x1\n1.0\n";
  }
  CHECK_THROWS_AS(geometry::load_csv(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "x0,x1\n1.0,zebra\n";
  }
  CHECK_THROWS_AS(geometry::load_csv(path), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(Seed{10, 3});
  Rng b(Seed{10, 3});
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

  Rng c(Seed{10, 4});
  bool any_differ = false;
  Rng a2(Seed{10, 3});
  for (int i = 0; i < 16; ++i) any_differ |= a2.uniform() != c.uniform();
  CHECK(any_differ);

  const Seed parent{10, 3};
  CHECK(parent.sub(0).stream != parent.sub(1).stream);
  CHECK(parent.sub(0).master == parent.master);
}

TEST_CASE("isotropic noise has expected squared norm radius^2") {
  Rng rng(Seed{55, 0});
  const double radius = 0.3;
  double mean_sq = 0.0;
  const int draws = 20'000;
  for (int i = 0; i < draws; ++i)
    mean_sq += rng.isotropic_noise(5, radius).squaredNorm();
  mean_sq /= draws;
  CHECK(mean_sq == doctest::Approx(radius * radius).epsilon(0.05));
}

TEST_CASE("sample_without_replacement draws distinct indices") {
  Rng rng(Seed{8, 0});
  const auto picks = rng.sample_without_replacement(10, 10);
  std::vector<bool> seen(10, false);
  for (const auto p : picks) {
    CHECK(!seen[static_cast<std::size_t>(p)]);
    seen[static_cast<std::size_t>(p)] = true;
  }
  CHECK_THROWS_AS(rng.sample_without_replacement(3, 4), std::invalid_argument);
}
