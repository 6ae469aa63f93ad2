#include "emap/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace emap::geometry {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + kGolden));
}

}  // namespace

Seed Seed::sub(std::uint64_t label) const {
  return Seed{master, mix(stream, splitmix64(label))};
}

Rng::Rng(Seed seed) : state_(mix(seed.master, seed.stream)) {}

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  std::uint64_t x = state_;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 shifted into (0, 1] to keep the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

Vector Rng::gaussian_vector(Index dim, double sigma) {
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = sigma * normal();
  return v;
}

Vector Rng::isotropic_noise(Index dim, double radius) {
  if (radius == 0.0) return Vector::Zero(dim);
  return gaussian_vector(dim, radius / std::sqrt(static_cast<double>(dim)));
}

std::vector<Index> Rng::sample_without_replacement(Index pool, Index k) {
  if (k > pool)
    throw std::invalid_argument("sample_without_replacement: k exceeds pool");
  std::vector<Index> idx(static_cast<std::size_t>(pool));
  for (Index i = 0; i < pool; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < k; ++i) {
    const auto j =
        i + static_cast<Index>(uniform_int(static_cast<std::uint64_t>(pool - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

PointCloud::PointCloud(Matrix pts, std::optional<std::vector<int>> labs,
                       std::string tag)
    : points(std::move(pts)), labels(std::move(labs)), name(std::move(tag)) {
  if (points.rows() < 1 || points.cols() < 1)
    throw std::invalid_argument("PointCloud: need n >= 1 and N >= 1");
  if (!points.allFinite())
    throw std::invalid_argument("PointCloud: coordinates must be finite");
  if (labels && static_cast<Index>(labels->size()) != points.rows())
    throw std::invalid_argument("PointCloud: labels length must equal n");
}

Matrix pairwise_distances(const PointCloud& cloud) {
  const Index n = cloud.size();
  Matrix d = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double dist = (cloud.points.row(i) - cloud.points.row(j)).norm();
      d(i, j) = dist;
      d(j, i) = dist;
    }
  }
  return d;
}

SyntheticShape parse_shape(const std::string& name) {
  if (name == "line") return SyntheticShape::line;
  if (name == "circle") return SyntheticShape::circle;
  if (name == "two_intersecting_circles")
    return SyntheticShape::two_intersecting_circles;
  if (name == "two_concentric_circles")
    return SyntheticShape::two_concentric_circles;
  if (name == "spiral") return SyntheticShape::spiral;
  throw std::invalid_argument("unknown shape: " + name);
}

std::string shape_name(SyntheticShape shape) {
  switch (shape) {
    case SyntheticShape::line: return "line";
    case SyntheticShape::circle: return "circle";
    case SyntheticShape::two_intersecting_circles:
      return "two_intersecting_circles";
    case SyntheticShape::two_concentric_circles:
      return "two_concentric_circles";
    case SyntheticShape::spiral: return "spiral";
  }
  throw std::invalid_argument("unknown shape enum value");
}

PointCloud generate_synthetic(SyntheticShape shape, const ShapeParams& params,
                              Index n_points, double data_noise, Seed seed) {
  if (n_points < 1)
    throw std::invalid_argument("generate_synthetic: n_points must be >= 1");
  if (data_noise < 0)
    throw std::invalid_argument("generate_synthetic: data_noise must be >= 0");
  const Index dim = params.ambient_dim;
  const Index min_dim = shape == SyntheticShape::line ? 1 : 2;
  if (dim < min_dim)
    throw std::invalid_argument("generate_synthetic: ambient_dim too small");

  const bool two_component = shape == SyntheticShape::two_intersecting_circles ||
                             shape == SyntheticShape::two_concentric_circles;
  if (shape == SyntheticShape::line) {
    if (params.length <= 0)
      throw std::invalid_argument("generate_synthetic: length must be positive");
  } else {
    if (params.radius <= 0)
      throw std::invalid_argument("generate_synthetic: radius must be positive");
  }

  Rng rng(seed);
  Matrix pts = Matrix::Zero(n_points, dim);
  std::vector<int> labels(static_cast<std::size_t>(n_points), 0);
  const double two_pi = 2.0 * std::numbers::pi;

  for (Index i = 0; i < n_points; ++i) {
    switch (shape) {
      case SyntheticShape::line: {
        pts(i, 0) = (rng.uniform() - 0.5) * params.length;
        break;
      }
      case SyntheticShape::circle: {
        const double theta = two_pi * rng.uniform();
        pts(i, 0) = params.radius * std::cos(theta);
        pts(i, 1) = params.radius * std::sin(theta);
        break;
      }
      case SyntheticShape::two_intersecting_circles: {
        const int component = static_cast<int>(i % 2);
        const double theta = two_pi * rng.uniform();
        const double offset = params.radius * params.offset_ratio;
        pts(i, 0) = (component == 0 ? -offset : offset) +
                    params.radius * std::cos(theta);
        pts(i, 1) = params.radius * std::sin(theta);
        labels[static_cast<std::size_t>(i)] = component;
        break;
      }
      case SyntheticShape::two_concentric_circles: {
        const int component = static_cast<int>(i % 2);
        const double theta = two_pi * rng.uniform();
        const double radius =
            component == 0 ? params.radius : params.radius * params.inner_ratio;
        pts(i, 0) = radius * std::cos(theta);
        pts(i, 1) = radius * std::sin(theta);
        labels[static_cast<std::size_t>(i)] = component;
        break;
      }
      case SyntheticShape::spiral: {
        const double theta_max = two_pi * params.turns;
        const double theta = theta_max * rng.uniform();
        const double radius = params.radius * theta / theta_max;
        pts(i, 0) = radius * std::cos(theta);
        pts(i, 1) = radius * std::sin(theta);
        break;
      }
    }
    if (data_noise > 0) pts.row(i) += rng.isotropic_noise(dim, data_noise).transpose();
  }

  std::optional<std::vector<int>> labs;
  if (two_component) labs = std::move(labels);
  return PointCloud(std::move(pts), std::move(labs), shape_name(shape));
}

std::string format_double(double v) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& cell) {
  double value = 0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw std::invalid_argument("non-numeric cell: '" + cell + "'");
  return value;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

PointCloud load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.empty()) throw std::runtime_error(path + ": empty header");

  const bool has_labels = header.back() == "label";
  const std::size_t n_cols = header.size();
  const std::size_t n_coords = has_labels ? n_cols - 1 : n_cols;
  if (n_coords == 0) throw std::runtime_error(path + ": no coordinate columns");

  std::vector<double> coords;
  std::vector<int> labels;
  std::size_t n_rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != n_cols)
      throw std::runtime_error(path + ": row " + std::to_string(n_rows + 1) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(n_cols));
    for (std::size_t c = 0; c < n_coords; ++c)
      coords.push_back(parse_double(cells[c]));
    if (has_labels) {
      const double lab = parse_double(cells[n_cols - 1]);
      labels.push_back(static_cast<int>(std::llround(lab)));
    }
    ++n_rows;
  }
  if (n_rows == 0) throw std::runtime_error(path + ": empty cloud");

  Matrix pts(static_cast<Index>(n_rows), static_cast<Index>(n_coords));
  for (std::size_t r = 0; r < n_rows; ++r)
    for (std::size_t c = 0; c < n_coords; ++c)
      pts(static_cast<Index>(r), static_cast<Index>(c)) = coords[r * n_coords + c];

  std::optional<std::vector<int>> labs;
  if (has_labels) labs = std::move(labels);
  return PointCloud(std::move(pts), std::move(labs), path);
}

void save_csv(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);

  for (Index c = 0; c < cloud.dim(); ++c) {
    if (c > 0) out << ',';
    out << 'x' << c;
  }
  if (cloud.labels) out << ",label";
  out << '\n';

  for (Index r = 0; r < cloud.size(); ++r) {
    for (Index c = 0; c < cloud.dim(); ++c) {
      if (c > 0) out << ',';
      out << format_double(cloud.points(r, c));
    }
    if (cloud.labels) out << ',' << (*cloud.labels)[static_cast<std::size_t>(r)];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace emap::geometry
