#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace emap::geometry {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Deterministic seed identifying one random stream. Identical (master, stream)
/// pairs reproduce the same sequence on every platform; sub() derives
/// independent child streams for trials, pivots, and other labelled sub-tasks.
struct Seed {
  std::uint64_t master = 0;
  std::uint64_t stream = 0;

  Seed sub(std::uint64_t label) const;
};

/// Random source with fully specified output: a splitmix64 counter engine,
/// uniform doubles from the top 53 bits, Gaussians via Box-Muller. No
/// standard-library distributions are involved, so sequences are bit-exact
/// across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(Seed seed);

  /// Uniform double in [0, 1).
  double uniform();

  /// Standard normal deviate.
  double normal();

  /// Uniform integer in [0, n). Rejection sampling, exact.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Vector of dim iid N(0, sigma^2) components.
  Vector gaussian_vector(Index dim, double sigma);

  /// Isotropic noise with covariance (radius^2 / dim) * I, so the expected
  /// squared norm is radius^2 and the expected norm is approximately radius.
  Vector isotropic_noise(Index dim, double radius);

  /// k distinct indices drawn uniformly from [0, pool), in draw order.
  std::vector<Index> sample_without_replacement(Index pool, Index k);

 private:
  std::uint64_t next_u64();

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// n points in ambient dimension N, with optional per-point class labels.
/// Immutable by convention after construction; all operations take it const.
struct PointCloud {
  Matrix points;  // n x N
  std::optional<std::vector<int>> labels;
  std::string name;

  PointCloud() = default;
  PointCloud(Matrix pts, std::optional<std::vector<int>> labs = std::nullopt,
             std::string tag = {});

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

/// Full Euclidean distance matrix: symmetric, zero diagonal.
Matrix pairwise_distances(const PointCloud& cloud);

enum class SyntheticShape {
  line,
  circle,
  two_intersecting_circles,
  two_concentric_circles,
  spiral,
};

SyntheticShape parse_shape(const std::string& name);
std::string shape_name(SyntheticShape shape);

/// Geometric parameters for the synthetic generators. Only the fields used by
/// the requested shape are read: length for the line, radius for all circular
/// shapes and the spiral's outer radius. The concentric pair places the inner
/// circle at radius * inner_ratio; the intersecting pair offsets both centers
/// by radius * offset_ratio along the first axis.
struct ShapeParams {
  double length = 10.0;
  double radius = 1.0;
  double inner_ratio = 0.5;
  double offset_ratio = 0.5;
  double turns = 2.0;
  Index ambient_dim = 3;
};

/// Samples n_points on the parametric shape (planar, embedded with trailing
/// coordinates zero), then displaces each point by isotropic Gaussian noise
/// with expected displacement norm ~ data_noise. Labels are the component id
/// for the two-circle shapes and 0 otherwise. data_noise == 0 yields points
/// exactly on the shape.
PointCloud generate_synthetic(SyntheticShape shape, const ShapeParams& params,
                              Index n_points, double data_noise, Seed seed);

/// CSV interchange: header `x0,x1,...,x{N-1}[,label]`, one row per point,
/// floats at 17 significant digits so load(save(c)) is exact.
PointCloud load_csv(const std::string& path);
void save_csv(const PointCloud& cloud, const std::string& path);

/// Canonical float formatting used by every writer (17 significant digits,
/// locale-independent).
std::string format_double(double v);

/// Strict locale-independent parse; throws on trailing garbage.
double parse_double(const std::string& cell);

}  // namespace emap::geometry
