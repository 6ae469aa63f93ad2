#include "emap/gh.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace emap::gh {

double permuted_distortion(const Matrix& dx, const Matrix& dy,
                           const std::vector<Index>& perm) {
  const Index n = dx.rows();
  double worst = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double gap =
          std::abs(dx(i, j) - dy(perm[static_cast<std::size_t>(i)],
                                 perm[static_cast<std::size_t>(j)]));
      worst = std::max(worst, gap);
    }
  return 0.5 * worst;
}

double identity_distortion(const Matrix& dx, const Matrix& dy) {
  const Index n = dx.rows();
  double worst = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      worst = std::max(worst, std::abs(dx(i, j) - dy(i, j)));
  return 0.5 * worst;
}

namespace {

std::vector<Index> identity_permutation(Index n) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  return perm;
}

double cloud_diameter(const Matrix& d) {
  return d.maxCoeff();
}

}  // namespace

GhResult discrete_gh(const PointCloud& x, const PointCloud& y, GhMode mode) {
  if (x.size() != y.size())
    throw std::invalid_argument("discrete_gh: clouds must have equal size");
  const Index n = x.size();
  const Matrix dx = geometry::pairwise_distances(x);
  const Matrix dy = geometry::pairwise_distances(y);

  if (mode == GhMode::identity_fast_path) {
    return GhResult{identity_distortion(dx, dy),
                    Correspondence{identity_permutation(n)},
                    GhMode::identity_fast_path};
  }

  if (n > kBruteForceCap)
    throw std::invalid_argument("discrete_gh: brute force capped at n = " +
                                std::to_string(kBruteForceCap));

  std::vector<Index> perm = identity_permutation(n);
  std::vector<Index> best_perm = perm;
  double best = permuted_distortion(dx, dy, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double value = permuted_distortion(dx, dy, perm);
    if (value < best) {
      best = value;
      best_perm = perm;
    }
  }
  return GhResult{best, Correspondence{std::move(best_perm)},
                  GhMode::brute_force};
}

GhResult discrete_gh_checked(const PointCloud& x, const PointCloud& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("discrete_gh: clouds must have equal size");
  const double bound = lemma1_radius_bound(x);
  double radius = 0.0;
  for (Index i = 0; i < x.size(); ++i)
    radius = std::max(radius, (x.points.row(i) - y.points.row(i)).norm());
  if (radius >= bound)
    throw std::invalid_argument(
        "discrete_gh_checked: per-point radius " + std::to_string(radius) +
        " is not below the identity-optimality bound " + std::to_string(bound));
  return discrete_gh(x, y, GhMode::identity_fast_path);
}

bool is_generic(const PointCloud& cloud, double tol) {
  if (cloud.size() < 2)
    throw std::invalid_argument("is_generic: need at least 2 points");
  const Matrix d = geometry::pairwise_distances(cloud);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Index i = 0; i < cloud.size(); ++i)
    for (Index j = i + 1; j < cloud.size(); ++j) {
      lo = std::min(lo, d(i, j));
      hi = std::max(hi, d(i, j));
    }
  if (tol < 0) tol = 1e-9 * cloud_diameter(d);
  return hi - lo > tol;
}

double lemma1_radius_bound(const PointCloud& cloud, double tol) {
  const Index n = cloud.size();
  if (n < 2)
    throw std::invalid_argument("lemma1_radius_bound: need at least 2 points");
  if (n > kBruteForceCap)
    throw std::invalid_argument(
        "lemma1_radius_bound: permutation scan capped at n = " +
        std::to_string(kBruteForceCap));

  const Matrix d = geometry::pairwise_distances(cloud);
  if (tol < 0) tol = 1e-9 * cloud_diameter(d);

  // delta = min self-distortion over permutations that distort at all.
  double delta = std::numeric_limits<double>::infinity();
  std::vector<Index> perm = identity_permutation(n);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double value = permuted_distortion(d, d, perm);
    if (value > tol) delta = std::min(delta, value);
  }
  if (!std::isfinite(delta))
    throw std::invalid_argument(
        "lemma1_radius_bound: cloud is not generic (every permutation "
        "preserves all pairwise distances)");
  return delta / 4.0;
}

PointCloud theorem1_witness(const PointCloud& cloud, double r) {
  const Index n = cloud.size();
  if (n < 2)
    throw std::invalid_argument("theorem1_witness: need at least 2 points");
  if (!(r > 0)) throw std::invalid_argument("theorem1_witness: r must be positive");

  // With two points both permutations realize the same distortion, so the
  // identity is optimal for every radius and no regime bound applies.
  if (n > 2) {
    const double bound = lemma1_radius_bound(cloud);
    if (r >= bound)
      throw std::invalid_argument(
          "theorem1_witness: r = " + std::to_string(r) +
          " is outside the identity-optimality regime (bound " +
          std::to_string(bound) + ")");
  }

  // First pair with positive separation; generic clouds always have one.
  Index first = -1, second = -1;
  for (Index i = 0; i < n && first < 0; ++i)
    for (Index j = i + 1; j < n; ++j)
      if ((cloud.points.row(i) - cloud.points.row(j)).norm() > 0) {
        first = i;
        second = j;
        break;
      }
  if (first < 0)
    throw std::invalid_argument("theorem1_witness: all points coincide");

  Matrix moved = cloud.points;
  const geometry::Vector direction =
      (cloud.points.row(second) - cloud.points.row(first)).normalized();
  moved.row(first) -= r * direction.transpose();
  moved.row(second) += r * direction.transpose();
  return PointCloud(std::move(moved), cloud.labels, cloud.name + "_witness");
}

nlohmann::json gh_result_to_json(const GhResult& result) {
  nlohmann::json j;
  j["distance"] = result.distance;
  j["permutation"] = result.optimal_permutation.permutation;
  j["mode"] = result.mode == GhMode::brute_force ? "brute_force"
                                                 : "identity_fast_path";
  return j;
}

}  // namespace emap::gh
