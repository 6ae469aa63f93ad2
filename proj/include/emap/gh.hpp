#pragma once

#include "emap/geometry.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace emap::gh {

using geometry::Index;
using geometry::Matrix;
using geometry::PointCloud;

/// A bijection on point indices: permutation[i] is the index in the second
/// cloud matched to point i of the first.
struct Correspondence {
  std::vector<Index> permutation;
};

enum class GhMode { brute_force, identity_fast_path };

struct GhResult {
  double distance = 0.0;
  Correspondence optimal_permutation;
  GhMode mode = GhMode::brute_force;
};

/// Factorials beyond 9! make the exhaustive scan impractical.
constexpr Index kBruteForceCap = 9;

/// Half the maximum pairwise-distance distortion between two equal-size
/// distance matrices under the given index bijection.
double permuted_distortion(const Matrix& dx, const Matrix& dy,
                           const std::vector<Index>& perm);

/// Distortion of the identity bijection, O(n^2).
double identity_distortion(const Matrix& dx, const Matrix& dy);

/// Discrete Gromov-Hausdorff distance. brute_force scans every permutation
/// (n <= kBruteForceCap) for the exact minimum. identity_fast_path evaluates
/// only the identity; the caller asserts that the second cloud is a
/// small-radius perturbation of the first with aligned indices, where the
/// identity is optimal.
GhResult discrete_gh(const PointCloud& x, const PointCloud& y, GhMode mode);

/// Fast path with the small-radius premise actually checked: errors unless
/// max_i d(x_i, y_i) < lemma1_radius_bound(x). Shares the brute-force size cap
/// because the bound requires the permutation scan.
GhResult discrete_gh_checked(const PointCloud& x, const PointCloud& y);

/// True iff some two pairwise distances differ by more than tol. tol < 0
/// selects the default of 1e-9 relative to the cloud diameter.
bool is_generic(const PointCloud& cloud, double tol = -1.0);

/// delta / 4, where delta is the smallest nonzero self-distortion over all
/// permutations. Any perturbation with per-point radius below the bound has
/// its discrete GH distance realized by the identity matching. Errors on
/// non-generic clouds (no permutation distorts) and above the size cap.
double lemma1_radius_bound(const PointCloud& cloud, double tol = -1.0);

/// Adversarial in-subspace perturbation: the first two distinct points are
/// pulled apart along their connecting line by r each, so their distance
/// grows by exactly 2r and the discrete GH distance is at least r; all other
/// points stay fixed. Requires r below lemma1_radius_bound(cloud).
PointCloud theorem1_witness(const PointCloud& cloud, double r);

nlohmann::json gh_result_to_json(const GhResult& result);

}  // namespace emap::gh
