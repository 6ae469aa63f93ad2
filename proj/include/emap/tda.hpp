#pragma once

#include "emap/geometry.hpp"

#include <nlohmann/json_fwd.hpp>

#include <limits>
#include <stdexcept>
#include <vector>

namespace emap::tda {

using geometry::Index;
using geometry::Matrix;

constexpr double kInfiniteDeath = std::numeric_limits<double>::infinity();

struct PersistencePair {
  double birth = 0.0;
  double death = kInfiniteDeath;

  bool essential() const { return std::isinf(death); }
  double persistence() const { return death - birth; }
};

/// Multiset of (birth, death) pairs of dimension-i features. Pairs are sorted
/// by (birth, death) and zero-persistence pairs are dropped. For a nonempty
/// cloud under the full filtration, the dimension-0 diagram carries exactly
/// one infinite pair (the surviving component); a finite max_radius can leave
/// several components, and hence several infinite pairs.
struct PersistenceDiagram {
  int dimension = 0;
  std::vector<PersistencePair> pairs;

  std::size_t essential_count() const;
};

/// Bounds for the Rips construction. max_radius = +inf requests the full
/// filtration; internally the scan stops at the enclosing radius
/// (min over i of max over j of d(i, j)), above which the complex is a cone
/// and nothing further can be born or die. Clouds with more than
/// kAutoRadiusLimit points must set max_radius explicitly.
struct FiltrationParams {
  int max_dimension = 1;  // 0 or 1
  double max_radius = kInfiniteDeath;
  std::size_t simplex_budget = 5'000'000;
};

constexpr Index kAutoRadiusLimit = 500;

class SimplexBudgetError : public std::runtime_error {
 public:
  SimplexBudgetError(std::size_t count, std::size_t budget);
  std::size_t count;
  std::size_t budget;
};

/// Vietoris-Rips persistence with the Ripser filtration convention: a simplex
/// enters at its diameter (an edge at d(x, y), not d/2). H0 comes from a
/// union-find pass over the sorted edges (the minimum spanning tree carries
/// exactly the finite deaths). H1 comes from a Z/2 coboundary reduction over
/// the non-tree edges; tree edges are already paired in dimension 0 and are
/// cleared from the dimension-1 reduction.
std::vector<PersistenceDiagram> rips_persistence(
    const geometry::PointCloud& cloud, const FiltrationParams& params = {});

/// Same computation from a precomputed distance matrix.
std::vector<PersistenceDiagram> rips_persistence_from_distances(
    const Matrix& distances, const FiltrationParams& params = {});

/// Exact bottleneck distance W_inf between two diagrams of equal dimension.
/// Infinite pairs must match each other (throws if the counts differ) and
/// contribute the max birth gap under the sorted matching. The finite part is
/// the smallest feasible threshold among all candidate costs (cross pair
/// infinity-norm distances and diagonal costs (death - birth) / 2), with
/// feasibility decided by Hopcroft-Karp maximum bipartite matching.
double bottleneck_distance(const PersistenceDiagram& a,
                           const PersistenceDiagram& b);

/// bottleneck_distance / noise; noise must be positive.
double normalized_bottleneck(const PersistenceDiagram& a,
                             const PersistenceDiagram& b, double noise);

/// JSON array of {dim, birth, death} with death = "inf" for essential pairs.
nlohmann::json diagrams_to_json(const std::vector<PersistenceDiagram>& diagrams);
std::vector<PersistenceDiagram> diagrams_from_json(const nlohmann::json& j);

}  // namespace emap::tda
