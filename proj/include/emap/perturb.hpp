#pragma once

#include "emap/geometry.hpp"
#include "emap/manifold.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>
#include <vector>

namespace emap::perturb {

using geometry::Index;
using geometry::Matrix;
using geometry::PointCloud;
using geometry::Seed;
using geometry::Vector;

enum class SchemeKind {
  gaussian,
  projection,
  orthogonal,
  zero_mask,
  multiplicative_uniform,
};

SchemeKind parse_scheme(const std::string& name);
std::string scheme_name(SchemeKind kind);

/// radius is the expected per-point displacement norm. fixed_norm rescales
/// each displacement to exactly radius instead of the drawn noise norm, which
/// the worst-case GH analysis needs (every point displaced by exactly r).
struct PerturbationScheme {
  SchemeKind kind = SchemeKind::gaussian;
  double radius = 0.0;
  bool fixed_norm = false;
};

/// Per-row feature index sets for the masked baselines (which features a
/// perturbation flips); generated by the explainer layer.
using FeatureMasks = std::vector<std::vector<Index>>;

/// Applies one scheme to every point of a cloud.
///
/// gaussian adds the drawn isotropic noise unchanged. projection keeps only
/// the noise component inside the subspace, orthogonal only the complement;
/// both rescale the displacement back to the drawn norm so all three schemes
/// move each point by the same distance under a shared seed. zero_mask sets
/// the masked features to zero; multiplicative_uniform multiplies them by
/// U[0, 1) draws.
PointCloud perturb_cloud(const PointCloud& cloud,
                         const PerturbationScheme& scheme,
                         const std::optional<manifold::LocalSubspace>& subspace,
                         Seed seed, const FeatureMasks* masks = nullptr);

/// k orthogonal perturbations of a single point around its local subspace:
/// x~ = x + noise - Proj(noise), no rescaling, plus the low-dimensional
/// distance of each perturbation to x through the mapper.
struct Perturbations {
  Matrix points;  // k x N
  Vector low_dim_distances;
};

Perturbations gen_perturbation(const manifold::Mapper& mapper,
                               const manifold::LocalSubspace& subspace,
                               const Vector& x, Index k, double r, Seed seed);

/// Output of the full sampler: k * (p*l + 1) rows with provenance.
struct PerturbationSet {
  Matrix points;
  std::vector<Index> pivot_index;   // per row: ordinal of the originating pivot
  std::vector<Index> pivot_source;  // per pivot: training row, or -1 for x0
  Matrix pivots;                    // the pivot points themselves
  Vector low_dim_distances;         // per row: distance to x0's embedding
  PerturbationScheme scheme;
  Seed seed;
};

struct EmapOptions {
  manifold::MapperKind mapper_kind = manifold::MapperKind::linear_pca;
  std::string embedding_path;           // file_embedding only
  int k_nn = 5;                         // file_embedding only
  Index subspace_samples = 100;         // k_T
  double subspace_radius = -1.0;        // r_T; <= 0 means "use r"
  const manifold::Mapper* mapper = nullptr;  // pre-fitted, optional
};

/// The orthogonal sampler with pivots: selects {x0} plus p uniform samples
/// per label (without replacement), fits a local subspace at every pivot,
/// generates k orthogonal perturbations from each, and measures every row's
/// low-dimensional distance to x0. Row order is pivot order (x0 first, then
/// labels ascending, draws in order) times draw order, independent of any
/// parallelism.
PerturbationSet emap_sample(const PointCloud& train, const Vector& x0, Index p,
                            Index k, Index low_dim, double r, Seed seed,
                            const EmapOptions& options = {});

/// Points as a labelless CSV plus a JSON sidecar carrying provenance.
void save_perturbation_set(const PerturbationSet& set,
                           const std::string& csv_path,
                           const std::string& sidecar_path);
nlohmann::json perturbation_set_sidecar(const PerturbationSet& set);

}  // namespace emap::perturb
