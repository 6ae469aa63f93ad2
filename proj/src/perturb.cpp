#include "emap/perturb.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>

namespace emap::perturb {

SchemeKind parse_scheme(const std::string& name) {
  if (name == "gaussian") return SchemeKind::gaussian;
  if (name == "projection") return SchemeKind::projection;
  if (name == "orthogonal" || name == "emap") return SchemeKind::orthogonal;
  if (name == "zero_mask") return SchemeKind::zero_mask;
  if (name == "multiplicative_uniform")
    return SchemeKind::multiplicative_uniform;
  throw std::invalid_argument("unknown perturbation scheme: " + name);
}

std::string scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::gaussian: return "gaussian";
    case SchemeKind::projection: return "projection";
    case SchemeKind::orthogonal: return "orthogonal";
    case SchemeKind::zero_mask: return "zero_mask";
    case SchemeKind::multiplicative_uniform: return "multiplicative_uniform";
  }
  throw std::invalid_argument("unknown scheme enum value");
}

namespace {

constexpr int kMaxRedraws = 100;

// Component of the drawn noise kept by the scheme, rescaled to target_norm.
// Degenerate residuals (noise entirely inside / outside the subspace) are
// redrawn a bounded number of times.
Vector directional_displacement(geometry::Rng& rng, const Matrix& basis,
                                bool keep_projection, Index dim, double radius,
                                bool fixed_norm) {
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    const Vector noise = rng.isotropic_noise(dim, radius);
    const double target = fixed_norm ? radius : noise.norm();
    const Vector inside = basis * (basis.transpose() * noise);
    Vector kept = keep_projection ? inside : Vector(noise - inside);
    const double norm = kept.norm();
    if (norm > 1e-15 * std::max(1.0, noise.norm()))
      return kept * (target / norm);
  }
  throw std::runtime_error(
      "perturb_cloud: degenerate noise residual after " +
      std::to_string(kMaxRedraws) + " redraws (is the subspace the whole "
      "space, or empty?)");
}

}  // namespace

PointCloud perturb_cloud(const PointCloud& cloud,
                         const PerturbationScheme& scheme,
                         const std::optional<manifold::LocalSubspace>& subspace,
                         Seed seed, const FeatureMasks* masks) {
  if (scheme.radius < 0)
    throw std::invalid_argument("perturb_cloud: radius must be >= 0");
  const Index n = cloud.size();
  const Index dim = cloud.dim();

  const bool needs_subspace = scheme.kind == SchemeKind::projection ||
                              scheme.kind == SchemeKind::orthogonal;
  if (needs_subspace) {
    if (!subspace)
      throw std::invalid_argument("perturb_cloud: " +
                                  scheme_name(scheme.kind) +
                                  " perturbation requires a subspace");
    if (subspace->basis.rows() != dim)
      throw std::invalid_argument("perturb_cloud: subspace dimension mismatch");
  }

  const bool needs_masks = scheme.kind == SchemeKind::zero_mask ||
                           scheme.kind == SchemeKind::multiplicative_uniform;
  if (needs_masks) {
    if (!masks || static_cast<Index>(masks->size()) != n)
      throw std::invalid_argument(
          "perturb_cloud: masked schemes need one feature mask per point");
  }

  geometry::Rng rng(seed);
  Matrix out = cloud.points;
  for (Index i = 0; i < n; ++i) {
    switch (scheme.kind) {
      case SchemeKind::gaussian: {
        if (scheme.radius == 0) break;
        Vector noise = rng.isotropic_noise(dim, scheme.radius);
        if (scheme.fixed_norm) {
          const double norm = noise.norm();
          if (norm > 0) noise *= scheme.radius / norm;
        }
        out.row(i) += noise.transpose();
        break;
      }
      case SchemeKind::projection:
      case SchemeKind::orthogonal: {
        if (scheme.radius == 0) break;
        const Vector displacement = directional_displacement(
            rng, subspace->basis, scheme.kind == SchemeKind::projection, dim,
            scheme.radius, scheme.fixed_norm);
        out.row(i) += displacement.transpose();
        break;
      }
      case SchemeKind::zero_mask: {
        for (const Index f : (*masks)[static_cast<std::size_t>(i)]) {
          if (f < 0 || f >= dim)
            throw std::invalid_argument("perturb_cloud: mask index out of range");
          out(i, f) = 0.0;
        }
        break;
      }
      case SchemeKind::multiplicative_uniform: {
        for (const Index f : (*masks)[static_cast<std::size_t>(i)]) {
          if (f < 0 || f >= dim)
            throw std::invalid_argument("perturb_cloud: mask index out of range");
          out(i, f) *= rng.uniform();
        }
        break;
      }
    }
  }
  return PointCloud(std::move(out), cloud.labels,
                    cloud.name + "_" + scheme_name(scheme.kind));
}

Perturbations gen_perturbation(const manifold::Mapper& mapper,
                               const manifold::LocalSubspace& subspace,
                               const Vector& x, Index k, double r, Seed seed) {
  if (k < 1) throw std::invalid_argument("gen_perturbation: k must be >= 1");
  if (r < 0) throw std::invalid_argument("gen_perturbation: r must be >= 0");
  const Index dim = mapper.ambient_dim();
  if (x.size() != dim || subspace.basis.rows() != dim)
    throw std::invalid_argument("gen_perturbation: dimension mismatch");

  geometry::Rng rng(seed);
  const Vector x_low = mapper.transform(x);

  Perturbations out;
  out.points.resize(k, dim);
  out.low_dim_distances.resize(k);
  for (Index i = 0; i < k; ++i) {
    const Vector noise = rng.isotropic_noise(dim, r);
    const Vector perturbed =
        x + noise - subspace.basis * (subspace.basis.transpose() * noise);
    out.points.row(i) = perturbed.transpose();
    out.low_dim_distances(i) = (mapper.transform(perturbed) - x_low).norm();
  }
  return out;
}

PerturbationSet emap_sample(const PointCloud& train, const Vector& x0, Index p,
                            Index k, Index low_dim, double r, Seed seed,
                            const EmapOptions& options) {
  const Index dim = train.dim();
  if (x0.size() != dim)
    throw std::invalid_argument("emap_sample: x0 dimension mismatch");
  if (low_dim >= dim)
    throw std::invalid_argument("emap_sample: low_dim must be below ambient dim");
  if (p < 0) throw std::invalid_argument("emap_sample: p must be >= 0");

  // Pivot selection: x0 first, then p uniform draws per label, labels
  // ascending.
  std::vector<Index> pivot_source{-1};
  if (p > 0) {
    if (!train.labels)
      throw std::invalid_argument("emap_sample: p > 0 requires labelled data");
    std::map<int, std::vector<Index>> by_label;
    for (Index i = 0; i < train.size(); ++i)
      by_label[(*train.labels)[static_cast<std::size_t>(i)]].push_back(i);
    geometry::Rng pivot_rng(seed.sub(0));
    for (const auto& [label, members] : by_label) {
      if (static_cast<Index>(members.size()) < p)
        throw std::invalid_argument(
            "emap_sample: label " + std::to_string(label) + " has " +
            std::to_string(members.size()) + " points, need p = " +
            std::to_string(p));
      for (const Index pick : pivot_rng.sample_without_replacement(
               static_cast<Index>(members.size()), p))
        pivot_source.push_back(members[static_cast<std::size_t>(pick)]);
    }
  }

  std::optional<manifold::Mapper> fitted;
  if (!options.mapper)
    fitted = manifold::fit_mapper(train, low_dim, options.mapper_kind,
                                  options.embedding_path, options.k_nn);
  const manifold::Mapper& mapper = options.mapper ? *options.mapper : *fitted;
  if (mapper.ambient_dim() != dim)
    throw std::invalid_argument("emap_sample: mapper dimension mismatch");
  const double r_T = options.subspace_radius > 0 ? options.subspace_radius : r;

  const auto n_pivots = static_cast<Index>(pivot_source.size());
  Matrix pivots(n_pivots, dim);
  for (Index j = 0; j < n_pivots; ++j) {
    const Index source = pivot_source[static_cast<std::size_t>(j)];
    if (source < 0)
      pivots.row(j) = x0.transpose();
    else
      pivots.row(j) = train.points.row(source);
  }

  PerturbationSet set;
  set.points.resize(n_pivots * k, dim);
  set.pivot_index.resize(static_cast<std::size_t>(n_pivots * k));
  set.pivot_source = pivot_source;
  set.pivots = pivots;
  set.low_dim_distances.resize(n_pivots * k);
  set.scheme = PerturbationScheme{SchemeKind::orthogonal, r, false};
  set.seed = seed;

  const Vector x0_low = mapper.transform(x0);
  for (Index j = 0; j < n_pivots; ++j) {
    const Seed pivot_seed = seed.sub(static_cast<std::uint64_t>(j) + 1);
    Matrix rows;
    if (r == 0) {
      // zero radius: every perturbation is the pivot itself, no subspace
      // needed
      rows.resize(k, dim);
      for (Index i = 0; i < k; ++i) rows.row(i) = pivots.row(j);
    } else {
      const auto subspace = manifold::fit_local_subspace(
          mapper, pivots.row(j).transpose(), options.subspace_samples, r_T,
          pivot_seed.sub(0));
      rows = gen_perturbation(mapper, subspace, pivots.row(j).transpose(), k,
                              r, pivot_seed.sub(1))
                 .points;
    }
    for (Index i = 0; i < k; ++i) {
      const Index row = j * k + i;
      set.points.row(row) = rows.row(i);
      set.pivot_index[static_cast<std::size_t>(row)] = j;
      set.low_dim_distances(row) =
          (mapper.transform(rows.row(i).transpose()) - x0_low).norm();
    }
  }
  return set;
}

nlohmann::json perturbation_set_sidecar(const PerturbationSet& set) {
  nlohmann::json j;
  j["scheme"] = scheme_name(set.scheme.kind);
  j["radius"] = set.scheme.radius;
  j["fixed_norm"] = set.scheme.fixed_norm;
  j["seed"] = {{"master", set.seed.master}, {"stream", set.seed.stream}};
  j["pivot_index"] = set.pivot_index;
  j["pivot_source"] = set.pivot_source;
  j["low_dim_distances"] = std::vector<double>(
      set.low_dim_distances.data(),
      set.low_dim_distances.data() + set.low_dim_distances.size());
  return j;
}

void save_perturbation_set(const PerturbationSet& set,
                           const std::string& csv_path,
                           const std::string& sidecar_path) {
  geometry::save_csv(PointCloud(set.points), csv_path);
  std::ofstream out(sidecar_path);
  if (!out) throw std::runtime_error("cannot write " + sidecar_path);
  out << perturbation_set_sidecar(set).dump(2) << '\n';
}

}  // namespace emap::perturb
