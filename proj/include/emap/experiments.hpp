#pragma once

#include "emap/explain.hpp"
#include "emap/geometry.hpp"
#include "emap/gh.hpp"
#include "emap/manifold.hpp"
#include "emap/models.hpp"
#include "emap/perturb.hpp"
#include "emap/tda.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace emap::experiments {

using geometry::Index;
using geometry::Seed;

/// Rectangular result table. Numeric cells are written through
/// geometry::format_double, so emitted CSV bytes are identical across runs
/// and worker counts.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

/// Runs fn(0..n-1) on a pool of `workers` threads. Each index owns its work
/// and output slot, so results are independent of scheduling; exceptions are
/// rethrown on the caller thread.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// A dataset reference: a synthetic shape regenerated per trial, or a fixed
/// CSV cloud.
struct DatasetSpec {
  std::optional<geometry::SyntheticShape> shape;
  geometry::ShapeParams params;
  Index n_points = 0;
  double data_noise = 0.0;
  std::string csv_path;

  bool synthetic() const { return shape.has_value(); }
  geometry::PointCloud realize(Seed seed) const;
  static DatasetSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct RunResult {
  Table trials;
  Table summary;
  nlohmann::json meta;

  /// Writes trials.csv, summary.csv, and meta.json under out_dir.
  void write_outputs(const std::string& out_dir) const;
};

/// Monte-Carlo comparison of perturbation schemes by normalized bottleneck
/// distance. Schemes within a trial share the same noise draws (the same
/// seed stream), so per-point displacements are paired across schemes.
struct BottleneckConfig {
  DatasetSpec dataset;
  std::vector<perturb::SchemeKind> schemes{perturb::SchemeKind::orthogonal,
                                           perturb::SchemeKind::projection,
                                           perturb::SchemeKind::gaussian};
  double radius = 0.1;
  int n_trials = 100;
  int max_dimension = 1;
  double max_radius = tda::kInfiniteDeath;
  std::size_t simplex_budget = 5'000'000;
  Index low_dim = 2;
  bool oracle_subspace = true;  // synthetic shapes: use the known plane
  std::uint64_t master_seed = 1;
  int workers = 1;

  static BottleneckConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

RunResult run_bottleneck_comparison(const BottleneckConfig& config);

/// Per-trial validation of the identity fast path and the adversarial
/// witness on random generic clouds in a known affine subspace.
struct GhValidationConfig {
  Index n_points = 5;
  Index ambient_dim = 3;
  Index low_dim = 2;
  double r_fraction = 0.5;  // perturbation radius as a fraction of the bound
  int n_trials = 100;
  std::uint64_t master_seed = 1;
  int workers = 1;

  static GhValidationConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

RunResult run_gh_validation(const GhValidationConfig& config);

/// Explainer faithfulness on a sparse-logistic testbed with known
/// explanatory features: data on a low-dimensional affine subspace, an
/// L1-trained logistic model, explanations per scheme scored by
/// precision/recall against the model's own active features plus log-odds
/// and infidelity.
struct ExplainerEvalConfig {
  Index ambient_dim = 20;
  Index data_dim = 2;         // dimension of the data's affine subspace
  Index n_train = 500;
  int n_true_features = 4;    // planted label features
  double l1_strength = 0.004;
  int train_epochs = 2000;
  double train_lr = 2.0;
  std::vector<perturb::SchemeKind> schemes{
      perturb::SchemeKind::orthogonal, perturb::SchemeKind::zero_mask,
      perturb::SchemeKind::gaussian, perturb::SchemeKind::multiplicative_uniform};
  Index n_perturbations = 1000;
  double radius = 0.08;
  Index pivots_per_label = 3;
  Index low_dim = 2;          // mapper dimension
  double ridge_lambda = 1e-3;
  double kernel_width = 0.0;  // 0 = median heuristic
  std::vector<int> top_k{2, 4, 6, 8};
  double log_odds_fraction = 0.2;
  int infidelity_draws = 500;
  int n_runs = 50;
  std::uint64_t master_seed = 1;
  int workers = 1;

  static ExplainerEvalConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

RunResult run_explainer_eval(const ExplainerEvalConfig& config);

/// Detectability test: a quadratic-feature logistic discriminator is trained
/// to tell original points from perturbations; TP/TN rates near 50% mean the
/// perturbations are indistinguishable from data.
struct DiscriminatorConfig {
  DatasetSpec dataset;
  std::vector<perturb::SchemeKind> schemes{perturb::SchemeKind::orthogonal,
                                           perturb::SchemeKind::gaussian};
  double radius = 1e-3;
  int n_reruns = 20;
  double train_fraction = 0.7;
  Index low_dim = 2;
  Index subspace_samples = 100;
  double l1_strength = 0.05;
  int train_epochs = 3000;
  double train_lr = 2.0;
  std::uint64_t master_seed = 1;
  int workers = 1;

  static DiscriminatorConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

RunResult run_discriminator_test(const DiscriminatorConfig& config);

/// All monomials of total degree 1..degree over the input coordinates, the
/// discriminator's feature map. Degree 4 lets a linear separator react to
/// variance changes of quadratic invariants (for example the radial spread
/// around circles of two different radii).
geometry::Matrix polynomial_features(const geometry::Matrix& points,
                                     int degree);

}  // namespace emap::experiments
