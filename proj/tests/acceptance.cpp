// Acceptance suite: one check per release criterion, one PASS/FAIL line each.
// Run directly or through ctest; exits nonzero if any criterion fails.

#include "emap/experiments.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "oracles.hpp"

namespace {

using namespace emap;
using geometry::Index;
using geometry::Matrix;
using geometry::PointCloud;
using geometry::Rng;
using geometry::Seed;
using geometry::Vector;
using Clock = std::chrono::steady_clock;

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

PointCloud random_planar_cloud(Index n, Seed seed) {
  Rng rng(seed);
  Matrix pts = Matrix::Zero(n, 3);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < 2; ++c) pts(i, c) = rng.uniform();
  return PointCloud(std::move(pts));
}

manifold::LocalSubspace xy_plane() {
  manifold::LocalSubspace plane;
  plane.base_point = Vector::Zero(3);
  plane.basis = Matrix::Identity(3, 3).leftCols(2);
  plane.fit_residual = 0.0;
  return plane;
}

// ---------------------------------------------------------------------------
// 1. Identity fast path equals brute force below the small-radius bound.
// ---------------------------------------------------------------------------
CriterionResult lemma1_oracle_equivalence() {
  const int target = 200;
  int matched = 0, done = 0;
  for (int trial = 0; done < target; ++trial) {
    const Index n = 4 + static_cast<Index>(trial % 4);
    const auto cloud =
        random_planar_cloud(n, Seed{9001, static_cast<std::uint64_t>(trial)});
    if (!gh::is_generic(cloud)) continue;
    const double bound = gh::lemma1_radius_bound(cloud);
    const double r = 0.4 * bound;
    const perturb::PerturbationScheme orth{perturb::SchemeKind::orthogonal, r,
                                           true};
    const auto perturbed = perturb::perturb_cloud(
        cloud, orth, xy_plane(), Seed{9002, static_cast<std::uint64_t>(trial)});
    const double fast =
        gh::discrete_gh(cloud, perturbed, gh::GhMode::identity_fast_path).distance;
    const double brute =
        gh::discrete_gh(cloud, perturbed, gh::GhMode::brute_force).distance;
    matched += fast == brute ? 1 : 0;
    ++done;
  }
  std::ostringstream detail;
  detail << matched << "/" << target << " exact matches";
  return {matched == target, detail.str()};
}

// ---------------------------------------------------------------------------
// 2. Orthogonal instances stay below r; the witness reaches it.
// ---------------------------------------------------------------------------
CriterionResult theorem1_inequality() {
  const int target = 200;
  int ok = 0, done = 0;
  for (int trial = 0; done < target; ++trial) {
    const Index n = 4 + static_cast<Index>(trial % 4);
    const auto cloud =
        random_planar_cloud(n, Seed{9101, static_cast<std::uint64_t>(trial)});
    if (!gh::is_generic(cloud)) continue;
    const double bound = gh::lemma1_radius_bound(cloud);
    const double r = 0.4 * bound;
    const perturb::PerturbationScheme orth{perturb::SchemeKind::orthogonal, r,
                                           true};
    const auto perturbed = perturb::perturb_cloud(
        cloud, orth, xy_plane(), Seed{9102, static_cast<std::uint64_t>(trial)});
    const double d_orth =
        gh::discrete_gh(cloud, perturbed, gh::GhMode::brute_force).distance;
    const auto witness = gh::theorem1_witness(cloud, r);
    const double d_witness =
        gh::discrete_gh(cloud, witness, gh::GhMode::brute_force).distance;
    // the witness equals r up to roundoff of the coordinate arithmetic
    const bool trial_ok = d_orth < r && d_witness >= r * (1.0 - 1e-9);
    ok += trial_ok ? 1 : 0;
    ++done;
  }
  std::ostringstream detail;
  detail << ok << "/" << target << " trials with d_orth < r <= d_witness";
  return {ok == target, detail.str()};
}

// ---------------------------------------------------------------------------
// 3. Optimized persistence and bottleneck equal their brute-force oracles.
// ---------------------------------------------------------------------------
CriterionResult reduction_oracles() {
  int rips_matched = 0;
  const int rips_target = 100;
  for (int trial = 0; trial < rips_target; ++trial) {
    Rng rng(Seed{9201, static_cast<std::uint64_t>(trial)});
    const Index n = 4 + static_cast<Index>(rng.uniform_int(9));  // 4..12
    Matrix pts(n, 3);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < 3; ++c) pts(i, c) = rng.uniform();
    const Matrix d = geometry::pairwise_distances(PointCloud(pts));
    const auto fast = tda::rips_persistence_from_distances(d);
    const auto slow = test_oracles::brute_force_persistence(d);
    bool same = fast.size() == slow.size();
    for (std::size_t dim = 0; same && dim < fast.size(); ++dim) {
      same = fast[dim].pairs.size() == slow[dim].pairs.size();
      for (std::size_t p = 0; same && p < fast[dim].pairs.size(); ++p)
        same = fast[dim].pairs[p].birth == slow[dim].pairs[p].birth &&
               (fast[dim].pairs[p].death == slow[dim].pairs[p].death ||
                (fast[dim].pairs[p].essential() && slow[dim].pairs[p].essential()));
    }
    rips_matched += same ? 1 : 0;
  }

  int matching_matched = 0;
  const int matching_target = 100;
  Rng rng(Seed{9202, 0});
  for (int trial = 0; trial < matching_target; ++trial) {
    auto draw = [&rng](Index count) {
      tda::PersistenceDiagram diagram;
      diagram.dimension = 1;
      for (Index i = 0; i < count; ++i) {
        const double birth = rng.uniform();
        diagram.pairs.push_back({birth, birth + rng.uniform() + 1e-3});
      }
      return diagram;
    };
    const auto a = draw(1 + static_cast<Index>(rng.uniform_int(6)));
    const auto b = draw(static_cast<Index>(rng.uniform_int(7)));
    const double fast = tda::bottleneck_distance(a, b);
    const double slow = test_oracles::exhaustive_bottleneck(a, b);
    matching_matched += fast == slow ? 1 : 0;
  }

  std::ostringstream detail;
  detail << "rips " << rips_matched << "/" << rips_target << ", bottleneck "
         << matching_matched << "/" << matching_target << " exact";
  return {rips_matched == rips_target && matching_matched == matching_target,
          detail.str()};
}

// ---------------------------------------------------------------------------
// 4. Diagram stability: diagrams move at most 2r under radius-r moves.
// ---------------------------------------------------------------------------
CriterionResult stability_bound() {
  int violations = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(Seed{9301, static_cast<std::uint64_t>(trial)});
    const Index n = 10 + static_cast<Index>(rng.uniform_int(41));  // 10..50
    Matrix pts(n, 3);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < 3; ++c) pts(i, c) = rng.uniform();
    const PointCloud cloud(pts);
    const double r = 0.005 + 0.05 * rng.uniform();

    Matrix moved = pts;
    for (Index i = 0; i < n; ++i) {
      Vector dir(3);
      for (int c = 0; c < 3; ++c) dir(c) = rng.normal();
      dir.normalize();
      moved.row(i) += (r * rng.uniform()) * dir.transpose();
    }
    const auto da = tda::rips_persistence(cloud);
    const auto db = tda::rips_persistence(PointCloud(moved));
    for (int dim = 0; dim < 2; ++dim) {
      const double w =
          tda::bottleneck_distance(da[static_cast<std::size_t>(dim)],
                                   db[static_cast<std::size_t>(dim)]);
      if (w > 2 * r + 1e-9) ++violations;
    }
  }
  std::ostringstream detail;
  detail << violations << " violations in " << 2 * trials << " diagram pairs";
  return {violations == 0, detail.str()};
}

// ---------------------------------------------------------------------------
// 5. Orthogonal beats projection on the synthetic suite.
// ---------------------------------------------------------------------------
struct DatasetCase {
  const char* name;
  geometry::SyntheticShape shape;
  Index n_points;
  double data_noise;
  double radius;
  Index low_dim;
  int metric_dim;  // 0 for the line, 1 for the cycle shapes
};

CriterionResult synthetic_direction() {
  // Reference parameters; clouds larger than 300 points are generated at 300
  // so the triangle count stays inside the default simplex budget.
  const std::vector<DatasetCase> cases{
      {"line", geometry::SyntheticShape::line, 100, 0.1, 0.15, 1, 0},
      {"circle", geometry::SyntheticShape::circle, 300, 0.1, 0.1, 2, 1},
      {"two_intersecting_circles",
       geometry::SyntheticShape::two_intersecting_circles, 300, 0.01, 0.1, 2, 1},
      {"two_concentric_circles",
       geometry::SyntheticShape::two_concentric_circles, 300, 0.01, 0.1, 2, 1},
      {"spiral", geometry::SyntheticShape::spiral, 300, 0.02, 0.05, 2, 1},
  };

  bool all_pass = true;
  std::ostringstream detail;
  for (const auto& dataset : cases) {
    experiments::BottleneckConfig config;
    config.dataset.shape = dataset.shape;
    config.dataset.n_points = dataset.n_points;
    config.dataset.data_noise = dataset.data_noise;
    if (dataset.shape == geometry::SyntheticShape::spiral)
      config.dataset.params.radius = 2.0;
    config.schemes = {perturb::SchemeKind::orthogonal,
                      perturb::SchemeKind::projection};
    config.radius = dataset.radius;
    config.n_trials = 100;
    config.low_dim = dataset.low_dim;
    config.master_seed = 95;
    const auto result = experiments::run_bottleneck_comparison(config);

    const auto& orth = result.summary.rows[0];
    const auto& proj = result.summary.rows[1];
    const std::size_t mean_col = dataset.metric_dim == 0 ? 2 : 4;
    const std::size_t win_col = dataset.metric_dim == 0 ? 6 : 7;
    const double mean_orth = geometry::parse_double(orth[mean_col]);
    const double mean_proj = geometry::parse_double(proj[mean_col]);
    const double win = geometry::parse_double(orth[win_col]);
    const bool mean_ok = mean_orth < mean_proj;
    const bool win_ok = win >= 0.9;
    all_pass = all_pass && mean_ok && win_ok;
    detail << dataset.name << "[H" << dataset.metric_dim << " mean "
           << (mean_ok ? "<" : ">=") << ", win " << win << "] ";
  }
  return {all_pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 6. Reconstruction-error gap stays below its bound on every draw.
// ---------------------------------------------------------------------------
CriterionResult reconstruction_gap_bound() {
  Rng rng(Seed{9401, 0});
  Matrix pts = Matrix::Zero(80, 3);
  for (Index i = 0; i < 80; ++i)
    for (Index c = 0; c < 2; ++c) pts(i, c) = 2.0 * rng.uniform() - 1.0;
  const PointCloud cloud(pts);
  const auto mapper = manifold::Mapper::fit_linear_pca(cloud, 2);

  Vector x(3);
  x << 0.25, -0.3, 0.0;
  Matrix draws(1000, 3);
  for (Index i = 0; i < draws.rows(); ++i)
    draws.row(i) = rng.isotropic_noise(3, 0.05).transpose();

  const auto result = manifold::lemma2_gap(
      mapper, x, draws, Vector::Zero(3), Matrix::Identity(3, 3).leftCols(2));
  std::size_t within = 0;
  for (const auto& draw : result.draws) within += draw.lhs <= draw.bound ? 1 : 0;
  std::ostringstream detail;
  detail << within << "/" << result.draws.size() << " draws within the bound";
  return {within == result.draws.size(), detail.str()};
}

// ---------------------------------------------------------------------------
// 7. Sampler displacements are orthogonal to their pivot subspaces.
// ---------------------------------------------------------------------------
CriterionResult orthogonality_invariant() {
  Rng rng(Seed{9501, 0});
  Matrix pts = Matrix::Zero(60, 3);
  std::vector<int> labels(60);
  for (Index i = 0; i < 60; ++i) {
    for (Index c = 0; c < 2; ++c) pts(i, c) = rng.uniform();
    labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
  }
  const PointCloud cloud(pts, labels);
  const Vector x0 = cloud.points.row(0).transpose();

  // 2 pivots/label * 2 labels + 1 = 5 pivots, 2000 rows each
  const auto set =
      perturb::emap_sample(cloud, x0, 2, 2000, 2, 0.05, Seed{9502, 0});
  const auto mapper = manifold::Mapper::fit_linear_pca(cloud, 2);

  std::size_t checked = 0, ok = 0;
  double worst = 0.0;
  for (Index pivot = 0; pivot < set.pivots.rows(); ++pivot) {
    const Seed pivot_seed = set.seed.sub(static_cast<std::uint64_t>(pivot) + 1);
    const auto subspace = manifold::fit_local_subspace(
        mapper, set.pivots.row(pivot).transpose(), 100, 0.05, pivot_seed.sub(0));
    for (Index row = 0; row < set.points.rows(); ++row) {
      if (set.pivot_index[static_cast<std::size_t>(row)] != pivot) continue;
      const Vector displacement =
          set.points.row(row).transpose() - set.pivots.row(pivot).transpose();
      double inner = 0.0;
      for (Index c = 0; c < subspace.basis.cols(); ++c)
        inner = std::max(inner, std::abs(displacement.dot(subspace.basis.col(c))));
      worst = std::max(worst, inner);
      ok += inner < 1e-10 ? 1 : 0;
      ++checked;
    }
  }
  std::ostringstream detail;
  detail << ok << "/" << checked << " displacements orthogonal (worst "
         << worst << ")";
  return {checked == 10'000 && ok == checked, detail.str()};
}

// ---------------------------------------------------------------------------
// 8. Orthogonal sampling never trails the zero-mask baseline on precision.
// ---------------------------------------------------------------------------
CriterionResult explainer_faithfulness() {
  experiments::ExplainerEvalConfig config;
  config.n_runs = 50;
  config.schemes = {perturb::SchemeKind::orthogonal,
                    perturb::SchemeKind::zero_mask};
  config.master_seed = 101;
  const auto result = experiments::run_explainer_eval(config);

  bool all_ok = true;
  std::ostringstream detail;
  for (std::size_t k = 0; k < config.top_k.size(); ++k) {
    const double orth =
        geometry::parse_double(result.summary.rows[0][4 + 2 * k]);
    const double zero =
        geometry::parse_double(result.summary.rows[1][4 + 2 * k]);
    all_ok = all_ok && orth >= zero;
    detail << "top" << config.top_k[k] << " " << orth << (orth >= zero ? ">=" : "<")
           << zero << " ";
  }
  return {all_ok, detail.str()};
}

// ---------------------------------------------------------------------------
// 9. Orthogonal perturbations are no easier to detect than gaussian ones.
// ---------------------------------------------------------------------------
CriterionResult discriminator_robustness() {
  experiments::DiscriminatorConfig config;
  config.dataset.shape = geometry::SyntheticShape::two_concentric_circles;
  config.dataset.n_points = 2000;
  config.dataset.data_noise = 1e-3;
  config.radius = 1e-3;
  config.n_reruns = 20;
  config.schemes = {perturb::SchemeKind::orthogonal,
                    perturb::SchemeKind::gaussian};
  config.master_seed = 7;
  const auto result = experiments::run_discriminator_test(config);

  const double dev_orth = geometry::parse_double(result.summary.rows[0][4]);
  const double dev_gauss = geometry::parse_double(result.summary.rows[1][4]);
  const double tn_orth = geometry::parse_double(result.summary.rows[0][3]);
  const bool pass = dev_orth <= dev_gauss && tn_orth >= 0.4 && tn_orth <= 0.6;
  std::ostringstream detail;
  detail << "|tp-50| orth " << dev_orth << " vs gauss " << dev_gauss
         << ", tn orth " << tn_orth;
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 10. Reruns are byte-identical at every worker count.
// ---------------------------------------------------------------------------
CriterionResult determinism() {
  experiments::BottleneckConfig config;
  config.dataset.shape = geometry::SyntheticShape::two_concentric_circles;
  config.dataset.n_points = 80;
  config.dataset.data_noise = 0.01;
  config.schemes = {perturb::SchemeKind::orthogonal,
                    perturb::SchemeKind::projection,
                    perturb::SchemeKind::gaussian};
  config.radius = 0.1;
  config.n_trials = 12;
  config.master_seed = 2024;

  const auto base_dir = std::filesystem::temp_directory_path() / "emap_acceptance";
  std::filesystem::remove_all(base_dir);

  auto run_at = [&](int workers) {
    config.workers = workers;
    const auto result = experiments::run_bottleneck_comparison(config);
    const auto dir = base_dir / ("workers_" + std::to_string(workers));
    result.write_outputs(dir.string());
    std::ifstream in(dir / "trials.csv", std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };

  const std::string serial = run_at(1);
  const std::string four = run_at(4);
  const std::string eight = run_at(8);
  const std::string serial_again = run_at(1);
  std::filesystem::remove_all(base_dir);

  const bool pass = !serial.empty() && serial == four && serial == eight &&
                    serial == serial_again;
  std::ostringstream detail;
  detail << "trials.csv " << (pass ? "byte-identical" : "DIFFERS")
         << " across worker counts {1, 4, 8} and reruns";
  return {pass, detail.str()};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<CriterionResult()> run;
  };
  const std::vector<Criterion> criteria{
      {"identity fast path equals brute force (200 clouds)",
       lemma1_oracle_equivalence},
      {"orthogonal below r, witness at r (200 clouds)", theorem1_inequality},
      {"persistence and bottleneck match brute-force oracles",
       reduction_oracles},
      {"diagram stability bound W <= 2r", stability_bound},
      {"orthogonal beats projection on the synthetic suite",
       synthetic_direction},
      {"reconstruction gap within its bound (1000 draws)",
       reconstruction_gap_bound},
      {"sampler orthogonality (10000 draws)", orthogonality_invariant},
      {"explainer precision: orthogonal >= zero-mask at every top-k",
       explainer_faithfulness},
      {"discriminator: orthogonal no easier to detect than gaussian",
       discriminator_robustness},
      {"byte-identical outputs at worker counts 1/4/8", determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = Clock::now();
    CriterionResult result;
    try {
      result = criteria[i].run();
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("[%s] criterion %zu: %s (%s; %.1fs)\n",
                result.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                result.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += result.pass ? 0 : 1;
  }
  if (failures > 0)
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  else
    std::printf("all %zu criteria passed\n", criteria.size());
  return failures == 0 ? 0 : 1;
}
