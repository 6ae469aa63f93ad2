#include "emap/experiments.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace emap::experiments {

namespace {

using geometry::format_double;
using geometry::Matrix;
using geometry::PointCloud;
using geometry::Rng;
using geometry::Vector;

std::string fmt(double v) { return format_double(v); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double total = 0.0;
  for (const double x : v) total += (x - m) * (x - m);
  return std::sqrt(total / static_cast<double>(v.size() - 1));
}

nlohmann::json seed_json(std::uint64_t master) {
  return nlohmann::json{{"master", master}};
}

}  // namespace

std::string Table::to_csv() const {
  std::ostringstream out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c > 0) out << ',';
    out << columns[c];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << ',';
      out << row[c];
    }
    out << '\n';
  }
  return out.str();
}

void Table::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_csv();
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& thread : pool) thread.join();
  if (error) std::rethrow_exception(error);
}

PointCloud DatasetSpec::realize(Seed seed) const {
  if (synthetic())
    return geometry::generate_synthetic(*shape, params, n_points, data_noise,
                                        seed);
  return geometry::load_csv(csv_path);
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec spec;
  if (j.contains("csv")) {
    spec.csv_path = j.at("csv").get<std::string>();
    if (!std::filesystem::exists(spec.csv_path))
      throw std::invalid_argument("dataset csv does not exist: " + spec.csv_path);
    return spec;
  }
  spec.shape = geometry::parse_shape(j.at("shape").get<std::string>());
  spec.n_points = j.at("n_points").get<Index>();
  spec.data_noise = j.value("data_noise", 0.0);
  if (j.contains("length")) spec.params.length = j.at("length").get<double>();
  if (j.contains("radius")) spec.params.radius = j.at("radius").get<double>();
  if (j.contains("inner_ratio"))
    spec.params.inner_ratio = j.at("inner_ratio").get<double>();
  if (j.contains("offset_ratio"))
    spec.params.offset_ratio = j.at("offset_ratio").get<double>();
  if (j.contains("turns")) spec.params.turns = j.at("turns").get<double>();
  if (j.contains("ambient_dim"))
    spec.params.ambient_dim = j.at("ambient_dim").get<Index>();
  return spec;
}

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json j;
  if (!synthetic()) {
    j["csv"] = csv_path;
    return j;
  }
  j["shape"] = geometry::shape_name(*shape);
  j["n_points"] = n_points;
  j["data_noise"] = data_noise;
  j["length"] = params.length;
  j["radius"] = params.radius;
  j["inner_ratio"] = params.inner_ratio;
  j["offset_ratio"] = params.offset_ratio;
  j["turns"] = params.turns;
  j["ambient_dim"] = params.ambient_dim;
  return j;
}

void RunResult::write_outputs(const std::string& out_dir) const {
  std::filesystem::create_directories(out_dir);
  trials.write_csv(out_dir + "/trials.csv");
  summary.write_csv(out_dir + "/summary.csv");
  std::ofstream out(out_dir + "/meta.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_dir + "/meta.json");
  out << meta.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Bottleneck comparison
// ---------------------------------------------------------------------------

namespace {

std::vector<perturb::SchemeKind> parse_scheme_list(const nlohmann::json& j) {
  std::vector<perturb::SchemeKind> schemes;
  for (const auto& name : j)
    schemes.push_back(perturb::parse_scheme(name.get<std::string>()));
  if (schemes.empty()) throw std::invalid_argument("empty scheme list");
  return schemes;
}

nlohmann::json scheme_list_json(const std::vector<perturb::SchemeKind>& schemes) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto s : schemes) j.push_back(perturb::scheme_name(s));
  return j;
}

// The canonical plane the synthetic shapes live in: the first low_dim axes.
manifold::LocalSubspace oracle_plane(Index ambient, Index low_dim) {
  manifold::LocalSubspace plane;
  plane.base_point = Vector::Zero(ambient);
  plane.basis = Matrix::Identity(ambient, ambient).leftCols(low_dim);
  plane.fit_residual = 0.0;
  return plane;
}

manifold::LocalSubspace fitted_plane(const PointCloud& cloud, Index low_dim) {
  const auto mapper = manifold::Mapper::fit_linear_pca(cloud, low_dim);
  manifold::LocalSubspace plane;
  plane.base_point = mapper.mean();
  plane.basis = mapper.basis();
  plane.fit_residual = 0.0;
  return plane;
}

}  // namespace

BottleneckConfig BottleneckConfig::from_json(const nlohmann::json& j) {
  BottleneckConfig config;
  config.dataset = DatasetSpec::from_json(j.at("dataset"));
  if (j.contains("schemes")) config.schemes = parse_scheme_list(j.at("schemes"));
  config.radius = j.at("radius").get<double>();
  config.n_trials = j.value("n_trials", 100);
  config.max_dimension = j.value("max_dimension", 1);
  if (j.contains("max_radius")) config.max_radius = j.at("max_radius").get<double>();
  config.simplex_budget = j.value("simplex_budget", std::size_t{5'000'000});
  config.low_dim = j.value("low_dim", Index{2});
  config.oracle_subspace = j.value("oracle_subspace", true);
  config.master_seed = j.value("seed", std::uint64_t{1});
  config.workers = j.value("workers", 1);
  return config;
}

nlohmann::json BottleneckConfig::to_json() const {
  nlohmann::json j;
  j["experiment"] = "bottleneck_comparison";
  j["dataset"] = dataset.to_json();
  j["schemes"] = scheme_list_json(schemes);
  j["radius"] = radius;
  j["n_trials"] = n_trials;
  j["max_dimension"] = max_dimension;
  if (!std::isinf(max_radius)) j["max_radius"] = max_radius;
  j["simplex_budget"] = simplex_budget;
  j["low_dim"] = low_dim;
  j["oracle_subspace"] = oracle_subspace;
  j["seed"] = master_seed;
  j["workers"] = workers;
  return j;
}

RunResult run_bottleneck_comparison(const BottleneckConfig& config) {
  if (config.n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
  if (!(config.radius >= 0)) throw std::invalid_argument("radius must be >= 0");
  for (const auto scheme : config.schemes)
    if (scheme != perturb::SchemeKind::gaussian &&
        scheme != perturb::SchemeKind::projection &&
        scheme != perturb::SchemeKind::orthogonal)
      throw std::invalid_argument(
          "bottleneck comparison supports gaussian/projection/orthogonal only");

  const bool use_oracle = config.dataset.synthetic() && config.oracle_subspace;
  std::optional<PointCloud> fixed_cloud;
  std::optional<manifold::LocalSubspace> fixed_subspace;
  if (!config.dataset.synthetic()) {
    fixed_cloud = config.dataset.realize(Seed{});
    fixed_subspace = fitted_plane(*fixed_cloud, config.low_dim);
  }

  tda::FiltrationParams filtration;
  filtration.max_dimension = config.max_dimension;
  filtration.max_radius = config.max_radius;
  filtration.simplex_budget = config.simplex_budget;

  struct TrialOutput {
    std::vector<std::vector<std::string>> rows;
    // per scheme: normalized H0/H1, NaN when unavailable
    std::vector<std::array<double, 2>> values;
    bool ok = false;
  };
  std::vector<TrialOutput> outputs(static_cast<std::size_t>(config.n_trials));

  parallel_for(config.n_trials, config.workers, [&](int trial) {
    auto& out = outputs[static_cast<std::size_t>(trial)];
    const Seed trial_seed{config.master_seed, static_cast<std::uint64_t>(trial)};

    PointCloud cloud = fixed_cloud ? *fixed_cloud
                                   : config.dataset.realize(trial_seed.sub(0));
    const manifold::LocalSubspace subspace =
        fixed_subspace ? *fixed_subspace
                       : (use_oracle ? oracle_plane(cloud.dim(), config.low_dim)
                                     : fitted_plane(cloud, config.low_dim));

    std::string status = "ok";
    std::vector<tda::PersistenceDiagram> base;
    try {
      base = tda::rips_persistence(cloud, filtration);
    } catch (const tda::SimplexBudgetError& e) {
      status = std::string("budget_exceeded: ") + e.what();
    }

    for (const auto scheme_kind : config.schemes) {
      std::array<double, 2> values{std::numeric_limits<double>::quiet_NaN(),
                                   std::numeric_limits<double>::quiet_NaN()};
      std::string row_status = status;
      if (status == "ok") {
        // Shared stream across schemes: every scheme sees the same noise
        // draws, so per-point displacements are paired.
        const perturb::PerturbationScheme scheme{scheme_kind, config.radius,
                                                 false};
        const PointCloud perturbed =
            perturb::perturb_cloud(cloud, scheme, subspace, trial_seed.sub(1));
        try {
          const auto diagrams = tda::rips_persistence(perturbed, filtration);
          for (std::size_t d = 0;
               d < std::min(base.size(), diagrams.size()); ++d) {
            const double w = config.radius > 0
                                 ? tda::normalized_bottleneck(
                                       base[d], diagrams[d], config.radius)
                                 : tda::bottleneck_distance(base[d], diagrams[d]);
            values[d] = w;
          }
        } catch (const tda::SimplexBudgetError& e) {
          row_status = std::string("budget_exceeded: ") + e.what();
        }
      }
      std::vector<std::string> row{
          std::to_string(trial),
          perturb::scheme_name(scheme_kind),
          fmt(config.radius),
          "1",  // paired noise draws
          std::isnan(values[0]) ? "" : fmt(values[0]),
          config.max_dimension >= 1 && !std::isnan(values[1]) ? fmt(values[1])
                                                              : "",
          row_status,
      };
      out.rows.push_back(std::move(row));
      out.values.push_back(values);
    }
    out.ok = status == "ok";
  });

  Table trials;
  trials.columns = {"trial", "scheme",  "radius", "paired",
                    "h0_norm", "h1_norm", "status"};
  for (const auto& out : outputs)
    for (const auto& row : out.rows) trials.rows.push_back(row);

  // Per-scheme aggregates plus the paired orthogonal-vs-projection win rate.
  Table summary;
  summary.columns = {"scheme",  "n_valid", "mean_h0", "std_h0",
                     "mean_h1", "std_h1",  "win_vs_projection_h0",
                     "win_vs_projection_h1"};
  const auto scheme_pos = [&](perturb::SchemeKind kind) -> std::ptrdiff_t {
    const auto it = std::find(config.schemes.begin(), config.schemes.end(), kind);
    return it == config.schemes.end() ? -1 : it - config.schemes.begin();
  };
  for (std::size_t s = 0; s < config.schemes.size(); ++s) {
    std::vector<double> h0, h1;
    for (const auto& out : outputs) {
      if (out.values.size() <= s) continue;
      if (!std::isnan(out.values[s][0])) h0.push_back(out.values[s][0]);
      if (!std::isnan(out.values[s][1])) h1.push_back(out.values[s][1]);
    }
    std::string win0, win1;
    if (config.schemes[s] == perturb::SchemeKind::orthogonal) {
      const auto proj = scheme_pos(perturb::SchemeKind::projection);
      if (proj >= 0) {
        int wins0 = 0, wins1 = 0, n0 = 0, n1 = 0;
        for (const auto& out : outputs) {
          if (out.values.size() <= s) continue;
          const auto& orth = out.values[s];
          const auto& projv = out.values[static_cast<std::size_t>(proj)];
          if (!std::isnan(orth[0]) && !std::isnan(projv[0])) {
            ++n0;
            wins0 += orth[0] < projv[0] ? 1 : 0;
          }
          if (!std::isnan(orth[1]) && !std::isnan(projv[1])) {
            ++n1;
            wins1 += orth[1] < projv[1] ? 1 : 0;
          }
        }
        if (n0 > 0) win0 = fmt(static_cast<double>(wins0) / n0);
        if (n1 > 0) win1 = fmt(static_cast<double>(wins1) / n1);
      }
    }
    summary.rows.push_back({perturb::scheme_name(config.schemes[s]),
                            std::to_string(h0.size()), fmt(mean_of(h0)),
                            fmt(stddev_of(h0)),
                            config.max_dimension >= 1 ? fmt(mean_of(h1)) : "",
                            config.max_dimension >= 1 ? fmt(stddev_of(h1)) : "",
                            win0, win1});
  }

  RunResult result;
  result.trials = std::move(trials);
  result.summary = std::move(summary);
  result.meta = nlohmann::json{
      {"config", config.to_json()},
      {"seed", seed_json(config.master_seed)},
      {"subspace_mode", use_oracle ? "oracle_plane" : "fitted_pca"},
      {"normalization", "bottleneck / perturbation radius"},
      {"version", "emap 0.1.0"},
  };
  return result;
}

// ---------------------------------------------------------------------------
// GH validation
// ---------------------------------------------------------------------------

GhValidationConfig GhValidationConfig::from_json(const nlohmann::json& j) {
  GhValidationConfig config;
  config.n_points = j.value("n_points", Index{5});
  config.ambient_dim = j.value("ambient_dim", Index{3});
  config.low_dim = j.value("low_dim", Index{2});
  config.r_fraction = j.value("r_fraction", 0.5);
  config.n_trials = j.value("n_trials", 100);
  config.master_seed = j.value("seed", std::uint64_t{1});
  config.workers = j.value("workers", 1);
  return config;
}

nlohmann::json GhValidationConfig::to_json() const {
  return nlohmann::json{{"experiment", "gh_validation"},
                        {"n_points", n_points},
                        {"ambient_dim", ambient_dim},
                        {"low_dim", low_dim},
                        {"r_fraction", r_fraction},
                        {"n_trials", n_trials},
                        {"seed", master_seed},
                        {"workers", workers}};
}

RunResult run_gh_validation(const GhValidationConfig& config) {
  if (config.n_points < 2)
    throw std::invalid_argument("gh validation requires n >= 2 points");
  if (config.n_points > 7)
    throw std::invalid_argument("gh validation oracle mode requires n <= 7");
  if (config.low_dim < 1 || config.low_dim >= config.ambient_dim)
    throw std::invalid_argument("gh validation needs 1 <= V < N");
  if (!(config.r_fraction > 0))
    throw std::invalid_argument("r_fraction must be positive");

  struct TrialOutput {
    std::vector<std::string> row;
    bool pass = false;
    bool in_regime = false;
    int redraws = 0;
  };
  std::vector<TrialOutput> outputs(static_cast<std::size_t>(config.n_trials));

  parallel_for(config.n_trials, config.workers, [&](int trial) {
    auto& out = outputs[static_cast<std::size_t>(trial)];
    const Seed trial_seed{config.master_seed, static_cast<std::uint64_t>(trial)};

    // Random cloud in the canonical V-dimensional subspace; redraw the rare
    // non-generic configurations.
    PointCloud cloud;
    int redraws = 0;
    for (;; ++redraws) {
      Rng rng(trial_seed.sub(static_cast<std::uint64_t>(redraws)));
      Matrix pts = Matrix::Zero(config.n_points, config.ambient_dim);
      for (Index i = 0; i < config.n_points; ++i)
        for (Index c = 0; c < config.low_dim; ++c) pts(i, c) = rng.uniform();
      cloud = PointCloud(std::move(pts));
      if (gh::is_generic(cloud)) break;
      if (redraws > 100)
        throw std::runtime_error("gh validation: cannot draw a generic cloud");
    }

    const double bound = gh::lemma1_radius_bound(cloud);
    const double r = config.r_fraction * bound;
    const bool in_regime = r < bound;

    if (!in_regime) {
      // The identity-optimality argument does not apply; record the trial
      // without judging it.
      out.row = {std::to_string(trial), std::to_string(config.n_points),
                 fmt(bound), fmt(r), "", "", "", "", "out_of_regime",
                 std::to_string(redraws)};
      out.pass = false;
      out.in_regime = false;
      out.redraws = redraws;
      return;
    }

    const auto plane = oracle_plane(config.ambient_dim, config.low_dim);
    const perturb::PerturbationScheme orth{perturb::SchemeKind::orthogonal, r,
                                           true};  // exact per-point radius
    const PointCloud orthogonal =
        perturb::perturb_cloud(cloud, orth, plane, trial_seed.sub(1000));

    const auto fast = gh::discrete_gh(cloud, orthogonal, gh::GhMode::identity_fast_path);
    const auto brute = gh::discrete_gh(cloud, orthogonal, gh::GhMode::brute_force);
    const PointCloud witness = gh::theorem1_witness(cloud, r);
    const auto witness_gh = gh::discrete_gh(cloud, witness, gh::GhMode::brute_force);

    const bool fast_matches = fast.distance == brute.distance;
    const bool orth_below = brute.distance < r;
    const bool witness_above = witness_gh.distance >= r * (1.0 - 1e-9);
    const bool pass = fast_matches && orth_below && witness_above;

    out.row = {std::to_string(trial),
               std::to_string(config.n_points),
               fmt(bound),
               fmt(r),
               fmt(fast.distance),
               fmt(brute.distance),
               fast_matches ? "1" : "0",
               fmt(witness_gh.distance),
               pass ? "pass" : "fail",
               std::to_string(redraws)};
    out.pass = pass;
    out.in_regime = in_regime;
    out.redraws = redraws;
  });

  Table trials;
  trials.columns = {"trial",      "n",     "bound",        "r",
                    "d_fast",     "d_brute", "fast_matches", "d_witness",
                    "status",     "redraws"};
  int passes = 0, in_regime = 0, redraws = 0;
  for (auto& out : outputs) {
    trials.rows.push_back(std::move(out.row));
    passes += out.pass && out.in_regime ? 1 : 0;
    in_regime += out.in_regime ? 1 : 0;
    redraws += out.redraws;
  }

  Table summary;
  summary.columns = {"n_trials", "in_regime", "passes", "pass_rate", "redraws"};
  summary.rows.push_back(
      {std::to_string(config.n_trials), std::to_string(in_regime),
       std::to_string(passes),
       fmt(in_regime > 0 ? static_cast<double>(passes) / in_regime : 0.0),
       std::to_string(redraws)});

  RunResult result;
  result.trials = std::move(trials);
  result.summary = std::move(summary);
  result.meta = nlohmann::json{{"config", config.to_json()},
                               {"seed", seed_json(config.master_seed)},
                               {"version", "emap 0.1.0"}};
  return result;
}

// ---------------------------------------------------------------------------
// Explainer evaluation
// ---------------------------------------------------------------------------

ExplainerEvalConfig ExplainerEvalConfig::from_json(const nlohmann::json& j) {
  ExplainerEvalConfig config;
  config.ambient_dim = j.value("ambient_dim", Index{20});
  config.data_dim = j.value("data_dim", Index{2});
  config.n_train = j.value("n_train", Index{500});
  config.n_true_features = j.value("n_true_features", 4);
  config.l1_strength = j.value("l1_strength", 0.004);
  config.train_epochs = j.value("train_epochs", 2000);
  config.train_lr = j.value("train_lr", 2.0);
  if (j.contains("schemes")) config.schemes = parse_scheme_list(j.at("schemes"));
  config.n_perturbations = j.value("n_perturbations", Index{1000});
  config.radius = j.value("radius", 0.08);
  config.pivots_per_label = j.value("pivots_per_label", Index{3});
  config.low_dim = j.value("low_dim", Index{2});
  config.ridge_lambda = j.value("ridge", 1e-3);
  config.kernel_width = j.value("kernel_width", 0.0);
  if (j.contains("top_k")) config.top_k = j.at("top_k").get<std::vector<int>>();
  config.log_odds_fraction = j.value("log_odds_fraction", 0.2);
  config.infidelity_draws = j.value("infidelity_draws", 500);
  config.n_runs = j.value("n_runs", 50);
  config.master_seed = j.value("seed", std::uint64_t{1});
  config.workers = j.value("workers", 1);
  return config;
}

nlohmann::json ExplainerEvalConfig::to_json() const {
  return nlohmann::json{{"experiment", "explainer_eval"},
                        {"ambient_dim", ambient_dim},
                        {"data_dim", data_dim},
                        {"n_train", n_train},
                        {"n_true_features", n_true_features},
                        {"l1_strength", l1_strength},
                        {"train_epochs", train_epochs},
                        {"train_lr", train_lr},
                        {"schemes", scheme_list_json(schemes)},
                        {"n_perturbations", n_perturbations},
                        {"radius", radius},
                        {"pivots_per_label", pivots_per_label},
                        {"low_dim", low_dim},
                        {"ridge", ridge_lambda},
                        {"kernel_width", kernel_width},
                        {"top_k", top_k},
                        {"log_odds_fraction", log_odds_fraction},
                        {"infidelity_draws", infidelity_draws},
                        {"n_runs", n_runs},
                        {"seed", master_seed},
                        {"workers", workers}};
}

namespace {

struct Testbed {
  PointCloud data;          // labelled training cloud on an affine subspace
  Vector x0;                // explained input, on the subspace
  models::LogisticModel model;
  std::vector<Index> ground_truth;  // the model's active features
};

Testbed build_testbed(const ExplainerEvalConfig& config, Seed seed) {
  Rng rng(seed);
  const Index n = config.n_train;
  const Index dim = config.ambient_dim;
  const Index latent = config.data_dim;

  // Orthonormal embedding of the latent subspace into R^dim.
  Matrix gauss(dim, latent);
  for (Index r = 0; r < dim; ++r)
    for (Index c = 0; c < latent; ++c) gauss(r, c) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(gauss);
  const Matrix embed = qr.householderQ() * Matrix::Identity(dim, latent);

  // Half the features are centered at the erasure baseline 0 (as most
  // vocabulary is absent from any one document), the rest at 0.5. Latents in
  // [-1, 1]^latent scaled so coordinates stay within [0, 1] of their center
  // (row norms of an orthonormal basis are <= 1).
  Vector center(dim);
  for (Index f = 0; f < dim; ++f) center(f) = f % 2 == 0 ? 0.5 : 0.0;
  const double scale = 0.5 / std::sqrt(static_cast<double>(latent));
  Matrix points(n, dim);
  for (Index i = 0; i < n; ++i) {
    Vector z(latent);
    for (Index c = 0; c < latent; ++c) z(c) = (2.0 * rng.uniform() - 1.0) * scale;
    points.row(i) = (center + embed * z).transpose();
  }

  // Planted sparse rule on a few ambient features; threshold at the median
  // for balanced classes.
  std::vector<Index> planted = rng.sample_without_replacement(
      dim, static_cast<Index>(config.n_true_features));
  Vector rule = Vector::Zero(dim);
  for (const Index f : planted) rule(f) = (1.0 + rng.uniform()) *
                                          (rng.uniform() < 0.5 ? -1.0 : 1.0);
  Vector scores = points * rule;
  std::vector<double> sorted(scores.data(), scores.data() + scores.size());
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                   sorted.end());
  const double threshold = sorted[sorted.size() / 2];
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    labels[static_cast<std::size_t>(i)] = scores(i) > threshold ? 1 : 0;

  PointCloud data(std::move(points), std::move(labels), "testbed");

  // Escalate the penalty until the model is actually sparse; the ground
  // truth is the surviving feature set.
  std::optional<models::LogisticModel> model;
  std::vector<Index> truth;
  for (int attempt = 0; attempt < 7; ++attempt) {
    const double l1 = config.l1_strength * std::pow(2.0, attempt);
    auto candidate = models::train_l1_logistic(
        data, l1, config.train_epochs, config.train_lr, seed.sub(1));
    auto active = candidate.active_features();
    if (active.empty()) break;
    model = std::move(candidate);
    truth = std::move(active);
    if (static_cast<int>(truth.size()) <= 2 * config.n_true_features) break;
  }
  if (!model || truth.empty())
    throw std::runtime_error(
        "explainer eval: could not train a sparse model with nonempty "
        "feature set; adjust l1_strength");

  Vector z0(latent);
  for (Index c = 0; c < latent; ++c) z0(c) = (2.0 * rng.uniform() - 1.0) * scale;
  Vector x0 = center + embed * z0;

  return Testbed{std::move(data), std::move(x0), std::move(*model),
                 std::move(truth)};
}

perturb::PerturbationSet baseline_perturbations(
    const ExplainerEvalConfig& config, perturb::SchemeKind kind,
    const Vector& x0, Seed seed) {
  const Index k = config.n_perturbations;
  const Index dim = x0.size();
  Matrix repeated(k, dim);
  for (Index i = 0; i < k; ++i) repeated.row(i) = x0.transpose();
  const PointCloud base(repeated);

  perturb::PerturbationSet set;
  set.scheme = perturb::PerturbationScheme{kind, config.radius, false};
  set.seed = seed;
  if (kind == perturb::SchemeKind::gaussian) {
    set.points = perturb::perturb_cloud(base, set.scheme, std::nullopt,
                                        seed.sub(1))
                     .points;
  } else {
    const auto masks = explain::sample_feature_masks(dim, k, seed.sub(0));
    set.points = perturb::perturb_cloud(base, set.scheme, std::nullopt,
                                        seed.sub(1), &masks)
                     .points;
  }
  set.pivot_index.assign(static_cast<std::size_t>(k), 0);
  set.pivot_source = {-1};
  set.pivots = x0.transpose();
  return set;
}

}  // namespace

RunResult run_explainer_eval(const ExplainerEvalConfig& config) {
  if (config.n_runs < 0) throw std::invalid_argument("n_runs must be >= 0");
  if (config.n_perturbations < 1)
    throw std::invalid_argument("n_perturbations must be >= 1");
  if (config.low_dim >= config.ambient_dim)
    throw std::invalid_argument("low_dim must be below ambient_dim");
  const bool below_default = config.n_perturbations < 1000;

  struct RunOutput {
    std::vector<std::vector<std::string>> rows;
    // per scheme: log-odds, infidelity, then precision/recall per top_k
    std::vector<std::vector<double>> values;
  };
  std::vector<RunOutput> outputs(static_cast<std::size_t>(config.n_runs));

  parallel_for(config.n_runs, config.workers, [&](int run) {
    auto& out = outputs[static_cast<std::size_t>(run)];
    const Seed run_seed{config.master_seed, static_cast<std::uint64_t>(run)};
    const Testbed bed = build_testbed(config, run_seed.sub(0));

    // EMaP's pivot count depends on the label count; divide the perturbation
    // budget so the total row count matches the other schemes' budget.
    std::set<int> distinct(bed.data.labels->begin(), bed.data.labels->end());
    const auto n_labels = static_cast<Index>(distinct.size());
    const Index n_pivots = config.pivots_per_label * n_labels + 1;

    for (std::size_t s = 0; s < config.schemes.size(); ++s) {
      const auto kind = config.schemes[s];
      const Seed scheme_seed = run_seed.sub(10 + s);

      perturb::PerturbationSet perts;
      explain::KernelSpec kernel;
      if (kind == perturb::SchemeKind::orthogonal) {
        const Index per_pivot =
            std::max<Index>(1, (config.n_perturbations + n_pivots - 1) / n_pivots);
        perturb::EmapOptions options;
        options.subspace_radius = config.radius;
        perts = perturb::emap_sample(bed.data, bed.x0, config.pivots_per_label,
                                     per_pivot, config.low_dim, config.radius,
                                     scheme_seed, options);
        kernel = explain::KernelSpec{explain::KernelKind::exponential_lowdim,
                                     config.kernel_width};
      } else {
        perts = baseline_perturbations(config, kind, bed.x0, scheme_seed);
        kernel = explain::KernelSpec{explain::KernelKind::exponential_ambient,
                                     config.kernel_width};
      }

      const auto expl = explain::lime_explain(bed.model, bed.x0, perts, kernel,
                                              config.ridge_lambda);
      const auto odds =
          explain::log_odds_score(bed.model, bed.x0, expl.with_support_weights(),
                                  config.log_odds_fraction, 0.0);
      const double infid = explain::infidelity_score(
          bed.model, bed.x0, expl, explain::NoiseSpec{config.radius},
          config.infidelity_draws, scheme_seed.sub(999));

      std::vector<double> values{odds.score, infid};
      std::vector<std::string> row{std::to_string(run),
                                   perturb::scheme_name(kind),
                                   std::to_string(perts.points.rows()),
                                   fmt(odds.score), fmt(infid)};
      for (const int k : config.top_k) {
        const auto pr = explain::precision_recall(expl, bed.ground_truth, k);
        values.push_back(pr.precision);
        values.push_back(pr.recall);
        row.push_back(fmt(pr.precision));
        row.push_back(fmt(pr.recall));
      }
      row.push_back(std::to_string(bed.ground_truth.size()));
      out.rows.push_back(std::move(row));
      out.values.push_back(std::move(values));
    }
  });

  Table trials;
  trials.columns = {"run", "scheme", "n_perturbations", "log_odds", "infidelity"};
  for (const int k : config.top_k) {
    trials.columns.push_back("precision_at_" + std::to_string(k));
    trials.columns.push_back("recall_at_" + std::to_string(k));
  }
  trials.columns.push_back("n_truth");
  for (const auto& out : outputs)
    for (const auto& row : out.rows) trials.rows.push_back(row);

  Table summary;
  summary.columns = {"scheme", "n_runs", "mean_log_odds", "mean_infidelity"};
  for (const int k : config.top_k) {
    summary.columns.push_back("mean_precision_at_" + std::to_string(k));
    summary.columns.push_back("mean_recall_at_" + std::to_string(k));
  }
  for (std::size_t s = 0; s < config.schemes.size(); ++s) {
    std::vector<std::vector<double>> collected;
    for (const auto& out : outputs)
      if (out.values.size() > s) collected.push_back(out.values[s]);
    std::vector<std::string> row{perturb::scheme_name(config.schemes[s]),
                                 std::to_string(collected.size())};
    const std::size_t n_metrics = 2 + 2 * config.top_k.size();
    for (std::size_t m = 0; m < n_metrics; ++m) {
      std::vector<double> column;
      for (const auto& values : collected) column.push_back(values[m]);
      row.push_back(fmt(mean_of(column)));
    }
    summary.rows.push_back(std::move(row));
  }

  RunResult result;
  result.trials = std::move(trials);
  result.summary = std::move(summary);
  result.meta = nlohmann::json{{"config", config.to_json()},
                               {"seed", seed_json(config.master_seed)},
                               {"version", "emap 0.1.0"}};
  if (below_default)
    result.meta["warnings"] = nlohmann::json::array(
        {"n_perturbations below the reference default of 1000"});
  return result;
}

// ---------------------------------------------------------------------------
// Discriminator detectability test
// ---------------------------------------------------------------------------

DiscriminatorConfig DiscriminatorConfig::from_json(const nlohmann::json& j) {
  DiscriminatorConfig config;
  config.dataset = DatasetSpec::from_json(j.at("dataset"));
  if (j.contains("schemes")) config.schemes = parse_scheme_list(j.at("schemes"));
  config.radius = j.value("radius", 1e-3);
  config.n_reruns = j.value("n_reruns", 20);
  config.train_fraction = j.value("train_fraction", 0.7);
  config.low_dim = j.value("low_dim", Index{2});
  config.subspace_samples = j.value("subspace_samples", Index{100});
  config.l1_strength = j.value("l1_strength", 0.05);
  config.train_epochs = j.value("train_epochs", 3000);
  config.train_lr = j.value("train_lr", 2.0);
  config.master_seed = j.value("seed", std::uint64_t{1});
  config.workers = j.value("workers", 1);
  return config;
}

nlohmann::json DiscriminatorConfig::to_json() const {
  return nlohmann::json{{"experiment", "discriminator"},
                        {"dataset", dataset.to_json()},
                        {"schemes", scheme_list_json(schemes)},
                        {"radius", radius},
                        {"n_reruns", n_reruns},
                        {"train_fraction", train_fraction},
                        {"low_dim", low_dim},
                        {"subspace_samples", subspace_samples},
                        {"l1_strength", l1_strength},
                        {"train_epochs", train_epochs},
                        {"train_lr", train_lr},
                        {"seed", master_seed},
                        {"workers", workers}};
}

namespace {

// Monomial exponent vectors with total degree in [1, degree], in a fixed
// deterministic order.
void enumerate_monomials(Index dim, int degree, std::vector<int>& current,
                         int used, std::vector<std::vector<int>>& out) {
  if (static_cast<Index>(current.size()) == dim) {
    if (used >= 1) out.push_back(current);
    return;
  }
  for (int e = 0; e + used <= degree; ++e) {
    current.push_back(e);
    enumerate_monomials(dim, degree, current, used + e, out);
    current.pop_back();
  }
}

}  // namespace

Matrix polynomial_features(const Matrix& points, int degree) {
  if (degree < 1) throw std::invalid_argument("polynomial_features: degree >= 1");
  const Index n = points.rows();
  const Index dim = points.cols();
  std::vector<std::vector<int>> monomials;
  std::vector<int> scratch;
  enumerate_monomials(dim, degree, scratch, 0, monomials);

  Matrix features(n, static_cast<Index>(monomials.size()));
  for (Index r = 0; r < n; ++r)
    for (std::size_t m = 0; m < monomials.size(); ++m) {
      double value = 1.0;
      for (Index c = 0; c < dim; ++c)
        for (int e = 0; e < monomials[m][static_cast<std::size_t>(c)]; ++e)
          value *= points(r, c);
      features(r, static_cast<Index>(m)) = value;
    }
  return features;
}

namespace {

struct DiscriminatorScores {
  double tp = 0.0;
  double tn = 0.0;
  double accuracy = 0.0;
};

DiscriminatorScores score_discriminator(const Matrix& originals,
                                        const Matrix& perturbed,
                                        const std::vector<Index>& train_idx,
                                        const std::vector<Index>& test_idx,
                                        const DiscriminatorConfig& config,
                                        Seed seed) {
  const Matrix feat_orig = polynomial_features(originals, 4);
  const Matrix feat_pert = polynomial_features(perturbed, 4);
  const Index f_dim = feat_orig.cols();

  const auto n_train = static_cast<Index>(train_idx.size());
  Matrix train_points(2 * n_train, f_dim);
  std::vector<int> train_labels(static_cast<std::size_t>(2 * n_train));
  for (Index i = 0; i < n_train; ++i) {
    train_points.row(2 * i) = feat_orig.row(train_idx[static_cast<std::size_t>(i)]);
    train_labels[static_cast<std::size_t>(2 * i)] = 0;
    train_points.row(2 * i + 1) =
        feat_pert.row(train_idx[static_cast<std::size_t>(i)]);
    train_labels[static_cast<std::size_t>(2 * i + 1)] = 1;
  }

  // Standardize by the training statistics; constant features map to zero.
  const Vector mean = train_points.colwise().mean();
  Vector scale(f_dim);
  for (Index c = 0; c < f_dim; ++c) {
    const double var =
        (train_points.col(c).array() - mean(c)).square().sum() /
        std::max<double>(1.0, static_cast<double>(train_points.rows() - 1));
    scale(c) = std::sqrt(var) > 1e-300 ? std::sqrt(var) : 1.0;
  }
  auto standardize = [&](Matrix m) {
    m.rowwise() -= mean.transpose();
    for (Index c = 0; c < m.cols(); ++c) m.col(c) /= scale(c);
    return m;
  };

  const PointCloud train_cloud(standardize(train_points), train_labels);
  const auto discriminator = models::train_l1_logistic(
      train_cloud, config.l1_strength, config.train_epochs, config.train_lr,
      seed);

  // Balanced decision threshold: the median flagged-probability on the
  // training pool. Near-zero signal leaves the raw 0.5 cut dominated by the
  // hyperplane's arbitrary offset, which flags almost everything as one
  // class; the median cut splits the training pool in half by construction.
  std::vector<double> train_probs;
  {
    const Matrix p = discriminator.predict(train_cloud.points);
    train_probs.assign(p.col(1).data(), p.col(1).data() + p.rows());
    std::sort(train_probs.begin(), train_probs.end());
  }
  const double threshold = train_probs[train_probs.size() / 2];

  const auto n_test = static_cast<Index>(test_idx.size());
  Matrix test_orig(n_test, f_dim), test_pert(n_test, f_dim);
  for (Index i = 0; i < n_test; ++i) {
    test_orig.row(i) = feat_orig.row(test_idx[static_cast<std::size_t>(i)]);
    test_pert.row(i) = feat_pert.row(test_idx[static_cast<std::size_t>(i)]);
  }
  const Matrix p_orig = discriminator.predict(standardize(test_orig));
  const Matrix p_pert = discriminator.predict(standardize(test_pert));

  DiscriminatorScores scores;
  for (Index i = 0; i < n_test; ++i) {
    scores.tp += p_pert(i, 1) > threshold ? 1.0 : 0.0;
    scores.tn += p_orig(i, 1) <= threshold ? 1.0 : 0.0;
  }
  scores.tp /= static_cast<double>(n_test);
  scores.tn /= static_cast<double>(n_test);
  scores.accuracy = 0.5 * (scores.tp + scores.tn);
  return scores;
}

}  // namespace

RunResult run_discriminator_test(const DiscriminatorConfig& config) {
  if (config.n_reruns < 1) throw std::invalid_argument("n_reruns must be >= 1");
  if (!(config.train_fraction > 0) || config.train_fraction >= 1)
    throw std::invalid_argument("train_fraction must be in (0, 1)");

  struct RerunOutput {
    std::vector<std::vector<std::string>> rows;
    std::vector<DiscriminatorScores> scores;
  };
  std::vector<RerunOutput> outputs(static_cast<std::size_t>(config.n_reruns));

  parallel_for(config.n_reruns, config.workers, [&](int rerun) {
    auto& out = outputs[static_cast<std::size_t>(rerun)];
    const Seed rerun_seed{config.master_seed, static_cast<std::uint64_t>(rerun)};

    const PointCloud cloud = config.dataset.realize(rerun_seed.sub(0));
    const Index n = cloud.size();
    if (n < 40)
      throw std::invalid_argument(
          "discriminator pool too small: need >= 40 points per class, have " +
          std::to_string(n));

    const auto mapper = manifold::Mapper::fit_linear_pca(cloud, config.low_dim);

    // Shared raw noise: each scheme transforms the same draws, so the
    // orthogonal pool is the gaussian pool with in-plane components removed.
    Rng noise_rng(rerun_seed.sub(1));
    Matrix noise(n, cloud.dim());
    for (Index i = 0; i < n; ++i)
      noise.row(i) =
          noise_rng.isotropic_noise(cloud.dim(), config.radius).transpose();

    // One local subspace per point, as the sampler would fit at a pivot.
    Matrix orthogonal = cloud.points;
    if (config.radius > 0) {
      for (Index i = 0; i < n; ++i) {
        const auto subspace = manifold::fit_local_subspace(
            mapper, cloud.points.row(i).transpose(), config.subspace_samples,
            config.radius, rerun_seed.sub(100 + static_cast<std::uint64_t>(i)));
        const Vector z = noise.row(i).transpose();
        orthogonal.row(i) +=
            (z - subspace.basis * (subspace.basis.transpose() * z)).transpose();
      }
    }

    // 70/30 split, same indices for every scheme.
    Rng split_rng(rerun_seed.sub(2));
    const auto order = split_rng.sample_without_replacement(n, n);
    const auto n_train =
        static_cast<Index>(std::llround(config.train_fraction * n));
    const std::vector<Index> train_idx(order.begin(), order.begin() + n_train);
    const std::vector<Index> test_idx(order.begin() + n_train, order.end());
    if (test_idx.empty())
      throw std::invalid_argument("discriminator: empty test split");

    for (const auto kind : config.schemes) {
      Matrix perturbed;
      if (kind == perturb::SchemeKind::orthogonal) {
        perturbed = orthogonal;
      } else if (kind == perturb::SchemeKind::gaussian) {
        perturbed = cloud.points + noise;
      } else {
        throw std::invalid_argument(
            "discriminator test supports orthogonal/gaussian schemes");
      }
      const auto scores =
          score_discriminator(cloud.points, perturbed, train_idx, test_idx,
                              config, rerun_seed.sub(3));
      out.rows.push_back({std::to_string(rerun), perturb::scheme_name(kind),
                          fmt(config.radius), fmt(scores.tp), fmt(scores.tn),
                          fmt(scores.accuracy)});
      out.scores.push_back(scores);
    }
  });

  Table trials;
  trials.columns = {"rerun", "scheme", "radius", "tp_rate", "tn_rate",
                    "accuracy"};
  for (const auto& out : outputs)
    for (const auto& row : out.rows) trials.rows.push_back(row);

  Table summary;
  summary.columns = {"scheme", "n_reruns", "mean_tp", "mean_tn",
                     "mean_abs_tp_minus_half"};
  for (std::size_t s = 0; s < config.schemes.size(); ++s) {
    std::vector<double> tp, tn, dev;
    for (const auto& out : outputs)
      if (out.scores.size() > s) {
        tp.push_back(out.scores[s].tp);
        tn.push_back(out.scores[s].tn);
        dev.push_back(std::abs(out.scores[s].tp - 0.5));
      }
    summary.rows.push_back({perturb::scheme_name(config.schemes[s]),
                            std::to_string(tp.size()), fmt(mean_of(tp)),
                            fmt(mean_of(tn)), fmt(mean_of(dev))});
  }

  RunResult result;
  result.trials = std::move(trials);
  result.summary = std::move(summary);
  result.meta = nlohmann::json{
      {"config", config.to_json()},
      {"seed", seed_json(config.master_seed)},
      {"discriminator", "l1 logistic on degree-4 polynomial features"},
      {"split", "70/30 stratified, shared across schemes"},
      {"version", "emap 0.1.0"}};
  return result;
}

}  // namespace emap::experiments
