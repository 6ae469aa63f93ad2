// Command-line front end: synthetic data, perturbation, persistence,
// Gromov-Hausdorff, explanations, and the Monte-Carlo experiment runners.
// Every experiment reads a JSON config and writes trials.csv / summary.csv /
// meta.json into --out. Exit codes: 0 success, 1 configuration error,
// 2 runtime failure.

#include "emap/experiments.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <set>

namespace {

using namespace emap;
using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  json j;
  in >> j;
  return j;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

struct CommonOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> workers;
  std::string out_dir = "out";

  void apply(json& config) const {
    if (seed) config["seed"] = *seed;
    if (trials) {
      config["n_trials"] = *trials;
      config["n_runs"] = *trials;
      config["n_reruns"] = *trials;
    }
    if (workers) config["workers"] = *workers;
  }
};

void add_common(CLI::App* cmd, CommonOverrides& common, std::string& config_path) {
  cmd->add_option("--config", config_path, "JSON config file")->required();
  cmd->add_option("--seed", common.seed, "master seed override");
  cmd->add_option("--trials", common.trials, "trial count override");
  cmd->add_option("--workers", common.workers, "worker thread count override");
  cmd->add_option("--out", common.out_dir, "output directory");
}

int run_cli(int argc, char** argv) {
  CLI::App app{"manifold-aware perturbations, persistence, and explanations"};
  app.require_subcommand(1);

  // ---- synth ----------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic point cloud");
  std::string synth_shape = "circle", synth_out = "cloud.csv";
  Eigen::Index synth_n = 400;
  double synth_noise = 0.1, synth_length = 10.0, synth_radius = 1.0,
         synth_turns = 2.0;
  std::uint64_t synth_seed = 1;
  synth->add_option("--shape", synth_shape,
                    "line|circle|two_intersecting_circles|"
                    "two_concentric_circles|spiral");
  synth->add_option("--n", synth_n, "number of points");
  synth->add_option("--noise", synth_noise, "data noise radius");
  synth->add_option("--length", synth_length, "line length");
  synth->add_option("--radius", synth_radius, "circle/spiral radius");
  synth->add_option("--turns", synth_turns, "spiral turns");
  synth->add_option("--seed", synth_seed, "seed");
  synth->add_option("--out", synth_out, "output CSV");

  // ---- perturb --------------------------------------------------------
  auto* pert = app.add_subcommand("perturb", "perturb a cloud or run the "
                                             "orthogonal sampler");
  std::string pert_in, pert_scheme = "orthogonal", pert_out = "perturbed.csv",
              pert_sidecar;
  double pert_radius = 0.1;
  Eigen::Index pert_lowdim = 2, pert_x0_row = 0, pert_pivots = 0, pert_k = 0;
  std::uint64_t pert_seed = 1;
  bool pert_emap = false;
  pert->add_option("--in", pert_in, "input cloud CSV")->required();
  pert->add_option("--scheme", pert_scheme,
                   "gaussian|projection|orthogonal (subspace from global PCA)");
  pert->add_option("--radius", pert_radius, "perturbation radius");
  pert->add_option("--low-dim", pert_lowdim, "subspace dimension");
  pert->add_flag("--emap", pert_emap,
                 "run the pivot sampler around --x0-row instead");
  pert->add_option("--x0-row", pert_x0_row, "explained row for --emap");
  pert->add_option("--pivots", pert_pivots, "pivots per label for --emap");
  pert->add_option("--k", pert_k, "perturbations per pivot for --emap");
  pert->add_option("--seed", pert_seed, "seed");
  pert->add_option("--out", pert_out, "output CSV");
  pert->add_option("--sidecar", pert_sidecar, "provenance JSON path");

  // ---- tda ------------------------------------------------------------
  auto* tda_cmd = app.add_subcommand("tda", "Rips persistence or bottleneck "
                                            "distance");
  std::string tda_in, tda_out = "diagrams.json", tda_a, tda_b;
  int tda_maxdim = 1, tda_bottleneck_dim = 0;
  double tda_max_radius = 0.0, tda_normalize = 0.0;
  std::size_t tda_budget = 5'000'000;
  tda_cmd->add_option("--in", tda_in, "cloud CSV (diagram mode)");
  tda_cmd->add_option("--max-dim", tda_maxdim, "0 or 1");
  tda_cmd->add_option("--max-radius", tda_max_radius,
                      "filtration cutoff (0 = full)");
  tda_cmd->add_option("--budget", tda_budget, "simplex budget");
  tda_cmd->add_option("--out", tda_out, "output JSON");
  tda_cmd->add_option("--bottleneck-a", tda_a, "first diagram JSON");
  tda_cmd->add_option("--bottleneck-b", tda_b, "second diagram JSON");
  tda_cmd->add_option("--dim", tda_bottleneck_dim, "bottleneck dimension");
  tda_cmd->add_option("--normalize", tda_normalize,
                      "divide the bottleneck distance by this noise level");

  // ---- gh -------------------------------------------------------------
  auto* gh_cmd = app.add_subcommand("gh", "discrete Gromov-Hausdorff distance "
                                          "or the Monte-Carlo validation");
  std::string gh_a, gh_b, gh_mode = "brute_force", gh_out = "gh.json",
              gh_config;
  CommonOverrides gh_common;
  gh_cmd->add_option("--a", gh_a, "first cloud CSV");
  gh_cmd->add_option("--b", gh_b, "second cloud CSV");
  gh_cmd->add_option("--mode", gh_mode, "brute_force|identity_fast_path");
  gh_cmd->add_option("--out", gh_out, "output JSON (pair mode)");
  gh_cmd->add_option("--validate-config", gh_config,
                     "run the validation harness with this JSON config");
  gh_cmd->add_option("--out-dir", gh_common.out_dir,
                     "output directory (validation mode)");
  gh_cmd->add_option("--seed", gh_common.seed, "seed override");
  gh_cmd->add_option("--trials", gh_common.trials, "trial override");
  gh_cmd->add_option("--workers", gh_common.workers, "worker override");

  // ---- explain --------------------------------------------------------
  auto* expl_cmd = app.add_subcommand("explain", "explain one input of a "
                                                 "saved model");
  std::string expl_model, expl_command, expl_data,
              expl_out = "explanation.json", expl_scheme = "orthogonal",
              expl_kernel;
  Eigen::Index expl_row = 0, expl_k = 1000, expl_pivots = 2, expl_lowdim = 2;
  double expl_radius = 1e-3, expl_ridge = 1e-3, expl_sigma = 0.0;
  std::uint64_t expl_seed = 1;
  expl_cmd->add_option("--model", expl_model, "model JSON");
  expl_cmd->add_option("--model-command", expl_command,
                       "shell command speaking the line protocol instead of a "
                       "model file");
  expl_cmd->add_option("--data", expl_data, "training cloud CSV")->required();
  expl_cmd->add_option("--row", expl_row, "row of the input to explain");
  expl_cmd->add_option("--scheme", expl_scheme,
                       "orthogonal|zero_mask|gaussian|multiplicative_uniform");
  expl_cmd->add_option("--perturbations", expl_k, "total perturbation count");
  expl_cmd->add_option("--pivots", expl_pivots, "pivots per label (orthogonal)");
  expl_cmd->add_option("--low-dim", expl_lowdim, "mapper dimension");
  expl_cmd->add_option("--radius", expl_radius, "perturbation radius");
  expl_cmd->add_option("--ridge", expl_ridge, "ridge penalty");
  expl_cmd->add_option("--kernel", expl_kernel,
                       "exponential_lowdim|exponential_ambient|uniform");
  expl_cmd->add_option("--sigma", expl_sigma, "kernel width (0 = median)");
  expl_cmd->add_option("--seed", expl_seed, "seed");
  expl_cmd->add_option("--out", expl_out, "output JSON");

  // ---- experiment runners ----------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "explainer faithfulness harness");
  CommonOverrides eval_common;
  std::string eval_config;
  add_common(eval_cmd, eval_common, eval_config);

  auto* disc_cmd = app.add_subcommand("discriminate",
                                      "perturbation detectability harness");
  CommonOverrides disc_common;
  std::string disc_config;
  add_common(disc_cmd, disc_common, disc_config);

  auto* comp_cmd = app.add_subcommand("compare",
                                      "bottleneck comparison harness");
  CommonOverrides comp_common;
  std::string comp_config;
  add_common(comp_cmd, comp_common, comp_config);

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    geometry::ShapeParams params;
    params.length = synth_length;
    params.radius = synth_radius;
    params.turns = synth_turns;
    const auto cloud = geometry::generate_synthetic(
        geometry::parse_shape(synth_shape), params, synth_n, synth_noise,
        geometry::Seed{synth_seed, 0});
    geometry::save_csv(cloud, synth_out);
    std::cout << "wrote " << cloud.size() << " points to " << synth_out << "\n";
    return 0;
  }

  if (pert->parsed()) {
    const auto cloud = geometry::load_csv(pert_in);
    const geometry::Seed seed{pert_seed, 0};
    if (pert_emap) {
      if (pert_k <= 0) pert_k = 100;
      const auto set = perturb::emap_sample(
          cloud, cloud.points.row(pert_x0_row).transpose(), pert_pivots,
          pert_k, pert_lowdim, pert_radius, seed);
      perturb::save_perturbation_set(
          set, pert_out,
          pert_sidecar.empty() ? pert_out + ".meta.json" : pert_sidecar);
      std::cout << "wrote " << set.points.rows() << " perturbations to "
                << pert_out << "\n";
      return 0;
    }
    const perturb::PerturbationScheme scheme{perturb::parse_scheme(pert_scheme),
                                             pert_radius, false};
    std::optional<manifold::LocalSubspace> subspace;
    if (scheme.kind != perturb::SchemeKind::gaussian) {
      const auto mapper = manifold::Mapper::fit_linear_pca(cloud, pert_lowdim);
      subspace = manifold::LocalSubspace{mapper.mean(), mapper.basis(), 0.0};
    }
    const auto perturbed = perturb::perturb_cloud(cloud, scheme, subspace, seed);
    geometry::save_csv(perturbed, pert_out);
    std::cout << "wrote " << perturbed.size() << " points to " << pert_out
              << "\n";
    return 0;
  }

  if (tda_cmd->parsed()) {
    if (!tda_a.empty() || !tda_b.empty()) {
      const auto da = tda::diagrams_from_json(load_json(tda_a));
      const auto db = tda::diagrams_from_json(load_json(tda_b));
      const auto pick = [&](const std::vector<tda::PersistenceDiagram>& ds)
          -> const tda::PersistenceDiagram& {
        for (const auto& d : ds)
          if (d.dimension == tda_bottleneck_dim) return d;
        throw std::invalid_argument("diagram dimension " +
                                    std::to_string(tda_bottleneck_dim) +
                                    " not present");
      };
      const double w = tda::bottleneck_distance(pick(da), pick(db));
      json out{{"dim", tda_bottleneck_dim}, {"bottleneck", w}};
      if (tda_normalize > 0) out["normalized"] = w / tda_normalize;
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (tda_in.empty())
      throw std::invalid_argument("tda: need --in or --bottleneck-a/-b");
    tda::FiltrationParams params;
    params.max_dimension = tda_maxdim;
    params.max_radius =
        tda_max_radius > 0 ? tda_max_radius : tda::kInfiniteDeath;
    params.simplex_budget = tda_budget;
    const auto diagrams =
        tda::rips_persistence(geometry::load_csv(tda_in), params);
    write_json(tda::diagrams_to_json(diagrams), tda_out);
    std::cout << "wrote diagrams to " << tda_out << "\n";
    return 0;
  }

  if (gh_cmd->parsed()) {
    if (!gh_config.empty()) {
      json config = load_json(gh_config);
      gh_common.apply(config);
      const auto result = experiments::run_gh_validation(
          experiments::GhValidationConfig::from_json(config));
      result.write_outputs(gh_common.out_dir);
      std::cout << "wrote validation tables to " << gh_common.out_dir << "\n";
      return 0;
    }
    if (gh_a.empty() || gh_b.empty())
      throw std::invalid_argument("gh: need --a and --b (or --validate-config)");
    const auto mode = gh_mode == "identity_fast_path"
                          ? gh::GhMode::identity_fast_path
                          : gh::GhMode::brute_force;
    const auto result =
        gh::discrete_gh(geometry::load_csv(gh_a), geometry::load_csv(gh_b), mode);
    write_json(gh::gh_result_to_json(result), gh_out);
    std::cout << "d_J = " << geometry::format_double(result.distance) << "\n";
    return 0;
  }

  if (expl_cmd->parsed()) {
    if (expl_model.empty() == expl_command.empty())
      throw std::invalid_argument(
          "explain: give exactly one of --model or --model-command");
    const std::unique_ptr<models::BlackBoxModel> model =
        expl_model.empty()
            ? std::unique_ptr<models::BlackBoxModel>(
                  std::make_unique<models::SubprocessModel>(expl_command))
            : models::load_model(expl_model);
    const auto data = geometry::load_csv(expl_data);
    const geometry::Vector x0 = data.points.row(expl_row).transpose();
    const geometry::Seed seed{expl_seed, 0};
    const auto kind = perturb::parse_scheme(expl_scheme);

    perturb::PerturbationSet perts;
    explain::KernelKind kernel_kind;
    if (kind == perturb::SchemeKind::orthogonal) {
      std::set<int> labels;
      if (data.labels) labels.insert(data.labels->begin(), data.labels->end());
      const Eigen::Index n_pivots =
          expl_pivots * static_cast<Eigen::Index>(labels.size()) + 1;
      const Eigen::Index per_pivot = std::max<Eigen::Index>(1, expl_k / n_pivots);
      perturb::EmapOptions options;
      options.subspace_radius = expl_radius;
      perts = perturb::emap_sample(data, x0, data.labels ? expl_pivots : 0,
                                   per_pivot, expl_lowdim, expl_radius, seed,
                                   options);
      kernel_kind = explain::KernelKind::exponential_lowdim;
    } else {
      geometry::Matrix repeated(expl_k, data.dim());
      for (Eigen::Index i = 0; i < expl_k; ++i) repeated.row(i) = x0.transpose();
      const geometry::PointCloud base(repeated);
      perts.scheme = perturb::PerturbationScheme{kind, expl_radius, false};
      perts.seed = seed;
      if (kind == perturb::SchemeKind::gaussian) {
        perts.points =
            perturb::perturb_cloud(base, perts.scheme, std::nullopt, seed).points;
      } else {
        const auto masks =
            explain::sample_feature_masks(data.dim(), expl_k, seed.sub(0));
        perts.points = perturb::perturb_cloud(base, perts.scheme, std::nullopt,
                                              seed.sub(1), &masks)
                           .points;
      }
      perts.pivot_index.assign(static_cast<std::size_t>(expl_k), 0);
      perts.pivot_source = {-1};
      perts.pivots = x0.transpose();
      kernel_kind = explain::KernelKind::exponential_ambient;
    }
    if (!expl_kernel.empty()) kernel_kind = explain::parse_kernel(expl_kernel);

    const auto expl = explain::lime_explain(
        *model, x0, perts, explain::KernelSpec{kernel_kind, expl_sigma},
        expl_ridge);
    write_json(explain::explanation_to_json(expl), expl_out);
    std::cout << "wrote explanation to " << expl_out << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    json config = load_json(eval_config);
    eval_common.apply(config);
    const auto result = experiments::run_explainer_eval(
        experiments::ExplainerEvalConfig::from_json(config));
    result.write_outputs(eval_common.out_dir);
    std::cout << "wrote evaluation tables to " << eval_common.out_dir << "\n";
    return 0;
  }

  if (disc_cmd->parsed()) {
    json config = load_json(disc_config);
    disc_common.apply(config);
    const auto result = experiments::run_discriminator_test(
        experiments::DiscriminatorConfig::from_json(config));
    result.write_outputs(disc_common.out_dir);
    std::cout << "wrote discriminator tables to " << disc_common.out_dir << "\n";
    return 0;
  }

  if (comp_cmd->parsed()) {
    json config = load_json(comp_config);
    comp_common.apply(config);
    const auto result = experiments::run_bottleneck_comparison(
        experiments::BottleneckConfig::from_json(config));
    result.write_outputs(comp_common.out_dir);
    std::cout << "wrote comparison tables to " << comp_common.out_dir << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
