#include "emap/experiments.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace emap;
using experiments::BottleneckConfig;
using experiments::DatasetSpec;
using experiments::DiscriminatorConfig;
using experiments::ExplainerEvalConfig;
using experiments::GhValidationConfig;
using geometry::Index;

namespace {

DatasetSpec synthetic(geometry::SyntheticShape shape, Index n, double noise) {
  DatasetSpec spec;
  spec.shape = shape;
  spec.n_points = n;
  spec.data_noise = noise;
  return spec;
}

double cell_as_double(const std::string& cell) {
  return geometry::parse_double(cell);
}

}  // namespace

TEST_CASE("zero-radius perturbations give zero bottleneck distances") {
  BottleneckConfig config;
  config.dataset = synthetic(geometry::SyntheticShape::line, 40, 0.05);
  config.schemes = {perturb::SchemeKind::gaussian};
  config.radius = 0.0;
  config.n_trials = 2;
  config.low_dim = 1;
  const auto result = experiments::run_bottleneck_comparison(config);
  REQUIRE(result.trials.rows.size() == 2);
  for (const auto& row : result.trials.rows) {
    CHECK(cell_as_double(row[4]) == 0.0);  // h0
    CHECK(cell_as_double(row[5]) == 0.0);  // h1
    CHECK(row[6] == "ok");
  }
}

TEST_CASE("bottleneck comparison output is deterministic across reruns and workers") {
  BottleneckConfig config;
  config.dataset = synthetic(geometry::SyntheticShape::circle, 60, 0.05);
  config.schemes = {perturb::SchemeKind::orthogonal,
                    perturb::SchemeKind::projection};
  config.radius = 0.05;
  config.n_trials = 6;
  config.master_seed = 77;

  config.workers = 1;
  const auto serial = experiments::run_bottleneck_comparison(config);
  const auto serial_again = experiments::run_bottleneck_comparison(config);
  CHECK(serial.trials.to_csv() == serial_again.trials.to_csv());
  CHECK(serial.summary.to_csv() == serial_again.summary.to_csv());

  config.workers = 4;
  const auto pooled = experiments::run_bottleneck_comparison(config);
  CHECK(serial.trials.to_csv() == pooled.trials.to_csv());
  CHECK(serial.summary.to_csv() == pooled.summary.to_csv());
}

TEST_CASE("budget overruns are recorded per trial without aborting the run") {
  BottleneckConfig config;
  config.dataset = synthetic(geometry::SyntheticShape::circle, 80, 0.05);
  config.schemes = {perturb::SchemeKind::gaussian};
  config.radius = 0.05;
  config.n_trials = 2;
  config.simplex_budget = 50;
  const auto result = experiments::run_bottleneck_comparison(config);
  REQUIRE(result.trials.rows.size() == 2);
  for (const auto& row : result.trials.rows) {
    CHECK(row[6].find("budget_exceeded") != std::string::npos);
    CHECK(row[4].empty());
  }
}

TEST_CASE("orthogonal beats projection on a quick concentric-circles run") {
  BottleneckConfig config;
  config.dataset =
      synthetic(geometry::SyntheticShape::two_concentric_circles, 120, 0.01);
  config.schemes = {perturb::SchemeKind::orthogonal,
                    perturb::SchemeKind::projection};
  config.radius = 0.1;
  config.n_trials = 8;
  config.master_seed = 3;
  const auto result = experiments::run_bottleneck_comparison(config);
  // orthogonal row carries the win rates
  REQUIRE(result.summary.rows.size() == 2);
  const auto& orth_row = result.summary.rows[0];
  REQUIRE(orth_row[0] == "orthogonal");
  const double win_h1 = cell_as_double(orth_row[7]);
  CHECK(win_h1 >= 0.75);
}

TEST_CASE("outputs land on disk with stable bytes") {
  BottleneckConfig config;
  config.dataset = synthetic(geometry::SyntheticShape::line, 30, 0.05);
  config.schemes = {perturb::SchemeKind::gaussian};
  config.radius = 0.02;
  config.n_trials = 2;
  config.low_dim = 1;
  const auto result = experiments::run_bottleneck_comparison(config);

  const auto dir = (std::filesystem::temp_directory_path() / "emap_out").string();
  std::filesystem::remove_all(dir);
  result.write_outputs(dir);
  CHECK(std::filesystem::exists(dir + "/trials.csv"));
  CHECK(std::filesystem::exists(dir + "/summary.csv"));
  CHECK(std::filesystem::exists(dir + "/meta.json"));

  std::ifstream in(dir + "/trials.csv", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  CHECK(bytes == result.trials.to_csv());
  std::filesystem::remove_all(dir);
}

TEST_CASE("summary means can be recomputed from the trial rows") {
  BottleneckConfig config;
  config.dataset = synthetic(geometry::SyntheticShape::circle, 50, 0.05);
  config.schemes = {perturb::SchemeKind::orthogonal};
  config.radius = 0.05;
  config.n_trials = 5;
  const auto result = experiments::run_bottleneck_comparison(config);

  double total = 0.0;
  int count = 0;
  for (const auto& row : result.trials.rows) {
    total += cell_as_double(row[4]);
    ++count;
  }
  const double recomputed = total / count;
  CHECK(cell_as_double(result.summary.rows[0][2]) ==
        doctest::Approx(recomputed).epsilon(1e-15));
}

TEST_CASE("gh validation passes every in-regime trial") {
  GhValidationConfig config;
  config.n_trials = 15;
  config.n_points = 5;
  config.master_seed = 11;
  const auto result = experiments::run_gh_validation(config);
  REQUIRE(result.trials.rows.size() == 15);
  for (const auto& row : result.trials.rows) CHECK(row[8] == "pass");
  CHECK(result.summary.rows[0][3] == geometry::format_double(1.0));
}

TEST_CASE("gh validation rejects degenerate configs") {
  GhValidationConfig config;
  config.n_points = 1;
  CHECK_THROWS_AS(experiments::run_gh_validation(config), std::invalid_argument);
  config.n_points = 9;
  CHECK_THROWS_AS(experiments::run_gh_validation(config), std::invalid_argument);
}

TEST_CASE("gh validation marks oversized radii out-of-regime, not failed") {
  GhValidationConfig config;
  config.n_trials = 4;
  config.r_fraction = 1.5;
  const auto result = experiments::run_gh_validation(config);
  for (const auto& row : result.trials.rows) CHECK(row[8] == "out_of_regime");
  CHECK(result.summary.rows[0][1] == "0");  // nothing in regime
}

TEST_CASE("explainer eval emits per-scheme rows and flags small budgets") {
  ExplainerEvalConfig config;
  config.n_runs = 2;
  config.n_perturbations = 60;
  config.schemes = {perturb::SchemeKind::orthogonal,
                    perturb::SchemeKind::zero_mask};
  config.train_epochs = 150;
  config.master_seed = 5;
  const auto result = experiments::run_explainer_eval(config);
  CHECK(result.trials.rows.size() == 4);
  CHECK(result.meta.contains("warnings"));
  CHECK(result.summary.rows.size() == 2);
}

TEST_CASE("explainer eval with zero runs yields an empty table") {
  ExplainerEvalConfig config;
  config.n_runs = 0;
  const auto result = experiments::run_explainer_eval(config);
  CHECK(result.trials.rows.empty());
}

TEST_CASE("discriminator cannot tell identical pools apart") {
  DiscriminatorConfig config;
  config.dataset =
      synthetic(geometry::SyntheticShape::two_concentric_circles, 200, 0.002);
  config.radius = 0.0;
  config.n_reruns = 2;
  config.schemes = {perturb::SchemeKind::orthogonal};
  const auto result = experiments::run_discriminator_test(config);
  for (const auto& row : result.trials.rows)
    CHECK(cell_as_double(row[5]) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("huge gaussian perturbations are trivially detectable") {
  DiscriminatorConfig config;
  config.dataset =
      synthetic(geometry::SyntheticShape::two_concentric_circles, 200, 0.002);
  config.radius = 10.0;  // ten times the data scale
  config.n_reruns = 2;
  config.schemes = {perturb::SchemeKind::gaussian};
  const auto result = experiments::run_discriminator_test(config);
  // a few draws of the radius-10 noise model land near the data, so "near
  // 100%" still has an irreducible tail
  for (const auto& row : result.trials.rows)
    CHECK(cell_as_double(row[3]) > 0.9);  // TP rate
}

TEST_CASE("discriminator rejects pools that are too small") {
  DiscriminatorConfig config;
  config.dataset = synthetic(geometry::SyntheticShape::circle, 30, 0.002);
  config.n_reruns = 1;
  CHECK_THROWS_WITH_AS(experiments::run_discriminator_test(config),
                       doctest::Contains("too small"), std::invalid_argument);
}

TEST_CASE("explainer eval and discriminator outputs are worker-independent") {
  ExplainerEvalConfig eval_config;
  eval_config.n_runs = 2;
  eval_config.n_perturbations = 40;
  eval_config.train_epochs = 120;
  eval_config.schemes = {perturb::SchemeKind::orthogonal};
  eval_config.master_seed = 13;
  eval_config.workers = 1;
  const auto eval_serial = experiments::run_explainer_eval(eval_config);
  eval_config.workers = 4;
  const auto eval_pooled = experiments::run_explainer_eval(eval_config);
  CHECK(eval_serial.trials.to_csv() == eval_pooled.trials.to_csv());

  DiscriminatorConfig disc_config;
  disc_config.dataset =
      synthetic(geometry::SyntheticShape::two_concentric_circles, 120, 0.002);
  disc_config.radius = 0.001;
  disc_config.n_reruns = 2;
  disc_config.train_epochs = 200;
  disc_config.schemes = {perturb::SchemeKind::orthogonal};
  disc_config.master_seed = 13;
  disc_config.workers = 1;
  const auto disc_serial = experiments::run_discriminator_test(disc_config);
  disc_config.workers = 4;
  const auto disc_pooled = experiments::run_discriminator_test(disc_config);
  CHECK(disc_serial.trials.to_csv() == disc_pooled.trials.to_csv());
}

TEST_CASE("dataset specs validate referenced files") {
  nlohmann::json j{{"csv", "/nonexistent/emap_missing.csv"}};
  CHECK_THROWS_AS(DatasetSpec::from_json(j), std::invalid_argument);
}

TEST_CASE("config json round trips preserve the experiment parameters") {
  BottleneckConfig config;
  config.dataset = synthetic(geometry::SyntheticShape::spiral, 300, 0.02);
  config.radius = 0.05;
  config.n_trials = 7;
  config.master_seed = 99;
  const auto back = BottleneckConfig::from_json(config.to_json());
  CHECK(back.radius == config.radius);
  CHECK(back.n_trials == config.n_trials);
  CHECK(back.master_seed == config.master_seed);
  CHECK(back.dataset.n_points == 300);
}
