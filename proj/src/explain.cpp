#include "emap/explain.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace emap::explain {

KernelKind parse_kernel(const std::string& name) {
  if (name == "exponential_lowdim") return KernelKind::exponential_lowdim;
  if (name == "exponential_ambient") return KernelKind::exponential_ambient;
  if (name == "uniform") return KernelKind::uniform;
  throw std::invalid_argument("unknown kernel: " + name);
}

std::string kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::exponential_lowdim: return "exponential_lowdim";
    case KernelKind::exponential_ambient: return "exponential_ambient";
    case KernelKind::uniform: return "uniform";
  }
  throw std::invalid_argument("unknown kernel enum value");
}

namespace {

double median(std::vector<double> values) {
  if (values.empty()) return 1.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  const double m = values.size() % 2 == 1
                       ? values[mid]
                       : 0.5 * (values[mid - 1] + values[mid]);
  return m > 0 ? m : 1.0;
}

int resolve_target(const models::BlackBoxModel& model, const Vector& x0,
                   int target_class) {
  if (target_class >= 0) return target_class;
  const Matrix out = model.predict(x0.transpose());
  Index argmax = 0;
  out.row(0).maxCoeff(&argmax);
  return static_cast<int>(argmax);
}

double log_odds(double p, bool& clamped) {
  if (p <= 0.0 || p >= 1.0) clamped = true;
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

}  // namespace

Explanation lime_explain(const models::BlackBoxModel& model, const Vector& x0,
                         const perturb::PerturbationSet& perts,
                         KernelSpec kernel, double ridge_lambda,
                         int target_class) {
  const Index k = perts.points.rows();
  if (k < 1) throw std::invalid_argument("lime_explain: empty perturbation set");
  const Index dim = x0.size();
  if (perts.points.cols() != dim)
    throw std::invalid_argument("lime_explain: dimension mismatch");
  if (ridge_lambda < 0)
    throw std::invalid_argument("lime_explain: ridge lambda must be >= 0");

  const int target = resolve_target(model, x0, target_class);
  const Matrix outputs = model.predict(perts.points);
  if (target >= outputs.cols())
    throw std::invalid_argument("lime_explain: target class out of range");
  const Vector y = outputs.col(target);

  // Kernel distances: low-dimensional for EMaP sets, ambient otherwise.
  std::vector<double> distances(static_cast<std::size_t>(k), 0.0);
  if (kernel.kind == KernelKind::exponential_lowdim) {
    if (perts.low_dim_distances.size() != k)
      throw std::invalid_argument(
          "lime_explain: exponential_lowdim needs low-dim distances in the "
          "perturbation set");
    for (Index i = 0; i < k; ++i)
      distances[static_cast<std::size_t>(i)] = perts.low_dim_distances(i);
  } else if (kernel.kind == KernelKind::exponential_ambient) {
    for (Index i = 0; i < k; ++i)
      distances[static_cast<std::size_t>(i)] =
          (perts.points.row(i).transpose() - x0).norm();
  }

  double width = kernel.width;
  Vector weights = Vector::Ones(k);
  if (kernel.kind != KernelKind::uniform) {
    if (width <= 0) width = median(distances);
    for (Index i = 0; i < k; ++i) {
      const double d = distances[static_cast<std::size_t>(i)];
      weights(i) = std::exp(-(d * d) / (width * width));
    }
  }

  // Design matrix on deltas, plus intercept column.
  Matrix design(k, dim + 1);
  for (Index i = 0; i < k; ++i) {
    design.row(i).head(dim) = (x0 - perts.points.row(i).transpose()).transpose();
    design(i, dim) = 1.0;
  }

  const Matrix weighted = weights.asDiagonal() * design;
  Matrix normal = design.transpose() * weighted;
  const Vector rhs = weighted.transpose() * y;

  if (ridge_lambda == 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(
        weights.cwiseSqrt().asDiagonal() * design);
    if (qr.rank() < dim + 1)
      throw std::runtime_error(
          "lime_explain: singular normal matrix with lambda = 0 (rank " +
          std::to_string(qr.rank()) + " of " + std::to_string(dim + 1) + ")");
  } else {
    normal.topLeftCorner(dim, dim) +=
        ridge_lambda * Matrix::Identity(dim, dim);
  }
  const Vector solution = normal.ldlt().solve(rhs);

  Explanation expl;
  expl.feature_weights = solution.head(dim);
  expl.intercept = solution(dim);
  expl.kernel_width = kernel.kind == KernelKind::uniform ? 0.0 : width;
  expl.scheme = perturb::scheme_name(perts.scheme.kind);
  expl.target_class = target;
  return expl;
}

LogOddsResult log_odds_score(const models::BlackBoxModel& model,
                             const Vector& x0, const Explanation& expl,
                             double top_fraction, double baseline_value) {
  if (!(top_fraction > 0) || top_fraction > 1)
    throw std::invalid_argument("log_odds_score: top_fraction in (0, 1]");
  const Index dim = x0.size();
  if (expl.feature_weights.size() != dim)
    throw std::invalid_argument("log_odds_score: explanation dimension mismatch");

  // Candidates are the strictly positive weights, best first.
  std::vector<Index> order;
  for (Index f = 0; f < dim; ++f)
    if (expl.feature_weights(f) > 0) order.push_back(f);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double wa = expl.feature_weights(a);
    const double wb = expl.feature_weights(b);
    return wa > wb || (wa == wb && a < b);
  });
  const auto wanted =
      static_cast<std::size_t>(std::llround(top_fraction * static_cast<double>(dim)));
  const std::size_t n_erase = std::min(order.size(), wanted);

  Vector modified = x0;
  for (std::size_t i = 0; i < n_erase; ++i) modified(order[i]) = baseline_value;

  Matrix batch(2, dim);
  batch.row(0) = x0.transpose();
  batch.row(1) = modified.transpose();
  const Matrix probs = model.predict(batch);
  const auto target = static_cast<Index>(expl.target_class);

  LogOddsResult result;
  result.score = log_odds(probs(0, target), result.clamped) -
                 log_odds(probs(1, target), result.clamped);
  return result;
}

double infidelity_score(const models::BlackBoxModel& model, const Vector& x0,
                        const Explanation& expl, NoiseSpec noise, int n_draws,
                        Seed seed) {
  if (n_draws < 1)
    throw std::invalid_argument("infidelity_score: n_draws must be >= 1");
  const Index dim = x0.size();
  if (expl.feature_weights.size() != dim)
    throw std::invalid_argument("infidelity_score: explanation dimension mismatch");

  geometry::Rng rng(seed);
  Matrix probes(n_draws + 1, dim);
  Matrix draws(n_draws, dim);
  probes.row(0) = x0.transpose();
  for (int i = 0; i < n_draws; ++i) {
    const Vector draw = rng.isotropic_noise(dim, noise.radius);
    draws.row(i) = draw.transpose();
    probes.row(i + 1) = (x0 - draw).transpose();
  }
  const Matrix outputs = model.predict(probes);
  const auto target = static_cast<Index>(expl.target_class);
  const double f_x0 = outputs(0, target);

  double total = 0.0;
  for (int i = 0; i < n_draws; ++i) {
    const double predicted = draws.row(i) * expl.feature_weights;
    const double actual = f_x0 - outputs(i + 1, target);
    total += (predicted - actual) * (predicted - actual);
  }
  return total / static_cast<double>(n_draws);
}

PrecisionRecall precision_recall(const Explanation& expl,
                                 const std::vector<Index>& ground_truth,
                                 int top_k) {
  if (ground_truth.empty())
    throw std::invalid_argument("precision_recall: empty ground truth");
  if (top_k < 1)
    throw std::invalid_argument("precision_recall: top_k must be >= 1");

  const Index dim = expl.feature_weights.size();
  std::vector<Index> order(static_cast<std::size_t>(dim));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double wa = std::abs(expl.feature_weights(a));
    const double wb = std::abs(expl.feature_weights(b));
    return wa > wb || (wa == wb && a < b);
  });
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(top_k),
                                       order.size());

  std::size_t overlap = 0;
  for (std::size_t i = 0; i < k; ++i)
    if (std::find(ground_truth.begin(), ground_truth.end(), order[i]) !=
        ground_truth.end())
      ++overlap;

  PrecisionRecall pr;
  pr.precision = static_cast<double>(overlap) / static_cast<double>(top_k);
  pr.recall = static_cast<double>(overlap) / static_cast<double>(ground_truth.size());
  return pr;
}

perturb::FeatureMasks sample_feature_masks(Index n_features, Index k, Seed seed) {
  geometry::Rng rng(seed);
  perturb::FeatureMasks masks(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i)
    for (Index f = 0; f < n_features; ++f)
      if (rng.uniform() < 0.5) masks[static_cast<std::size_t>(i)].push_back(f);
  return masks;
}

nlohmann::json explanation_to_json(const Explanation& expl) {
  nlohmann::json j;
  j["weights"] = std::vector<double>(
      expl.feature_weights.data(),
      expl.feature_weights.data() + expl.feature_weights.size());
  j["intercept"] = expl.intercept;
  j["sigma"] = expl.kernel_width;
  j["scheme"] = expl.scheme;
  j["target_class"] = expl.target_class;
  return j;
}

Explanation explanation_from_json(const nlohmann::json& j) {
  Explanation expl;
  const auto weights = j.at("weights").get<std::vector<double>>();
  expl.feature_weights = Eigen::Map<const Vector>(
      weights.data(), static_cast<Index>(weights.size()));
  expl.intercept = j.at("intercept").get<double>();
  expl.kernel_width = j.at("sigma").get<double>();
  expl.scheme = j.at("scheme").get<std::string>();
  expl.target_class = j.at("target_class").get<int>();
  return expl;
}

}  // namespace emap::explain
