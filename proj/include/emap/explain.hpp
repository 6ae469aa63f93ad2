#pragma once

#include "emap/geometry.hpp"
#include "emap/models.hpp"
#include "emap/perturb.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace emap::explain {

using geometry::Index;
using geometry::Matrix;
using geometry::Seed;
using geometry::Vector;

enum class KernelKind { exponential_lowdim, exponential_ambient, uniform };

KernelKind parse_kernel(const std::string& name);
std::string kernel_name(KernelKind kind);

/// width <= 0 selects the median heuristic: the median of the distances the
/// kernel operates on (low-dimensional for exponential_lowdim, ambient
/// otherwise).
struct KernelSpec {
  KernelKind kind = KernelKind::exponential_lowdim;
  double width = 0.0;
};

/// Linear surrogate in the per-feature deltas x0 - x~, with intercept. On the
/// delta parameterization a model that rewards a feature's presence gets a
/// negative weight (removing the feature raises the delta and lowers the
/// output), so support_weights() flips the sign to the usual
/// "positive = supports the prediction" convention used by erasure metrics.
struct Explanation {
  Vector feature_weights;
  double intercept = 0.0;
  double kernel_width = 0.0;
  std::string scheme;
  int target_class = 0;

  Explanation with_support_weights() const {
    Explanation support = *this;
    support.feature_weights = -feature_weights;
    return support;
  }
};

/// Weighted ridge fit of the target-class output against the deltas:
/// min_g sum_i pi(x~_i) (f(x~_i) - g . (x0 - x~_i) - c)^2 + lambda ||g||^2,
/// solved in closed form by the normal equations. The intercept is not
/// penalized. With lambda = 0 a rank-deficient design is an error (the rank
/// is reported); with lambda > 0 degenerate designs yield zero weights.
/// target_class = -1 selects argmax f(x0).
Explanation lime_explain(const models::BlackBoxModel& model, const Vector& x0,
                         const perturb::PerturbationSet& perts,
                         KernelSpec kernel, double ridge_lambda,
                         int target_class = -1);

struct LogOddsResult {
  double score = 0.0;
  bool clamped = false;  // a probability hit 0 or 1 and was clamped
};

/// Erases (sets to baseline_value) the features holding the top-fraction
/// largest strictly positive weights, then reports the drop in
/// log(p / (1 - p)) for the explanation's target class. Higher is better.
/// With no positive weights nothing is erased and the score is 0.
LogOddsResult log_odds_score(const models::BlackBoxModel& model,
                             const Vector& x0, const Explanation& expl,
                             double top_fraction, double baseline_value);

struct NoiseSpec {
  double radius = 0.0;  // isotropic Gaussian, expected norm ~ radius
};

/// Monte-Carlo estimate of E[(I . g - (f(x0) - f(x0 - I)))^2] over noise
/// draws I. Lower is better.
double infidelity_score(const models::BlackBoxModel& model, const Vector& x0,
                        const Explanation& expl, NoiseSpec noise, int n_draws,
                        Seed seed);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

/// Top-k features by |weight| (ties to the lower index) against a ground-truth
/// feature set.
PrecisionRecall precision_recall(const Explanation& expl,
                                 const std::vector<Index>& ground_truth,
                                 int top_k);

/// Random feature subsets for the masked baselines: each feature is included
/// independently with probability one half.
perturb::FeatureMasks sample_feature_masks(Index n_features, Index k, Seed seed);

nlohmann::json explanation_to_json(const Explanation& expl);
Explanation explanation_from_json(const nlohmann::json& j);

}  // namespace emap::explain
