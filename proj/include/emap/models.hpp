#pragma once

#include "emap/geometry.hpp"

#include <nlohmann/json_fwd.hpp>

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace emap::models {

using geometry::Index;
using geometry::Matrix;
using geometry::PointCloud;
using geometry::Seed;
using geometry::Vector;

/// A batch classifier seen as a black box: rows of points in, rows of
/// per-class outputs back. probabilistic() marks models whose rows form a
/// probability simplex (sum to 1 within 1e-9); raw-score models do not.
class BlackBoxModel {
 public:
  virtual ~BlackBoxModel() = default;

  virtual Matrix predict(const Matrix& batch) const = 0;
  virtual Index n_classes() const = 0;
  virtual Index input_dim() const = 0;  // 0 when unknown
  virtual bool probabilistic() const = 0;
};

/// Affine scores per class, no link function.
class LinearModel : public BlackBoxModel {
 public:
  LinearModel(Matrix weights, Vector bias);  // N x C and C

  Matrix predict(const Matrix& batch) const override;
  Index n_classes() const override { return weights_.cols(); }
  Index input_dim() const override { return weights_.rows(); }
  bool probabilistic() const override { return false; }

  const Matrix& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }

 private:
  Matrix weights_;
  Vector bias_;
};

/// Softmax over affine scores; rows sum to 1.
class LogisticModel : public BlackBoxModel {
 public:
  LogisticModel(Matrix weights, Vector bias);

  Matrix predict(const Matrix& batch) const override;
  Index n_classes() const override { return weights_.cols(); }
  Index input_dim() const override { return weights_.rows(); }
  bool probabilistic() const override { return true; }

  const Matrix& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }

  /// Features with any class weight of magnitude above the threshold: the
  /// model's own explanatory feature set.
  std::vector<Index> active_features(double threshold = 1e-8) const;

  /// Class index for each row of a batch (argmax, ties to the lower index).
  std::vector<int> classify(const Matrix& batch) const;

 private:
  Matrix weights_;
  Vector bias_;
};

/// L1-regularized multinomial logistic regression by proximal gradient
/// descent (ISTA): full-batch softmax gradient steps followed by
/// soft-thresholding of the weights (the bias is unpenalized). Training is
/// deterministic; the seed parameter is part of the call contract but the
/// zero initialization leaves it unused. Distinct labels are mapped to class
/// indices in ascending order. loss_history, when given, receives the
/// objective after every epoch.
LogisticModel train_l1_logistic(const PointCloud& train, double l1_strength,
                                int epochs, double lr, Seed seed,
                                std::vector<double>* loss_history = nullptr);

nlohmann::json model_to_json(const BlackBoxModel& model);
std::unique_ptr<BlackBoxModel> model_from_json(const nlohmann::json& j);
void save_model(const BlackBoxModel& model, const std::string& path);
std::unique_ptr<BlackBoxModel> load_model(const std::string& path);

/// Errors from the subprocess bridge, one type per failure kind.
class SubprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class SubprocessExitError : public SubprocessError {
 public:
  using SubprocessError::SubprocessError;
};
class SubprocessProtocolError : public SubprocessError {
 public:
  using SubprocessError::SubprocessError;
};
class SubprocessTimeoutError : public SubprocessError {
 public:
  using SubprocessError::SubprocessError;
};

/// Bridges predict() to a child process speaking newline-delimited JSON:
/// one request object {"id": u64, "points": [[...], ...]} per line on the
/// child's stdin, one response {"id": u64, "probs": [[...], ...]} per line on
/// its stdout, ids echoed back in order. The process is launched once and
/// reused; concurrent callers are serialized.
class SubprocessModel : public BlackBoxModel {
 public:
  explicit SubprocessModel(
      const std::string& command,
      std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~SubprocessModel() override;

  SubprocessModel(const SubprocessModel&) = delete;
  SubprocessModel& operator=(const SubprocessModel&) = delete;

  Matrix predict(const Matrix& batch) const override;
  /// Learned from the first response; 0 before any call.
  Index n_classes() const override;
  Index input_dim() const override { return 0; }
  bool probabilistic() const override { return true; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace emap::models
