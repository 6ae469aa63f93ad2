#include "emap/models.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace emap::models {

namespace {

void check_parameters(const Matrix& weights, const Vector& bias) {
  if (weights.cols() < 1 || bias.size() != weights.cols())
    throw std::invalid_argument("model: bias length must equal class count");
  if (!weights.allFinite() || !bias.allFinite())
    throw std::invalid_argument("model: parameters must be finite");
}

void check_batch(const Matrix& batch, Index dim) {
  if (batch.rows() > 0 && batch.cols() != dim)
    throw std::invalid_argument("predict: batch has " +
                                std::to_string(batch.cols()) +
                                " columns, model expects " + std::to_string(dim));
}

Matrix softmax_rows(Matrix scores) {
  for (Index r = 0; r < scores.rows(); ++r) {
    const double peak = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - peak).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  return scores;
}

}  // namespace

LinearModel::LinearModel(Matrix weights, Vector bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
  check_parameters(weights_, bias_);
}

Matrix LinearModel::predict(const Matrix& batch) const {
  check_batch(batch, weights_.rows());
  if (batch.rows() == 0) return Matrix(0, weights_.cols());
  return (batch * weights_).rowwise() + bias_.transpose();
}

LogisticModel::LogisticModel(Matrix weights, Vector bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
  check_parameters(weights_, bias_);
}

Matrix LogisticModel::predict(const Matrix& batch) const {
  check_batch(batch, weights_.rows());
  if (batch.rows() == 0) return Matrix(0, weights_.cols());
  return softmax_rows((batch * weights_).rowwise() + bias_.transpose());
}

std::vector<Index> LogisticModel::active_features(double threshold) const {
  std::vector<Index> active;
  for (Index f = 0; f < weights_.rows(); ++f)
    if (weights_.row(f).cwiseAbs().maxCoeff() > threshold) active.push_back(f);
  return active;
}

std::vector<int> LogisticModel::classify(const Matrix& batch) const {
  const Matrix probs = predict(batch);
  std::vector<int> classes(static_cast<std::size_t>(probs.rows()));
  for (Index r = 0; r < probs.rows(); ++r) {
    Index argmax = 0;
    probs.row(r).maxCoeff(&argmax);
    classes[static_cast<std::size_t>(r)] = static_cast<int>(argmax);
  }
  return classes;
}

LogisticModel train_l1_logistic(const PointCloud& train, double l1_strength,
                                int epochs, double lr, Seed seed,
                                std::vector<double>* loss_history) {
  (void)seed;  // zero initialization + full-batch updates: nothing to draw
  if (!train.labels)
    throw std::invalid_argument("train_l1_logistic: labelled data required");
  if (l1_strength < 0)
    throw std::invalid_argument("train_l1_logistic: l1_strength must be >= 0");
  if (epochs < 1 || !(lr > 0))
    throw std::invalid_argument("train_l1_logistic: bad epochs or lr");

  const Index n = train.size();
  const Index dim = train.dim();

  std::set<int> distinct(train.labels->begin(), train.labels->end());
  if (distinct.size() < 2)
    throw std::invalid_argument("train_l1_logistic: need at least 2 classes");
  std::map<int, Index> class_of;
  for (const int label : distinct)
    class_of.emplace(label, static_cast<Index>(class_of.size()));
  const auto n_classes = static_cast<Index>(distinct.size());

  Matrix onehot = Matrix::Zero(n, n_classes);
  for (Index i = 0; i < n; ++i)
    onehot(i, class_of.at((*train.labels)[static_cast<std::size_t>(i)])) = 1.0;

  Matrix weights = Matrix::Zero(dim, n_classes);
  Vector bias = Vector::Zero(n_classes);
  const double inv_n = 1.0 / static_cast<double>(n);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const Matrix probs =
        softmax_rows((train.points * weights).rowwise() + bias.transpose());
    const Matrix gap = probs - onehot;
    const Matrix grad_w = train.points.transpose() * gap * inv_n;
    const Vector grad_b = gap.colwise().sum().transpose() * inv_n;

    weights -= lr * grad_w;
    bias -= lr * grad_b;
    // proximal step: soft-threshold the weights, leave the bias alone
    const double shrink = lr * l1_strength;
    if (shrink > 0)
      weights = weights.unaryExpr([shrink](double w) {
        if (w > shrink) return w - shrink;
        if (w < -shrink) return w + shrink;
        return 0.0;
      });

    double loss = l1_strength * weights.cwiseAbs().sum();
    const Matrix updated =
        softmax_rows((train.points * weights).rowwise() + bias.transpose());
    for (Index i = 0; i < n; ++i) {
      Index label = 0;
      onehot.row(i).maxCoeff(&label);
      loss -= std::log(std::max(updated(i, label), 1e-300)) * inv_n;
    }
    if (!std::isfinite(loss) || !weights.allFinite() || !bias.allFinite())
      throw std::runtime_error(
          "train_l1_logistic: non-finite loss at epoch " +
          std::to_string(epoch) + " (lr too high?)");
    if (loss_history) loss_history->push_back(loss);
  }
  return LogisticModel(std::move(weights), std::move(bias));
}

namespace {

nlohmann::json weights_to_json(const Matrix& w) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < w.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix weights_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Index>(j.size());
  if (rows == 0) throw std::invalid_argument("model json: empty weights");
  const auto cols = static_cast<Index>(j.at(0).size());
  Matrix w(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      w(r, c) = j.at(static_cast<std::size_t>(r))
                    .at(static_cast<std::size_t>(c))
                    .get<double>();
  return w;
}

}  // namespace

nlohmann::json model_to_json(const BlackBoxModel& model) {
  nlohmann::json j;
  if (const auto* logistic = dynamic_cast<const LogisticModel*>(&model)) {
    j["type"] = "logistic";
    j["weights"] = weights_to_json(logistic->weights());
    j["bias"] = std::vector<double>(
        logistic->bias().data(), logistic->bias().data() + logistic->bias().size());
  } else if (const auto* linear = dynamic_cast<const LinearModel*>(&model)) {
    j["type"] = "linear";
    j["weights"] = weights_to_json(linear->weights());
    j["bias"] = std::vector<double>(
        linear->bias().data(), linear->bias().data() + linear->bias().size());
  } else {
    throw std::invalid_argument("model_to_json: only parametric models serialize");
  }
  j["n_classes"] = model.n_classes();
  return j;
}

std::unique_ptr<BlackBoxModel> model_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  Matrix weights = weights_from_json(j.at("weights"));
  const auto bias_values = j.at("bias").get<std::vector<double>>();
  Vector bias = Eigen::Map<const Vector>(bias_values.data(),
                                         static_cast<Index>(bias_values.size()));
  if (type == "logistic")
    return std::make_unique<LogisticModel>(std::move(weights), std::move(bias));
  if (type == "linear")
    return std::make_unique<LinearModel>(std::move(weights), std::move(bias));
  throw std::invalid_argument("model_from_json: unknown type " + type);
}

void save_model(const BlackBoxModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << model_to_json(model).dump(2) << '\n';
}

std::unique_ptr<BlackBoxModel> load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return model_from_json(j);
}

}  // namespace emap::models
