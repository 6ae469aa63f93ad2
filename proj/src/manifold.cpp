#include "emap/manifold.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace emap::manifold {

namespace {

// Flip each column so its largest-magnitude entry is positive. Removes the
// sign ambiguity of eigenvectors and QR factors.
void canonicalize_columns(Matrix& m) {
  for (Index c = 0; c < m.cols(); ++c) {
    Index argmax = 0;
    m.col(c).cwiseAbs().maxCoeff(&argmax);
    if (m(argmax, c) < 0) m.col(c) = -m.col(c);
  }
}

Matrix thin_orthonormal(const Matrix& g) {
  Eigen::ColPivHouseholderQR<Matrix> qr(g);
  if (qr.rank() < g.cols())
    throw std::runtime_error(
        "fit_local_subspace: rank-deficient reconstruction matrix (rank " +
        std::to_string(qr.rank()) + " of " + std::to_string(g.cols()) + ")");
  Eigen::HouseholderQR<Matrix> plain(g);
  Matrix q = plain.householderQ() * Matrix::Identity(g.rows(), g.cols());
  const Matrix r = plain.matrixQR().topRows(g.cols());
  for (Index c = 0; c < g.cols(); ++c)
    if (r(c, c) < 0) q.col(c) = -q.col(c);
  return q;
}

struct CenteredFit {
  Vector target_mean;
  Vector low_mean;
  Matrix g;  // N x V

  Vector reconstruct(const Vector& low) const {
    return target_mean + g * (low - low_mean);
  }
};

// argmin_G sum_i || (t_i - t_mean) - G (w_i - w_mean) ||, by normal equations
// on the centered data. Throws when the low-dim sample matrix spans fewer
// than V directions.
CenteredFit solve_centered(const Matrix& targets, const Matrix& low,
                           const char* context) {
  CenteredFit fit;
  fit.target_mean = targets.colwise().mean();
  fit.low_mean = low.colwise().mean();
  const Matrix tc = targets.rowwise() - fit.target_mean.transpose();
  const Matrix lc = low.rowwise() - fit.low_mean.transpose();

  Eigen::ColPivHouseholderQR<Matrix> qr(lc);
  if (qr.rank() < lc.cols())
    throw std::runtime_error(
        std::string(context) +
        ": rank-deficient low-dim sample matrix (fewer than " +
        std::to_string(lc.cols()) + " independent directions)");

  const Matrix gram = lc.transpose() * lc;
  fit.g = (gram.ldlt().solve(lc.transpose() * tc)).transpose();
  return fit;
}

}  // namespace

Mapper Mapper::fit_linear_pca(const PointCloud& train, Index low_dim) {
  const Index n = train.size();
  const Index ambient = train.dim();
  if (low_dim < 1) throw std::invalid_argument("fit_mapper: low_dim must be >= 1");
  if (low_dim >= ambient)
    throw std::invalid_argument("fit_mapper: low_dim must be below ambient dim");
  if (n <= low_dim)
    throw std::invalid_argument("fit_mapper: need more training points than low_dim");

  Mapper m;
  m.kind_ = MapperKind::linear_pca;
  m.ambient_dim_ = ambient;
  m.low_dim_ = low_dim;
  m.mean_ = train.points.colwise().mean();
  const Matrix centered = train.points.rowwise() - m.mean_.transpose();

  Eigen::SelfAdjointEigenSolver<Matrix> eigen(centered.transpose() * centered);
  if (eigen.info() != Eigen::Success)
    throw std::runtime_error("fit_mapper: eigendecomposition failed");
  // Eigenvalues come out ascending; take the trailing V columns, largest first.
  Matrix basis(ambient, low_dim);
  for (Index c = 0; c < low_dim; ++c)
    basis.col(c) = eigen.eigenvectors().col(ambient - 1 - c);
  canonicalize_columns(basis);
  m.basis_ = std::move(basis);
  return m;
}

Mapper Mapper::from_embedding(const PointCloud& train, Matrix low_coords,
                              int k_nn) {
  if (low_coords.rows() != train.size())
    throw std::invalid_argument(
        "from_embedding: embedding row count (" +
        std::to_string(low_coords.rows()) + ") does not match training points (" +
        std::to_string(train.size()) + ")");
  if (low_coords.cols() < 1 || low_coords.cols() >= train.dim())
    throw std::invalid_argument("from_embedding: need 1 <= V < N");
  if (k_nn < 1) throw std::invalid_argument("from_embedding: k_nn must be >= 1");

  Mapper m;
  m.kind_ = MapperKind::file_embedding;
  m.ambient_dim_ = train.dim();
  m.low_dim_ = low_coords.cols();
  m.train_points_ = train.points;
  m.train_low_ = std::move(low_coords);
  m.k_nn_ = k_nn;
  return m;
}

Mapper Mapper::from_embedding_file(const PointCloud& train,
                                   const std::string& path, int k_nn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream stream(line);
    std::string cell;
    while (std::getline(stream, cell, ','))
      row.push_back(geometry::parse_double(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(path + ": ragged embedding row " +
                               std::to_string(rows.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": empty embedding file");
  Matrix low(static_cast<Index>(rows.size()),
             static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows.front().size(); ++c)
      low(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return from_embedding(train, std::move(low), k_nn);
}

Mapper fit_mapper(const PointCloud& train, Index low_dim, MapperKind kind,
                  const std::string& embedding_path, int k_nn) {
  if (kind == MapperKind::linear_pca)
    return Mapper::fit_linear_pca(train, low_dim);
  Mapper m = Mapper::from_embedding_file(train, embedding_path, k_nn);
  if (m.low_dim() != low_dim)
    throw std::invalid_argument("fit_mapper: embedding file has V = " +
                                std::to_string(m.low_dim()) + ", expected " +
                                std::to_string(low_dim));
  return m;
}

namespace {

// Neighbor weights for the file-embedding transform: 1 / (d + eps),
// normalized. An exact hit short-circuits to that row.
struct NeighborWeights {
  std::vector<Index> idx;
  std::vector<double> w;
  Index exact = -1;
};

NeighborWeights neighbor_weights(const Matrix& train, const Vector& x, int k_nn) {
  const Index n = train.rows();
  NeighborWeights out;
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    dist[static_cast<std::size_t>(i)] = (train.row(i).transpose() - x).norm();
    if (dist[static_cast<std::size_t>(i)] == 0.0) {
      out.exact = i;
      return out;
    }
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const auto k = std::min<Index>(k_nn, n);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&dist](Index a, Index b) {
                      const double da = dist[static_cast<std::size_t>(a)];
                      const double db = dist[static_cast<std::size_t>(b)];
                      return da < db || (da == db && a < b);
                    });
  double total = 0.0;
  for (Index i = 0; i < k; ++i) {
    const Index t = order[static_cast<std::size_t>(i)];
    const double weight = 1.0 / (dist[static_cast<std::size_t>(t)] + 1e-12);
    out.idx.push_back(t);
    out.w.push_back(weight);
    total += weight;
  }
  for (auto& weight : out.w) weight /= total;
  return out;
}

}  // namespace

Vector Mapper::transform(const Vector& x) const {
  if (x.size() != ambient_dim_)
    throw std::invalid_argument("transform: input has dimension " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(ambient_dim_));
  if (kind_ == MapperKind::linear_pca) return basis_.transpose() * (x - mean_);

  const auto nb = neighbor_weights(train_points_, x, k_nn_);
  if (nb.exact >= 0) return train_low_.row(nb.exact);
  Vector low = Vector::Zero(low_dim_);
  for (std::size_t i = 0; i < nb.idx.size(); ++i)
    low += nb.w[i] * train_low_.row(nb.idx[i]).transpose();
  return low;
}

Matrix Mapper::transform_rows(const Matrix& rows) const {
  Matrix out(rows.rows(), low_dim_);
  for (Index r = 0; r < rows.rows(); ++r)
    out.row(r) = transform(rows.row(r).transpose()).transpose();
  return out;
}

Vector Mapper::lift(const Vector& x) const {
  if (x.size() != ambient_dim_)
    throw std::invalid_argument("lift: dimension mismatch");
  if (kind_ == MapperKind::linear_pca)
    return mean_ + basis_ * (basis_.transpose() * (x - mean_));

  const auto nb = neighbor_weights(train_points_, x, k_nn_);
  if (nb.exact >= 0) return train_points_.row(nb.exact);
  Vector ambient = Vector::Zero(ambient_dim_);
  for (std::size_t i = 0; i < nb.idx.size(); ++i)
    ambient += nb.w[i] * train_points_.row(nb.idx[i]).transpose();
  return ambient;
}

const Vector& Mapper::mean() const {
  if (kind_ != MapperKind::linear_pca)
    throw std::logic_error("mean() is only defined for linear_pca mappers");
  return mean_;
}

const Matrix& Mapper::basis() const {
  if (kind_ != MapperKind::linear_pca)
    throw std::logic_error("basis() is only defined for linear_pca mappers");
  return basis_;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  const Index cols = static_cast<Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      m(r, c) = j.at(static_cast<std::size_t>(r))
                    .at(static_cast<std::size_t>(c))
                    .get<double>();
  return m;
}

}  // namespace

nlohmann::json Mapper::to_json() const {
  nlohmann::json j;
  j["ambient_dim"] = ambient_dim_;
  j["low_dim"] = low_dim_;
  if (kind_ == MapperKind::linear_pca) {
    j["kind"] = "linear_pca";
    j["mean"] = std::vector<double>(mean_.data(), mean_.data() + mean_.size());
    j["basis"] = matrix_to_json(basis_);
  } else {
    j["kind"] = "file_embedding";
    j["k_nn"] = k_nn_;
    j["train_points"] = matrix_to_json(train_points_);
    j["train_low"] = matrix_to_json(train_low_);
  }
  return j;
}

Mapper Mapper::from_json(const nlohmann::json& j) {
  Mapper m;
  m.ambient_dim_ = j.at("ambient_dim").get<Index>();
  m.low_dim_ = j.at("low_dim").get<Index>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear_pca") {
    m.kind_ = MapperKind::linear_pca;
    const auto mean = j.at("mean").get<std::vector<double>>();
    m.mean_ = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
    m.basis_ = matrix_from_json(j.at("basis"));
  } else if (kind == "file_embedding") {
    m.kind_ = MapperKind::file_embedding;
    m.k_nn_ = j.at("k_nn").get<int>();
    m.train_points_ = matrix_from_json(j.at("train_points"));
    m.train_low_ = matrix_from_json(j.at("train_low"));
  } else {
    throw std::invalid_argument("Mapper::from_json: unknown kind " + kind);
  }
  return m;
}

LocalSubspace fit_local_subspace(const Mapper& mapper, const Vector& x,
                                 Index k_T, double r_T, Seed seed) {
  const Index ambient = mapper.ambient_dim();
  const Index low = mapper.low_dim();
  if (x.size() != ambient)
    throw std::invalid_argument("fit_local_subspace: dimension mismatch");
  if (!(r_T > 0))
    throw std::invalid_argument("fit_local_subspace: r_T must be positive");
  if (k_T < low + 1)
    throw std::invalid_argument(
        "fit_local_subspace: k_T must be at least V + 1 (centering consumes "
        "one sample)");

  geometry::Rng rng(seed);
  Matrix targets(k_T, ambient);
  Matrix low_rows(k_T, low);
  for (Index i = 0; i < k_T; ++i) {
    const Vector sample = x + rng.isotropic_noise(ambient, r_T);
    targets.row(i) = mapper.lift(sample).transpose();
    low_rows.row(i) = mapper.transform(sample).transpose();
  }

  const CenteredFit fit = solve_centered(targets, low_rows, "fit_local_subspace");

  double residual = 0.0;
  for (Index i = 0; i < k_T; ++i)
    residual +=
        (fit.reconstruct(low_rows.row(i).transpose()) - targets.row(i).transpose())
            .norm();
  residual /= static_cast<double>(k_T);

  LocalSubspace subspace;
  subspace.base_point = fit.target_mean;
  subspace.basis = thin_orthonormal(fit.g);
  subspace.fit_residual = residual;
  return subspace;
}

Lemma2Result lemma2_gap(const Mapper& mapper, const Vector& x,
                        const Matrix& noise_draws, const Vector& subspace_base,
                        const Matrix& subspace_basis) {
  const Index ambient = mapper.ambient_dim();
  const Index k = noise_draws.rows();
  if (k < 1) throw std::invalid_argument("lemma2_gap: need at least one draw");
  if (noise_draws.cols() != ambient || x.size() != ambient ||
      subspace_base.size() != ambient || subspace_basis.rows() != ambient)
    throw std::invalid_argument("lemma2_gap: dimension mismatch");

  const Matrix projector = subspace_basis * subspace_basis.transpose();
  auto project = [&](const Vector& z) -> Vector {
    return subspace_base + projector * (z - subspace_base);
  };

  // Route one: fit on the raw ball samples (targets off-manifold). Route two:
  // fit on their subspace projections, the ideal on-manifold training set.
  Matrix raw(k, ambient), projected(k, ambient);
  Matrix raw_low(k, mapper.low_dim()), proj_low(k, mapper.low_dim());
  for (Index i = 0; i < k; ++i) {
    const Vector sample = x + noise_draws.row(i).transpose();
    const Vector proj = project(sample);
    raw.row(i) = sample.transpose();
    projected.row(i) = proj.transpose();
    raw_low.row(i) = mapper.transform(sample).transpose();
    proj_low.row(i) = mapper.transform(proj).transpose();
  }

  const CenteredFit ball_fit = solve_centered(raw, raw_low, "lemma2_gap");
  const CenteredFit ideal_fit = solve_centered(projected, proj_low, "lemma2_gap");

  Lemma2Result result;
  for (Index i = 0; i < k; ++i)
    result.fit_objective +=
        (ball_fit.reconstruct(raw_low.row(i).transpose()) - raw.row(i).transpose())
            .norm();

  for (Index i = 0; i < k; ++i) {
    Lemma2Draw draw;
    const Vector noise = noise_draws.row(i).transpose();
    draw.orth_norm = (noise - projector * noise).norm();
    draw.lhs = (ball_fit.reconstruct(raw_low.row(i).transpose()) -
                ideal_fit.reconstruct(proj_low.row(i).transpose()))
                   .norm();
    draw.bound = result.fit_objective + draw.orth_norm;
    result.max_lhs = std::max(result.max_lhs, draw.lhs);
    result.all_within = result.all_within && draw.lhs <= draw.bound;
    result.draws.push_back(draw);
  }
  return result;
}

}  // namespace emap::manifold
