#pragma once

#include "emap/geometry.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace emap::manifold {

using geometry::Index;
using geometry::Matrix;
using geometry::PointCloud;
using geometry::Seed;
using geometry::Vector;

enum class MapperKind { linear_pca, file_embedding };

/// Embedding omega: R^N -> R^V with an out-of-sample transform and an ambient
/// lift back onto the learned manifold.
///
/// linear_pca: mean-centering plus the top-V principal directions; transform
/// is basis^T (x - mean), lift is the affine projection mean + B B^T (x - mean).
///
/// file_embedding: stores the training points with externally computed low-dim
/// coordinates (UMAP or anything else). transform of a stored point returns
/// its row exactly; elsewhere it is an inverse-distance weighted average over
/// the k_nn nearest stored points, and lift applies the same weights to the
/// stored ambient rows.
class Mapper {
 public:
  static Mapper fit_linear_pca(const PointCloud& train, Index low_dim);
  static Mapper from_embedding(const PointCloud& train, Matrix low_coords,
                               int k_nn = 5);
  /// from_embedding with the low-dim rows loaded from a CSV of V floats per
  /// training point, same order as the training cloud.
  static Mapper from_embedding_file(const PointCloud& train,
                                    const std::string& path, int k_nn = 5);

  Vector transform(const Vector& x) const;
  Matrix transform_rows(const Matrix& rows) const;
  Vector lift(const Vector& x) const;

  MapperKind kind() const { return kind_; }
  Index ambient_dim() const { return ambient_dim_; }
  Index low_dim() const { return low_dim_; }

  /// linear_pca accessors; throw for file_embedding.
  const Vector& mean() const;
  const Matrix& basis() const;

  nlohmann::json to_json() const;
  static Mapper from_json(const nlohmann::json& j);

 private:
  Mapper() = default;

  MapperKind kind_ = MapperKind::linear_pca;
  Index ambient_dim_ = 0;
  Index low_dim_ = 0;

  Vector mean_;   // linear_pca
  Matrix basis_;  // linear_pca, N x V orthonormal columns

  Matrix train_points_;  // file_embedding, n x N
  Matrix train_low_;     // file_embedding, n x V
  int k_nn_ = 5;
};

Mapper fit_mapper(const PointCloud& train, Index low_dim, MapperKind kind,
                  const std::string& embedding_path = {}, int k_nn = 5);

/// Affine approximation of the manifold near a base point: orthonormal N x V
/// basis plus the mean reconstruction error of the fit.
struct LocalSubspace {
  Vector base_point;
  Matrix basis;
  double fit_residual = 0.0;
};

/// Builds the local subspace at x by sampling k_T points from the isotropic
/// Gaussian ball of radius r_T around x, embedding them through the mapper,
/// and solving the mean-centered least-squares reconstruction from the low-dim
/// coordinates. The regression targets are the mapper lifts of the samples
/// (their on-manifold representatives), so an exact mapper on exactly-affine
/// data recovers the subspace exactly; raw off-manifold targets would leave an
/// irreducible noise floor in both the residual and the recovered basis. The
/// solved matrix is orthonormalized by QR; only its column space is used
/// downstream.
LocalSubspace fit_local_subspace(const Mapper& mapper, const Vector& x,
                                 Index k_T, double r_T, Seed seed);

/// One noise draw's reconstruction gap against its bound.
struct Lemma2Draw {
  double lhs = 0.0;         // || G_hat w(x+r) - G_ideal w(Proj(x+r)) ||
  double orth_norm = 0.0;   // || r_perp ||
  double bound = 0.0;       // fit_objective + orth_norm
};

struct Lemma2Result {
  std::vector<Lemma2Draw> draws;
  double fit_objective = 0.0;  // achieved optimum of the ball-sampled fit (sum)
  double max_lhs = 0.0;
  bool all_within = true;      // lhs <= bound on every draw
};

/// Reconstruction-error gap between the ball-sampled subspace fit (targets are
/// the raw perturbed points) and the ideal fit on the projected samples. The
/// caller supplies the true affine subspace (base point + orthonormal basis)
/// defining the projection; both fits are solved here, independent of
/// fit_local_subspace.
Lemma2Result lemma2_gap(const Mapper& mapper, const Vector& x,
                        const Matrix& noise_draws, const Vector& subspace_base,
                        const Matrix& subspace_basis);

}  // namespace emap::manifold
