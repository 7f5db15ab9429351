#pragma once

#include <Eigen/Dense>

#include "dkpca/errors.hpp"

namespace dkpca {

/// Symmetric positive-semidefinite kernel matrix over T samples.
///
/// Construction validates squareness, finiteness, and symmetry
/// (|a_pq - a_qp| <= 1e-12 * max(1, |a_pq|)). Positive semidefiniteness is
/// a property of how Gram matrices are built, not re-checked here; tests
/// assert it through the eigensolver.
class GramMatrix {
 public:
  explicit GramMatrix(Eigen::MatrixXd entries);

  Eigen::Index order() const { return entries_.rows(); }
  const Eigen::MatrixXd& entries() const { return entries_; }

 private:
  Eigen::MatrixXd entries_;
};

/// Top-d eigenpairs of a symmetric matrix: eigenvalues descending,
/// eigenvector columns orthonormal.
struct SpectralTruncation {
  Eigen::VectorXd eigenvalues;   // length d, non-increasing
  Eigen::MatrixXd eigenvectors;  // T x d, orthonormal columns

  Eigen::Index order() const { return eigenvectors.rows(); }
  Eigen::Index rank() const { return eigenvalues.size(); }

  /// V diag(lambda) V^T.
  Eigen::MatrixXd reconstruct() const;
};

/// Principal angles between two D-dimensional subspaces of R^T.
struct SubspaceAngles {
  Eigen::VectorXd cosines;  // singular values of V^T W, clamped to [0,1], non-increasing
  Eigen::VectorXd sines;
  double frobenius_sin = 0.0;  // ||sin Theta||_F

  Eigen::Index rank() const { return cosines.size(); }
};

/// Algebraically largest d eigenpairs of a symmetric matrix.
///
/// Full dense decomposition followed by truncation; deterministic for a
/// fixed input up to eigenvector sign and eigenspace basis.
SpectralTruncation sym_eig_topd(const GramMatrix& matrix, Eigen::Index d);

/// Principal angles between the column spans of v and w.
///
/// Both inputs must be T x D with orthonormal columns (checked to 1e-6).
SubspaceAngles sin_theta(const Eigen::MatrixXd& v, const Eigen::MatrixXd& w);

/// Subspace estimation error D - ||v_gt^T v_hat||_F^2.
///
/// Equals the squared Frobenius norm of sin Theta; computed directly from
/// the product so it can cross-check the singular-value route.
double subspace_error(const Eigen::MatrixXd& v_gt, const Eigen::MatrixXd& v_hat);

}  // namespace dkpca
