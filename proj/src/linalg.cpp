#include "dkpca/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dkpca {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kOrthoTol = 1e-6;

void check_orthonormal(const Eigen::MatrixXd& v, const char* name) {
  const Eigen::Index d = v.cols();
  const Eigen::MatrixXd gram = v.transpose() * v;
  const double dev = (gram - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
  if (dev > kOrthoTol) {
    throw InputError(std::string(name) + ": columns not orthonormal, max deviation " +
                     std::to_string(dev));
  }
}

void check_subspace_pair(const Eigen::MatrixXd& v, const Eigen::MatrixXd& w) {
  if (v.rows() != w.rows() || v.cols() != w.cols()) {
    throw InputError("subspace bases must share dimensions: " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()) + " vs " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()));
  }
  if (v.cols() < 1 || v.rows() < v.cols()) {
    throw InputError("subspace basis must be T x D with 1 <= D <= T");
  }
  if (!v.allFinite() || !w.allFinite()) {
    throw InputError("subspace basis has non-finite entries");
  }
  check_orthonormal(v, "first basis");
  check_orthonormal(w, "second basis");
}

}  // namespace

GramMatrix::GramMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols() || entries_.rows() < 1) {
    throw InputError("gram matrix must be square and non-empty, got " +
                     std::to_string(entries_.rows()) + "x" + std::to_string(entries_.cols()));
  }
  if (!entries_.allFinite()) {
    throw InputError("gram matrix has non-finite entries");
  }
  const Eigen::Index t = entries_.rows();
  for (Eigen::Index p = 0; p < t; ++p) {
    for (Eigen::Index q = p + 1; q < t; ++q) {
      const double a = entries_(p, q);
      const double b = entries_(q, p);
      if (std::abs(a - b) > kSymmetryTol * std::max(1.0, std::abs(a))) {
        throw InputError("gram matrix asymmetric at (" + std::to_string(p) + "," +
                         std::to_string(q) + "): " + std::to_string(a) + " vs " +
                         std::to_string(b));
      }
    }
  }
}

Eigen::MatrixXd SpectralTruncation::reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

SpectralTruncation sym_eig_topd(const GramMatrix& matrix, Eigen::Index d) {
  const Eigen::Index t = matrix.order();
  if (d < 1 || d > t) {
    throw InputError("truncation rank " + std::to_string(d) + " outside [1, " + std::to_string(t) +
                     "]");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix.entries());
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigensolver failed to converge on order-" + std::to_string(t) +
                         " matrix (status " + std::to_string(solver.info()) + ")");
  }
  // Eigen returns ascending order; take the top d and flip to descending.
  SpectralTruncation out;
  out.eigenvalues = solver.eigenvalues().tail(d).reverse();
  out.eigenvectors = solver.eigenvectors().rightCols(d).rowwise().reverse();
  return out;
}

SubspaceAngles sin_theta(const Eigen::MatrixXd& v, const Eigen::MatrixXd& w) {
  check_subspace_pair(v, w);
  const Eigen::Index d = v.cols();
  const Eigen::MatrixXd product = v.transpose() * w;
  Eigen::JacobiSVD<Eigen::MatrixXd> cos_svd(product);

  // sqrt(1 - c^2) cannot resolve angles below ~1e-8; the singular values
  // of the residual (I - V V^T) W are the sines directly and stay accurate
  // for small angles, so use them whenever the cosine dominates.
  Eigen::JacobiSVD<Eigen::MatrixXd> sin_svd(w - v * product);
  const Eigen::VectorXd& residual_sines = sin_svd.singularValues();

  SubspaceAngles out;
  // Singular values may exceed 1 by round-off; clamp before deriving sines.
  out.cosines = cos_svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);
  out.sines.resize(d);
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double c = out.cosines[i];
    // Cosines descend while residual sines descend toward the smallest
    // angle, so angle i pairs with residual singular value d-1-i.
    const double s = c * c > 0.5 ? std::min(1.0, residual_sines[d - 1 - i])
                                 : std::sqrt(std::max(0.0, 1.0 - c * c));
    out.sines[i] = s;
    sum_sq += s * s;
  }
  out.frobenius_sin = std::sqrt(sum_sq);
  return out;
}

double subspace_error(const Eigen::MatrixXd& v_gt, const Eigen::MatrixXd& v_hat) {
  check_subspace_pair(v_gt, v_hat);
  const double d = static_cast<double>(v_gt.cols());
  return std::max(0.0, d - (v_gt.transpose() * v_hat).squaredNorm());
}

}  // namespace dkpca
