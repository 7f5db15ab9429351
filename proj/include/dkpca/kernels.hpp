#pragma once

#include <Eigen/Dense>

#include "dkpca/errors.hpp"
#include "dkpca/linalg.hpp"

namespace dkpca {

enum class KernelKind { Linear, Rbf };

/// Kernel function selector. All agents in a run share one spec; in
/// particular a single global RBF width, which is what makes the local
/// Gram matrices multiply back to the global one.
class KernelSpec {
 public:
  static KernelSpec linear() { return KernelSpec(KernelKind::Linear, 0.0); }
  static KernelSpec rbf(double sigma);

  KernelKind kind() const { return kind_; }
  /// Kernel width; meaningful only for RBF.
  double sigma() const { return sigma_; }

  friend bool operator==(const KernelSpec& a, const KernelSpec& b) {
    return a.kind_ == b.kind_ && a.sigma_ == b.sigma_;
  }

 private:
  KernelSpec(KernelKind kind, double sigma) : kind_(kind), sigma_(sigma) {}

  KernelKind kind_;
  double sigma_;
};

const char* to_string(KernelKind kind);

/// One agent's private slice of the feature-by-sample matrix:
/// M_j feature rows over all T samples.
class FeatureBlock {
 public:
  FeatureBlock(int agent_id, Eigen::MatrixXd values, bool centered = false);

  int agent_id() const { return agent_id_; }
  Eigen::Index feature_count() const { return values_.rows(); }
  Eigen::Index sample_count() const { return values_.cols(); }
  const Eigen::MatrixXd& values() const { return values_; }
  bool centered() const { return centered_; }

 private:
  int agent_id_;
  Eigen::MatrixXd values_;
  bool centered_;
};

/// Gram matrix of a feature block.
///
/// Linear: entries are inner products over the block's features.
/// RBF: exp(-||x_p - x_q||^2 / (2 sigma^2)) over the block's features, with
/// an exact unit diagonal. Over a vertical partition the linear Gram
/// matrices sum to the full one and the RBF factors multiply to it.
GramMatrix gram(const FeatureBlock& block, const KernelSpec& spec);

/// Entrywise product. Preserves symmetry and (by the Schur product
/// theorem) positive semidefiniteness.
GramMatrix hadamard(const GramMatrix& a, const GramMatrix& b);

/// Partial cross-kernel between the block's T training samples and S query
/// columns restricted to the block's features. Combining per-agent results
/// (sum for linear, entrywise product for RBF) yields the full k(X, y).
Eigen::MatrixXd cross_kernel(const FeatureBlock& block, const Eigen::MatrixXd& query,
                             const KernelSpec& spec);

}  // namespace dkpca
