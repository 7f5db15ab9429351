#pragma once

#include <variant>

#include <Eigen/Dense>

#include "dkpca/kernels.hpp"
#include "dkpca/linalg.hpp"

namespace dkpca {

/// Always send exactly d eigenpairs.
struct FixedRank {
  Eigen::Index d = 1;
};

/// Send the smallest rank whose discarded local eigenvalues all fall at or
/// below eps_ratio times the agent's own leading eigenvalue.
struct AdaptiveRank {
  double eps_ratio = 0.04;
};

using RankPolicy = std::variant<FixedRank, AdaptiveRank>;

/// One agent's standing configuration: its private block, the shared
/// kernel spec, and how it picks the rank it transmits.
struct AgentState {
  FeatureBlock block;
  KernelSpec spec;
  RankPolicy policy;

  int agent_id() const { return block.agent_id(); }
};

/// The one-shot upstream payload: top-d_j eigenpairs of the local Gram
/// matrix. Carries d_j * (T + 1) scalars and nothing derived from raw
/// feature values except through the local eigendecomposition.
struct AgentMessage {
  int agent_id = 0;
  Eigen::VectorXd eigenvalues;   // length d_j, non-increasing
  Eigen::MatrixXd eigenvectors;  // T x d_j, orthonormal columns

  Eigen::Index order() const { return eigenvectors.rows(); }
  Eigen::Index rank() const { return eigenvalues.size(); }
};

/// Subtract each feature row's mean; idempotent.
FeatureBlock center_features(const FeatureBlock& block);

/// Smallest D with all discarded eigenvalues <= epsilon, capped at the
/// spectrum length and floored at 1 (a silent agent would drop a factor
/// from the RBF fusion product).
Eigen::Index adaptive_d(const Eigen::VectorXd& eigenvalues, double epsilon);

/// Full descending spectrum of the agent's local Gram matrix.
Eigen::VectorXd local_spectrum(const AgentState& state);

/// Algorithm step run at each agent: local Gram matrix, full
/// eigendecomposition, rank selection per policy, truncation.
AgentMessage local_truncation(const AgentState& state);

}  // namespace dkpca
