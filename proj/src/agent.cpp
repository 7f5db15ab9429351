#include "dkpca/agent.hpp"

#include <cmath>
#include <string>

namespace dkpca {

namespace {

constexpr double kOrderTol = 1e-12;

void check_descending(const Eigen::VectorXd& eigenvalues) {
  const double scale = std::max(1.0, std::abs(eigenvalues[0]));
  for (Eigen::Index i = 0; i + 1 < eigenvalues.size(); ++i) {
    if (eigenvalues[i] < eigenvalues[i + 1] - kOrderTol * scale) {
      throw InputError("eigenvalues not sorted non-increasing at index " + std::to_string(i));
    }
  }
}

}  // namespace

FeatureBlock center_features(const FeatureBlock& block) {
  Eigen::MatrixXd values = block.values();
  const Eigen::VectorXd row_means = values.rowwise().mean();
  values.colwise() -= row_means;
  return FeatureBlock(block.agent_id(), std::move(values), /*centered=*/true);
}

Eigen::Index adaptive_d(const Eigen::VectorXd& eigenvalues, double epsilon) {
  if (eigenvalues.size() == 0) {
    throw InputError("adaptive rank selection needs a non-empty spectrum");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InputError("adaptive threshold must be positive and finite");
  }
  check_descending(eigenvalues);
  // Sorted input makes {i : lambda_i > eps} a prefix, so the smallest D
  // with every discarded eigenvalue <= eps is the prefix length.
  Eigen::Index d = 0;
  while (d < eigenvalues.size() && eigenvalues[d] > epsilon) {
    ++d;
  }
  return std::max<Eigen::Index>(1, d);
}

Eigen::VectorXd local_spectrum(const AgentState& state) {
  const GramMatrix local = gram(state.block, state.spec);
  return sym_eig_topd(local, local.order()).eigenvalues;
}

AgentMessage local_truncation(const AgentState& state) {
  const GramMatrix local = gram(state.block, state.spec);
  const Eigen::Index t = local.order();
  const SpectralTruncation full = sym_eig_topd(local, t);

  Eigen::Index d = 0;
  if (const auto* fixed = std::get_if<FixedRank>(&state.policy)) {
    if (fixed->d < 1 || fixed->d > t) {
      throw InputError("fixed rank " + std::to_string(fixed->d) + " outside [1, " +
                       std::to_string(t) + "] for agent " + std::to_string(state.agent_id()));
    }
    d = fixed->d;
  } else {
    const double ratio = std::get<AdaptiveRank>(state.policy).eps_ratio;
    if (!(ratio > 0.0)) {
      throw InputError("adaptive eps ratio must be positive");
    }
    // A non-positive leading eigenvalue means everything is discardable;
    // the floor rule sends the leading pair anyway.
    d = full.eigenvalues[0] > 0.0 ? adaptive_d(full.eigenvalues, ratio * full.eigenvalues[0]) : 1;
  }

  AgentMessage msg;
  msg.agent_id = state.agent_id();
  msg.eigenvalues = full.eigenvalues.head(d);
  msg.eigenvectors = full.eigenvectors.leftCols(d);
  return msg;
}

}  // namespace dkpca
