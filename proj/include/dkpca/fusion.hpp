#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dkpca/agent.hpp"
#include "dkpca/kernels.hpp"
#include "dkpca/linalg.hpp"

namespace dkpca {

/// Per-run bookkeeping carried alongside the fused result.
struct RunInfo {
  int num_agents = 0;
  Eigen::Index order = 0;  // T
  Eigen::Index rank = 0;   // D
  KernelSpec spec = KernelSpec::linear();
  std::vector<int> agent_ids;               // ascending
  std::vector<Eigen::Index> agent_ranks;    // d_j, aligned with agent_ids
};

/// Fusion-center output: the aggregated kernel estimate and its leading
/// eigenpairs.
struct FusionResult {
  GramMatrix k_hat;
  Eigen::MatrixXd v_hat;       // T x D
  Eigen::VectorXd lambda_hat;  // length D, non-increasing
  RunInfo info;
};

/// Approximation-error bound for the fused subspace.
struct BoundReport {
  KernelKind kind = KernelKind::Linear;
  int num_agents = 0;
  Eigen::Index order = 0;
  Eigen::Index rank = 0;
  double max_local_tail = 0.0;  // max_j of the largest discarded local eigenvalue
  double gap = 0.0;             // lambda_D - lambda_{D+1} of the global matrix
  double bound_value = 0.0;     // +inf when the gap is degenerate

  bool gap_degenerate() const { return !std::isfinite(bound_value); }
};

/// Combine agent messages into the kernel estimate: sum of the local
/// reconstructions for linear kernels, entrywise product for RBF.
/// Messages are processed in ascending agent-id order so the result is
/// bit-reproducible regardless of arrival order, and the output is
/// symmetrized to scrub round-off before eigendecomposition.
GramMatrix aggregate(const std::vector<AgentMessage>& messages, const KernelSpec& spec);

/// Leading-D eigenpairs of the aggregated estimate.
FusionResult global_truncation(GramMatrix k_hat, Eigen::Index d, RunInfo info = {});

/// aggregate + global_truncation with the run info filled in.
FusionResult fuse(const std::vector<AgentMessage>& messages, const KernelSpec& spec,
                  Eigen::Index d);

/// Worst-case ||sin Theta||_F between the true and fused leading-D
/// subspaces, from the per-agent discarded-eigenvalue tails and the global
/// spectrum:
///   linear: J sqrt(T-D) max_tail / (lambda_D - lambda_{D+1})
///   rbf:    J sqrt(T)   max_tail / (lambda_D - lambda_{D+1})
/// A gap at or below 1e-12 * lambda_1 reports +inf.
BoundReport subspace_error_bound(const std::vector<double>& local_tails,
                           const Eigen::VectorXd& global_spectrum, int num_agents,
                           Eigen::Index order, Eigen::Index rank, const KernelSpec& spec);

/// Project S query points onto the fused components via per-agent partial
/// cross-kernels (one T x S grid per agent, in ascending agent-id order).
/// Returns V_hat^T k(X, y), optionally scaling row d by 1 / sqrt(lambda_d).
Eigen::MatrixXd project(const FusionResult& result,
                        const std::vector<Eigen::MatrixXd>& partial_cross, const KernelSpec& spec,
                        bool normalize = false);

}  // namespace dkpca
