#include "dkpca/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dkpca {

namespace {

constexpr double kGapRelTol = 1e-12;

std::vector<const AgentMessage*> canonical_order(const std::vector<AgentMessage>& messages) {
  std::vector<const AgentMessage*> ordered;
  ordered.reserve(messages.size());
  for (const auto& m : messages) {
    ordered.push_back(&m);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const AgentMessage* a, const AgentMessage* b) { return a->agent_id < b->agent_id; });
  for (std::size_t i = 0; i + 1 < ordered.size(); ++i) {
    if (ordered[i]->agent_id == ordered[i + 1]->agent_id) {
      throw ProtocolError("duplicate agent id " + std::to_string(ordered[i]->agent_id));
    }
  }
  return ordered;
}

}  // namespace

GramMatrix aggregate(const std::vector<AgentMessage>& messages, const KernelSpec& spec) {
  if (messages.empty()) {
    throw InputError("aggregation needs at least one agent message");
  }
  const Eigen::Index t = messages.front().order();
  for (const auto& m : messages) {
    if (m.order() != t) {
      throw InputError("agent " + std::to_string(m.agent_id) + " has order " +
                       std::to_string(m.order()) + ", expected " + std::to_string(t));
    }
    if (m.rank() < 1 || m.rank() > t) {
      throw InputError("agent " + std::to_string(m.agent_id) + " has invalid rank " +
                       std::to_string(m.rank()));
    }
  }
  const auto ordered = canonical_order(messages);

  Eigen::MatrixXd acc;
  if (spec.kind() == KernelKind::Linear) {
    acc = Eigen::MatrixXd::Zero(t, t);
    for (const AgentMessage* m : ordered) {
      acc.noalias() += m->eigenvectors * m->eigenvalues.asDiagonal() * m->eigenvectors.transpose();
    }
  } else {
    acc = Eigen::MatrixXd::Ones(t, t);
    for (const AgentMessage* m : ordered) {
      acc = acc.cwiseProduct(
          (m->eigenvectors * m->eigenvalues.asDiagonal() * m->eigenvectors.transpose()).eval());
    }
  }
  acc = 0.5 * (acc + acc.transpose()).eval();
  return GramMatrix(std::move(acc));
}

FusionResult global_truncation(GramMatrix k_hat, Eigen::Index d, RunInfo info) {
  SpectralTruncation top = sym_eig_topd(k_hat, d);
  info.order = k_hat.order();
  info.rank = d;
  return FusionResult{std::move(k_hat), std::move(top.eigenvectors), std::move(top.eigenvalues),
                      std::move(info)};
}

FusionResult fuse(const std::vector<AgentMessage>& messages, const KernelSpec& spec,
                  Eigen::Index d) {
  GramMatrix k_hat = aggregate(messages, spec);
  RunInfo info;
  info.num_agents = static_cast<int>(messages.size());
  info.spec = spec;
  const auto ordered = canonical_order(messages);
  for (const AgentMessage* m : ordered) {
    info.agent_ids.push_back(m->agent_id);
    info.agent_ranks.push_back(m->rank());
  }
  return global_truncation(std::move(k_hat), d, std::move(info));
}

BoundReport subspace_error_bound(const std::vector<double>& local_tails,
                           const Eigen::VectorXd& global_spectrum, int num_agents,
                           Eigen::Index order, Eigen::Index rank, const KernelSpec& spec) {
  if (num_agents < 1) {
    throw InputError("bound needs at least one agent");
  }
  if (static_cast<int>(local_tails.size()) != num_agents) {
    throw InputError("expected " + std::to_string(num_agents) + " local tails, got " +
                     std::to_string(local_tails.size()));
  }
  if (rank < 1 || rank + 1 > order) {
    throw InputError("bound needs 1 <= D and D + 1 <= T, got D=" + std::to_string(rank) +
                     " T=" + std::to_string(order));
  }
  if (global_spectrum.size() < rank + 1 || global_spectrum.size() > order) {
    throw InputError("global spectrum must carry between D+1 and T eigenvalues");
  }
  for (double tail : local_tails) {
    if (tail < 0.0 || !std::isfinite(tail)) {
      throw InputError("local tails must be non-negative and finite");
    }
  }

  BoundReport report;
  report.kind = spec.kind();
  report.num_agents = num_agents;
  report.order = order;
  report.rank = rank;
  report.max_local_tail = *std::max_element(local_tails.begin(), local_tails.end());
  report.gap = global_spectrum[rank - 1] - global_spectrum[rank];

  const double leading = std::abs(global_spectrum[0]);
  if (report.gap <= kGapRelTol * leading) {
    report.bound_value = std::numeric_limits<double>::infinity();
    return report;
  }
  const double size_factor = spec.kind() == KernelKind::Linear
                                 ? std::sqrt(static_cast<double>(order - rank))
                                 : std::sqrt(static_cast<double>(order));
  report.bound_value =
      static_cast<double>(num_agents) * size_factor * report.max_local_tail / report.gap;
  return report;
}

Eigen::MatrixXd project(const FusionResult& result,
                        const std::vector<Eigen::MatrixXd>& partial_cross, const KernelSpec& spec,
                        bool normalize) {
  if (static_cast<int>(partial_cross.size()) != result.info.num_agents) {
    throw ProtocolError("expected one partial cross-kernel per agent (" +
                        std::to_string(result.info.num_agents) + "), got " +
                        std::to_string(partial_cross.size()));
  }
  const Eigen::Index t = result.k_hat.order();
  const Eigen::Index s = partial_cross.empty() ? 0 : partial_cross.front().cols();
  for (const auto& partial : partial_cross) {
    if (partial.rows() != t || partial.cols() != s) {
      throw InputError("partial cross-kernels must share shape " + std::to_string(t) + "x" +
                       std::to_string(s));
    }
  }

  Eigen::MatrixXd combined;
  if (spec.kind() == KernelKind::Linear) {
    combined = Eigen::MatrixXd::Zero(t, s);
    for (const auto& partial : partial_cross) {
      combined += partial;
    }
  } else {
    combined = Eigen::MatrixXd::Ones(t, s);
    for (const auto& partial : partial_cross) {
      combined = combined.cwiseProduct(partial);
    }
  }

  Eigen::MatrixXd out = result.v_hat.transpose() * combined;
  if (normalize) {
    const double tol =
        1e-12 * std::max(1.0, result.lambda_hat.size() > 0 ? result.lambda_hat[0] : 0.0);
    for (Eigen::Index d = 0; d < out.rows(); ++d) {
      const double lambda = result.lambda_hat[d];
      if (lambda <= tol) {
        throw NumericalError("cannot normalize component " + std::to_string(d) +
                             ": eigenvalue " + std::to_string(lambda) + " at or below tolerance");
      }
      out.row(d) /= std::sqrt(lambda);
    }
  }
  return out;
}

}  // namespace dkpca
