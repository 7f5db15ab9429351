// End-to-end acceptance suite. Each criterion prints one [PASS]/[FAIL]
// line with a short detail string and its runtime; the process exit code
// is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dkpca/agent.hpp"
#include "dkpca/data.hpp"
#include "dkpca/experiment.hpp"
#include "dkpca/fusion.hpp"
#include "dkpca/protocol.hpp"

using namespace dkpca;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

std::vector<AgentState> agents_for(const Dataset& data, const Partition& part,
                                   const KernelSpec& spec,
                                   const std::vector<RankPolicy>& policies) {
  std::vector<AgentState> agents;
  const auto blocks = split_features(data, part);
  for (int b = 0; b < part.block_count(); ++b) {
    agents.push_back(AgentState{center_features(blocks[b]), spec,
                                policies.size() == 1 ? policies.front() : policies[b]});
  }
  return agents;
}

// ---- criterion 1: lossless pipeline exactness ----
Outcome lossless_pipeline() {
  Outcome out;
  double worst = 0.0;
  for (int j : {1, 2, 4}) {
    const Dataset data = synth_lowrank(40, 100, 30, 0.92, 0.3, 1000 + j);
    const Partition part = make_partition(40, UniformScheme{j});
    for (const KernelSpec& spec : {KernelSpec::linear(), KernelSpec::rbf(std::sqrt(40.0) / 3.0)}) {
      const auto agents = agents_for(data, part, spec, {FixedRank{100}});
      const RunOutcome run = run_one_shot(agents, Transport::in_process(), 10);
      const GramMatrix k_exact = gram(center_features(FeatureBlock(0, data.values)), spec);
      const double rel = (run.result.k_hat.entries() - k_exact.entries()).norm() /
                         k_exact.entries().norm();
      worst = std::max(worst, rel);
    }
  }
  out.ok = worst <= 1e-10;
  std::ostringstream detail;
  detail << "max rel ||K_hat - K||_F = " << worst << " over J in {1,2,4}, both kernels";
  out.detail = detail.str();
  return out;
}

// ---- criteria 2, 3, 8 share the same 2 x 50 mixed-rank trials ----
struct MixedRankStats {
  int trials = 0;
  int checked = 0;     // trials passing the gap filter
  int violations = 0;  // bound violations among checked trials
  double worst_metric_gap = 0.0;
  double worst_psd = 0.0;  // most negative min-eig ratio of K_hat
  bool psd_ok = true;
};

MixedRankStats run_mixed_rank_trials() {
  MixedRankStats stats;
  const Eigen::Index t = 100;
  const Eigen::Index d_global = 5;
  const int num_agents = 4;

  for (int kernel = 0; kernel < 2; ++kernel) {
    for (int trial = 0; trial < 50; ++trial) {
      const std::uint64_t seed = mix_seed(2024, static_cast<std::uint64_t>(kernel * 50 + trial));
      Dataset data = synth_lowrank(40, t, 20, 0.85, 0.05, seed);
      KernelSpec spec = KernelSpec::linear();
      if (kernel == 1) {
        // Spread the points so RBF distances are O(sigma).
        data.values *= 20.0;
        spec = KernelSpec::rbf(std::sqrt(40.0) / 3.0);
      }
      const Partition part = make_partition(40, UniformScheme{num_agents});

      std::vector<RankPolicy> policies;
      for (int b = 0; b < num_agents; ++b) {
        const Eigen::Index d_j =
            5 + static_cast<Eigen::Index>(mix_seed(seed, 77 + static_cast<std::uint64_t>(b)) % 8);
        policies.push_back(FixedRank{d_j});
      }

      const TrialOutput run = run_trial(data, part, spec, policies, d_global);
      stats.trials += 1;

      // Criterion 2: bound validity under the gap filter.
      const double gap_floor = 1e-8 * std::abs(run.global_spectrum[0]);
      if (run.bound.gap > gap_floor) {
        stats.checked += 1;
        if (run.sin_frob > run.bound.bound_value) {
          stats.violations += 1;
        }
      }

      // Criterion 3: the two error routes agree.
      stats.worst_metric_gap =
          std::max(stats.worst_metric_gap, std::abs(run.error - run.sin_frob * run.sin_frob));

      // Criterion 8: the aggregated estimate stays PSD.
      const SpectralTruncation full = sym_eig_topd(run.outcome.result.k_hat, t);
      const double min_eig = full.eigenvalues[t - 1];
      const double limit = -1e-8 * std::max(1.0, full.eigenvalues[0]);
      stats.worst_psd = std::min(stats.worst_psd, min_eig);
      if (min_eig < limit) {
        stats.psd_ok = false;
      }
    }
  }
  return stats;
}

// Computed once inside criterion 2's timed body, reused by 3 and 8.
MixedRankStats& shared_stats() {
  static MixedRankStats stats;
  return stats;
}

Outcome bound_validity() {
  MixedRankStats& stats = shared_stats();
  stats = run_mixed_rank_trials();
  Outcome out;
  out.ok = stats.violations == 0 && stats.checked > 0;
  std::ostringstream detail;
  detail << stats.violations << " violations, " << stats.checked << "/" << stats.trials
         << " trials past the gap filter";
  out.detail = detail.str();
  return out;
}

Outcome metric_equivalence() {
  const MixedRankStats& stats = shared_stats();
  Outcome out;
  out.ok = stats.trials > 0 && stats.worst_metric_gap <= 1e-8;
  std::ostringstream detail;
  detail << "max |(D - ||V'V||^2) - ||sin||^2| = " << stats.worst_metric_gap;
  out.detail = detail.str();
  return out;
}

Outcome psd_preservation() {
  const MixedRankStats& stats = shared_stats();
  Outcome out;
  out.ok = stats.trials > 0 && stats.psd_ok;
  std::ostringstream detail;
  detail << "most negative K_hat eigenvalue " << stats.worst_psd << " across " << stats.trials
         << " trials";
  out.detail = detail.str();
  return out;
}

// ---- criterion 4: rank losslessness over agent counts ----
Outcome rank_losslessness() {
  Outcome out;
  ExperimentConfig config;
  config.synth = SynthParams{200, 100, 10, 0.9, 0.0};
  config.kernel = KernelKind::Linear;
  config.d_global = 10;
  config.fixed_rank = 10;
  config.j_values = {2, 5, 10, 20};
  config.trials = 2;
  config.seed = 404;

  const ResultsTable table = sweep_agents(config);
  double worst = 0.0;
  for (const auto& row : table.rows) {
    if (!row.note.empty()) {
      out.ok = false;
      out.detail = "trial failed: " + row.note;
      return out;
    }
    if (row.trial != "std") {
      worst = std::max(worst, row.error);
    }
  }
  out.ok = worst <= 1e-8;
  std::ostringstream detail;
  detail << "max subspace error " << worst << " over J in {2,5,10,20}";
  out.detail = detail.str();
  return out;
}

// ---- criterion 5: adaptive strategy dominance under maldistribution ----
Outcome adaptive_dominance() {
  Outcome out;
  ExperimentConfig config;
  // Spectrum rank above D so a rank-5 truncation discards real mass while
  // the adaptive threshold keeps enough to matter.
  config.synth = SynthParams{200, 100, 30, 0.8, 0.0};
  config.kernel = KernelKind::Linear;
  config.partition_kind = PartitionKind::RandomSizes;
  config.d_global = 10;
  config.j_values = {10};
  config.t_values = {50, 100, 150};
  config.fixed_variants = {5, 15};
  config.trials = 20;
  config.seed = 505;

  const ResultsTable table = sweep_samples(config);
  struct Mean {
    double error = 0.0;
    double sum_dj = 0.0;
    bool seen = false;
  };
  std::vector<long> t_values = {50, 100, 150};
  auto mean_for = [&](long t, const std::string& policy) {
    Mean mean;
    for (const auto& row : table.rows) {
      if (row.sweep_value == t && row.trial == "mean" && row.policy.rfind(policy, 0) == 0) {
        mean.error = row.error;
        mean.sum_dj = row.sum_dj;
        mean.seen = true;
      }
    }
    return mean;
  };

  std::ostringstream detail;
  out.ok = true;
  for (long t : t_values) {
    const Mean adaptive = mean_for(t, "adaptive");
    const Mean fixed5 = mean_for(t, "fixed-5");
    const Mean fixed15 = mean_for(t, "fixed-15");
    if (!adaptive.seen || !fixed5.seen || !fixed15.seen) {
      out.ok = false;
      out.detail = "missing summary rows at T=" + std::to_string(t);
      return out;
    }
    if (!(adaptive.error <= fixed5.error) || !(adaptive.sum_dj <= fixed15.sum_dj)) {
      out.ok = false;
    }
    detail << "T=" << t << ": err " << adaptive.error << " vs fixed-5 " << fixed5.error
           << ", sum_dj " << adaptive.sum_dj << " vs fixed-15 " << fixed15.sum_dj << "; ";
  }
  out.detail = detail.str();
  return out;
}

// ---- criterion 6: cost accounting ----
Outcome cost_accounting() {
  Outcome out;
  const Dataset data = synth_lowrank(40, 60, 10, 0.9, 0.1, 606);

  // Mixed ranks: payload scalars must match sum(d_j * (T + 1)) exactly.
  const Partition part = make_partition(40, UniformScheme{3});
  std::vector<RankPolicy> mixed = {FixedRank{4}, FixedRank{9}, FixedRank{17}};
  const auto agents = agents_for(data, part, KernelSpec::linear(), mixed);
  const RunOutcome run = run_one_shot(agents, Transport::in_process(), 5);

  const std::size_t expected_scalars = (4u + 9u + 17u) * 61u;
  std::size_t measured_payload_bytes = 0;
  for (const auto& event : run.trace) {
    measured_payload_bytes += event.bytes - kWireHeaderBytes;
  }
  const bool mixed_ok = run.cost.total_scalars == expected_scalars &&
                        measured_payload_bytes == 8u * expected_scalars &&
                        run.cost.total_bytes ==
                            3u * kWireHeaderBytes + 8u * expected_scalars;

  // Uniform ranks reduce to J * D * (T + 1).
  const auto uniform_agents = agents_for(data, part, KernelSpec::linear(), {FixedRank{10}});
  const RunOutcome uniform = run_one_shot(uniform_agents, Transport::in_process(), 5);
  const bool uniform_ok = uniform.cost.total_scalars == 3u * 10u * 61u;

  out.ok = mixed_ok && uniform_ok;
  std::ostringstream detail;
  detail << "mixed " << run.cost.total_scalars << " scalars (expect " << expected_scalars
         << "), uniform " << uniform.cost.total_scalars << " (expect " << 3 * 10 * 61 << ")";
  out.detail = detail.str();
  return out;
}

// ---- criterion 7: one-shot + transport equivalence ----
Outcome transport_equivalence() {
  Outcome out;
  const Dataset data = synth_lowrank(48, 80, 12, 0.85, 0.2, 707);
  const Partition part = make_partition(48, UniformScheme{4});
  const auto agents = agents_for(data, part, KernelSpec::rbf(std::sqrt(48.0) / 3.0),
                                 {FixedRank{15}});

  const RunOutcome local = run_one_shot(agents, Transport::in_process(), 8);
  const RunOutcome socket = run_one_shot(agents, Transport::socket(), 8);

  int upstream = 0;
  int downstream = 0;
  for (const auto& event : socket.trace) {
    (event.direction == Direction::Upstream ? upstream : downstream) += 1;
  }

  const auto& a = local.result.k_hat.entries();
  const auto& b = socket.result.k_hat.entries();
  const bool identical =
      a.rows() == b.rows() && a.cols() == b.cols() &&
      std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;

  out.ok = upstream == 4 && downstream == 0 && identical;
  std::ostringstream detail;
  detail << upstream << " upstream / " << downstream << " downstream messages, K_hat "
         << (identical ? "bit-identical" : "DIFFERS");
  out.detail = detail.str();
  return out;
}

// ---- criterion 9: planner worked example ----
Outcome planner_example() {
  Outcome out;
  const auto range = agent_range_for_cubic(10000, 100, 5000);
  out.ok = range.has_value() && range->first == 3 && range->second == 47;
  out.detail = range.has_value() ? "J in [" + std::to_string(range->first) + ", " +
                                       std::to_string(range->second) + "]"
                                 : "empty range";
  return out;
}

// ---- criterion 10: adaptive selector unit cases ----
Outcome adaptive_selector_cases() {
  Outcome out;
  const Eigen::Index knee = adaptive_d(Eigen::Vector3d(5.0, 3.0, 0.01), 0.02);
  const Eigen::Index cap = adaptive_d(Eigen::Vector3d(5.0, 3.0, 1.0), 0.5);
  const Eigen::Index floor = adaptive_d(Eigen::Vector2d(0.001, 0.0001), 0.01);
  out.ok = knee == 2 && cap == 3 && floor == 1;
  std::ostringstream detail;
  detail << "knee=" << knee << " cap=" << cap << " floor=" << floor;
  out.detail = detail.str();
  return out;
}

int run_criterion(int id, const std::string& label, double time_limit_s,
                  const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome outcome;
  try {
    outcome = body();
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.detail = std::string("exception: ") + e.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = elapsed < time_limit_s;
  const bool pass = outcome.ok && in_time;
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << label << " ("
            << outcome.detail << "; " << elapsed << " s, limit " << time_limit_s << " s)"
            << std::endl;
  return pass ? 0 : 1;
}

}  // namespace

int main() {
  int failures = 0;

  failures += run_criterion(1, "lossless pipeline exactness", 5.0, lossless_pipeline);
  failures += run_criterion(2, "error bound validity", 30.0, bound_validity);
  failures += run_criterion(3, "metric equivalence", 30.0, metric_equivalence);
  failures += run_criterion(4, "rank losslessness over agent counts", 10.0, rank_losslessness);
  failures += run_criterion(5, "adaptive strategy dominance", 60.0, adaptive_dominance);
  failures += run_criterion(6, "communication cost accounting", 5.0, cost_accounting);
  failures += run_criterion(7, "one-shot transport equivalence", 5.0, transport_equivalence);
  failures += run_criterion(8, "PSD preservation of the estimate", 30.0, psd_preservation);
  failures += run_criterion(9, "agent-count planner example", 1.0, planner_example);
  failures += run_criterion(10, "adaptive selector unit cases", 1.0, adaptive_selector_cases);

  if (failures == 0) {
    std::cout << "all criteria passed" << std::endl;
  } else {
    std::cout << failures << " criteria failed" << std::endl;
  }
  return failures;
}
