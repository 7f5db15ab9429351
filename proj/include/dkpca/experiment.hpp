#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dkpca/data.hpp"
#include "dkpca/fusion.hpp"
#include "dkpca/protocol.hpp"

namespace dkpca {

inline constexpr const char* kVersion = "0.1.0";

struct SynthParams {
  Eigen::Index features = 200;
  Eigen::Index samples = 100;
  Eigen::Index true_rank = 10;
  double decay = 0.9;
  double noise = 0.0;
};

enum class PartitionKind { Uniform, RandomSizes, Explicit };

/// Everything a sweep needs: data source, kernel, partition scheme, rank
/// policy, sweep axis, trial count, seed, and output sink.
struct ExperimentConfig {
  std::string data_path;  // empty selects the synthetic generator
  IngestOptions ingest;
  SynthParams synth;

  KernelKind kernel = KernelKind::Rbf;
  double sigma = 0.0;  // 0 resolves to sqrt(M) / 3 at run time

  PartitionKind partition_kind = PartitionKind::Uniform;
  std::vector<Eigen::Index> explicit_sizes;

  Eigen::Index d_global = 10;
  Eigen::Index fixed_rank = 0;      // 0 resolves to d_global
  bool use_adaptive = false;        // policy for run-once / bound-check / sweep-agents
  double adaptive_eps_ratio = 0.0;  // 0 resolves to 0.04 (linear) / 0.0005 (rbf)

  std::vector<int> j_values;          // sweep-agents axis; j_values[0] elsewhere
  std::vector<Eigen::Index> t_values; // sweep-samples axis
  std::vector<Eigen::Index> fixed_variants = {5, 10, 15};

  int trials = 50;
  std::uint64_t seed = 1;
  std::string out_dir;  // empty skips file output

  TransportKind transport = TransportKind::InProcess;
  std::string socket_address = "127.0.0.1";
  std::uint16_t socket_port = 0;
  int socket_timeout_ms = 30000;
};

struct TrialRow {
  std::string axis;  // "J" or "T"
  long sweep_value = 0;
  std::string policy;
  std::string trial;  // trial index, or "mean" / "std"
  double error = 0.0;
  double log10_error = 0.0;
  double bound = 0.0;
  double gap = 0.0;
  double comm_scalars = 0.0;
  double sum_dj = 0.0;
  std::string note;  // failure text for marked rows
};

struct ResultsTable {
  std::vector<TrialRow> rows;
  std::string to_csv() const;
};

/// One end-to-end distributed run against the centralized ground truth.
struct TrialOutput {
  double error = 0.0;     // D - ||V_gt^T V_hat||_F^2
  double sin_frob = 0.0;  // ||sin Theta||_F
  BoundReport bound;
  RunOutcome outcome;
  Eigen::MatrixXd v_gt;
  Eigen::VectorXd global_spectrum;
  GramMatrix k_exact;
};

/// Centers every block locally, runs the one-shot protocol, and evaluates
/// it against the centralized decomposition of the exact global Gram
/// matrix. `policies` holds either one entry (applied to all blocks) or
/// one per block.
TrialOutput run_trial(const Dataset& dataset, const Partition& partition, const KernelSpec& spec,
                      const std::vector<RankPolicy>& policies, Eigen::Index d_global,
                      const Transport& transport = Transport::in_process());

/// Estimation error as the number of agents varies (one row per (J, trial)
/// plus mean/std summaries).
ResultsTable sweep_agents(const ExperimentConfig& config);

/// Estimation error and transmitted-eigenvector totals as the sample count
/// varies, for every fixed-rank variant and the adaptive policy on shared
/// per-trial data.
ResultsTable sweep_samples(const ExperimentConfig& config);

/// Repeated trials checking the measured ||sin Theta||_F against the
/// error bound; returns the per-trial table and counts violations.
ResultsTable bound_check(const ExperimentConfig& config, int* violations = nullptr);

struct OnceReport {
  TrialOutput trial;
  KernelSpec spec = KernelSpec::linear();
  int num_agents = 0;
  Eigen::Index samples = 0;
};

/// Single end-to-end run (optionally over sockets).
OnceReport run_once(const ExperimentConfig& config);

/// Integer range of agent counts J for which the distributed computation
/// cost stays within a constant factor of the T^3 centralized cost, i.e.
/// J^2 (D+1) - T J + M <= 0, intersected with [1, M]. Empty when
/// T < 2 sqrt(M (D+1)) or no integer qualifies.
std::optional<std::pair<long long, long long>> agent_range_for_cubic(long long features,
                                                                     long long rank,
                                                                     long long samples);

/// Write `<name>.csv` and a `<name>_metadata.json` config echo under
/// config.out_dir. No-op when out_dir is empty.
void write_results(const ResultsTable& table, const ExperimentConfig& config,
                   const std::string& name);

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);

}  // namespace dkpca
