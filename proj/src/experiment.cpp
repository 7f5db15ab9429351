#include "dkpca/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dkpca/agent.hpp"

namespace dkpca {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string sanitize_note(std::string note) {
  for (char& c : note) {
    if (c == ',' || c == '\n' || c == '\r') {
      c = ';';
    }
  }
  return note;
}

double default_eps_ratio(KernelKind kind) {
  return kind == KernelKind::Linear ? 0.04 : 0.0005;
}

std::string policy_label(const RankPolicy& policy) {
  if (const auto* fixed = std::get_if<FixedRank>(&policy)) {
    return "fixed-" + std::to_string(fixed->d);
  }
  return "adaptive-" + format_double(std::get<AdaptiveRank>(policy).eps_ratio);
}

struct ResolvedSource {
  Dataset base;        // file-backed data, ingested once
  bool from_file = false;
};

ResolvedSource resolve_source(const ExperimentConfig& config) {
  ResolvedSource src;
  if (!config.data_path.empty()) {
    IngestResult ingested = ingest_table(config.data_path, config.ingest);
    src.base = std::move(ingested.dataset);
    src.from_file = true;
    if (!config.out_dir.empty()) {
      std::filesystem::create_directories(config.out_dir);
      write_drop_report(ingested.dropped_features,
                        std::filesystem::path(config.out_dir) / "dropped_features.txt");
    }
  }
  return src;
}

Dataset dataset_for(const ExperimentConfig& config, const ResolvedSource& src,
                    Eigen::Index samples, std::uint64_t trial_seed) {
  if (src.from_file) {
    if (samples > src.base.sample_count()) {
      throw InputError("requested " + std::to_string(samples) + " samples but " +
                       config.data_path + " has " + std::to_string(src.base.sample_count()));
    }
    Dataset out;
    out.values = src.base.values.leftCols(samples);
    out.provenance = src.base.provenance;
    return out;
  }
  return synth_lowrank(config.synth.features, samples, config.synth.true_rank, config.synth.decay,
                       config.synth.noise, trial_seed);
}

// Non-sweeping commands run file data at its full width.
Eigen::Index base_samples(const ExperimentConfig& config, const ResolvedSource& src) {
  return src.from_file ? src.base.sample_count() : config.synth.samples;
}

KernelSpec resolve_spec(const ExperimentConfig& config, Eigen::Index features) {
  if (config.kernel == KernelKind::Linear) {
    return KernelSpec::linear();
  }
  const double sigma =
      config.sigma > 0.0 ? config.sigma : std::sqrt(static_cast<double>(features)) / 3.0;
  return KernelSpec::rbf(sigma);
}

RankPolicy resolve_policy(const ExperimentConfig& config) {
  if (config.use_adaptive) {
    const double ratio = config.adaptive_eps_ratio > 0.0 ? config.adaptive_eps_ratio
                                                         : default_eps_ratio(config.kernel);
    return AdaptiveRank{ratio};
  }
  return FixedRank{config.fixed_rank > 0 ? config.fixed_rank : config.d_global};
}

Partition partition_for(const ExperimentConfig& config, Eigen::Index features, int num_agents,
                        std::uint64_t seed) {
  switch (config.partition_kind) {
    case PartitionKind::Uniform:
      return make_partition(features, UniformScheme{num_agents});
    case PartitionKind::RandomSizes:
      return make_partition(features, RandomSizesScheme{num_agents, seed});
    case PartitionKind::Explicit:
      return make_partition(features, ExplicitScheme{config.explicit_sizes});
  }
  throw InputError("unknown partition kind");
}

Transport resolve_transport(const ExperimentConfig& config) {
  if (config.transport == TransportKind::InProcess) {
    return Transport::in_process();
  }
  return Transport::socket(config.socket_address, config.socket_port,
                           std::chrono::milliseconds(config.socket_timeout_ms));
}

TrialRow failure_row(std::string axis, long sweep_value, std::string policy, int trial,
                     const std::string& what) {
  TrialRow row;
  row.axis = std::move(axis);
  row.sweep_value = sweep_value;
  row.policy = std::move(policy);
  row.trial = std::to_string(trial);
  row.error = row.log10_error = row.bound = row.gap = row.comm_scalars = row.sum_dj = kNan;
  row.note = "FAILED: " + what;
  return row;
}

TrialRow metrics_row(std::string axis, long sweep_value, std::string policy, int trial,
                     const TrialOutput& out) {
  TrialRow row;
  row.axis = std::move(axis);
  row.sweep_value = sweep_value;
  row.policy = std::move(policy);
  row.trial = std::to_string(trial);
  row.error = out.error;
  row.log10_error = std::log10(out.error);
  row.bound = out.bound.bound_value;
  row.gap = out.bound.gap;
  row.comm_scalars = static_cast<double>(out.outcome.cost.total_scalars);
  double sum_dj = 0.0;
  for (Eigen::Index d : out.outcome.result.info.agent_ranks) {
    sum_dj += static_cast<double>(d);
  }
  row.sum_dj = sum_dj;
  return row;
}

// Mean and sample-std summary rows over the successful trials of a group.
void append_summaries(std::vector<TrialRow>& rows, const std::vector<TrialRow>& group) {
  std::vector<const TrialRow*> ok;
  for (const auto& row : group) {
    if (row.note.empty()) {
      ok.push_back(&row);
    }
  }
  if (ok.empty() || group.empty()) {
    return;
  }
  const double n = static_cast<double>(ok.size());
  auto mean_of = [&](double TrialRow::*field) {
    double sum = 0.0;
    for (const auto* row : ok) {
      sum += row->*field;
    }
    return sum / n;
  };
  auto std_of = [&](double TrialRow::*field, double mean) {
    if (ok.size() < 2) {
      return 0.0;
    }
    double sum_sq = 0.0;
    for (const auto* row : ok) {
      const double dev = row->*field - mean;
      sum_sq += dev * dev;
    }
    return std::sqrt(sum_sq / (n - 1.0));
  };

  TrialRow mean = group.front();
  mean.trial = "mean";
  mean.note.clear();
  mean.error = mean_of(&TrialRow::error);
  mean.log10_error = std::log10(mean.error);
  mean.bound = mean_of(&TrialRow::bound);
  mean.gap = mean_of(&TrialRow::gap);
  mean.comm_scalars = mean_of(&TrialRow::comm_scalars);
  mean.sum_dj = mean_of(&TrialRow::sum_dj);

  TrialRow dev = mean;
  dev.trial = "std";
  dev.error = std_of(&TrialRow::error, mean.error);
  dev.log10_error = kNan;
  dev.bound = std_of(&TrialRow::bound, mean.bound);
  dev.gap = std_of(&TrialRow::gap, mean.gap);
  dev.comm_scalars = std_of(&TrialRow::comm_scalars, mean.comm_scalars);
  dev.sum_dj = std_of(&TrialRow::sum_dj, mean.sum_dj);

  rows.push_back(std::move(mean));
  rows.push_back(std::move(dev));
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["data_path"] = config.data_path;
  j["ingest"] = {{"delimiter", std::string(1, config.ingest.delimiter)},
                 {"missing_token", config.ingest.missing_token},
                 {"samples_as_rows", config.ingest.samples_as_rows}};
  j["synth"] = {{"features", config.synth.features},
                {"samples", config.synth.samples},
                {"true_rank", config.synth.true_rank},
                {"decay", config.synth.decay},
                {"noise", config.synth.noise}};
  j["kernel"] = to_string(config.kernel);
  j["sigma"] = config.sigma;
  switch (config.partition_kind) {
    case PartitionKind::Uniform:
      j["partition"] = "uniform";
      break;
    case PartitionKind::RandomSizes:
      j["partition"] = "random";
      break;
    case PartitionKind::Explicit:
      j["partition"] = "explicit";
      break;
  }
  j["explicit_sizes"] = config.explicit_sizes;
  j["d_global"] = config.d_global;
  j["fixed_rank"] = config.fixed_rank;
  j["use_adaptive"] = config.use_adaptive;
  j["adaptive_eps_ratio"] = config.adaptive_eps_ratio;
  j["j_values"] = config.j_values;
  j["t_values"] = config.t_values;
  j["fixed_variants"] = config.fixed_variants;
  j["trials"] = config.trials;
  j["seed"] = config.seed;
  j["transport"] = config.transport == TransportKind::InProcess ? "inprocess" : "socket";
  j["socket_address"] = config.socket_address;
  j["socket_port"] = config.socket_port;
  j["socket_timeout_ms"] = config.socket_timeout_ms;
  return j;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string ResultsTable::to_csv() const {
  std::ostringstream out;
  out << "axis,value,policy,trial,error,log10_error,bound,gap,comm_scalars,sum_dj,note\n";
  for (const auto& row : rows) {
    out << row.axis << ',' << row.sweep_value << ',' << row.policy << ',' << row.trial << ','
        << format_double(row.error) << ',' << format_double(row.log10_error) << ','
        << format_double(row.bound) << ',' << format_double(row.gap) << ','
        << format_double(row.comm_scalars) << ',' << format_double(row.sum_dj) << ','
        << sanitize_note(row.note) << '\n';
  }
  return out.str();
}

TrialOutput run_trial(const Dataset& dataset, const Partition& partition, const KernelSpec& spec,
                      const std::vector<RankPolicy>& policies, Eigen::Index d_global,
                      const Transport& transport) {
  const int num_agents = partition.block_count();
  if (policies.size() != 1 && static_cast<int>(policies.size()) != num_agents) {
    throw InputError("need one policy total or one per block");
  }
  const Eigen::Index t = dataset.sample_count();
  if (d_global < 1 || d_global > t) {
    throw InputError("global rank " + std::to_string(d_global) + " outside [1, " +
                     std::to_string(t) + "]");
  }

  // Per-feature centering is local to each agent under a vertical
  // partition, so the distributed and centralized paths see the same bits.
  std::vector<AgentState> agents;
  std::vector<FeatureBlock> blocks = split_features(dataset, partition);
  for (int b = 0; b < num_agents; ++b) {
    const RankPolicy& policy = policies.size() == 1 ? policies.front() : policies[b];
    agents.push_back(AgentState{center_features(blocks[b]), spec, policy});
  }

  const FeatureBlock full = center_features(FeatureBlock(0, dataset.values));
  const GramMatrix k_exact = gram(full, spec);
  const SpectralTruncation global_full = sym_eig_topd(k_exact, t);

  TrialOutput out{.error = 0.0,
                  .sin_frob = 0.0,
                  .bound = {},
                  .outcome = run_one_shot(agents, transport, d_global),
                  .v_gt = global_full.eigenvectors.leftCols(d_global),
                  .global_spectrum = global_full.eigenvalues,
                  .k_exact = k_exact};

  out.error = subspace_error(out.v_gt, out.outcome.result.v_hat);
  out.sin_frob = sin_theta(out.v_gt, out.outcome.result.v_hat).frobenius_sin;

  if (d_global + 1 <= t) {
    std::vector<double> tails;
    const auto& ranks = out.outcome.result.info.agent_ranks;
    for (int b = 0; b < num_agents; ++b) {
      const Eigen::VectorXd spectrum = local_spectrum(agents[static_cast<std::size_t>(b)]);
      const Eigen::Index d_j = ranks[static_cast<std::size_t>(b)];
      tails.push_back(d_j < spectrum.size() ? std::max(0.0, spectrum[d_j]) : 0.0);
    }
    out.bound = subspace_error_bound(tails, out.global_spectrum, num_agents, t, d_global, spec);
  } else {
    out.bound.gap = kNan;
    out.bound.bound_value = kNan;
  }
  return out;
}

ResultsTable sweep_agents(const ExperimentConfig& config) {
  if (config.j_values.empty()) {
    throw InputError("sweep-agents needs at least one J value");
  }
  if (config.partition_kind == PartitionKind::Explicit) {
    throw InputError("sweep-agents varies J; explicit sizes pin it");
  }
  if (config.trials < 1) {
    throw InputError("trials must be >= 1");
  }
  const ResolvedSource src = resolve_source(config);
  const RankPolicy policy = resolve_policy(config);
  const Transport transport = resolve_transport(config);

  ResultsTable table;
  for (int j : config.j_values) {
    std::vector<TrialRow> group;
    for (int trial = 0; trial < config.trials; ++trial) {
      const std::uint64_t trial_seed = mix_seed(config.seed, static_cast<std::uint64_t>(trial));
      try {
        const Dataset data = dataset_for(config, src, base_samples(config, src), trial_seed);
        const KernelSpec spec = resolve_spec(config, data.feature_count());
        const Partition part =
            partition_for(config, data.feature_count(), j,
                          mix_seed(trial_seed, 0xA5u + static_cast<std::uint64_t>(j)));
        const TrialOutput out = run_trial(data, part, spec, {policy}, config.d_global, transport);
        group.push_back(metrics_row("J", j, policy_label(policy), trial, out));
      } catch (const std::exception& e) {
        group.push_back(failure_row("J", j, policy_label(policy), trial, e.what()));
      }
    }
    table.rows.insert(table.rows.end(), group.begin(), group.end());
    append_summaries(table.rows, group);
  }
  return table;
}

ResultsTable sweep_samples(const ExperimentConfig& config) {
  if (config.t_values.empty()) {
    throw InputError("sweep-samples needs at least one T value");
  }
  if (config.trials < 1) {
    throw InputError("trials must be >= 1");
  }
  const ResolvedSource src = resolve_source(config);
  const int num_agents = config.j_values.empty() ? 10 : config.j_values.front();
  const Transport transport = resolve_transport(config);

  std::vector<RankPolicy> policies;
  for (Eigen::Index c : config.fixed_variants) {
    policies.push_back(FixedRank{c});
  }
  const double ratio = config.adaptive_eps_ratio > 0.0 ? config.adaptive_eps_ratio
                                                       : default_eps_ratio(config.kernel);
  policies.push_back(AdaptiveRank{ratio});

  ResultsTable table;
  for (Eigen::Index t : config.t_values) {
    std::vector<std::vector<TrialRow>> groups(policies.size());
    for (int trial = 0; trial < config.trials; ++trial) {
      // One dataset and partition per (T, trial), shared by all policies.
      const std::uint64_t trial_seed =
          mix_seed(config.seed, mix_seed(static_cast<std::uint64_t>(t),
                                         static_cast<std::uint64_t>(trial)));
      for (std::size_t p = 0; p < policies.size(); ++p) {
        const std::string label = policy_label(policies[p]);
        try {
          const Dataset data = dataset_for(config, src, t, trial_seed);
          const KernelSpec spec = resolve_spec(config, data.feature_count());
          const Partition part = partition_for(config, data.feature_count(), num_agents,
                                               mix_seed(trial_seed, 0xB7u));
          const TrialOutput out =
              run_trial(data, part, spec, {policies[p]}, config.d_global, transport);
          groups[p].push_back(metrics_row("T", static_cast<long>(t), label, trial, out));
        } catch (const std::exception& e) {
          groups[p].push_back(failure_row("T", static_cast<long>(t), label, trial, e.what()));
        }
      }
    }
    for (auto& group : groups) {
      table.rows.insert(table.rows.end(), group.begin(), group.end());
      append_summaries(table.rows, group);
    }
  }
  return table;
}

ResultsTable bound_check(const ExperimentConfig& config, int* violations) {
  if (config.trials < 1) {
    throw InputError("trials must be >= 1");
  }
  const ResolvedSource src = resolve_source(config);
  const int num_agents = config.j_values.empty() ? 4 : config.j_values.front();
  const RankPolicy policy = resolve_policy(config);
  const Transport transport = resolve_transport(config);

  int violated = 0;
  ResultsTable table;
  std::vector<TrialRow> group;
  for (int trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t trial_seed = mix_seed(config.seed, static_cast<std::uint64_t>(trial));
    try {
      const Dataset data = dataset_for(config, src, base_samples(config, src), trial_seed);
      const KernelSpec spec = resolve_spec(config, data.feature_count());
      const Partition part = partition_for(config, data.feature_count(), num_agents,
                                           mix_seed(trial_seed, 0xC3u));
      const TrialOutput out =
          run_trial(data, part, spec, {policy}, config.d_global, transport);
      TrialRow row = metrics_row("J", part.block_count(), policy_label(policy), trial, out);
      if (std::isfinite(out.bound.bound_value) && out.sin_frob > out.bound.bound_value) {
        row.note = "VIOLATION";
        ++violated;
      }
      group.push_back(std::move(row));
    } catch (const std::exception& e) {
      group.push_back(failure_row("J", num_agents, policy_label(policy), trial, e.what()));
    }
  }
  table.rows.insert(table.rows.end(), group.begin(), group.end());
  append_summaries(table.rows, group);
  if (violations != nullptr) {
    *violations = violated;
  }
  return table;
}

OnceReport run_once(const ExperimentConfig& config) {
  const ResolvedSource src = resolve_source(config);
  const int num_agents = config.j_values.empty() ? 4 : config.j_values.front();
  const Dataset data = dataset_for(config, src, base_samples(config, src), config.seed);
  const KernelSpec spec = resolve_spec(config, data.feature_count());
  const Partition part =
      partition_for(config, data.feature_count(), num_agents, mix_seed(config.seed, 0xD1u));
  OnceReport report{.trial = run_trial(data, part, spec, {resolve_policy(config)},
                                       config.d_global, resolve_transport(config)),
                    .spec = spec,
                    .num_agents = part.block_count(),
                    .samples = data.sample_count()};
  return report;
}

std::optional<std::pair<long long, long long>> agent_range_for_cubic(long long features,
                                                                     long long rank,
                                                                     long long samples) {
  if (features < 1 || rank < 0 || samples < 1) {
    throw InputError("planner needs M >= 1, D >= 0, T >= 1");
  }
  using Wide = __int128;
  const auto cost_ok = [&](long long j) {
    return Wide(j) * j * (rank + 1) - Wide(samples) * j + features <= 0;
  };
  const Wide discriminant =
      Wide(samples) * samples - Wide(4) * features * (rank + 1);
  if (discriminant < 0) {
    return std::nullopt;
  }
  const double root = std::sqrt(static_cast<double>(discriminant));
  const double denom = 2.0 * static_cast<double>(rank + 1);
  long long lo = static_cast<long long>(std::ceil((static_cast<double>(samples) - root) / denom));
  long long hi = static_cast<long long>(std::floor((static_cast<double>(samples) + root) / denom));
  // The float estimate can miss the integer boundary by one; settle it
  // against the exact predicate.
  while (cost_ok(lo - 1)) {
    --lo;
  }
  while (lo <= hi && !cost_ok(lo)) {
    ++lo;
  }
  while (cost_ok(hi + 1)) {
    ++hi;
  }
  while (hi >= lo && !cost_ok(hi)) {
    --hi;
  }
  lo = std::max(lo, 1LL);
  hi = std::min(hi, features);
  if (lo > hi) {
    return std::nullopt;
  }
  return std::make_pair(lo, hi);
}

void write_results(const ResultsTable& table, const ExperimentConfig& config,
                   const std::string& name) {
  if (config.out_dir.empty()) {
    return;
  }
  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);

  std::ofstream csv(dir / (name + ".csv"));
  if (!csv) {
    throw IoError("cannot write results under " + config.out_dir);
  }
  csv << table.to_csv();

  std::ofstream meta(dir / (name + "_metadata.json"));
  if (!meta) {
    throw IoError("cannot write metadata under " + config.out_dir);
  }
  meta << config_to_json(config).dump(2) << '\n';
}

}  // namespace dkpca
