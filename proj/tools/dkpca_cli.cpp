#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dkpca/experiment.hpp"

namespace {

using dkpca::ExperimentConfig;

int run_table_command(const std::string& name, const ExperimentConfig& config,
                      const dkpca::ResultsTable& table, int violations = -1) {
  dkpca::write_results(table, config, name);
  if (config.out_dir.empty()) {
    std::cout << table.to_csv();
  } else {
    std::cout << "wrote " << (std::filesystem::path(config.out_dir) / (name + ".csv")).string()
              << " (" << table.rows.size() << " rows)\n";
  }
  if (violations >= 0) {
    std::cout << "bound violations: " << violations << "\n";
    return violations == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot distributed kernel PCA for vertically partitioned data"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from an INI/TOML file");

  ExperimentConfig config;

  app.add_option("--data", config.data_path, "Delimited table (rows = features by default)");
  app.add_option("--delimiter", config.ingest.delimiter, "Field delimiter")->default_val(",");
  app.add_option("--missing-token", config.ingest.missing_token,
                 "Token marking a missing value (default: empty field)");
  app.add_flag("--samples-as-rows", config.ingest.samples_as_rows,
               "Input file stores samples as rows");

  app.add_option("--synth-features", config.synth.features, "Synthetic feature count M");
  app.add_option("--synth-samples", config.synth.samples, "Synthetic sample count T");
  app.add_option("--synth-rank", config.synth.true_rank, "Synthetic true rank");
  app.add_option("--synth-decay", config.synth.decay, "Synthetic singular-value decay");
  app.add_option("--synth-noise", config.synth.noise, "Synthetic noise level");

  app.add_option("--kernel", [&config](const std::vector<std::string>& values) {
       if (values.front() == "linear") {
         config.kernel = dkpca::KernelKind::Linear;
       } else if (values.front() == "rbf") {
         config.kernel = dkpca::KernelKind::Rbf;
       } else {
         return false;
       }
       return true;
     },
     "Kernel: linear or rbf (default rbf)");
  app.add_option("--sigma", config.sigma, "RBF width (default sqrt(M)/3)");

  app.add_option("--partition", [&config](const std::vector<std::string>& values) {
       if (values.front() == "uniform") {
         config.partition_kind = dkpca::PartitionKind::Uniform;
       } else if (values.front() == "random") {
         config.partition_kind = dkpca::PartitionKind::RandomSizes;
       } else if (values.front() == "explicit") {
         config.partition_kind = dkpca::PartitionKind::Explicit;
       } else {
         return false;
       }
       return true;
     },
     "Partition scheme: uniform, random, or explicit");
  app.add_option("--sizes", config.explicit_sizes, "Explicit block sizes")->delimiter(',');

  app.add_option("--d", config.d_global, "Number of global eigenvectors D");
  app.add_option("--rank", config.fixed_rank, "Fixed per-agent rank (default: D)");
  app.add_flag("--adaptive", config.use_adaptive, "Use the adaptive rank policy");
  app.add_option("--adaptive-eps-ratio", config.adaptive_eps_ratio,
                 "Adaptive threshold as a ratio of the local leading eigenvalue "
                 "(default 0.04 linear, 0.0005 rbf)");

  app.add_option("--agents,--j-values", config.j_values,
                 "Agent counts: the sweep list for sweep-agents, a single J elsewhere")
      ->delimiter(',');
  app.add_option("--t-values", config.t_values, "Sample counts for sweep-samples")
      ->delimiter(',');
  app.add_option("--fixed-variants", config.fixed_variants,
                 "Fixed ranks compared by sweep-samples")
      ->delimiter(',');

  app.add_option("--trials", config.trials, "Trials per sweep point");
  app.add_option("--seed", config.seed, "Base seed");
  app.add_option("--out", config.out_dir, "Output directory for tables and metadata");

  app.add_option("--transport", [&config](const std::vector<std::string>& values) {
       if (values.front() == "inprocess") {
         config.transport = dkpca::TransportKind::InProcess;
       } else if (values.front() == "socket") {
         config.transport = dkpca::TransportKind::Socket;
       } else {
         return false;
       }
       return true;
     },
     "Transport: inprocess or socket");
  app.add_option("--address", config.socket_address, "Socket listen/connect address");
  app.add_option("--port", config.socket_port, "Socket port (0 = ephemeral)");
  app.add_option("--timeout-ms", config.socket_timeout_ms, "Socket timeout in milliseconds");

  auto* sweep_agents_cmd =
      app.add_subcommand("sweep-agents", "Error vs. number of agents (one row per (J, trial))");
  auto* sweep_samples_cmd = app.add_subcommand(
      "sweep-samples", "Error and communication vs. sample count, fixed and adaptive policies");
  auto* bound_check_cmd = app.add_subcommand(
      "bound-check", "Check the measured subspace distance against the error bound");
  auto* run_once_cmd = app.add_subcommand("run-once", "Single end-to-end run");
  for (CLI::App* cmd : {sweep_agents_cmd, sweep_samples_cmd, bound_check_cmd, run_once_cmd}) {
    cmd->fallthrough();
  }

  auto* plan_cmd = app.add_subcommand(
      "plan-agents", "Agent counts keeping distributed computation within the T^3 cost class");
  plan_cmd->fallthrough();
  long long plan_m = 0;
  long long plan_d = 0;
  long long plan_t = 0;
  plan_cmd->add_option("--features,-m", plan_m, "Total feature count M")->required();
  plan_cmd->add_option("--plan-rank,-r", plan_d, "Target rank D")->required();
  plan_cmd->add_option("--samples,-t", plan_t, "Sample count T")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sweep_agents_cmd->parsed()) {
      if (config.j_values.empty()) {
        config.j_values = {1, 2, 5, 10, 20};
      }
      return run_table_command("sweep_agents", config, dkpca::sweep_agents(config));
    }
    if (sweep_samples_cmd->parsed()) {
      if (config.t_values.empty()) {
        config.t_values = {50, 100, 150};
      }
      if (config.partition_kind == dkpca::PartitionKind::Uniform && !app.count("--partition")) {
        config.partition_kind = dkpca::PartitionKind::RandomSizes;  // maldistribution sweep
      }
      return run_table_command("sweep_samples", config, dkpca::sweep_samples(config));
    }
    if (bound_check_cmd->parsed()) {
      int violations = 0;
      auto table = dkpca::bound_check(config, &violations);
      return run_table_command("bound_check", config, table, violations);
    }
    if (run_once_cmd->parsed()) {
      const auto report = dkpca::run_once(config);
      std::cout << "agents:        " << report.num_agents << "\n"
                << "samples:       " << report.samples << "\n"
                << "kernel:        " << dkpca::to_string(report.spec.kind());
      if (report.spec.kind() == dkpca::KernelKind::Rbf) {
        std::cout << " (sigma " << report.spec.sigma() << ")";
      }
      std::cout << "\n"
                << "error:         " << report.trial.error << "\n"
                << "bound:         " << report.trial.bound.bound_value << "\n"
                << "gap:           " << report.trial.bound.gap << "\n"
                << "comm scalars:  " << report.trial.outcome.cost.total_scalars << "\n"
                << "wire bytes:    " << report.trial.outcome.cost.total_bytes << "\n";
      if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
        std::ofstream trace(std::filesystem::path(config.out_dir) / "trace.log");
        trace << dkpca::trace_to_string(report.trial.outcome.trace);
        std::cout << "trace:         " << config.out_dir << "/trace.log\n";
      }
      return 0;
    }
    if (plan_cmd->parsed()) {
      const auto range = dkpca::agent_range_for_cubic(plan_m, plan_d, plan_t);
      if (!range) {
        std::cout << "no agent count keeps the computation in the T^3 cost class "
                  << "(need T >= 2 sqrt(M (D+1)))\n";
      } else {
        std::cout << "J in [" << range->first << ", " << range->second << "]\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
