#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dkpca/errors.hpp"
#include "dkpca/kernels.hpp"

namespace dkpca {

/// Feature-by-sample matrix (rows are features) with a provenance tag.
struct Dataset {
  Eigen::MatrixXd values;  // M x T
  std::vector<std::string> sample_labels;  // optional, empty or length T
  std::string provenance;

  Eigen::Index feature_count() const { return values.rows(); }
  Eigen::Index sample_count() const { return values.cols(); }
};

/// Low-rank-plus-noise generator:
///   X = A diag(s) B^T + noise_level * N / sqrt(M),
/// with A (M x r) and B (T x r) orthonormal from seeded Gaussian draws,
/// s_k = decay^(k-1), N i.i.d. standard Gaussian; rows centered afterwards.
Dataset synth_lowrank(Eigen::Index features, Eigen::Index samples, Eigen::Index true_rank,
                      double spectrum_decay, double noise_level, std::uint64_t seed);

struct IngestOptions {
  char delimiter = ',';
  std::string missing_token;   // exact match after trimming; default empty field
  bool samples_as_rows = false;  // flip when the file stores samples as rows
};

struct IngestResult {
  Dataset dataset;
  std::vector<Eigen::Index> dropped_features;  // indices in the original file
};

/// Read a delimited numeric table. Features with more than 10% missing
/// entries are dropped; remaining gaps are filled with the feature's mean
/// over observed entries.
IngestResult ingest_table(const std::filesystem::path& path, const IngestOptions& options = {});

/// Write a dataset back out in the same delimited format.
void write_table(const Dataset& dataset, const std::filesystem::path& path, char delimiter = ',');

void write_drop_report(const std::vector<Eigen::Index>& dropped,
                       const std::filesystem::path& path);

struct UniformScheme {
  int num_blocks = 1;
};

/// Seeded composition of M into num_blocks parts, each >= 1, uniform over
/// compositions (stars-and-bars draw).
struct RandomSizesScheme {
  int num_blocks = 1;
  std::uint64_t seed = 0;
};

struct ExplicitScheme {
  std::vector<Eigen::Index> sizes;
};

using PartitionScheme = std::variant<UniformScheme, RandomSizesScheme, ExplicitScheme>;

/// A validated assignment of contiguous feature ranges to blocks.
struct Partition {
  std::vector<Eigen::Index> sizes;

  int block_count() const { return static_cast<int>(sizes.size()); }
  Eigen::Index total_features() const;
};

Partition make_partition(Eigen::Index num_features, const PartitionScheme& scheme);

/// Slice the dataset's feature rows into one block per partition entry;
/// stacking the blocks back in order reproduces the dataset exactly.
std::vector<FeatureBlock> split_features(const Dataset& dataset, const Partition& partition);

std::vector<FeatureBlock> partition(const Dataset& dataset, const PartitionScheme& scheme);

}  // namespace dkpca
