#include "dkpca/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace dkpca {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) {
    return "";
  }
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

Eigen::MatrixXd orthonormal_columns(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd raw(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      raw(r, c) = gauss(rng);
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

std::string format_value(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Dataset synth_lowrank(Eigen::Index features, Eigen::Index samples, Eigen::Index true_rank,
                      double spectrum_decay, double noise_level, std::uint64_t seed) {
  if (features < 1 || samples < 1) {
    throw InputError("dataset dimensions must be positive");
  }
  if (true_rank < 1 || true_rank > std::min(features, samples)) {
    throw InputError("true rank " + std::to_string(true_rank) + " outside [1, min(M, T)]");
  }
  if (!(spectrum_decay > 0.0)) {
    throw InputError("spectrum decay must be positive");
  }
  if (noise_level < 0.0) {
    throw InputError("noise level must be non-negative");
  }

  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd left = orthonormal_columns(features, true_rank, rng);
  const Eigen::MatrixXd right = orthonormal_columns(samples, true_rank, rng);
  Eigen::VectorXd spectrum(true_rank);
  for (Eigen::Index k = 0; k < true_rank; ++k) {
    spectrum[k] = std::pow(spectrum_decay, static_cast<double>(k));
  }

  Dataset out;
  out.values = left * spectrum.asDiagonal() * right.transpose();
  if (noise_level > 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double scale = noise_level / std::sqrt(static_cast<double>(features));
    for (Eigen::Index c = 0; c < samples; ++c) {
      for (Eigen::Index r = 0; r < features; ++r) {
        out.values(r, c) += scale * gauss(rng);
      }
    }
  }
  out.values.colwise() -= out.values.rowwise().mean().eval();
  out.provenance = "synthetic(seed=" + std::to_string(seed) + ")";
  return out;
}

IngestResult ingest_table(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }

  std::vector<std::vector<std::string>> cells;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) {
      break;  // trailing newline
    }
    std::vector<std::string> row;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, options.delimiter)) {
      row.push_back(trim(field));
    }
    if (!line.empty() && line.back() == options.delimiter) {
      row.push_back("");
    }
    cells.push_back(std::move(row));
  }
  if (cells.empty()) {
    throw IoError(path.string() + " is empty");
  }
  const std::size_t width = cells.front().size();
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (cells[r].size() != width) {
      throw IoError(path.string() + ": row " + std::to_string(r) + " has " +
                    std::to_string(cells[r].size()) + " fields, expected " +
                    std::to_string(width));
    }
  }

  // Normalize to features-as-rows.
  std::size_t num_features = cells.size();
  std::size_t num_samples = width;
  if (options.samples_as_rows) {
    std::swap(num_features, num_samples);
  }
  auto cell_at = [&](std::size_t feature, std::size_t sample) -> const std::string& {
    return options.samples_as_rows ? cells[sample][feature] : cells[feature][sample];
  };

  const std::string missing = trim(options.missing_token);
  IngestResult out;
  std::vector<Eigen::VectorXd> kept_rows;
  for (std::size_t f = 0; f < num_features; ++f) {
    Eigen::VectorXd row(static_cast<Eigen::Index>(num_samples));
    std::vector<Eigen::Index> holes;
    double observed_sum = 0.0;
    for (std::size_t s = 0; s < num_samples; ++s) {
      const std::string& cell = cell_at(f, s);
      if (cell == missing) {
        holes.push_back(static_cast<Eigen::Index>(s));
        continue;
      }
      double value = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
          !std::isfinite(value)) {
        throw IoError(path.string() + ": cannot parse '" + cell + "' at feature " +
                      std::to_string(f) + ", sample " + std::to_string(s));
      }
      row[static_cast<Eigen::Index>(s)] = value;
      observed_sum += value;
    }
    if (holes.size() * 10 > num_samples) {
      out.dropped_features.push_back(static_cast<Eigen::Index>(f));
      continue;
    }
    if (!holes.empty()) {
      const double mean = observed_sum / static_cast<double>(num_samples - holes.size());
      for (Eigen::Index hole : holes) {
        row[hole] = mean;
      }
    }
    kept_rows.push_back(std::move(row));
  }
  if (kept_rows.empty()) {
    throw IoError(path.string() + ": no feature survived the missing-value filter");
  }

  out.dataset.values.resize(static_cast<Eigen::Index>(kept_rows.size()),
                            static_cast<Eigen::Index>(num_samples));
  for (std::size_t f = 0; f < kept_rows.size(); ++f) {
    out.dataset.values.row(static_cast<Eigen::Index>(f)) = kept_rows[f].transpose();
  }
  out.dataset.provenance = path.string();
  return out;
}

void write_table(const Dataset& dataset, const std::filesystem::path& path, char delimiter) {
  std::ofstream outstream(path);
  if (!outstream) {
    throw IoError("cannot write " + path.string());
  }
  for (Eigen::Index r = 0; r < dataset.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < dataset.values.cols(); ++c) {
      if (c > 0) {
        outstream << delimiter;
      }
      outstream << format_value(dataset.values(r, c));
    }
    outstream << '\n';
  }
}

void write_drop_report(const std::vector<Eigen::Index>& dropped,
                       const std::filesystem::path& path) {
  std::ofstream outstream(path);
  if (!outstream) {
    throw IoError("cannot write " + path.string());
  }
  for (Eigen::Index index : dropped) {
    outstream << index << '\n';
  }
}

Eigen::Index Partition::total_features() const {
  Eigen::Index total = 0;
  for (Eigen::Index size : sizes) {
    total += size;
  }
  return total;
}

Partition make_partition(Eigen::Index num_features, const PartitionScheme& scheme) {
  Partition out;
  if (const auto* uniform = std::get_if<UniformScheme>(&scheme)) {
    const int j = uniform->num_blocks;
    if (j < 1 || j > num_features) {
      throw InputError("block count " + std::to_string(j) + " outside [1, " +
                       std::to_string(num_features) + "]");
    }
    const Eigen::Index base = num_features / j;
    const Eigen::Index remainder = num_features % j;
    for (int b = 0; b < j; ++b) {
      out.sizes.push_back(base + (b < remainder ? 1 : 0));
    }
  } else if (const auto* random = std::get_if<RandomSizesScheme>(&scheme)) {
    const int j = random->num_blocks;
    if (j < 1 || j > num_features) {
      throw InputError("block count " + std::to_string(j) + " outside [1, " +
                       std::to_string(num_features) + "]");
    }
    // Stars and bars: j - 1 distinct cut points from {1, ..., M-1}.
    std::vector<Eigen::Index> positions(static_cast<std::size_t>(num_features - 1));
    for (Eigen::Index i = 0; i < num_features - 1; ++i) {
      positions[static_cast<std::size_t>(i)] = i + 1;
    }
    std::mt19937_64 rng(random->seed);
    std::vector<Eigen::Index> cuts;
    std::sample(positions.begin(), positions.end(), std::back_inserter(cuts),
                static_cast<std::size_t>(j - 1), rng);
    Eigen::Index prev = 0;
    for (Eigen::Index cut : cuts) {
      out.sizes.push_back(cut - prev);
      prev = cut;
    }
    out.sizes.push_back(num_features - prev);
  } else {
    out.sizes = std::get<ExplicitScheme>(scheme).sizes;
    Eigen::Index total = 0;
    for (Eigen::Index size : out.sizes) {
      if (size < 1) {
        throw InputError("explicit partition has an empty block");
      }
      total += size;
    }
    if (out.sizes.empty() || total != num_features) {
      throw InputError("explicit sizes must sum to " + std::to_string(num_features) + ", got " +
                       std::to_string(total));
    }
  }
  return out;
}

std::vector<FeatureBlock> split_features(const Dataset& dataset, const Partition& partition) {
  if (partition.total_features() != dataset.feature_count()) {
    throw InputError("partition covers " + std::to_string(partition.total_features()) +
                     " features, dataset has " + std::to_string(dataset.feature_count()));
  }
  std::vector<FeatureBlock> blocks;
  blocks.reserve(partition.sizes.size());
  Eigen::Index offset = 0;
  for (std::size_t b = 0; b < partition.sizes.size(); ++b) {
    const Eigen::Index size = partition.sizes[b];
    blocks.emplace_back(static_cast<int>(b), dataset.values.middleRows(offset, size));
    offset += size;
  }
  return blocks;
}

std::vector<FeatureBlock> partition(const Dataset& dataset, const PartitionScheme& scheme) {
  return split_features(dataset, make_partition(dataset.feature_count(), scheme));
}

}  // namespace dkpca
