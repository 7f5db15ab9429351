#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dkpca/agent.hpp"
#include "dkpca/data.hpp"
#include "dkpca/fusion.hpp"
#include "test_oracles.hpp"

using namespace dkpca;

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name, const std::string& contents)
      : path(std::filesystem::temp_directory_path() / name) {
    std::ofstream out(path);
    out << contents;
  }
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("synth_lowrank determinism and validation") {
  const Dataset a = synth_lowrank(20, 15, 4, 0.9, 0.1, 77);
  const Dataset b = synth_lowrank(20, 15, 4, 0.9, 0.1, 77);
  CHECK(a.values == b.values);  // bit identical
  CHECK(a.feature_count() == 20);
  CHECK(a.sample_count() == 15);

  const Dataset c = synth_lowrank(20, 15, 4, 0.9, 0.1, 78);
  CHECK(a.values != c.values);

  CHECK_THROWS_AS(synth_lowrank(5, 4, 5, 0.9, 0.0, 1), InputError);
  CHECK_THROWS_AS(synth_lowrank(5, 4, 2, 0.9, -0.1, 1), InputError);
}

TEST_CASE("synth_lowrank rows are centered and noiseless data has exact rank") {
  const Dataset data = synth_lowrank(30, 25, 6, 0.8, 0.0, 13);
  for (Eigen::Index r = 0; r < data.feature_count(); ++r) {
    CHECK(std::abs(data.values.row(r).mean()) <= 1e-12);
  }
  const Eigen::VectorXd singulars = data.values.jacobiSvd().singularValues();
  CHECK(singulars[5] > 1e-6);
  for (Eigen::Index k = 6; k < singulars.size(); ++k) {
    CHECK(singulars[k] <= 1e-10 * singulars[0]);
  }
}

TEST_CASE("noiseless rank-r data makes rank-r truncation lossless end to end") {
  const Dataset data = synth_lowrank(40, 24, 10, 0.9, 0.0, 101);
  const KernelSpec spec = KernelSpec::linear();

  const GramMatrix k_full = gram(FeatureBlock(0, data.values), spec);
  const SpectralTruncation gt = sym_eig_topd(k_full, 10);

  std::vector<AgentMessage> msgs;
  for (const FeatureBlock& block : partition(data, UniformScheme{4})) {
    msgs.push_back(local_truncation(AgentState{block, spec, FixedRank{10}}));
  }
  const FusionResult hat = fuse(msgs, spec, 10);
  CHECK(subspace_error(gt.eigenvectors, hat.v_hat) <= 1e-8);
}

TEST_CASE("ingest_table pass-through and hand-computed imputation") {
  TempFile clean("dkpca_clean.csv", "1,2,3\n4,5,6\n");
  const IngestResult plain = ingest_table(clean.path);
  CHECK(plain.dropped_features.empty());
  CHECK(plain.dataset.values.rows() == 2);
  CHECK(plain.dataset.values.cols() == 3);
  CHECK(plain.dataset.values(1, 2) == 6.0);

  // Feature 0 misses 1 of 3 entries (33% > 10%): dropped. Feature 1
  // misses 1 of 10... build a 10-sample table instead.
  TempFile table("dkpca_missing.csv",
                 "1,,3,5,6,7,8,9,10,11\n"
                 "1,2,3,4,5,6,7,8,9,10\n");
  const IngestResult kept = ingest_table(table.path);
  CHECK(kept.dropped_features.empty());
  CHECK(kept.dataset.values(0, 1) == doctest::Approx(60.0 / 9.0).epsilon(1e-15));

  TempFile dropping("dkpca_dropping.csv",
                    "1,,3\n"
                    "4,5,6\n");
  const IngestResult dropped = ingest_table(dropping.path);
  CHECK(dropped.dropped_features == std::vector<Eigen::Index>{0});
  CHECK(dropped.dataset.values.rows() == 1);
  CHECK(dropped.dataset.values(0, 0) == 4.0);
}

TEST_CASE("ingest_table boundary: exactly 10% missing is kept") {
  std::string row;
  for (int i = 0; i < 10; ++i) {
    row += (i == 3 ? std::string("") : std::to_string(i)) + (i + 1 < 10 ? "," : "\n");
  }
  TempFile table("dkpca_boundary.csv", row + row);
  const IngestResult result = ingest_table(table.path);
  CHECK(result.dropped_features.empty());

  // 2 of 10 missing crosses the threshold.
  std::string worse;
  for (int i = 0; i < 10; ++i) {
    worse += ((i == 3 || i == 5) ? std::string("") : std::to_string(i)) +
             (i + 1 < 10 ? "," : "\n");
  }
  TempFile table2("dkpca_boundary2.csv", worse + row);
  const IngestResult result2 = ingest_table(table2.path);
  CHECK(result2.dropped_features == std::vector<Eigen::Index>{0});
}

TEST_CASE("ingest_table error paths") {
  CHECK_THROWS_AS(ingest_table("/nonexistent/file.csv"), IoError);

  TempFile ragged("dkpca_ragged.csv", "1,2,3\n4,5\n");
  CHECK_THROWS_AS(ingest_table(ragged.path), IoError);

  TempFile garbage("dkpca_garbage.csv", "1,abc,3\n");
  CHECK_THROWS_AS(ingest_table(garbage.path), IoError);

  TempFile all_missing("dkpca_all_missing.csv", ",,\n,,\n");
  CHECK_THROWS_AS(ingest_table(all_missing.path), IoError);
}

TEST_CASE("ingest_table custom options") {
  TempFile table("dkpca_custom.csv", "1;NA;3;5;6;7;8;9;10;11\n");
  IngestOptions options;
  options.delimiter = ';';
  options.missing_token = "NA";
  const IngestResult result = ingest_table(table.path, options);
  CHECK(result.dataset.values(0, 1) == doctest::Approx(60.0 / 9.0));

  // Samples-as-rows transposes the orientation.
  TempFile tall("dkpca_tall.csv", "1,10\n2,20\n3,30\n");
  IngestOptions transpose;
  transpose.samples_as_rows = true;
  const IngestResult flipped = ingest_table(tall.path, transpose);
  CHECK(flipped.dataset.values.rows() == 2);
  CHECK(flipped.dataset.values.cols() == 3);
  CHECK(flipped.dataset.values(1, 2) == 30.0);
}

TEST_CASE("ingest is idempotent through export") {
  const Dataset data = synth_lowrank(8, 6, 3, 0.7, 0.2, 55);
  const auto path = std::filesystem::temp_directory_path() / "dkpca_roundtrip.csv";
  write_table(data, path);
  const IngestResult first = ingest_table(path);
  CHECK(first.dataset.values == data.values);  // shortest round-trip formatting

  const auto path2 = std::filesystem::temp_directory_path() / "dkpca_roundtrip2.csv";
  write_table(first.dataset, path2);
  const IngestResult second = ingest_table(path2);
  CHECK(second.dataset.values == first.dataset.values);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("drop report lists removed features") {
  const auto path = std::filesystem::temp_directory_path() / "dkpca_drops.txt";
  write_drop_report({2, 5, 9}, path);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    lines.push_back(line);
  }
  CHECK(lines == std::vector<std::string>({"2", "5", "9"}));
  std::filesystem::remove(path);
}

TEST_CASE("uniform partition sizes") {
  CHECK(make_partition(10, UniformScheme{2}).sizes == std::vector<Eigen::Index>({5, 5}));
  CHECK(make_partition(10, UniformScheme{3}).sizes == std::vector<Eigen::Index>({4, 3, 3}));
  CHECK(make_partition(5, UniformScheme{5}).sizes == std::vector<Eigen::Index>(5, 1));
  CHECK_THROWS_AS(make_partition(3, UniformScheme{4}), InputError);
  CHECK_THROWS_AS(make_partition(3, UniformScheme{0}), InputError);
}

TEST_CASE("random partition is deterministic with valid sizes") {
  const Partition a = make_partition(10, RandomSizesScheme{3, 7});
  const Partition b = make_partition(10, RandomSizesScheme{3, 7});
  CHECK(a.sizes == b.sizes);
  CHECK(a.sizes.size() == 3);
  CHECK(a.total_features() == 10);
  for (Eigen::Index size : a.sizes) {
    CHECK(size >= 1);
  }

  // Different seeds eventually differ.
  bool saw_difference = false;
  for (std::uint64_t seed = 0; seed < 20 && !saw_difference; ++seed) {
    saw_difference = make_partition(10, RandomSizesScheme{3, seed}).sizes != a.sizes;
  }
  CHECK(saw_difference);
}

TEST_CASE("explicit partition validation") {
  CHECK(make_partition(6, ExplicitScheme{{2, 3, 1}}).sizes ==
        std::vector<Eigen::Index>({2, 3, 1}));
  CHECK_THROWS_AS(make_partition(6, ExplicitScheme{{2, 3}}), InputError);
  CHECK_THROWS_AS(make_partition(6, ExplicitScheme{{6, 0}}), InputError);
  CHECK_THROWS_AS(make_partition(6, ExplicitScheme{{}}), InputError);
}

TEST_CASE("blocks reassemble to the dataset exactly") {
  const Dataset data = synth_lowrank(17, 9, 3, 0.8, 0.3, 91);
  for (int j : {1, 2, 5, 17}) {
    const auto blocks = partition(data, RandomSizesScheme{j, 33});
    CHECK(static_cast<int>(blocks.size()) == j);
    Eigen::MatrixXd stacked(data.feature_count(), data.sample_count());
    Eigen::Index offset = 0;
    for (const auto& block : blocks) {
      CHECK(block.feature_count() >= 1);
      stacked.middleRows(offset, block.feature_count()) = block.values();
      offset += block.feature_count();
    }
    CHECK(stacked == data.values);
  }
}
