// SPDX-License-Identifier: Apache-2.0
//
// Interventional datasets and their on-disk layout:
//
//   <dir>/meta.json    n, adjacency, mixing matrix, seed, counts, versions
//   <dir>/train.csv    x_1..x_n, xt_1..xt_n, target[, z_*, zt_*, e_*, et_*]
//   <dir>/val.csv
//   <dir>/test.csv
//
// Floats are written in shortest round-trip form, so load(save(ds)) is
// bit-exact.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icrlsm/scm.hpp"

namespace icrlsm {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char* kGeneratorVersion = "icrlsm-datagen-1";

struct SplitCounts {
    std::size_t train = 20000;
    std::size_t val = 2000;
    std::size_t test = 2000;

    static SplitCounts desk_scale() { return {20000, 2000, 2000}; }
    static SplitCounts paper_scale() { return {100000, 10000, 10000}; }
    bool operator==(const SplitCounts&) const = default;
};

struct DatasetMeta {
    std::size_t n = 0;
    std::vector<std::vector<bool>> adjacency;
    Eigen::MatrixXd mixing;
    std::uint64_t seed = 0;
    SplitCounts counts;
    ScmInit scm_init;
    int format_version = kDatasetFormatVersion;
    std::string generator_version = kGeneratorVersion;
};

struct Dataset {
    DatasetMeta meta;
    std::string split;  // "train", "val" or "test"
    std::vector<InterventionalSample> samples;

    std::size_t size() const { return samples.size(); }
    bool has_truth() const;
};

struct DatasetSplits {
    Dataset train, val, test;
};

/// Draws every split from its own RNG stream; sample k of a split depends
/// only on (seed, split, k), so `threads` never changes the output.
DatasetSplits generate_dataset(const LocationScaleScm& scm, const MixingMap& mix, const SplitCounts& counts,
                               std::uint64_t seed, unsigned threads = 1);

/// Writes `<dir>/meta.json` and `<dir>/<split>.csv`.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
void save_dataset(const DatasetSplits& splits, const std::filesystem::path& dir);

/// Throws IoError for missing/corrupt/truncated files and SchemaError when
/// the CSV disagrees with meta.json.
Dataset load_dataset(const std::filesystem::path& dir, const std::string& split);
DatasetSplits load_dataset(const std::filesystem::path& dir);
DatasetMeta load_meta(const std::filesystem::path& dir);

}  // namespace icrlsm
