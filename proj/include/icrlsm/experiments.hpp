// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration behind the CLI: dataset generation, per-seed
// training runs, DCI evaluation, and the graph sweep / ablation / scaling
// suites. Every suite is a set of independent (configuration, seed) cells
// whose reports are reduced into a table.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icrlsm/dataset.hpp"
#include "icrlsm/dci.hpp"
#include "icrlsm/graph.hpp"
#include "icrlsm/scm.hpp"
#include "icrlsm/trainer.hpp"

namespace icrlsm {

/// "G1".."G10", "chain", "full", or "random" (n nodes, edge_prob).
struct GraphSpec {
    std::string name = "G3";
    std::size_t n = 4;
    double edge_prob = 0.5;

    /// Random graphs draw from the seed's graph stream.
    CausalGraph build(std::uint64_t seed) const;
    std::string label() const;
    nlohmann::json to_json() const;
    static GraphSpec from_json(const nlohmann::json& doc);
};

struct ExperimentConfig {
    GraphSpec graph;
    ScmInit scm;
    SplitCounts counts = SplitCounts::desk_scale();
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir = "runs";
    RegressorConfig regressor;
    bool deterministic = false;
    unsigned workers = 1;
    std::string ablation_graph = "G3";
    std::vector<std::size_t> scaling_sizes{5, 6, 7, 8, 9, 10};
    bool save_cell_datasets = false;

    /// 20k/2k/2k samples, 50 epochs.
    static ExperimentConfig desk_scale();
    /// 100k/10k/10k samples, 100 epochs.
    static ExperimentConfig paper_scale();

    nlohmann::json to_json() const;
    /// Missing keys keep desk-scale defaults. Accepts either a config
    /// document or a run_manifest.json (reads its "config" member).
    static ExperimentConfig from_json(const nlohmann::json& doc);
    void validate() const;
};

/// Ground truth for one seed: graph, SCM, mixing and all splits.
struct GeneratedData {
    CausalGraph graph{1};
    LocationScaleScm scm;
    MixingMap mixing;
    DatasetSplits splits;
};
GeneratedData generate_for_seed(const GraphSpec& graph, const ScmInit& scm_init, const SplitCounts& counts,
                                std::uint64_t seed);

ModelConfig default_model_config(std::size_t n, std::size_t d);

struct CellResult {
    std::string label;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double d_total = 0.0;
    double c_total = 0.0;
    std::optional<double> best_val_loss;
    std::filesystem::path dir;

    nlohmann::json to_json() const;
};

/// generate -> train -> evaluate for one seed; failures are recorded in
/// the result instead of thrown.
CellResult run_cell(const ExperimentConfig& config, const GraphSpec& graph, const ScmInit& scm_init,
                    std::uint64_t seed, const std::filesystem::path& dir);

struct TableRow {
    std::string label;
    std::string setting;
    std::vector<CellResult> cells;
    double mean_d = 0.0, std_d = 0.0, mean_c = 0.0, std_c = 0.0;
    std::size_t failures = 0;
};

struct ResultTable {
    std::string title;
    std::vector<TableRow> rows;

    std::string to_csv() const;
    std::string to_text() const;
};

/// Runs every (row, seed) cell, using up to `workers` threads.
ResultTable run_table2(const ExperimentConfig& config, const std::vector<std::string>& graphs);
ResultTable run_ablation(const ExperimentConfig& config);
ResultTable run_scaling(const ExperimentConfig& config);

/// Static SVG line plot of mean D_total +/- one std against n.
std::string scaling_svg(const ResultTable& table);

/// Hashes of every regular file under `dir` except run_manifest.json and
/// timing.json (wall-clock data).
nlohmann::json output_hashes(const std::filesystem::path& dir);

void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& config);

std::string version_string();

/// ICRLSM_NUM_WORKERS caps the requested worker count.
unsigned effective_workers(unsigned requested);

}  // namespace icrlsm
