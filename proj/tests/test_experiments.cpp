// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "icrlsm/dataset.hpp"
#include "icrlsm/error.hpp"
#include "icrlsm/experiments.hpp"
#include "icrlsm/io.hpp"
#include "support.hpp"

using namespace icrlsm;
namespace fs = std::filesystem;
using nlohmann::json;

#ifndef ICRLSM_CLI
#error "ICRLSM_CLI must point at the command-line binary"
#endif

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run cli(const std::string& args) {
    const auto log = fs::temp_directory_path() / "icrlsm_cli_test.log";
    const std::string cmd = std::string(ICRLSM_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

ExperimentConfig tiny_config(const fs::path& out) {
    ExperimentConfig c = ExperimentConfig::desk_scale();
    c.counts = {300, 100, 150};
    c.train.epochs = 1;
    c.regressor.forest.trees = 5;
    c.seeds = {0, 1};
    c.output_dir = out;
    return c;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("config defaults and round trip") {
    const auto desk = ExperimentConfig::desk_scale();
    CHECK(desk.counts == SplitCounts{20000, 2000, 2000});
    CHECK(desk.train.epochs == 50);
    const auto paper = ExperimentConfig::paper_scale();
    CHECK(paper.counts == SplitCounts{100000, 10000, 10000});
    CHECK(paper.train.epochs == 100);
    CHECK(desk.scm.pre_loc_mean == 0.0);
    CHECK(desk.scm.post_loc_mean == 3.0);

    ExperimentConfig c = tiny_config("somewhere");
    c.graph = {"random", 6, 0.3};
    c.scm.post_loc_mean = 10.0;
    c.ablation_graph = "G5";
    const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(ExperimentConfig::from_json(json{{"config", c.to_json()}}).to_json() == c.to_json());
    CHECK(ExperimentConfig::from_json(json{{"paper_scale", true}}).counts == SplitCounts::paper_scale());
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"sedes", {1}}}), SchemaError);

    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.seeds = {1};
    c.graph.name = "G11";
    CHECK_THROWS_AS(c.validate(), NotFound);
}

TEST_CASE("graph specs") {
    CHECK(GraphSpec{"chain", 4, 0.5}.build(0).edge_count() == 3);
    CHECK(GraphSpec{"full", 5, 0.5}.build(0).edge_count() == 10);
    CHECK(GraphSpec{"random", 8, 0.5}.build(3) == GraphSpec{"random", 8, 0.5}.build(3));
    CHECK(GraphSpec{"G6", 4, 0.5}.build(0) == graph_from_registry("G6"));
}

TEST_CASE("a cell generates, trains and evaluates") {
    const auto dir = testing::scratch_dir("cell");
    const ExperimentConfig c = tiny_config(dir);
    const CellResult r = run_cell(c, GraphSpec{"G2", 4, 0.5}, c.scm, 0, dir / "cell");
    REQUIRE(r.ok);
    CHECK(r.d_total >= 0.0);
    CHECK(r.d_total <= 1.0);
    for (const char* f : {"dci_report.json", "cell.json", "history.csv", "report.json", "best/manifest.json"}) {
        CHECK(fs::exists(dir / "cell" / f));
    }
    const CellResult failed = run_cell(c, GraphSpec{"G42", 4, 0.5}, c.scm, 0, dir / "bad");
    CHECK_FALSE(failed.ok);
    CHECK(failed.error.find("G42") != std::string::npos);
}

TEST_CASE("scaling rows, tables and deterministic outputs") {
    const auto dir = testing::scratch_dir("scaling");
    ExperimentConfig c = tiny_config(dir);
    c.scaling_sizes = {5, 6};
    c.workers = 2;
    const ResultTable t = run_scaling(c);
    REQUIRE(t.rows.size() == 2);
    for (const auto& row : t.rows) CHECK(row.cells.size() == 2);
    CHECK(t.to_csv().find("n=5") != std::string::npos);
    CHECK(scaling_svg(t).find("<svg") == 0);
    const json hashes = output_hashes(dir);

    // Same cells sequentially: identical bytes.
    const auto dir2 = testing::scratch_dir("scaling2");
    c.output_dir = dir2;
    c.workers = 1;
    run_scaling(c);
    CHECK(output_hashes(dir2) == hashes);
}

TEST_CASE("worker cap from the environment") {
    ::setenv("ICRLSM_NUM_WORKERS", "2", 1);
    CHECK(effective_workers(8) == 2);
    CHECK(effective_workers(1) == 1);
    ::unsetenv("ICRLSM_NUM_WORKERS");
    CHECK(effective_workers(8) == 8);
    CHECK(effective_workers(0) == 1);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("generate") {
    const auto dir = testing::scratch_dir("cli_gen");
    const std::string base = "generate --graph G3 --seed 7 --train 20000 --val 50 --test 50 --out ";
    REQUIRE(cli(base + (dir / "a").string()).code == 0);
    const json meta = io::read_json(dir / "a" / "meta.json");
    CHECK(meta["edges"].size() == 4);
    CHECK(meta["counts"]["train"] == 20000);
    CHECK(CausalGraph::from_adjacency(meta["adjacency"].get<std::vector<std::vector<bool>>>()) ==
          graph_from_registry("G3"));
    const json manifest = io::read_json(dir / "a" / "run_manifest.json");
    CHECK(manifest["config"]["seeds"] == json::array({7}));
    CHECK(manifest["outputs"].contains("train.csv"));
    CHECK(manifest["version"].get<std::string>().find("icrlsm") == 0);

    REQUIRE(cli(base + (dir / "b").string()).code == 0);
    for (const char* f : {"meta.json", "train.csv", "val.csv", "test.csv"}) {
        CHECK(io::sha256_file(dir / "a" / f) == io::sha256_file(dir / "b" / f));
    }
    CHECK(cli("generate --graph G11 --out " + (dir / "c").string()).code == 2);
    CHECK(cli("generate --bogus-flag").code == 2);
    CHECK(cli("").code == 2);
    CHECK(cli("generate --config " + (dir / "missing.json").string()).code == 2);
}

TEST_CASE("train, eval and manifest replay") {
    const auto dir = testing::scratch_dir("cli_train");
    const std::string data = (dir / "data").string();
    REQUIRE(cli("generate --graph G2 --seed 1 --train 300 --val 100 --test 200 --out " + data).code == 0);

    const Run zero = cli("train --data " + data + " --seed 4 --epochs 0 --out " + (dir / "zero").string());
    REQUIRE(zero.code == 0);
    CHECK(fs::exists(dir / "zero" / "seed_4" / "best" / "params.bin"));
    CHECK(io::read_json(dir / "zero" / "seed_4" / "report.json")["history"].empty());

    const std::string runs = (dir / "runs").string();
    REQUIRE(cli("train --data " + data + " --seeds 1,2,3 --epochs 1 --out " + runs).code == 0);
    for (int s : {1, 2, 3}) CHECK(fs::exists(dir / "runs" / ("seed_" + std::to_string(s)) / "report.json"));
    const json manifest = io::read_json(dir / "runs" / "run_manifest.json");
    CHECK(manifest["config"]["train"]["epochs"] == 1);

    // Replaying the manifest reproduces every hashed output.
    const std::string replay = (dir / "replay").string();
    REQUIRE(cli("train --config " + runs + "/run_manifest.json --data " + data + " --out " + replay).code == 0);
    const json again = io::read_json(dir / "replay" / "run_manifest.json");
    CHECK(again["outputs"] == manifest["outputs"]);

    const Run ev = cli("eval --checkpoint " + runs + "/seed_1 --data " + data);
    REQUIRE(ev.code == 0);
    const std::string report = io::read_file(dir / "runs" / "seed_1" / "dci_report.json");
    REQUIRE(cli("eval --checkpoint " + runs + "/seed_1 --data " + data).code == 0);
    CHECK(io::read_file(dir / "runs" / "seed_1" / "dci_report.json") == report);

    const std::string other = (dir / "n5").string();
    REQUIRE(cli("generate --graph random --n 5 --seed 1 --train 100 --val 100 --test 200 --out " + other).code == 0);
    CHECK(cli("eval --checkpoint " + runs + "/seed_1 --data " + other).code == 2);
    CHECK(cli("eval --checkpoint " + (dir / "nothing").string() + " --data " + data).code == 2);
}

TEST_CASE("train defaults follow the trainer") {
    const auto dir = testing::scratch_dir("cli_defaults");
    // --epochs left unset: the resolved config must carry the trainer defaults.
    const std::string cfg = (dir / "cfg.json").string();
    io::write_json(cfg, json{{"counts", {{"train", 64}, {"val", 10}, {"test", 10}}}, {"train", {{"epochs", 0}}}});
    REQUIRE(cli("train --config " + cfg + " --graph G1 --out " + (dir / "o").string()).code == 0);
    const json m = io::read_json(dir / "o" / "run_manifest.json");
    CHECK(m["config"]["train"]["batch_size"] == 64);
    CHECK(m["config"]["train"]["lr_start"] == 3e-4);
    CHECK(m["config"]["train"]["lr_end"] == 1e-8);
    CHECK(m["config"]["train"]["schedule"] == "cosine");
}

TEST_CASE("oracle checkpoint through eval") {
    const auto dir = testing::scratch_dir("cli_oracle");
    const std::string data = (dir / "data").string();
    REQUIRE(cli("generate --graph G3 --seed 2 --train 100 --val 100 --test 2000 --out " + data).code == 0);
    const DatasetMeta meta = load_meta(data);
    AicmModel oracle = testing::oracle_model(meta.mixing);
    save_checkpoint(oracle, dir / "oracle");
    const Run r = cli("eval --checkpoint " + (dir / "oracle").string() + " --data " + data + " --out " +
                      (dir / "eval").string());
    REQUIRE(r.code == 0);
    const json report = io::read_json(dir / "eval" / "dci_report.json");
    CHECK(report["D_total"].get<double>() >= 0.95);
    CHECK(report["C_total"].get<double>() >= 0.95);
}

TEST_CASE("suite outputs and argument validation") {
    const auto dir = testing::scratch_dir("cli_suite");
    const std::string common = " --seeds 0 --train 200 --val 100 --test 150 --epochs 1 --trees 5 --out ";
    const Run t = cli("table2 --graphs G3,G5" + common + (dir / "t2").string());
    REQUIRE(t.code == 0);
    CHECK(fs::exists(dir / "t2" / "table2.csv"));
    CHECK(fs::exists(dir / "t2" / "table2.txt"));
    CHECK(fs::exists(dir / "t2" / "run_manifest.json"));
    CHECK(cli("table2 --graphs G3,G12" + common + (dir / "bad").string()).code == 2);
    CHECK(cli("ablation --ablation-graph G4" + common + (dir / "ab").string()).code == 2);
}

}  // TEST_SUITE
