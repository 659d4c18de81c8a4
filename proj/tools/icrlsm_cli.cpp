// SPDX-License-Identifier: Apache-2.0
//
// icrlsm: command-line front end.
//
//   icrlsm generate --graph G3 --seed 7 --out data/g3
//   icrlsm train    --data data/g3 --seeds 1,2,3 --out runs/g3
//   icrlsm eval     --checkpoint runs/g3/seed_1 --data data/g3
//   icrlsm table2 | ablation | scaling  [--seeds ...] [--paper-scale]
//
// Exit codes: 0 success, 1 numeric failure, 2 usage / schema / io error.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icrlsm/dataset.hpp"
#include "icrlsm/dci.hpp"
#include "icrlsm/error.hpp"
#include "icrlsm/experiments.hpp"
#include "icrlsm/io.hpp"
#include "icrlsm/model.hpp"
#include "icrlsm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace icrlsm;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::optional<std::string> graph;
    std::optional<std::size_t> n;
    std::optional<double> edge_prob;
    std::optional<std::string> out;
    bool paper_scale = false;
    bool deterministic = false;
    std::optional<std::size_t> epochs, batch_size, train_count, val_count, test_count;
    std::optional<double> lr_start, lr_end, consistency_weight, beta_kl;
    std::optional<double> pre_loc_mean, post_loc_mean;
    std::optional<unsigned> workers;
    std::optional<std::string> regressor;
    std::optional<std::size_t> trees, max_depth;
    std::optional<std::string> ablation_graph;
    bool save_datasets = false;
    bool verbose = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON experiment config (or a run_manifest.json)");
    cmd->add_option("--seed", f.seed, "single seed");
    cmd->add_option("--seeds", f.seeds, "comma-separated seed list")->delimiter(',');
    cmd->add_option("--graph", f.graph, "G1..G10, chain, full or random");
    cmd->add_option("--n", f.n, "node count for chain/full/random graphs");
    cmd->add_option("--edge-prob", f.edge_prob, "edge probability for random graphs");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_flag("--paper-scale", f.paper_scale, "100k/10k/10k samples, 100 epochs");
    cmd->add_flag("--deterministic", f.deterministic, "disable nondeterministic reductions");
    cmd->add_option("--train", f.train_count, "training samples");
    cmd->add_option("--val", f.val_count, "validation samples");
    cmd->add_option("--test", f.test_count, "test samples");
    cmd->add_option("--pre-loc-mean", f.pre_loc_mean, "mean of observational loc weights");
    cmd->add_option("--post-loc-mean", f.post_loc_mean, "mean of intervened loc weights");
    cmd->add_flag("--verbose", f.verbose, "per-epoch progress on stderr");
}

void add_training(CLI::App* cmd, Flags& f) {
    cmd->add_option("--epochs", f.epochs);
    cmd->add_option("--batch-size", f.batch_size);
    cmd->add_option("--lr-start", f.lr_start);
    cmd->add_option("--lr-end", f.lr_end);
    cmd->add_option("--consistency-weight", f.consistency_weight);
    cmd->add_option("--beta-kl", f.beta_kl);
}

void add_regressor(CLI::App* cmd, Flags& f) {
    cmd->add_option("--regressor", f.regressor, "forest or lasso")->check(CLI::IsMember({"forest", "lasso"}));
    cmd->add_option("--trees", f.trees);
    cmd->add_option("--max-depth", f.max_depth);
}

void add_suite(CLI::App* cmd, Flags& f) {
    cmd->add_option("--workers", f.workers, "parallel cells (capped by ICRLSM_NUM_WORKERS)");
    cmd->add_flag("--save-datasets", f.save_datasets, "keep each cell's dataset on disk");
}

enum class Command { kGenerate, kTrain, kEval, kTable2, kAblation, kScaling };

/// Defaults, then the config document, then explicit flags.
ExperimentConfig resolve(const Flags& f, Command command) {
    json doc = json::object();
    if (!f.config.empty()) {
        doc = io::read_json(f.config);
        if (doc.contains("config")) doc = doc["config"];
    }
    if (f.paper_scale) doc["paper_scale"] = true;
    const bool config_epochs = doc.contains("train") && doc["train"].contains("epochs");
    const bool config_seeds = doc.contains("seeds");
    ExperimentConfig c = ExperimentConfig::from_json(doc);

    // The train command keeps the trainer's own epoch default; the suites
    // use the desk-scale budget.
    if (command == Command::kTrain && !config_epochs) c.train.epochs = TrainConfig{}.epochs;
    if (!config_seeds) {
        if (command == Command::kTable2 || command == Command::kAblation || command == Command::kScaling) {
            c.seeds = c.counts == SplitCounts::paper_scale() ? std::vector<std::uint64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}
                                                             : std::vector<std::uint64_t>{0, 1, 2};
        }
    }

    if (f.graph) c.graph.name = *f.graph;
    if (f.n) c.graph.n = *f.n;
    if (f.edge_prob) c.graph.edge_prob = *f.edge_prob;
    if (!f.seeds.empty()) c.seeds = f.seeds;
    if (f.seed) c.seeds = {*f.seed};
    if (f.out) c.output_dir = *f.out;
    if (f.deterministic) c.deterministic = true;
    if (f.train_count) c.counts.train = *f.train_count;
    if (f.val_count) c.counts.val = *f.val_count;
    if (f.test_count) c.counts.test = *f.test_count;
    if (f.pre_loc_mean) c.scm.pre_loc_mean = *f.pre_loc_mean;
    if (f.post_loc_mean) c.scm.post_loc_mean = *f.post_loc_mean;
    if (f.epochs) c.train.epochs = *f.epochs;
    if (f.batch_size) c.train.batch_size = *f.batch_size;
    if (f.lr_start) c.train.lr_start = *f.lr_start;
    if (f.lr_end) c.train.lr_end = *f.lr_end;
    if (f.consistency_weight) c.train.consistency_weight = *f.consistency_weight;
    if (f.beta_kl) c.train.beta_kl = *f.beta_kl;
    if (f.workers) c.workers = *f.workers;
    if (f.regressor) c.regressor.kind = *f.regressor == "lasso" ? RegressorKind::kLasso : RegressorKind::kForest;
    if (f.trees) c.regressor.forest.trees = *f.trees;
    if (f.max_depth) c.regressor.forest.max_depth = *f.max_depth;
    if (f.ablation_graph) c.ablation_graph = *f.ablation_graph;
    if (f.save_datasets) c.save_cell_datasets = true;
    if (c.deterministic) c.train.deterministic = true;
    c.validate();
    return c;
}

int cmd_generate(const ExperimentConfig& c) {
    const std::uint64_t seed = c.seeds.front();
    const GeneratedData data = generate_for_seed(c.graph, c.scm, c.counts, seed);
    save_dataset(data.splits, c.output_dir);
    write_run_manifest(c.output_dir, "generate", c);
    std::cout << "wrote " << c.output_dir.string() << ": " << c.graph.label() << ", " << data.graph.edge_count()
              << " edges, " << c.counts.train << "/" << c.counts.val << "/" << c.counts.test << " samples\n";
    return 0;
}

int cmd_train(const ExperimentConfig& c, const std::optional<std::string>& data_dir, bool verbose) {
    std::optional<DatasetSplits> fixed;
    if (data_dir) fixed = load_dataset(*data_dir);
    int status = 0;
    for (const auto seed : c.seeds) {
        const fs::path dir = c.output_dir / ("seed_" + std::to_string(seed));
        DatasetSplits splits = fixed ? *fixed : generate_for_seed(c.graph, c.scm, c.counts, seed).splits;
        const std::size_t n = splits.train.meta.n;
        const auto d = static_cast<std::size_t>(splits.train.samples.front().x.size());
        AicmModel model(default_model_config(n, d));
        model.initialize(seed);
        TrainConfig tc = c.train;
        tc.seed = seed;
        TrainOutputs outputs;
        outputs.dir = dir;
        outputs.verbose = verbose;
        try {
            const TrainResult result = train(std::move(model), splits.train, splits.val, tc, outputs);
            std::cout << "seed " << seed << ": " << result.report.history.size() << " epochs";
            if (result.report.best_val_loss) {
                std::cout << ", best val " << *result.report.best_val_loss << " at epoch " << *result.report.best_epoch;
            }
            std::cout << " -> " << (dir / "best").string() << "\n";
        } catch (const NumericError& e) {
            std::cerr << "seed " << seed << " diverged: " << e.what() << "\n";
            status = 1;
        }
    }
    write_run_manifest(c.output_dir, "train", c);
    return status;
}

fs::path resolve_checkpoint(const fs::path& path) {
    if (fs::exists(path / "manifest.json")) return path;
    if (fs::exists(path / "best" / "manifest.json")) return path / "best";
    throw NotFound("no checkpoint manifest under " + path.string());
}

int cmd_eval(const ExperimentConfig& c, const std::string& checkpoint, const std::string& data_dir,
             const std::string& split, bool out_given) {
    const fs::path ckpt = resolve_checkpoint(checkpoint);
    const AicmModel model = load_checkpoint(ckpt);
    const Dataset ds = load_dataset(data_dir, split);
    const DciReport report = evaluate(model, ds, c.regressor);
    const fs::path out = out_given ? c.output_dir : (ckpt.filename() == "best" ? ckpt.parent_path() : ckpt);
    json doc = report.to_json();
    doc["checkpoint"] = ckpt.string();
    doc["dataset"] = data_dir;
    doc["split"] = split;
    io::write_json(out / "dci_report.json", doc);
    ExperimentConfig recorded = c;
    recorded.output_dir = out;
    write_run_manifest(out, "eval", recorded);
    std::cout << "D_total " << report.disentanglement.total << "  C_total " << report.completeness.total << " -> "
              << (out / "dci_report.json").string() << "\n";
    return 0;
}

int finish_suite(const ResultTable& table, const ExperimentConfig& c, const std::string& name) {
    io::write_file_atomic(c.output_dir / (name + ".csv"), table.to_csv());
    io::write_file_atomic(c.output_dir / (name + ".txt"), table.to_text());
    json cells = json::array();
    std::size_t ok = 0, total = 0;
    for (const auto& row : table.rows) {
        for (const auto& cell : row.cells) {
            json j = cell.to_json();
            j["dir"] = cell.dir.lexically_relative(c.output_dir).generic_string();
            j["row"] = row.label;
            j["setting"] = row.setting;
            cells.push_back(j);
            ok += cell.ok ? 1 : 0;
            ++total;
        }
    }
    io::write_json(c.output_dir / (name + "_cells.json"), cells);
    std::cout << table.to_text();
    return ok == 0 && total > 0 ? 1 : 0;
}

int cmd_table2(const ExperimentConfig& c, const std::vector<std::string>& graphs) {
    const ResultTable table = run_table2(c, graphs);
    const int status = finish_suite(table, c, "table2");
    write_run_manifest(c.output_dir, "table2", c);
    return status;
}

double row_mean(const ResultTable& t, const std::string& label, const std::string& setting_prefix) {
    for (const auto& r : t.rows) {
        if (r.label == label && r.setting.rfind(setting_prefix, 0) == 0) return r.mean_d;
    }
    return std::nan("");
}

int cmd_ablation(const ExperimentConfig& c) {
    const ResultTable table = run_ablation(c);
    const int status = finish_suite(table, c, "ablation");
    const double chain = row_mean(table, "Chain", "Default");
    const double full = row_mean(table, "Full", "Default");
    const double post3 = row_mean(table, "Default", "Default");
    const double post10 = row_mean(table, "Default", "Significantly");
    std::cout << "\nD(chain) > D(full): " << (chain > full ? "yes" : "no") << "\n"
              << "D(post 3) > D(post 10): " << (post3 > post10 ? "yes" : "no") << "\n";
    write_run_manifest(c.output_dir, "ablation", c);
    return status;
}

int cmd_scaling(const ExperimentConfig& c) {
    const ResultTable table = run_scaling(c);
    const int status = finish_suite(table, c, "scaling_summary");
    std::string per_cell = "n,seed,ok,D_total,C_total\n";
    for (const auto& row : table.rows) {
        const std::string n = row.label.substr(row.label.find('=') + 1);
        for (const auto& cell : row.cells) {
            per_cell += n + "," + std::to_string(cell.seed) + "," + (cell.ok ? "1" : "0") + "," +
                        (cell.ok ? io::format_double(cell.d_total) : "") + "," +
                        (cell.ok ? io::format_double(cell.c_total) : "") + "\n";
        }
    }
    io::write_file_atomic(c.output_dir / "scaling.csv", per_cell);
    io::write_file_atomic(c.output_dir / "scaling.svg", scaling_svg(table));
    bool monotone = true;
    for (std::size_t k = 1; k < table.rows.size(); ++k) monotone = monotone && table.rows[k].mean_d <= table.rows[k - 1].mean_d;
    std::cout << "\nmean D_total non-increasing in n: " << (monotone ? "yes" : "no") << " (reported only)\n";
    write_run_manifest(c.output_dir, "scaling", c);
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal representation learning with switchable mechanisms"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    Flags f;
    std::optional<std::string> data_dir;
    std::string checkpoint, eval_data, split = "test";
    std::vector<std::string> graphs = registry_names();

    auto* gen = app.add_subcommand("generate", "sample a dataset");
    add_common(gen, f);

    auto* tr = app.add_subcommand("train", "train one model per seed");
    add_common(tr, f);
    add_training(tr, f);
    tr->add_option("--data", data_dir, "dataset directory (otherwise generated per seed)");

    auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset split");
    add_common(ev, f);
    add_regressor(ev, f);
    ev->add_option("--checkpoint", checkpoint)->required();
    ev->add_option("--data", eval_data)->required();
    ev->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));

    auto* t2 = app.add_subcommand("table2", "graph sweep over the registry");
    add_common(t2, f);
    add_training(t2, f);
    add_regressor(t2, f);
    add_suite(t2, f);
    t2->add_option("--graphs", graphs, "registry graphs to run")->delimiter(',');

    auto* ab = app.add_subcommand("ablation", "graph structure and mechanism-shift ablation");
    add_common(ab, f);
    add_training(ab, f);
    add_regressor(ab, f);
    add_suite(ab, f);
    ab->add_option("--ablation-graph", f.ablation_graph, "base graph")->check(CLI::IsMember({"G3", "G5"}));

    auto* sc = app.add_subcommand("scaling", "random graphs with n = 5..10");
    add_common(sc, f);
    add_training(sc, f);
    add_regressor(sc, f);
    add_suite(sc, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            auto c = resolve(f, Command::kGenerate);
            if (!f.out && f.config.empty()) c.output_dir = "data/" + c.graph.label() + "_seed" + std::to_string(c.seeds.front());
            return cmd_generate(c);
        }
        if (tr->parsed()) return cmd_train(resolve(f, Command::kTrain), data_dir, f.verbose);
        if (ev->parsed()) return cmd_eval(resolve(f, Command::kEval), checkpoint, eval_data, split, f.out.has_value());
        if (t2->parsed()) {
            auto c = resolve(f, Command::kTable2);
            if (!f.out && f.config.empty()) c.output_dir = "runs/table2";
            for (const auto& g : graphs) (void)graph_from_registry(g);
            return cmd_table2(c, graphs);
        }
        if (ab->parsed()) {
            auto c = resolve(f, Command::kAblation);
            if (!f.out && f.config.empty()) c.output_dir = "runs/ablation";
            return cmd_ablation(c);
        }
        if (sc->parsed()) {
            auto c = resolve(f, Command::kScaling);
            if (!f.out && f.config.empty()) c.output_dir = "runs/scaling";
            return cmd_scaling(c);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
