// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "icrlsm/error.hpp"
#include "icrlsm/io.hpp"

#ifndef ICRLSM_VERSION
#define ICRLSM_VERSION "0.0.0"
#endif

namespace icrlsm {

namespace fs = std::filesystem;
using nlohmann::json;

CausalGraph GraphSpec::build(std::uint64_t seed) const {
    if (name == "chain") return chain_graph(n);
    if (name == "full") return complete_graph(n);
    if (name == "random") {
        Rng rng(seed, streams::kGraph);
        return sample_dag(n, edge_prob, rng);
    }
    return graph_from_registry(name);
}

std::string GraphSpec::label() const {
    if (name == "chain" || name == "full") return name + "-" + std::to_string(n);
    if (name == "random") return "random-n" + std::to_string(n);
    return name;
}

json GraphSpec::to_json() const { return {{"name", name}, {"n", n}, {"edge_prob", edge_prob}}; }

GraphSpec GraphSpec::from_json(const json& doc) {
    GraphSpec g;
    if (doc.is_string()) {
        g.name = doc.get<std::string>();
        return g;
    }
    g.name = doc.value("name", g.name);
    g.n = doc.value("n", g.n);
    g.edge_prob = doc.value("edge_prob", g.edge_prob);
    return g;
}

ExperimentConfig ExperimentConfig::desk_scale() {
    ExperimentConfig c;
    c.counts = SplitCounts::desk_scale();
    c.train.epochs = 50;
    return c;
}

ExperimentConfig ExperimentConfig::paper_scale() {
    ExperimentConfig c;
    c.counts = SplitCounts::paper_scale();
    c.train.epochs = 100;
    return c;
}

namespace {

json regressor_json(const RegressorConfig& r) { return r.to_json(); }

RegressorConfig regressor_from_json(const json& doc) {
    RegressorConfig r;
    const std::string kind = doc.value("kind", std::string("forest"));
    if (kind == "lasso") {
        r.kind = RegressorKind::kLasso;
        r.lasso.alpha = doc.value("alpha", r.lasso.alpha);
        r.lasso.max_iterations = doc.value("max_iterations", r.lasso.max_iterations);
    } else if (kind == "forest") {
        r.forest.trees = doc.value("trees", r.forest.trees);
        r.forest.max_depth = doc.value("max_depth", r.forest.max_depth);
        r.forest.min_samples_leaf = doc.value("min_samples_leaf", r.forest.min_samples_leaf);
        r.forest.bootstrap = doc.value("bootstrap", r.forest.bootstrap);
        r.forest.seed = doc.value("seed", r.forest.seed);
    } else {
        throw SchemaError("regressor.kind must be \"forest\" or \"lasso\", got \"" + kind + "\"");
    }
    return r;
}

}  // namespace

json ExperimentConfig::to_json() const {
    return {{"graph", graph.to_json()},
            {"scm",
             {{"pre_loc_mean", scm.pre_loc_mean},
              {"post_loc_mean", scm.post_loc_mean},
              {"hidden_units", scm.hidden_units}}},
            {"counts", {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}}},
            {"train", train.to_json()},
            {"seeds", seeds},
            {"output_dir", output_dir.string()},
            {"regressor", regressor_json(regressor)},
            {"deterministic", deterministic},
            {"workers", workers},
            {"ablation_graph", ablation_graph},
            {"scaling_sizes", scaling_sizes},
            {"save_cell_datasets", save_cell_datasets}};
}

ExperimentConfig ExperimentConfig::from_json(const json& input) {
    const json& doc = input.contains("config") ? input.at("config") : input;
    if (!doc.is_object()) throw SchemaError("experiment config must be a JSON object");
    static const std::set<std::string> known = {
        "graph",   "scm",     "counts",         "train",         "seeds",         "output_dir",        "regressor",
        "deterministic", "workers", "ablation_graph", "scaling_sizes", "paper_scale", "save_cell_datasets"};
    for (const auto& [key, value] : doc.items()) {
        if (!known.contains(key)) throw SchemaError("unknown config key \"" + key + "\"");
    }
    try {
        ExperimentConfig c = doc.value("paper_scale", false) ? paper_scale() : desk_scale();
        if (doc.contains("graph")) c.graph = GraphSpec::from_json(doc["graph"]);
        if (doc.contains("scm")) {
            const json& s = doc["scm"];
            c.scm.pre_loc_mean = s.value("pre_loc_mean", c.scm.pre_loc_mean);
            c.scm.post_loc_mean = s.value("post_loc_mean", c.scm.post_loc_mean);
            c.scm.hidden_units = s.value("hidden_units", c.scm.hidden_units);
        }
        if (doc.contains("counts")) {
            const json& s = doc["counts"];
            c.counts.train = s.value("train", c.counts.train);
            c.counts.val = s.value("val", c.counts.val);
            c.counts.test = s.value("test", c.counts.test);
        }
        if (doc.contains("train")) {
            json merged = c.train.to_json();
            merged.update(doc["train"]);
            c.train = TrainConfig::from_json(merged);
        }
        if (doc.contains("seeds")) c.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
        if (doc.contains("output_dir")) c.output_dir = doc["output_dir"].get<std::string>();
        if (doc.contains("regressor")) c.regressor = regressor_from_json(doc["regressor"]);
        c.deterministic = doc.value("deterministic", c.deterministic);
        c.workers = doc.value("workers", c.workers);
        c.ablation_graph = doc.value("ablation_graph", c.ablation_graph);
        if (doc.contains("scaling_sizes")) c.scaling_sizes = doc["scaling_sizes"].get<std::vector<std::size_t>>();
        c.save_cell_datasets = doc.value("save_cell_datasets", c.save_cell_datasets);
        return c;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("experiment config: ") + e.what());
    }
}

void ExperimentConfig::validate() const {
    train.validate();
    if (seeds.empty()) throw InvalidArgument("at least one seed is required");
    if (counts.train == 0 || counts.val == 0 || counts.test == 0) throw InvalidArgument("split counts must be positive");
    if (graph.edge_prob < 0.0 || graph.edge_prob > 1.0) throw InvalidArgument("edge_prob must lie in [0, 1]");
    if (graph.n == 0) throw InvalidArgument("graph.n must be positive");
    if (ablation_graph != "G3" && ablation_graph != "G5") {
        throw InvalidArgument("ablation graph must be G3 or G5, got " + ablation_graph);
    }
    // Fail fast on unknown registry names.
    (void)graph.build(seeds.front());
}

GeneratedData generate_for_seed(const GraphSpec& graph, const ScmInit& scm_init, const SplitCounts& counts,
                                std::uint64_t seed) {
    GeneratedData out;
    out.graph = graph.build(seed);
    Rng scm_rng(seed, streams::kScm);
    out.scm = init_scm(out.graph, scm_init, scm_rng);
    Rng mix_rng(seed, streams::kRotation);
    out.mixing = sample_rotation(out.graph.size(), mix_rng);
    out.splits = generate_dataset(out.scm, out.mixing, counts, seed);
    for (Dataset* ds : {&out.splits.train, &out.splits.val, &out.splits.test}) ds->meta.scm_init = scm_init;
    return out;
}

ModelConfig default_model_config(std::size_t n, std::size_t d) {
    ModelConfig c;
    c.n = n;
    c.d = d;
    return c;
}

json CellResult::to_json() const {
    json doc = {{"label", label}, {"seed", seed}, {"ok", ok}, {"dir", dir.string()}};
    if (ok) {
        doc["D_total"] = d_total;
        doc["C_total"] = c_total;
    } else {
        doc["error"] = error;
    }
    doc["best_val_loss"] = best_val_loss ? json(*best_val_loss) : json(nullptr);
    return doc;
}

CellResult run_cell(const ExperimentConfig& config, const GraphSpec& graph, const ScmInit& scm_init,
                    std::uint64_t seed, const fs::path& dir) {
    CellResult result;
    result.label = graph.label();
    result.seed = seed;
    result.dir = dir;
    try {
        const GeneratedData data = generate_for_seed(graph, scm_init, config.counts, seed);
        if (config.save_cell_datasets) save_dataset(data.splits, dir / "data");
        const std::size_t n = data.graph.size();
        AicmModel model(default_model_config(n, n));
        model.initialize(seed);
        TrainConfig tc = config.train;
        tc.seed = seed;
        tc.deterministic = tc.deterministic || config.deterministic;
        TrainOutputs outputs;
        outputs.dir = dir;
        const TrainResult trained = train(std::move(model), data.splits.train, data.splits.val, tc, outputs);
        const DciReport report = evaluate(trained.model, data.splits.test, config.regressor);
        json doc = report.to_json();
        doc["graph"] = graph.to_json();
        doc["adjacency"] = data.graph.adjacency();
        doc["seed"] = seed;
        io::write_json(dir / "dci_report.json", doc);
        result.ok = true;
        result.d_total = report.disentanglement.total;
        result.c_total = report.completeness.total;
        result.best_val_loss = trained.report.best_val_loss;
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
    }
    try {
        json doc = result.to_json();
        doc.erase("dir");  // keeps the file independent of where the run lives
        io::write_json(dir / "cell.json", doc);
    } catch (const std::exception& e) {
        if (result.ok) {
            result.ok = false;
            result.error = e.what();
        }
    }
    return result;
}

namespace {

struct CellJob {
    std::size_t row = 0;
    GraphSpec graph;
    ScmInit scm;
    std::uint64_t seed = 0;
    fs::path dir;
};

std::string slug(std::string s) {
    for (char& ch : s) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '.') ch = '_';
    }
    return s;
}

void summarize(TableRow& row) {
    std::vector<double> d, c;
    for (const auto& cell : row.cells) {
        if (cell.ok) {
            d.push_back(cell.d_total);
            c.push_back(cell.c_total);
        } else {
            ++row.failures;
        }
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
        mean = sd = std::nan("");
        if (v.empty()) return;
        double s = 0.0;
        for (double x : v) s += x;
        mean = s / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    };
    stats(d, row.mean_d, row.std_d);
    stats(c, row.mean_c, row.std_c);
}

ResultTable run_jobs(const ExperimentConfig& config, std::string title, std::vector<TableRow> rows,
                     std::vector<CellJob> jobs) {
    config.validate();
    std::vector<CellResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            const CellJob& job = jobs[k];
            results[k] = run_cell(config, job.graph, job.scm, job.seed, job.dir);
            std::lock_guard lock(log_mutex);
            std::cerr << "[" << (k + 1) << "/" << jobs.size() << "] " << rows[job.row].label << " "
                      << rows[job.row].setting << " seed " << job.seed << ": ";
            if (results[k].ok) {
                std::cerr << "D=" << results[k].d_total << " C=" << results[k].c_total << "\n";
            } else {
                std::cerr << "failed: " << results[k].error << "\n";
            }
        }
    };
    const unsigned workers = std::min<unsigned>(effective_workers(config.workers),
                                                static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    for (std::size_t k = 0; k < jobs.size(); ++k) rows[jobs[k].row].cells.push_back(results[k]);
    for (auto& row : rows) summarize(row);
    return {std::move(title), std::move(rows)};
}

}  // namespace

ResultTable run_table2(const ExperimentConfig& config, const std::vector<std::string>& graphs) {
    std::vector<TableRow> rows;
    std::vector<CellJob> jobs;
    for (const auto& name : graphs) {
        GraphSpec g;
        g.name = name;
        rows.push_back({name, "default", {}, 0, 0, 0, 0, 0});
        for (auto seed : config.seeds) {
            jobs.push_back({rows.size() - 1, g, config.scm, seed,
                            config.output_dir / slug(name) / ("seed_" + std::to_string(seed))});
        }
    }
    return run_jobs(config, "DCI per graph", std::move(rows), std::move(jobs));
}

ResultTable run_ablation(const ExperimentConfig& config) {
    struct Variant {
        std::string label, setting;
        GraphSpec graph;
        ScmInit scm;
    };
    GraphSpec base;
    base.name = config.ablation_graph;
    GraphSpec chain{"chain", 4, 0.5};
    GraphSpec full{"full", 4, 0.5};
    ScmInit post10 = config.scm, post1 = config.scm;
    post10.post_loc_mean = 10.0;
    post1.post_loc_mean = 1.0;
    const std::vector<Variant> variants = {
        {"Chain", "Default", chain, config.scm},
        {"Full", "Default", full, config.scm},
        {"Default", "Default", base, config.scm},
        {"Default", "Significantly different (post 10)", base, post10},
        {"Default", "Almost similar (post 1)", base, post1},
    };
    std::vector<TableRow> rows;
    std::vector<CellJob> jobs;
    for (const auto& v : variants) {
        rows.push_back({v.label, v.setting, {}, 0, 0, 0, 0, 0});
        const std::string dir = slug(v.graph.label() + "_post" + io::format_double(v.scm.post_loc_mean));
        for (auto seed : config.seeds) {
            jobs.push_back({rows.size() - 1, v.graph, v.scm, seed,
                            config.output_dir / dir / ("seed_" + std::to_string(seed))});
        }
    }
    return run_jobs(config, "Ablation (base graph " + config.ablation_graph + ")", std::move(rows), std::move(jobs));
}

ResultTable run_scaling(const ExperimentConfig& config) {
    std::vector<TableRow> rows;
    std::vector<CellJob> jobs;
    for (std::size_t n : config.scaling_sizes) {
        GraphSpec g{"random", n, config.graph.edge_prob};
        rows.push_back({"n=" + std::to_string(n), "random p=" + io::format_double(g.edge_prob), {}, 0, 0, 0, 0, 0});
        for (auto seed : config.seeds) {
            jobs.push_back({rows.size() - 1, g, config.scm, seed,
                            config.output_dir / ("n" + std::to_string(n)) / ("seed_" + std::to_string(seed))});
        }
    }
    return run_jobs(config, "Scaling with the number of variables", std::move(rows), std::move(jobs));
}

std::string ResultTable::to_csv() const {
    std::string out = "label,setting,seeds_ok,seeds_failed,D_mean,D_std,C_mean,C_std\n";
    for (const auto& r : rows) {
        out += r.label + ",\"" + r.setting + "\"," + std::to_string(r.cells.size() - r.failures) + "," +
               std::to_string(r.failures) + "," + io::format_double(r.mean_d) + "," + io::format_double(r.std_d) +
               "," + io::format_double(r.mean_c) + "," + io::format_double(r.std_c) + "\n";
    }
    return out;
}

std::string ResultTable::to_text() const {
    std::size_t wl = 5, ws = 7;
    for (const auto& r : rows) {
        wl = std::max(wl, r.label.size());
        ws = std::max(ws, r.setting.size());
    }
    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(w, s.size()), ' ');
        return s;
    };
    auto pm = [](double mean, double sd) {
        if (std::isnan(mean)) return std::string("n/a");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f +- %.2f", mean, sd);
        return std::string(buf);
    };
    std::ostringstream os;
    os << title << "\n\n";
    os << pad("label", wl) << "  " << pad("setting", ws) << "  " << pad("D_total", 14) << "  " << pad("C_total", 14)
       << "  failed\n";
    for (const auto& r : rows) {
        os << pad(r.label, wl) << "  " << pad(r.setting, ws) << "  " << pad(pm(r.mean_d, r.std_d), 14) << "  "
           << pad(pm(r.mean_c, r.std_c), 14) << "  " << r.failures << "/" << r.cells.size() << "\n";
    }
    for (const auto& r : rows) {
        for (const auto& c : r.cells) {
            if (!c.ok) os << "failed: " << r.label << " seed " << c.seed << ": " << c.error << "\n";
        }
    }
    return os.str();
}

std::string scaling_svg(const ResultTable& table) {
    constexpr double W = 480, H = 320, L = 60, R = 20, T = 30, B = 50;
    std::vector<std::pair<double, std::pair<double, double>>> pts;
    for (const auto& r : table.rows) {
        if (std::isnan(r.mean_d)) continue;
        const double n = std::stod(r.label.substr(r.label.find('=') + 1));
        pts.push_back({n, {r.mean_d, r.std_d}});
    }
    double xmin = 0, xmax = 1;
    if (!pts.empty()) {
        xmin = pts.front().first;
        xmax = pts.back().first;
        if (xmax == xmin) xmax = xmin + 1;
    }
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - std::clamp(y, 0.0, 1.0) * (H - T - B); };
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (double y : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        os << "<text x=\"" << L - 8 << "\" y=\"" << py(y) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << y
           << "</text>\n";
    }
    for (const auto& [x, v] : pts) {
        os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
           << static_cast<int>(x) << "</text>\n";
        os << "<line x1=\"" << px(x) << "\" y1=\"" << py(v.first - v.second) << "\" x2=\"" << px(x) << "\" y2=\""
           << py(v.first + v.second) << "\" stroke=\"steelblue\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& [x, v] : pts) os << px(x) << "," << py(v.first) << " ";
    os << "\"/>\n";
    for (const auto& [x, v] : pts) {
        os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(v.first) << "\" r=\"3\" fill=\"steelblue\"/>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" font-size=\"12\" text-anchor=\"middle\">"
       << "number of variables n</text>\n";
    os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (T + H - B) / 2 << ")\">D_total</text>\n";
    os << "</svg>\n";
    return os.str();
}

json output_hashes(const fs::path& dir) {
    std::vector<fs::path> files;
    if (fs::exists(dir)) {
        for (const auto& entry : fs::recursive_directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            const auto name = entry.path().filename().string();
            if (name == "run_manifest.json" || name == "timing.json") continue;
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    json out = json::object();
    for (const auto& f : files) out[fs::relative(f, dir).generic_string()] = io::sha256_file(f);
    return out;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& config) {
    json doc = {{"command", command},
                {"version", version_string()},
                {"config", config.to_json()},
                {"seeds", config.seeds},
                {"outputs", output_hashes(dir)}};
    io::write_json(dir / "run_manifest.json", doc);
}

std::string version_string() { return std::string("icrlsm ") + ICRLSM_VERSION; }

unsigned effective_workers(unsigned requested) {
    unsigned w = std::max(1u, requested);
    if (const char* env = std::getenv("ICRLSM_NUM_WORKERS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) w = std::min(w, static_cast<unsigned>(cap));
        } catch (const std::exception&) {
            std::cerr << "ignoring malformed ICRLSM_NUM_WORKERS=" << env << "\n";
        }
    }
    return w;
}

}  // namespace icrlsm
