// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/dataset.hpp"

#include <algorithm>
#include <string_view>
#include <thread>

#include "icrlsm/error.hpp"
#include "icrlsm/io.hpp"

namespace icrlsm {

namespace fs = std::filesystem;
using nlohmann::json;

bool Dataset::has_truth() const {
    return !samples.empty() && std::all_of(samples.begin(), samples.end(),
                                            [](const InterventionalSample& s) { return s.truth.has_value(); });
}

namespace {

Dataset generate_split(const LocationScaleScm& scm, const MixingMap& mix, const DatasetMeta& meta,
                       const std::string& split, std::uint64_t stream, std::size_t count, unsigned threads) {
    Dataset ds;
    ds.meta = meta;
    ds.split = split;
    ds.samples.resize(count);
    const std::size_t n = scm.size();
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            Rng rng(meta.seed, stream, k);
            const auto target = static_cast<std::size_t>(rng.uniform_int(n));
            ds.samples[k] = sample_pair(scm, mix, target, rng);
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1 || count < 2 * threads) {
        work(0, count);
        return ds;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (count + threads - 1) / threads;
    for (std::size_t begin = 0; begin < count; begin += chunk) {
        pool.emplace_back(work, begin, std::min(count, begin + chunk));
    }
    return ds;
}

std::vector<std::string> csv_columns(std::size_t n, bool truth) {
    std::vector<std::string> cols;
    auto add = [&](const char* prefix) {
        for (std::size_t i = 1; i <= n; ++i) cols.push_back(prefix + std::to_string(i));
    };
    add("x_");
    add("xt_");
    cols.emplace_back("target");
    if (truth) {
        add("z_");
        add("zt_");
        add("e_");
        add("et_");
    }
    return cols;
}

void append_vector(std::string& out, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out += io::format_double(v[i]);
        out += ',';
    }
}

json meta_to_json(const DatasetMeta& meta) {
    json doc;
    doc["format_version"] = meta.format_version;
    doc["generator_version"] = meta.generator_version;
    doc["n"] = meta.n;
    doc["adjacency"] = meta.adjacency;
    json edges = json::array();
    for (std::size_t i = 0; i < meta.adjacency.size(); ++i) {
        for (std::size_t j = 0; j < meta.adjacency[i].size(); ++j) {
            if (meta.adjacency[i][j]) edges.push_back({i, j});
        }
    }
    doc["edges"] = edges;  // informational; load() reads adjacency
    std::vector<double> q;
    for (Eigen::Index r = 0; r < meta.mixing.rows(); ++r) {
        for (Eigen::Index c = 0; c < meta.mixing.cols(); ++c) q.push_back(meta.mixing(r, c));
    }
    doc["mixing_row_major"] = q;
    doc["seed"] = meta.seed;
    doc["counts"] = {{"train", meta.counts.train}, {"val", meta.counts.val}, {"test", meta.counts.test}};
    doc["scm_init"] = {{"pre_loc_mean", meta.scm_init.pre_loc_mean},
                       {"post_loc_mean", meta.scm_init.post_loc_mean},
                       {"hidden_units", meta.scm_init.hidden_units},
                       {"scale", 1.0}};
    return doc;
}

template <typename T>
T field(const json& doc, const char* name, const fs::path& path) {
    if (!doc.contains(name)) throw IoError(path.string() + ": missing field '" + name + "'");
    try {
        return doc.at(name).get<T>();
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad field '" + name + "': " + e.what());
    }
}

DatasetMeta meta_from_json(const json& doc, const fs::path& path) {
    DatasetMeta meta;
    meta.format_version = field<int>(doc, "format_version", path);
    if (meta.format_version != kDatasetFormatVersion) {
        throw SchemaError(path.string() + ": unsupported format_version " + std::to_string(meta.format_version));
    }
    meta.generator_version = field<std::string>(doc, "generator_version", path);
    meta.n = field<std::size_t>(doc, "n", path);
    meta.adjacency = field<std::vector<std::vector<bool>>>(doc, "adjacency", path);
    const auto q = field<std::vector<double>>(doc, "mixing_row_major", path);
    meta.seed = field<std::uint64_t>(doc, "seed", path);
    const json counts = field<json>(doc, "counts", path);
    meta.counts.train = field<std::size_t>(counts, "train", path);
    meta.counts.val = field<std::size_t>(counts, "val", path);
    meta.counts.test = field<std::size_t>(counts, "test", path);
    if (doc.contains("scm_init")) {
        const json& s = doc["scm_init"];
        meta.scm_init.pre_loc_mean = field<double>(s, "pre_loc_mean", path);
        meta.scm_init.post_loc_mean = field<double>(s, "post_loc_mean", path);
        meta.scm_init.hidden_units = field<std::size_t>(s, "hidden_units", path);
    }
    if (meta.n == 0) throw SchemaError(path.string() + ": n must be positive");
    if (meta.adjacency.size() != meta.n) throw SchemaError(path.string() + ": adjacency size disagrees with n");
    if (q.size() != meta.n * meta.n) throw SchemaError(path.string() + ": mixing matrix size disagrees with n");
    meta.mixing.resize(static_cast<Eigen::Index>(meta.n), static_cast<Eigen::Index>(meta.n));
    for (std::size_t r = 0; r < meta.n; ++r) {
        for (std::size_t c = 0; c < meta.n; ++c) meta.mixing(r, c) = q[r * meta.n + c];
    }
    return meta;
}

std::size_t split_count(const DatasetMeta& meta, const std::string& split) {
    if (split == "train") return meta.counts.train;
    if (split == "val") return meta.counts.val;
    if (split == "test") return meta.counts.test;
    throw InvalidArgument("unknown split '" + split + "'");
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace

DatasetSplits generate_dataset(const LocationScaleScm& scm, const MixingMap& mix, const SplitCounts& counts,
                               std::uint64_t seed, unsigned threads) {
    if (counts.train == 0 || counts.val == 0 || counts.test == 0) {
        throw InvalidArgument("generate_dataset: split counts must be positive");
    }
    DatasetMeta meta;
    meta.n = scm.size();
    meta.adjacency = scm.graph.adjacency();
    meta.mixing = mix.rotation;
    meta.seed = seed;
    meta.counts = counts;
    DatasetSplits out;
    out.train = generate_split(scm, mix, meta, "train", streams::kTrainSplit, counts.train, threads);
    out.val = generate_split(scm, mix, meta, "val", streams::kValSplit, counts.val, threads);
    out.test = generate_split(scm, mix, meta, "test", streams::kTestSplit, counts.test, threads);
    return out;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    const std::size_t n = ds.meta.n;
    const bool truth = ds.has_truth();
    std::string csv;
    const auto cols = csv_columns(n, truth);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        csv += cols[i];
        csv += i + 1 < cols.size() ? ',' : '\n';
    }
    for (const auto& s : ds.samples) {
        append_vector(csv, s.x);
        append_vector(csv, s.x_tilde);
        csv += std::to_string(s.target);
        if (truth) {
            csv += ',';
            append_vector(csv, s.truth->z);
            append_vector(csv, s.truth->z_tilde);
            append_vector(csv, s.truth->e);
            append_vector(csv, s.truth->e_tilde);
            csv.pop_back();
        }
        csv += '\n';
    }
    io::write_json(dir / "meta.json", meta_to_json(ds.meta));
    io::write_file_atomic(dir / (ds.split + ".csv"), csv);
}

void save_dataset(const DatasetSplits& splits, const fs::path& dir) {
    save_dataset(splits.train, dir);
    save_dataset(splits.val, dir);
    save_dataset(splits.test, dir);
}

DatasetMeta load_meta(const fs::path& dir) {
    const fs::path path = dir / "meta.json";
    return meta_from_json(io::read_json(path), path);
}

Dataset load_dataset(const fs::path& dir, const std::string& split) {
    Dataset ds;
    ds.meta = load_meta(dir);
    ds.split = split;
    const std::size_t n = ds.meta.n;
    const std::size_t expected = split_count(ds.meta, split);
    const fs::path path = dir / (split + ".csv");
    const std::string text = io::read_file(path);

    std::size_t pos = text.find('\n');
    if (pos == std::string::npos) throw IoError(path.string() + ": missing header");
    const auto header = split_fields(std::string_view(text).substr(0, pos));
    const bool truth = header.size() > 2 * n + 1;
    const auto cols = csv_columns(n, truth);
    if (header.size() != cols.size() || !std::equal(cols.begin(), cols.end(), header.begin())) {
        throw SchemaError(path.string() + ": header does not match n=" + std::to_string(n) + " from meta.json");
    }

    auto read_vec = [&](const std::vector<std::string_view>& f, std::size_t offset, const char* name) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = io::parse_double(f[offset + i], name);
        return v;
    };

    ds.samples.reserve(expected);
    std::size_t row = 0;
    ++pos;
    while (pos < text.size()) {
        const std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) {
            throw IoError(path.string() + ": truncated at row " + std::to_string(row) + " (no line terminator)");
        }
        const auto f = split_fields(std::string_view(text).substr(pos, end - pos));
        pos = end + 1;
        if (f.size() != cols.size()) {
            throw IoError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                          " fields, expected " + std::to_string(cols.size()));
        }
        InterventionalSample s;
        s.x = read_vec(f, 0, "x");
        s.x_tilde = read_vec(f, n, "xt");
        const double target = io::parse_double(f[2 * n], "target");
        if (target < 0 || target >= static_cast<double>(n) || target != static_cast<double>(static_cast<std::size_t>(target))) {
            throw SchemaError(path.string() + ": row " + std::to_string(row) + " target out of range");
        }
        s.target = static_cast<std::size_t>(target);
        if (truth) {
            GroundTruth t;
            t.z = read_vec(f, 2 * n + 1, "z");
            t.z_tilde = read_vec(f, 3 * n + 1, "zt");
            t.e = read_vec(f, 4 * n + 1, "e");
            t.e_tilde = read_vec(f, 5 * n + 1, "et");
            s.truth = std::move(t);
        }
        ds.samples.push_back(std::move(s));
        ++row;
    }
    if (row < expected) {
        throw IoError(path.string() + ": truncated, " + std::to_string(row) + " of " + std::to_string(expected) +
                      " rows");
    }
    if (row > expected) {
        throw SchemaError(path.string() + ": " + std::to_string(row) + " rows but meta.json counts " +
                          std::to_string(expected));
    }
    return ds;
}

DatasetSplits load_dataset(const fs::path& dir) {
    return {load_dataset(dir, "train"), load_dataset(dir, "val"), load_dataset(dir, "test")};
}

}  // namespace icrlsm
