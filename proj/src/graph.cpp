// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/graph.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <utility>

#include "icrlsm/error.hpp"

namespace icrlsm {

CausalGraph::CausalGraph(std::size_t n) : n_(n), adj_(n * n, false) {
    if (n == 0) throw InvalidArgument("causal graph needs at least one node");
}

CausalGraph CausalGraph::from_adjacency(const std::vector<std::vector<bool>>& adjacency) {
    CausalGraph g(adjacency.size());
    for (std::size_t i = 0; i < adjacency.size(); ++i) {
        if (adjacency[i].size() != adjacency.size()) throw InvalidArgument("adjacency matrix is not square");
        for (std::size_t j = 0; j < adjacency.size(); ++j) {
            if (adjacency[i][j]) g.add_edge(i, j);
        }
    }
    return g;
}

void CausalGraph::add_edge(std::size_t from, std::size_t to) {
    if (from >= n_ || to >= n_) throw InvalidArgument("edge endpoint out of range");
    if (from >= to) {
        throw InvalidArgument("edge " + std::to_string(from) + "->" + std::to_string(to) +
                              " violates the fixed topological order");
    }
    adj_[from * n_ + to] = true;
}

std::size_t CausalGraph::edge_count() const {
    return static_cast<std::size_t>(std::count(adj_.begin(), adj_.end(), true));
}

std::vector<std::size_t> CausalGraph::parents(std::size_t node) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < node; ++i) {
        if (has_edge(i, node)) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> CausalGraph::children(std::size_t node) const {
    std::vector<std::size_t> out;
    for (std::size_t j = node + 1; j < n_; ++j) {
        if (has_edge(node, j)) out.push_back(j);
    }
    return out;
}

std::vector<std::size_t> CausalGraph::descendants(std::size_t node) const {
    std::vector<bool> reached(n_, false);
    reached[node] = true;
    // Index order is topological, so one forward sweep suffices.
    for (std::size_t j = node + 1; j < n_; ++j) {
        for (std::size_t i = node; i < j && !reached[j]; ++i) {
            if (reached[i] && has_edge(i, j)) reached[j] = true;
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t j = node + 1; j < n_; ++j) {
        if (reached[j]) out.push_back(j);
    }
    return out;
}

std::vector<std::vector<bool>> CausalGraph::adjacency() const {
    std::vector<std::vector<bool>> out(n_, std::vector<bool>(n_, false));
    for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) out[i][j] = has_edge(i, j);
    }
    return out;
}

std::optional<std::vector<std::size_t>> topological_sort(const std::vector<std::vector<bool>>& adjacency) {
    const std::size_t n = adjacency.size();
    std::vector<std::size_t> indegree(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) indegree[j] += adjacency[i][j] ? 1 : 0;
    }
    std::deque<std::size_t> ready;
    for (std::size_t j = 0; j < n; ++j) {
        if (indegree[j] == 0) ready.push_back(j);
    }
    std::vector<std::size_t> order;
    while (!ready.empty()) {
        const std::size_t i = ready.front();
        ready.pop_front();
        order.push_back(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (adjacency[i][j] && --indegree[j] == 0) ready.push_back(j);
        }
    }
    if (order.size() != n) return std::nullopt;
    return order;
}

CausalGraph sample_dag(std::size_t n, double edge_prob, Rng& rng) {
    if (n == 0) throw InvalidArgument("sample_dag: n must be positive");
    if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw InvalidArgument("sample_dag: edge_prob outside [0, 1]");
    CausalGraph g(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rng.bernoulli(edge_prob)) g.add_edge(i, j);
        }
    }
    return g;
}

namespace {

// Nodes A, B, C, D map onto indices 0..3.
struct RegistryEntry {
    std::string_view name;
    std::vector<std::pair<int, int>> edges;
};

const std::vector<RegistryEntry>& registry() {
    enum { A, B, C, D };
    static const std::vector<RegistryEntry> entries = {
        {"G1", {{A, C}, {A, D}, {B, C}}},
        {"G2", {{A, B}, {C, D}}},
        {"G3", {{A, B}, {A, C}, {B, C}, {C, D}}},
        {"G4", {{A, C}, {A, D}, {B, D}}},
        {"G5", {{A, B}, {A, C}, {A, D}, {B, C}, {B, D}, {C, D}}},
        {"G6", {{A, B}, {B, C}}},
        {"G7", {{A, C}, {A, D}, {C, D}}},
        {"G8", {{A, B}, {A, C}, {B, D}, {C, D}}},
        {"G9", {{A, D}, {B, D}, {C, D}}},
        {"G10", {{A, B}, {B, C}, {A, D}}},
    };
    return entries;
}

}  // namespace

CausalGraph graph_from_registry(std::string_view name) {
    for (const auto& entry : registry()) {
        if (entry.name != name) continue;
        CausalGraph g(4);
        for (auto [from, to] : entry.edges) g.add_edge(from, to);
        return g;
    }
    throw NotFound("unknown registry graph '" + std::string(name) + "' (expected G1..G10)");
}

CausalGraph chain_graph(std::size_t n) {
    CausalGraph g(n);
    for (std::size_t i = 0; i + 1 < n; ++i) g.add_edge(i, i + 1);
    return g;
}

CausalGraph complete_graph(std::size_t n) {
    CausalGraph g(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) g.add_edge(i, j);
    }
    return g;
}

std::vector<std::string> registry_names() {
    std::vector<std::string> out;
    for (const auto& entry : registry()) out.emplace_back(entry.name);
    return out;
}

}  // namespace icrlsm
