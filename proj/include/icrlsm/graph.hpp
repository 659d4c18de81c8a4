// SPDX-License-Identifier: Apache-2.0
//
// Causal DAGs over n variables. Variable indices double as the topological
// order: an edge i -> j is only allowed for i < j.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "icrlsm/rng.hpp"

namespace icrlsm {

class CausalGraph {
public:
    /// Empty graph on n nodes. Throws InvalidArgument for n == 0.
    explicit CausalGraph(std::size_t n);

    /// Throws InvalidArgument unless `adjacency` is square and strictly
    /// upper-triangular.
    static CausalGraph from_adjacency(const std::vector<std::vector<bool>>& adjacency);

    std::size_t size() const { return n_; }
    bool has_edge(std::size_t from, std::size_t to) const { return adj_[from * n_ + to]; }
    void add_edge(std::size_t from, std::size_t to);
    std::size_t edge_count() const;

    std::vector<std::size_t> parents(std::size_t node) const;
    std::vector<std::size_t> children(std::size_t node) const;
    /// Strict descendants of `node` (excluding the node itself), ascending.
    std::vector<std::size_t> descendants(std::size_t node) const;

    std::vector<std::vector<bool>> adjacency() const;

    bool operator==(const CausalGraph&) const = default;

private:
    std::size_t n_;
    std::vector<bool> adj_;  // row-major n x n
};

/// Kahn's algorithm on the adjacency alone (ignores the index-order
/// convention). Empty optional if the graph has a cycle.
std::optional<std::vector<std::size_t>> topological_sort(const std::vector<std::vector<bool>>& adjacency);

/// Independent Bernoulli(edge_prob) draw for every pair i < j.
CausalGraph sample_dag(std::size_t n, double edge_prob, Rng& rng);

/// The ten fixed four-node benchmark graphs "G1".."G10". Throws NotFound
/// for any other name.
CausalGraph graph_from_registry(std::string_view name);

/// Four-node chain A->B->C->D and complete DAG, used by the ablations.
CausalGraph chain_graph(std::size_t n);
CausalGraph complete_graph(std::size_t n);

std::vector<std::string> registry_names();

}  // namespace icrlsm
