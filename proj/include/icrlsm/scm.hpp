// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth location-scale SCMs with soft interventions and linear
// SO(n) mixing.

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "icrlsm/graph.hpp"
#include "icrlsm/rng.hpp"

namespace icrlsm {

/// Location map from a node's parent values to a scalar. With
/// hidden_units == 0 this is affine (weights . parents + bias); otherwise a
/// single tanh hidden layer precedes the affine read-out. Roots only carry
/// the bias.
struct LocNet {
    Eigen::MatrixXd hidden_weights;  // hidden_units x |parents|
    Eigen::VectorXd hidden_bias;     // hidden_units
    Eigen::VectorXd weights;         // |parents| or hidden_units
    double bias = 0.0;

    double operator()(const Eigen::VectorXd& parent_values) const;
    std::size_t input_size() const;
};

struct LocationScaleScm {
    CausalGraph graph{1};
    std::vector<LocNet> loc;
    std::vector<LocNet> loc_tilde;  // used only at an intervened node
    double scale = 1.0;

    std::size_t size() const { return graph.size(); }
};

struct ScmInit {
    double pre_loc_mean = 0.0;
    double post_loc_mean = 3.0;
    std::size_t hidden_units = 0;
};

/// All loc weights ~ N(pre_loc_mean, 1), all loc_tilde weights
/// ~ N(post_loc_mean, 1), constant unit scale.
LocationScaleScm init_scm(const CausalGraph& graph, const ScmInit& init, Rng& rng);

struct MixingMap {
    Eigen::MatrixXd rotation;
    Eigen::VectorXd apply(const Eigen::VectorXd& z) const { return rotation * z; }
};

/// Haar-distributed rotation in SO(n).
MixingMap sample_rotation(std::size_t n, Rng& rng);

struct GroundTruth {
    Eigen::VectorXd z, z_tilde, e, e_tilde;
};

struct InterventionalSample {
    Eigen::VectorXd x;
    Eigen::VectorXd x_tilde;
    std::size_t target = 0;
    std::optional<GroundTruth> truth;
};

/// Ancestral pass z_j = scale * e_j + loc_j(z_parents). When `intervened`
/// is set, that node uses loc_tilde instead.
Eigen::VectorXd ancestral_pass(const LocationScaleScm& scm, const Eigen::VectorXd& exogenous,
                               std::optional<std::size_t> intervened);

/// One soft-intervention pair with fresh exogenous noise for the target and
/// copied noise elsewhere. Throws InvalidArgument if target >= n.
InterventionalSample sample_pair(const LocationScaleScm& scm, const MixingMap& mix, std::size_t target,
                                 Rng& rng);

}  // namespace icrlsm
