// SPDX-License-Identifier: Apache-2.0
//
// Fixtures shared by the unit and acceptance tests.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icrlsm/model.hpp"
#include "icrlsm/rng.hpp"
#include "icrlsm/scm.hpp"
#include "icrlsm/trainer.hpp"

namespace icrlsm::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("icrlsm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Zero weights everywhere; the final bias carries `value`.
inline void make_constant(nn::Mlp& mlp, double value) {
    for (auto& layer : mlp.layers()) {
        layer.weight.setZero();
        layer.bias.setZero();
    }
    mlp.layers().back().bias.setConstant(value);
}

/// Raw scale output that the positive link maps to `scale`.
inline double raw_for_scale(const AicmModel& model, double scale) {
    return std::log(std::expm1(scale - model.config().scale_floor)) - 0.54132485461291810;
}

/// Node `node` gets loc = 0, scale = `scale`, h = 0, prior mean = 0.
inline void make_identity_node(AicmModel& model, std::size_t node, double scale = 1.0) {
    auto& nets = model.nodes[node];
    make_constant(nets.loc, 0.0);
    make_constant(nets.scale_raw, raw_for_scale(model, scale));
    make_constant(nets.shift, 0.0);
    make_constant(nets.prior_mean, 0.0);
}

inline AicmModel random_model(std::size_t n, std::size_t d, std::uint64_t seed, bool linear = false) {
    ModelConfig cfg = linear ? ModelConfig::linear(n, d) : ModelConfig{};
    cfg.n = n;
    cfg.d = d;
    AicmModel model(cfg);
    model.initialize(seed);
    return model;
}

/// Linear model whose inferred causal variables are Q^T x scaled by
/// 1 / scale_link(0): an encoder that undoes the mixing exactly.
inline AicmModel oracle_model(const Eigen::MatrixXd& q) {
    const auto n = static_cast<std::size_t>(q.rows());
    AicmModel model(ModelConfig::linear(n, n));
    model.initialize(0);
    auto& enc = model.encoder_e.layers().front();
    enc.weight.setZero();
    enc.bias.setZero();
    enc.weight.topRows(static_cast<Eigen::Index>(n)) = q.transpose();
    for (std::size_t i = 0; i < n; ++i) {
        make_constant(model.nodes[i].loc, 0.0);
        make_constant(model.nodes[i].scale_raw, 0.0);
    }
    return model;
}

inline Batch random_batch(std::size_t d, const std::vector<std::size_t>& targets, Rng& rng) {
    Batch b;
    const auto rows = static_cast<Eigen::Index>(d);
    const auto cols = static_cast<Eigen::Index>(targets.size());
    b.x = nn::Matrix::NullaryExpr(rows, cols, [&] { return rng.normal(); });
    b.x_tilde = nn::Matrix::NullaryExpr(rows, cols, [&] { return rng.normal(); });
    b.targets = targets;
    return b;
}

}  // namespace icrlsm::testing
