// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/scm.hpp"

#include <cmath>
#include <string>

#include "icrlsm/error.hpp"

namespace icrlsm {

double LocNet::operator()(const Eigen::VectorXd& parent_values) const {
    if (hidden_weights.rows() == 0) return weights.dot(parent_values) + bias;
    const Eigen::VectorXd hidden = (hidden_weights * parent_values + hidden_bias).array().tanh().matrix();
    return weights.dot(hidden) + bias;
}

std::size_t LocNet::input_size() const {
    return static_cast<std::size_t>(hidden_weights.rows() == 0 ? weights.size() : hidden_weights.cols());
}

namespace {

LocNet random_loc_net(std::size_t n_parents, std::size_t hidden_units, double mean, Rng& rng) {
    auto draw = [&] { return rng.normal(mean, 1.0); };
    LocNet net;
    if (hidden_units > 0 && n_parents > 0) {
        net.hidden_weights = Eigen::MatrixXd::NullaryExpr(hidden_units, n_parents, draw);
        net.hidden_bias = Eigen::VectorXd::NullaryExpr(hidden_units, draw);
        net.weights = Eigen::VectorXd::NullaryExpr(hidden_units, draw);
    } else {
        net.weights = Eigen::VectorXd::NullaryExpr(n_parents, draw);
    }
    net.bias = draw();
    return net;
}

Eigen::VectorXd gather(const Eigen::VectorXd& values, const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = values[idx[k]];
    return out;
}

}  // namespace

LocationScaleScm init_scm(const CausalGraph& graph, const ScmInit& init, Rng& rng) {
    LocationScaleScm scm;
    scm.graph = graph;
    scm.scale = 1.0;
    for (std::size_t i = 0; i < graph.size(); ++i) {
        scm.loc.push_back(random_loc_net(graph.parents(i).size(), init.hidden_units, init.pre_loc_mean, rng));
    }
    for (std::size_t i = 0; i < graph.size(); ++i) {
        scm.loc_tilde.push_back(
            random_loc_net(graph.parents(i).size(), init.hidden_units, init.post_loc_mean, rng));
    }
    return scm;
}

MixingMap sample_rotation(std::size_t n, Rng& rng) {
    if (n == 0) throw InvalidArgument("sample_rotation: n must be positive");
    const Eigen::MatrixXd gaussian = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return rng.normal(); });
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Fixing column signs by sign(diag R) makes Q Haar on O(n).
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    if (q.determinant() < 0.0) q.col(0) *= -1.0;
    return MixingMap{std::move(q)};
}

Eigen::VectorXd ancestral_pass(const LocationScaleScm& scm, const Eigen::VectorXd& exogenous,
                               std::optional<std::size_t> intervened) {
    const std::size_t n = scm.size();
    Eigen::VectorXd z(n);
    for (std::size_t j = 0; j < n; ++j) {
        const Eigen::VectorXd pa = gather(z, scm.graph.parents(j));
        const LocNet& net = (intervened && *intervened == j) ? scm.loc_tilde[j] : scm.loc[j];
        z[j] = scm.scale * exogenous[j] + net(pa);
    }
    return z;
}

InterventionalSample sample_pair(const LocationScaleScm& scm, const MixingMap& mix, std::size_t target,
                                 Rng& rng) {
    const std::size_t n = scm.size();
    if (target >= n) {
        throw InvalidArgument("sample_pair: target " + std::to_string(target) + " out of range for n=" +
                              std::to_string(n));
    }
    GroundTruth truth;
    truth.e = Eigen::VectorXd::NullaryExpr(n, [&] { return rng.normal(); });
    truth.e_tilde = truth.e;
    truth.e_tilde[target] = rng.normal();
    truth.z = ancestral_pass(scm, truth.e, std::nullopt);
    truth.z_tilde = ancestral_pass(scm, truth.e_tilde, target);

    InterventionalSample s;
    s.x = mix.apply(truth.z);
    s.x_tilde = mix.apply(truth.z_tilde);
    s.target = target;
    s.truth = std::move(truth);
    return s;
}

}  // namespace icrlsm
