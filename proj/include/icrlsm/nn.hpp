// SPDX-License-Identifier: Apache-2.0
//
// Minimal fully connected networks with hand-written reverse mode. Batches
// are stored column-wise: a (features x batch) matrix holds one sample per
// column.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icrlsm/rng.hpp"

namespace icrlsm::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raw view of one parameter tensor and its gradient accumulator.
struct ParamView {
    std::string name;
    double* value = nullptr;
    double* grad = nullptr;
    std::size_t size = 0;
};

struct Linear {
    Matrix weight;  // out x in
    Vector bias;
    Matrix grad_weight;
    Vector grad_bias;

    Linear() = default;
    Linear(std::size_t in, std::size_t out);

    std::size_t in_features() const { return static_cast<std::size_t>(weight.cols()); }
    std::size_t out_features() const { return static_cast<std::size_t>(weight.rows()); }

    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
    void init_fan_in_uniform(Rng& rng);
};

/// Activations recorded by a forward pass; needed by backward().
struct MlpTape {
    std::vector<Matrix> inputs;  // input to each layer
};

/// Stack of Linear layers with ReLU between them (none after the last).
class Mlp {
public:
    Mlp() = default;
    /// sizes = {in, hidden..., out}; at least two entries.
    explicit Mlp(const std::vector<std::size_t>& sizes);

    Matrix forward(const Matrix& input, MlpTape* tape = nullptr) const;
    /// Accumulates parameter gradients; returns d loss / d input.
    Matrix backward(const MlpTape& tape, const Matrix& grad_output);

    void init_fan_in_uniform(Rng& rng);
    void zero_grad();
    void append_params(std::vector<ParamView>& out, const std::string& prefix);

    std::size_t in_features() const { return layers_.front().in_features(); }
    std::size_t out_features() const { return layers_.back().out_features(); }
    std::vector<std::size_t> sizes() const;

    std::vector<Linear>& layers() { return layers_; }
    const std::vector<Linear>& layers() const { return layers_; }

private:
    std::vector<Linear> layers_;
};

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
public:
    explicit Adam(const std::vector<ParamView>& params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(const std::vector<ParamView>& params, double lr);
    std::size_t steps() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Vector> m_, v_;
};

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace icrlsm::nn
