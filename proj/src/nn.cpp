// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/nn.hpp"

#include <cmath>

#include "icrlsm/error.hpp"

namespace icrlsm::nn {

Linear::Linear(std::size_t in, std::size_t out)
    : weight(Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
      bias(Vector::Zero(static_cast<Eigen::Index>(out))),
      grad_weight(Matrix::Zero(weight.rows(), weight.cols())),
      grad_bias(Vector::Zero(bias.size())) {}

void Linear::init_fan_in_uniform(Rng& rng) {
    const double bound = in_features() > 0 ? 1.0 / std::sqrt(static_cast<double>(in_features())) : 1.0;
    auto draw = [&] { return bound * (2.0 * rng.uniform() - 1.0); };
    weight = Matrix::NullaryExpr(weight.rows(), weight.cols(), draw);
    bias = Vector::NullaryExpr(bias.size(), draw);
}

Mlp::Mlp(const std::vector<std::size_t>& sizes) {
    if (sizes.size() < 2) throw InvalidArgument("Mlp needs at least input and output sizes");
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) layers_.emplace_back(sizes[k], sizes[k + 1]);
}

Matrix Mlp::forward(const Matrix& input, MlpTape* tape) const {
    if (tape) tape->inputs.clear();
    Matrix h = input;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const Linear& layer = layers_[k];
        Matrix pre(layer.weight.rows(), h.cols());
        if (layer.weight.cols() == 0) {
            pre.setZero();
        } else {
            pre.noalias() = layer.weight * h;
        }
        pre.colwise() += layer.bias;
        if (tape) tape->inputs.push_back(std::move(h));
        if (k + 1 < layers_.size()) pre = pre.cwiseMax(0.0);
        h = std::move(pre);
    }
    return h;
}

Matrix Mlp::backward(const MlpTape& tape, const Matrix& grad_output) {
    Matrix grad = grad_output;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        Linear& layer = layers_[k];
        const Matrix& in = tape.inputs[k];
        if (layer.weight.cols() > 0) layer.grad_weight.noalias() += grad * in.transpose();
        layer.grad_bias += grad.rowwise().sum();
        Matrix grad_in(layer.weight.cols(), grad.cols());
        if (layer.weight.cols() > 0) grad_in.noalias() = layer.weight.transpose() * grad;
        // The input of layer k > 0 is a ReLU output: its gradient passes
        // only where that output is positive.
        if (k > 0) grad_in = (in.array() > 0.0).select(grad_in, 0.0);
        grad = std::move(grad_in);
    }
    return grad;
}

void Mlp::init_fan_in_uniform(Rng& rng) {
    for (auto& layer : layers_) layer.init_fan_in_uniform(rng);
}

void Mlp::zero_grad() {
    for (auto& layer : layers_) {
        layer.grad_weight.setZero();
        layer.grad_bias.setZero();
    }
}

void Mlp::append_params(std::vector<ParamView>& out, const std::string& prefix) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        Linear& l = layers_[k];
        const std::string base = prefix + ".layer" + std::to_string(k);
        out.push_back({base + ".weight", l.weight.data(), l.grad_weight.data(), static_cast<std::size_t>(l.weight.size())});
        out.push_back({base + ".bias", l.bias.data(), l.grad_bias.data(), static_cast<std::size_t>(l.bias.size())});
    }
}

std::vector<std::size_t> Mlp::sizes() const {
    std::vector<std::size_t> out{in_features()};
    for (const auto& l : layers_) out.push_back(l.out_features());
    return out;
}

Adam::Adam(const std::vector<ParamView>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params) {
        m_.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size)));
        v_.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size)));
    }
}

void Adam::step(const std::vector<ParamView>& params, double lr) {
    if (params.size() != m_.size()) throw InvalidArgument("Adam: parameter list changed size");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto size = static_cast<Eigen::Index>(params[k].size);
        Eigen::Map<Vector> w(params[k].value, size);
        Eigen::Map<const Vector> g(params[k].grad, size);
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseAbs2();
        w.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
}

}  // namespace icrlsm::nn
