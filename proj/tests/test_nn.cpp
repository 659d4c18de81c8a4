// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "icrlsm/nn.hpp"

using namespace icrlsm;
using nn::Matrix;

TEST_SUITE("nn") {

TEST_CASE("mlp backward matches finite differences") {
    nn::Mlp mlp({3, 5, 4, 2});
    Rng rng(1);
    mlp.init_fan_in_uniform(rng);
    const Matrix x = Matrix::NullaryExpr(3, 6, [&] { return rng.normal(); });
    const Matrix w = Matrix::NullaryExpr(2, 6, [&] { return rng.normal(); });
    auto loss = [&](const Matrix& in) { return mlp.forward(in).cwiseProduct(w).sum(); };

    nn::MlpTape tape;
    mlp.forward(x, &tape);
    mlp.zero_grad();
    const Matrix dx = mlp.backward(tape, w);

    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Matrix xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        CHECK(dx(i) == doctest::Approx((loss(xp) - loss(xm)) / (2 * h)).epsilon(1e-6));
    }
    std::vector<nn::ParamView> views;
    mlp.append_params(views, "mlp");
    for (const auto& p : views) {
        for (std::size_t k = 0; k < p.size; ++k) {
            const double saved = p.value[k];
            p.value[k] = saved + h;
            const double plus = loss(x);
            p.value[k] = saved - h;
            const double minus = loss(x);
            p.value[k] = saved;
            CHECK(p.grad[k] == doctest::Approx((plus - minus) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("fan-in uniform bounds") {
    nn::Linear layer(16, 8);
    Rng rng(2);
    layer.init_fan_in_uniform(rng);
    CHECK(layer.weight.cwiseAbs().maxCoeff() <= 0.25);
    CHECK(layer.bias.cwiseAbs().maxCoeff() <= 0.25);
    CHECK(layer.weight.cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("zero-input layers output their bias") {
    nn::Mlp mlp({0, 1});
    mlp.layers().front().bias(0) = 1.5;
    CHECK(mlp.forward(Matrix(0, 3)).isApproxToConstant(1.5));
}

TEST_CASE("adam first step moves by lr in the gradient sign") {
    double value[2] = {1.0, -2.0};
    double grad[2] = {0.3, -4.0};
    std::vector<nn::ParamView> views{{"p", value, grad, 2}};
    nn::Adam adam(views);
    adam.step(views, 0.1);
    CHECK(value[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(value[1] == doctest::Approx(-1.9).epsilon(1e-6));
    CHECK(adam.steps() == 1);
}

TEST_CASE("softplus is stable") {
    CHECK(nn::softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(nn::softplus(800.0) == 800.0);
    CHECK(nn::softplus(-800.0) >= 0.0);
}

}  // TEST_SUITE
