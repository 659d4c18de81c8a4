// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "icrlsm/error.hpp"
#include "icrlsm/io.hpp"
#include "icrlsm/model.hpp"
#include "support.hpp"

using namespace icrlsm;
using Eigen::VectorXd;

namespace {

VectorXd randn(Eigen::Index n, Rng& rng, double s = 1.0) {
    return VectorXd::NullaryExpr(n, [&] { return s * rng.normal(); });
}

double std_normal_log_pdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi); }

// Trapezoid integral of exp(transition_log_prob) over e~_t in a +-10 sigma
// window around the density's centre.
double transition_mass(const AicmModel& model, const VectorXd& e, const VectorXd& v, std::size_t t) {
    const VectorXd rest = drop_coordinate(e, t);
    const double s = model.scale(t, rest);
    const double centre = s * model.prior_mean(t, e[static_cast<Eigen::Index>(t)]) + model.loc(t, rest) +
                          model.switch_shift(t, v);
    const int steps = 20000;
    const double lo = centre - 10.0 * s, hi = centre + 10.0 * s, dx = (hi - lo) / steps;
    double sum = 0.0;
    for (int k = 0; k <= steps; ++k) {
        VectorXd et = e;
        et[static_cast<Eigen::Index>(t)] = lo + k * dx;
        const double p = std::exp(model.transition_log_prob(LatentTriple::make(e, et, v, t)));
        sum += (k == 0 || k == steps) ? 0.5 * p : p;
    }
    return sum * dx;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("encoders return finite, deterministic posteriors") {
    const AicmModel m = testing::random_model(4, 4, 1);
    const auto a = m.encode_exogenous(VectorXd::Zero(4));
    CHECK(a.mean.size() == 4);
    CHECK(a.log_std.size() == 4);
    CHECK(a.mean.allFinite());
    const auto b = m.encode_exogenous(VectorXd::Zero(4));
    CHECK(a.mean == b.mean);
    const auto sw = m.encode_switch(VectorXd::Zero(4));
    CHECK(sw.mean.allFinite());
    CHECK(std::isfinite(m.switch_shift(0, sw.mean)));
    VectorXd bad = VectorXd::Zero(4);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(m.encode_exogenous(bad), InvalidArgument);
    CHECK_THROWS_AS(m.encode_switch(bad), InvalidArgument);
    CHECK_THROWS_AS(m.encode_exogenous(VectorXd::Zero(3)), InvalidArgument);
}

TEST_CASE("encoder is continuous under small perturbations") {
    const AicmModel m = testing::random_model(4, 4, 2);
    Rng rng(3);
    const VectorXd x = randn(4, rng);
    for (double eps : {1e-3, 1e-5, 1e-7}) {
        const VectorXd dx = randn(4, rng, eps);
        const auto a = m.encode_exogenous(x);
        const auto b = m.encode_exogenous(x + dx);
        // Fan-in uniform ReLU nets with 64 units have small Lipschitz constants.
        CHECK((a.mean - b.mean).norm() < 100.0 * dx.norm());
    }
}

TEST_CASE("decoders map R^n to R^d") {
    const AicmModel m = testing::random_model(3, 5, 4);
    CHECK(m.decode(VectorXd::Ones(3)).size() == 5);
    CHECK(m.decode_delta(VectorXd::Ones(3)).size() == 5);
    CHECK(m.decode(VectorXd::Ones(3)) == m.decode(VectorXd::Ones(3)));
}

TEST_CASE("identity mechanism stub") {
    AicmModel m = testing::random_model(3, 3, 5);
    testing::make_identity_node(m, 1);
    Rng rng(6);
    const VectorXd rest = randn(2, rng), v = randn(3, rng);
    for (double e : {-2.0, 0.0, 0.7}) {
        CHECK(m.solution_forward(1, e, rest, v, true) == doctest::Approx(e).epsilon(1e-12));
        CHECK(m.solution_inverse(1, e, rest, v, false) == doctest::Approx(e).epsilon(1e-12));
    }
    CHECK(std::abs(m.log_det_jacobian(1, rest)) < 1e-12);
    testing::make_identity_node(m, 1, 2.0);
    CHECK(m.log_det_jacobian(1, rest) == doctest::Approx(-0.693147).epsilon(1e-6));
    CHECK(std::abs(m.log_det_jacobian(1, rest) + std::log(2.0)) < 1e-12);
}

TEST_CASE("switch term is excluded when disabled and zero h agrees") {
    AicmModel m = testing::random_model(4, 4, 7);
    Rng rng(8);
    const VectorXd rest = randn(3, rng);
    const double a = m.solution_forward(2, 0.3, rest, randn(4, rng), false);
    const double b = m.solution_forward(2, 0.3, rest, randn(4, rng, 50.0), false);
    CHECK(a == b);
    testing::make_constant(m.nodes[2].shift, 0.0);
    CHECK(m.solution_forward(2, 0.3, rest, randn(4, rng), true) == m.solution_forward(2, 0.3, rest, randn(4, rng), false));
}

TEST_CASE("solution function matches the direct formula") {
    Rng rng(9);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const AicmModel m = testing::random_model(4, 4, s);
        for (std::size_t i = 0; i < 4; ++i) {
            const VectorXd rest = randn(3, rng), v = randn(4, rng);
            const double et = rng.normal();
            const double loc = m.nodes[i].loc.forward(rest)(0, 0);
            const double raw = m.nodes[i].scale_raw.forward(rest)(0, 0);
            const double h = m.nodes[i].shift.forward(v)(0, 0);
            const double scale = std::log1p(std::exp(raw + std::log(std::numbers::e - 1.0))) + 1e-4;
            CHECK(m.solution_forward(i, et, rest, v, true) == doctest::Approx((et - loc - h) / scale).epsilon(1e-12));
            CHECK(m.solution_forward(i, et, rest, v, false) == doctest::Approx((et - loc) / scale).epsilon(1e-12));
        }
    }
}

TEST_CASE("solution function round trip and log-det against finite differences") {
    Rng rng(10);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const AicmModel m = testing::random_model(4, 4, s);
        for (int k = 0; k < 100; ++k) {
            const std::size_t i = static_cast<std::size_t>(k) % 4;
            const VectorXd rest = randn(3, rng), v = randn(4, rng);
            const double et = 3.0 * rng.normal();
            const double z = m.solution_forward(i, et, rest, v, true);
            CHECK(std::abs(m.solution_inverse(i, z, rest, v, true) - et) < 1e-9);
            const double h = 1e-5;
            const double slope = (m.solution_forward(i, et + h, rest, v, true) - m.solution_forward(i, et - h, rest, v, true)) / (2 * h);
            const double ld = m.log_det_jacobian(i, rest);
            CHECK(std::abs(std::log(std::abs(slope)) - ld) / std::max(1.0, std::abs(ld)) < 1e-5);
        }
    }
}

TEST_CASE("scale is positive everywhere") {
    const AicmModel m = testing::random_model(3, 3, 11);
    Rng rng(12);
    for (int k = 0; k < 10000; ++k) CHECK(m.scale(static_cast<std::size_t>(k % 3), randn(2, rng, 30.0)) > 0.0);
    CHECK(m.scale_link(-1e6) >= 1e-4);
    CHECK(m.scale_link(0.0) == doctest::Approx(1.0 + 1e-4).epsilon(1e-12));
}

TEST_CASE("transition density") {
    AicmModel m = testing::random_model(4, 4, 13);
    testing::make_identity_node(m, 0);
    const VectorXd zero = VectorXd::Zero(4);
    CHECK(m.transition_log_prob(LatentTriple::make(zero, zero, zero, 0)) == doctest::Approx(-0.9189385).epsilon(1e-7));

    // Copy constraint.
    VectorXd et = zero;
    et[2] = 1.0;
    const auto copied = LatentTriple::make(zero, et, zero, 0);
    CHECK(copied.satisfies_copy());
    CHECK(copied.e_tilde()[2] == 0.0);
    CHECK_THROWS_AS(m.transition_log_prob(LatentTriple::unchecked(zero, et, zero, 0)), ContractError);

    // Direct formula at random parameters.
    Rng rng(14);
    const AicmModel r = testing::random_model(4, 4, 15);
    for (int k = 0; k < 20; ++k) {
        const std::size_t t = static_cast<std::size_t>(k) % 4;
        const VectorXd e = randn(4, rng), v = randn(4, rng);
        VectorXd tilde = e;
        tilde[static_cast<Eigen::Index>(t)] = rng.normal();
        const VectorXd rest = drop_coordinate(e, t);
        const double z = r.solution_forward(t, tilde[static_cast<Eigen::Index>(t)], rest, v, true);
        const double expected = std_normal_log_pdf(z - r.prior_mean(t, e[static_cast<Eigen::Index>(t)])) - std::log(r.scale(t, rest));
        CHECK(r.transition_log_prob(LatentTriple::make(e, tilde, v, t)) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("transition density integrates to one") {
    Rng rng(16);
    for (std::uint64_t s = 0; s < 3; ++s) {
        AicmModel m = testing::random_model(4, 4, 100 + s);
        // Push scale away from 1 so normalization exercises the Jacobian.
        m.nodes[1].scale_raw.layers().back().bias(0) += 1.5 * rng.normal();
        const VectorXd e = randn(4, rng), v = randn(4, rng);
        const double mass = transition_mass(m, e, v, 1);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("standard normal priors") {
    CHECK(prior_log_prob_e(VectorXd::Zero(4)) == doctest::Approx(-3.675754).epsilon(1e-7));
    VectorXd e = VectorXd::Zero(4);
    e[0] = 1.0;
    CHECK(prior_log_prob_e(e) == doctest::Approx(-4.175754).epsilon(1e-7));
    Rng rng(17);
    for (int k = 0; k < 10; ++k) {
        const VectorXd v = randn(5, rng, 2.0);
        double expected = 0.0;
        for (Eigen::Index i = 0; i < 5; ++i) expected += std_normal_log_pdf(v[i]);
        CHECK(std::abs(prior_log_prob_v(v) - expected) < 1e-12);
    }
}

TEST_CASE("inference ignores the switch and applies pre-intervention mechanisms") {
    AicmModel m = testing::random_model(3, 3, 18);
    for (std::size_t i = 0; i < 3; ++i) testing::make_identity_node(m, i);
    Rng rng(19);
    const VectorXd x = randn(3, rng);
    const VectorXd e = m.encode_exogenous(x).mean;
    CHECK((m.infer_causal_variables(x) - e).cwiseAbs().maxCoeff() < 1e-12);

    const AicmModel r = testing::random_model(3, 3, 20);
    const nn::Matrix xs = nn::Matrix::NullaryExpr(3, 7, [&] { return rng.normal(); });
    const nn::Matrix zs = r.infer_causal_variables(xs);
    for (Eigen::Index b = 0; b < 7; ++b) {
        const VectorXd eb = r.encode_exogenous(xs.col(b)).mean;
        const VectorXd zb = r.infer_causal_variables(VectorXd(xs.col(b)));
        CHECK((zs.col(b) - zb).cwiseAbs().maxCoeff() < 1e-12);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(zb[static_cast<Eigen::Index>(i)] ==
                  doctest::Approx(r.solution_forward(i, eb[static_cast<Eigen::Index>(i)], drop_coordinate(eb, i), VectorXd::Zero(3), false)).epsilon(1e-12));
        }
    }
}

TEST_CASE("checkpoints round-trip and validate") {
    const auto dir = testing::scratch_dir("ckpt");
    AicmModel m = testing::random_model(4, 4, 21);
    m.obs_log_std = 0.25;
    save_checkpoint(m, dir, {{"note", "x"}});
    AicmModel back = load_checkpoint(dir);
    CHECK(back.config() == m.config());
    CHECK(back.obs_log_std == 0.25);
    auto pa = m.params();
    auto pb = back.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t k = 0; k < pa.size(); ++k) {
        for (std::size_t j = 0; j < pa[k].size; ++j) REQUIRE(pa[k].value[j] == pb[k].value[j]);
    }
    const auto manifest = read_manifest(dir);
    CHECK(manifest["note"] == "x");
    CHECK(manifest.contains("params_sha256"));

    AicmModel other = testing::random_model(3, 4, 0);
    CHECK_THROWS_AS(load_checkpoint_into(other, dir), SchemaError);

    std::string blob = io::read_file(dir / "params.bin");
    blob[blob.size() - 1] ^= 1;
    io::write_file_atomic(dir / "params.bin", blob);
    CHECK_THROWS_AS(load_checkpoint(dir), IoError);
    io::write_file_atomic(dir / "params.bin", blob.substr(0, 20));
    CHECK_THROWS_AS(load_checkpoint(dir), IoError);
}

}  // TEST_SUITE
