// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace icrlsm::testing {

// Straight-line disentanglement / completeness with explicit loops.
struct BruteDci {
    double d_total = 0.0, c_total = 0.0;
    std::vector<double> d, c;
};

inline BruteDci brute_force_dci(const Eigen::MatrixXd& r) {
    const auto rows = r.rows(), cols = r.cols();
    BruteDci out;
    double total = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) total += r(i, j);
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
        double mass = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) mass += r(i, j);
        double h = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) {
            const double p = r(i, j) / mass;
            if (p > 0.0) h -= p * std::log(p) / std::log(static_cast<double>(cols));
        }
        out.d.push_back(1.0 - h);
        out.d_total += (mass / total) * (1.0 - h);
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
        double mass = 0.0;
        for (Eigen::Index i = 0; i < rows; ++i) mass += r(i, j);
        double h = 0.0;
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double p = r(i, j) / mass;
            if (p > 0.0) h -= p * std::log(p) / std::log(static_cast<double>(rows));
        }
        out.c.push_back(1.0 - h);
        out.c_total += (mass / total) * (1.0 - h);
    }
    return out;
}

}  // namespace icrlsm::testing
