// SPDX-License-Identifier: Apache-2.0
//
// Regressors used to score feature importances for the DCI metrics: a
// bagged ensemble of CART regression trees (impurity-based importances)
// and an L1-penalized linear fallback.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace icrlsm {

struct ForestConfig {
    std::size_t trees = 100;
    std::size_t max_depth = 8;
    std::size_t min_samples_leaf = 1;
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

/// Fits `y` on the columns of `features` (samples x features) and returns
/// mean-decrease-in-impurity importances, normalized to sum to 1 (all zero
/// if no split ever reduced the impurity).
Eigen::VectorXd forest_importances(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                                   const ForestConfig& config);

struct LassoConfig {
    double alpha = 0.01;
    std::size_t max_iterations = 1000;
    double tolerance = 1e-8;
};

/// Absolute coefficients of a lasso fit on standardized features.
Eigen::VectorXd lasso_importances(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                                  const LassoConfig& config);

}  // namespace icrlsm
