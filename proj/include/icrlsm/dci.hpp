// SPDX-License-Identifier: Apache-2.0
//
// Causal disentanglement / completeness scores. R(i, j) is the importance
// of modeled variable i for predicting ground-truth variable j.
//
//   D_i = 1 - H_K(P_i.),  P_ij = R_ij / sum_k R_ik,  rho_i = sum_j R_ij / sum R
//   C_j = 1 - H_D(P~_.j), P~_ij = R_ij / sum_d R_dj
//
// with entropies in base n and 0 log 0 = 0.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "icrlsm/dataset.hpp"
#include "icrlsm/forest.hpp"
#include "icrlsm/model.hpp"

namespace icrlsm {

enum class RegressorKind { kForest, kLasso };

struct RegressorConfig {
    RegressorKind kind = RegressorKind::kForest;
    ForestConfig forest;
    LassoConfig lasso;

    nlohmann::json to_json() const;
};

struct ImportanceMatrix {
    Eigen::MatrixXd values;  // modeled x ground truth, entries >= 0
    std::vector<std::size_t> degenerate_columns;
};

struct DisentanglementScores {
    Eigen::VectorXd per_variable;  // D_i
    Eigen::VectorXd weights;       // rho_i
    double total = 0.0;
    std::vector<std::size_t> zero_rows;
};

struct CompletenessScores {
    Eigen::VectorXd per_variable;  // C_j
    Eigen::VectorXd weights;       // column mass share
    double total = 0.0;
    std::vector<std::size_t> zero_columns;
};

struct DciReport {
    ImportanceMatrix importance;
    DisentanglementScores disentanglement;
    CompletenessScores completeness;
    RegressorConfig regressor;

    nlohmann::json to_json() const;
};

/// z_model, z_true: (samples x n). Needs >= 100 samples and finite values;
/// throws DegenerateColumnError for a constant ground-truth column.
ImportanceMatrix importance_matrix(const Eigen::MatrixXd& z_model, const Eigen::MatrixXd& z_true,
                                   const RegressorConfig& regressor = {});

/// Throws InvalidArgument on negative or non-finite entries.
DisentanglementScores disentanglement(const Eigen::MatrixXd& importance);
CompletenessScores completeness(const Eigen::MatrixXd& importance);

DciReport dci_from_latents(const Eigen::MatrixXd& z_model, const Eigen::MatrixXd& z_true,
                           const RegressorConfig& regressor = {});

/// Scores the model's inferred causal variables against the dataset's
/// ground truth. Throws MissingTruthError when the dataset has none.
DciReport evaluate(const AicmModel& model, const Dataset& test, const RegressorConfig& regressor = {});

/// Ground-truth causal variables of the pre-intervention observations,
/// (samples x n).
Eigen::MatrixXd truth_matrix(const Dataset& ds);

}  // namespace icrlsm
