// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/dci.hpp"

#include <algorithm>
#include <cmath>

#include "icrlsm/error.hpp"

namespace icrlsm {

using nlohmann::json;

namespace {

void validate_importance(const Eigen::MatrixXd& r) {
    if (r.size() == 0) throw InvalidArgument("importance matrix is empty");
    if (!r.allFinite()) throw InvalidArgument("importance matrix has non-finite entries");
    if ((r.array() < 0.0).any()) throw InvalidArgument("importance matrix has negative entries");
}

// 1 - H_base(p) for a nonnegative vector with positive mass.
double one_minus_entropy(const Eigen::VectorXd& mass, Eigen::Index base) {
    if (base <= 1) return 1.0;
    const double total = mass.sum();
    const double log_base = std::log(static_cast<double>(base));
    double acc = 0.0;
    for (Eigen::Index k = 0; k < mass.size(); ++k) {
        const double p = mass[k] / total;
        if (p > 0.0) acc += p * std::log(p) / log_base;
    }
    return std::clamp(1.0 + acc, 0.0, 1.0);
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

json RegressorConfig::to_json() const {
    if (kind == RegressorKind::kLasso) {
        return {{"kind", "lasso"}, {"alpha", lasso.alpha}, {"max_iterations", lasso.max_iterations}};
    }
    return {{"kind", "forest"},
            {"trees", forest.trees},
            {"max_depth", forest.max_depth},
            {"min_samples_leaf", forest.min_samples_leaf},
            {"bootstrap", forest.bootstrap},
            {"seed", forest.seed}};
}

ImportanceMatrix importance_matrix(const Eigen::MatrixXd& z_model, const Eigen::MatrixXd& z_true,
                                   const RegressorConfig& regressor) {
    if (z_model.rows() != z_true.rows()) throw InvalidArgument("importance_matrix: sample counts differ");
    if (z_model.rows() < 100) throw InvalidArgument("importance_matrix: need at least 100 paired samples");
    if (!z_model.allFinite() || !z_true.allFinite()) throw InvalidArgument("importance_matrix: non-finite input");
    ImportanceMatrix out;
    out.values = Eigen::MatrixXd::Zero(z_model.cols(), z_true.cols());
    for (Eigen::Index j = 0; j < z_true.cols(); ++j) {
        const Eigen::VectorXd y = z_true.col(j);
        if (y.maxCoeff() == y.minCoeff()) {
            throw DegenerateColumnError(static_cast<std::size_t>(j),
                                        "ground-truth column " + std::to_string(j) + " is constant");
        }
        const Eigen::VectorXd imp = regressor.kind == RegressorKind::kForest
                                        ? forest_importances(z_model, y, regressor.forest)
                                        : lasso_importances(z_model, y, regressor.lasso);
        out.values.col(j) = imp;
        if (!(imp.array() > 0.0).any()) out.degenerate_columns.push_back(static_cast<std::size_t>(j));
    }
    return out;
}

DisentanglementScores disentanglement(const Eigen::MatrixXd& r) {
    validate_importance(r);
    DisentanglementScores s;
    s.per_variable = Eigen::VectorXd::Zero(r.rows());
    s.weights = Eigen::VectorXd::Zero(r.rows());
    const double total = r.sum();
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        const double row_mass = r.row(i).sum();
        if (row_mass <= 0.0) {
            s.zero_rows.push_back(static_cast<std::size_t>(i));
            continue;
        }
        s.per_variable[i] = one_minus_entropy(r.row(i).transpose(), r.cols());
        s.weights[i] = row_mass / total;
    }
    s.total = total > 0.0 ? std::clamp(s.weights.dot(s.per_variable), 0.0, 1.0) : 0.0;
    return s;
}

CompletenessScores completeness(const Eigen::MatrixXd& r) {
    validate_importance(r);
    CompletenessScores s;
    s.per_variable = Eigen::VectorXd::Zero(r.cols());
    s.weights = Eigen::VectorXd::Zero(r.cols());
    const double total = r.sum();
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
        const double col_mass = r.col(j).sum();
        if (col_mass <= 0.0) {
            s.zero_columns.push_back(static_cast<std::size_t>(j));
            continue;
        }
        s.per_variable[j] = one_minus_entropy(r.col(j), r.rows());
        s.weights[j] = col_mass / total;
    }
    s.total = total > 0.0 ? std::clamp(s.weights.dot(s.per_variable), 0.0, 1.0) : 0.0;
    return s;
}

DciReport dci_from_latents(const Eigen::MatrixXd& z_model, const Eigen::MatrixXd& z_true,
                           const RegressorConfig& regressor) {
    DciReport report;
    report.regressor = regressor;
    report.importance = importance_matrix(z_model, z_true, regressor);
    report.disentanglement = disentanglement(report.importance.values);
    report.completeness = completeness(report.importance.values);
    return report;
}

Eigen::MatrixXd truth_matrix(const Dataset& ds) {
    if (!ds.has_truth()) throw MissingTruthError("dataset split '" + ds.split + "' carries no ground-truth latents");
    const auto n = ds.samples.front().truth->z.size();
    Eigen::MatrixXd z(static_cast<Eigen::Index>(ds.size()), n);
    for (std::size_t k = 0; k < ds.size(); ++k) z.row(static_cast<Eigen::Index>(k)) = ds.samples[k].truth->z.transpose();
    return z;
}

DciReport evaluate(const AicmModel& model, const Dataset& test, const RegressorConfig& regressor) {
    const Eigen::MatrixXd z_true = truth_matrix(test);
    if (static_cast<std::size_t>(z_true.cols()) != model.n()) {
        throw SchemaError("evaluate: dataset has n=" + std::to_string(z_true.cols()) + " but model has n=" +
                          std::to_string(model.n()));
    }
    if (static_cast<std::size_t>(test.samples.front().x.size()) != model.d()) {
        throw SchemaError("evaluate: observation width differs from model d");
    }
    nn::Matrix xs(static_cast<Eigen::Index>(model.d()), static_cast<Eigen::Index>(test.size()));
    for (std::size_t k = 0; k < test.size(); ++k) xs.col(static_cast<Eigen::Index>(k)) = test.samples[k].x;
    const Eigen::MatrixXd z_model = model.infer_causal_variables(xs).transpose();
    return dci_from_latents(z_model, z_true, regressor);
}

json DciReport::to_json() const {
    const Eigen::MatrixXd& r = importance.values;
    std::vector<double> flat;
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        for (Eigen::Index j = 0; j < r.cols(); ++j) flat.push_back(r(i, j));
    }
    return {{"n_model", r.rows()},
            {"n_true", r.cols()},
            {"R_row_major", flat},
            {"D_i", vec_json(disentanglement.per_variable)},
            {"rho_i", vec_json(disentanglement.weights)},
            {"C_j", vec_json(completeness.per_variable)},
            {"C_weights", vec_json(completeness.weights)},
            {"D_total", disentanglement.total},
            {"C_total", completeness.total},
            {"regressor", regressor.to_json()},
            {"degenerate",
             {{"importance_columns", importance.degenerate_columns},
              {"zero_rows", disentanglement.zero_rows},
              {"zero_columns", completeness.zero_columns}}}};
}

}  // namespace icrlsm
