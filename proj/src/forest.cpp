// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icrlsm/rng.hpp"

namespace icrlsm {

namespace {

struct SplitChoice {
    Eigen::Index feature = -1;
    double threshold = 0.0;
    double gain = 0.0;  // decrease of the summed squared error
    std::size_t left_count = 0;
};

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg)
        : x_(x), y_(y), cfg_(cfg), importance_(Eigen::VectorXd::Zero(x.cols())) {}

    void grow(std::vector<std::size_t>& rows, std::size_t depth) {
        if (depth >= cfg_.max_depth || rows.size() < 2 * cfg_.min_samples_leaf) return;
        const SplitChoice split = best_split(rows);
        if (split.feature < 0) return;
        importance_[split.feature] += split.gain;
        auto mid = std::partition(rows.begin(), rows.end(), [&](std::size_t r) {
            return x_(static_cast<Eigen::Index>(r), split.feature) <= split.threshold;
        });
        std::vector<std::size_t> left(rows.begin(), mid);
        std::vector<std::size_t> right(mid, rows.end());
        rows.clear();
        rows.shrink_to_fit();
        grow(left, depth + 1);
        grow(right, depth + 1);
    }

    const Eigen::VectorXd& importance() const { return importance_; }

private:
    SplitChoice best_split(const std::vector<std::size_t>& rows) {
        const std::size_t m = rows.size();
        double total = 0.0, total_sq = 0.0;
        for (std::size_t r : rows) {
            const double v = y_[static_cast<Eigen::Index>(r)];
            total += v;
            total_sq += v * v;
        }
        const double parent_sse = total_sq - total * total / static_cast<double>(m);
        SplitChoice best;
        if (parent_sse <= 1e-12 * std::max(1.0, total_sq)) return best;

        pairs_.resize(m);
        for (Eigen::Index f = 0; f < x_.cols(); ++f) {
            for (std::size_t k = 0; k < m; ++k) {
                const auto r = static_cast<Eigen::Index>(rows[k]);
                pairs_[k] = {x_(r, f), y_[r]};
            }
            std::sort(pairs_.begin(), pairs_.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            double left_sum = 0.0, left_sq = 0.0;
            for (std::size_t k = 0; k + 1 < m; ++k) {
                left_sum += pairs_[k].second;
                left_sq += pairs_[k].second * pairs_[k].second;
                const std::size_t nl = k + 1;
                const std::size_t nr = m - nl;
                if (nl < cfg_.min_samples_leaf || nr < cfg_.min_samples_leaf) continue;
                if (!(pairs_[k].first < pairs_[k + 1].first)) continue;
                const double right_sum = total - left_sum;
                const double right_sq = total_sq - left_sq;
                const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                                   (right_sq - right_sum * right_sum / static_cast<double>(nr));
                const double gain = parent_sse - sse;
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = f;
                    best.threshold = 0.5 * (pairs_[k].first + pairs_[k + 1].first);
                    best.left_count = nl;
                }
            }
        }
        return best;
    }

    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& y_;
    const ForestConfig& cfg_;
    Eigen::VectorXd importance_;
    std::vector<std::pair<double, double>> pairs_;
};

}  // namespace

Eigen::VectorXd forest_importances(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                                   const ForestConfig& config) {
    const auto samples = static_cast<std::size_t>(features.rows());
    Eigen::VectorXd total = Eigen::VectorXd::Zero(features.cols());
    Rng rng(config.seed, streams::kForest);
    for (std::size_t t = 0; t < config.trees; ++t) {
        std::vector<std::size_t> rows(samples);
        if (config.bootstrap) {
            for (auto& r : rows) r = static_cast<std::size_t>(rng.uniform_int(samples));
        } else {
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        TreeBuilder builder(features, y, config);
        builder.grow(rows, 0);
        const double sum = builder.importance().sum();
        if (sum > 0.0) total += builder.importance() / sum;
    }
    const double sum = total.sum();
    if (sum > 0.0) total /= sum;
    return total;
}

Eigen::VectorXd lasso_importances(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                                  const LassoConfig& config) {
    const Eigen::Index m = features.rows();
    const Eigen::Index p = features.cols();
    const Eigen::RowVectorXd mean = features.colwise().mean();
    Eigen::MatrixXd xs = features.rowwise() - mean;
    for (Eigen::Index j = 0; j < p; ++j) {
        const double sd = std::sqrt(xs.col(j).squaredNorm() / static_cast<double>(m));
        if (sd > 0.0) xs.col(j) /= sd;
    }
    const Eigen::VectorXd yc = y.array() - y.mean();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd residual = yc;
    const Eigen::VectorXd col_sq = xs.colwise().squaredNorm().transpose() / static_cast<double>(m);
    // Coordinate descent on (1/2m)|y - X b|^2 + alpha |b|_1.
    for (std::size_t it = 0; it < config.max_iterations; ++it) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0) continue;
            const double rho = xs.col(j).dot(residual) / static_cast<double>(m) + col_sq[j] * beta[j];
            const double updated = std::copysign(std::max(std::abs(rho) - config.alpha, 0.0), rho) / col_sq[j];
            const double change = updated - beta[j];
            if (change != 0.0) {
                residual -= change * xs.col(j);
                beta[j] = updated;
                max_change = std::max(max_change, std::abs(change));
            }
        }
        if (max_change < config.tolerance) break;
    }
    return beta.cwiseAbs();
}

}  // namespace icrlsm
