// SPDX-License-Identifier: Apache-2.0
//
// Negative-ELBO objective with the consistency regularizer, its analytic
// gradient, and the training loop (Adam + cosine learning-rate decay,
// best-validation snapshot).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icrlsm/dataset.hpp"
#include "icrlsm/model.hpp"

namespace icrlsm {

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 100;
    double lr_start = 3e-4;
    double lr_end = 1e-8;
    double consistency_weight = 1.0;
    double beta_kl = 1.0;
    double delta_recon_weight = 1.0;  // weight of log p(x~ - x | v)
    std::uint64_t seed = 0;
    bool deterministic = true;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& doc);
};

/// Loss weights used by elbo_loss(); a subset of TrainConfig.
struct LossWeights {
    double beta_kl = 1.0;
    double delta_recon_weight = 1.0;
    double consistency_weight = 1.0;
};

/// Column-wise batch: x, x~ are (d x B).
struct Batch {
    nn::Matrix x;
    nn::Matrix x_tilde;
    std::vector<std::size_t> targets;

    std::size_t size() const { return targets.size(); }
    static Batch from_samples(const std::vector<InterventionalSample>& samples, const std::vector<std::size_t>& indices);
    static Batch from_samples(const std::vector<InterventionalSample>& samples);
};

/// Standard-normal draws for the reparameterized samples, each (n x B).
struct NoiseDraws {
    nn::Matrix e, e_tilde, v;
    static NoiseDraws sample(std::size_t n, std::size_t batch, Rng& rng);
};

/// Batch means of every loss component. nll_* are negative log-likelihoods.
struct LossBreakdown {
    double nll_x = 0.0;
    double nll_x_tilde = 0.0;
    double nll_delta = 0.0;
    double kl_e = 0.0;
    double kl_v = 0.0;
    double kl_transition = 0.0;
    double consistency = 0.0;
    double consistency_x = 0.0;
    double consistency_x_tilde = 0.0;
    double consistency_delta = 0.0;
    double neg_elbo = 0.0;  // nll_x + nll_x_tilde + w_delta nll_delta + beta (kl_e + kl_v + kl_transition)
    double total = 0.0;     // neg_elbo + w_consistency consistency
};

/// Observes which encoder coordinates of e~ the loss reads (sample, coordinate).
using TildeReadHook = std::function<void(std::size_t sample, std::size_t coordinate)>;

struct LossOptions {
    LossWeights weights;
    bool include_consistency = true;
    bool compute_gradients = false;  // accumulate into the model's grads
    TildeReadHook on_tilde_read;
};

/// Negative ELBO (plus consistency when enabled), averaged over the batch.
/// With compute_gradients the analytic gradient of `total` is added to the
/// model's gradient buffers. Throws NumericError naming the first
/// non-finite component.
LossBreakdown elbo_loss(AicmModel& model, const Batch& batch, const NoiseDraws& noise, const LossOptions& options);

/// Mean squared reconstruction through the posterior means, per channel.
LossBreakdown consistency_loss(const AicmModel& model, const Batch& batch);

/// Analytic KL(N(mean, exp(log_std)^2) || N(0, 1)), summed over coordinates.
double gaussian_kl_standard(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std);

/// Cosine decay from lr_start at step 0 to lr_end at step total_steps - 1.
double cosine_lr(double lr_start, double lr_end, std::size_t step, std::size_t total_steps);

/// Validation negative ELBO with noise fixed by (seed, sample index).
double validation_loss(AicmModel& model, const Dataset& val, std::uint64_t seed, std::size_t batch_size = 256);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    LossBreakdown components;  // epoch means of the training components
};

struct TrainReport {
    std::vector<EpochRecord> history;
    std::optional<double> best_val_loss;
    std::optional<std::size_t> best_epoch;
    double wall_time_seconds = 0.0;

    nlohmann::json to_json() const;
    std::string history_csv() const;
};

struct TrainOutputs {
    /// When set, the best checkpoint is kept in <dir>/best and history.csv
    /// plus report.json are written there.
    std::optional<std::filesystem::path> dir;
    bool verbose = false;
};

struct TrainResult {
    AicmModel model;  // best-validation snapshot
    TrainReport report;
};

/// Throws NumericError (carrying the last good checkpoint path, if any)
/// when the training loss becomes non-finite.
TrainResult train(AicmModel model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const TrainOutputs& outputs = {});

/// Gradients smaller than this are compared in absolute terms; below it
/// the finite-difference rounding noise dominates the relative error.
inline constexpr double kGradientCheckFloor = 1e-4;

/// Max relative error |a - f| / max(|a|, |f|, floor) between the analytic
/// gradient of the full loss and central finite differences, over every
/// parameter entry.
struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t checked = 0;
};
GradientCheckResult gradient_check(AicmModel& model, const Batch& batch, const NoiseDraws& noise,
                                   const LossWeights& weights, double step = 1e-5);

}  // namespace icrlsm
