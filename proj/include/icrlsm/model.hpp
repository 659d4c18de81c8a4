// SPDX-License-Identifier: Apache-2.0
//
// Augmented implicit causal model: Gaussian encoders for the exogenous
// latents e / e~ and the mechanism switch v, Gaussian decoders, and per-node
// location-scale solution functions
//
//   z~_i = (e~_i - (loc_i(e_/i) + h_i(v))) / scale_i(e_/i)
//
// together with the transition prior p(e~_t | e, v) they induce.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "icrlsm/nn.hpp"

namespace icrlsm {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

struct ModelConfig {
    std::size_t n = 4;  // causal variables
    std::size_t d = 4;  // observation dimension
    std::vector<std::size_t> encoder_hidden{64, 64};
    std::vector<std::size_t> node_hidden{64, 64};        // loc_i, scale_i, h_i
    std::vector<std::size_t> prior_mean_hidden{64};      // prior_mean_i
    double scale_floor = 1e-4;

    /// Every network a single affine map; used for gradient checks.
    static ModelConfig linear(std::size_t n, std::size_t d);

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& doc);
    bool operator==(const ModelConfig&) const = default;
};

struct GaussianPosterior {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;

    Eigen::VectorXd stddev() const { return log_std.array().exp().matrix(); }
    double log_density(const Eigen::VectorXd& value) const;
};

/// (e, e~, v, target) with e~_j == e_j for every j != target.
class LatentTriple {
public:
    /// Applies the copy constraint: only e_tilde_raw[target] is kept.
    static LatentTriple make(const Eigen::VectorXd& e, const Eigen::VectorXd& e_tilde_raw, const Eigen::VectorXd& v,
                             std::size_t target);
    /// No copy applied; transition_log_prob() rejects violations.
    static LatentTriple unchecked(Eigen::VectorXd e, Eigen::VectorXd e_tilde, Eigen::VectorXd v, std::size_t target);

    const Eigen::VectorXd& e() const { return e_; }
    const Eigen::VectorXd& e_tilde() const { return e_tilde_; }
    const Eigen::VectorXd& v() const { return v_; }
    std::size_t target() const { return target_; }
    bool satisfies_copy() const;

private:
    Eigen::VectorXd e_, e_tilde_, v_;
    std::size_t target_ = 0;
};

/// Networks owned by one causal variable.
struct NodeNets {
    nn::Mlp loc;         // R^{n-1} -> R
    nn::Mlp scale_raw;   // R^{n-1} -> R, mapped through the positive link
    nn::Mlp shift;       // h_i: R^n -> R
    nn::Mlp prior_mean;  // R -> R
};

/// log N(x; 0, I).
double prior_log_prob_e(const Eigen::VectorXd& e);
double prior_log_prob_v(const Eigen::VectorXd& v);

class AicmModel {
public:
    explicit AicmModel(ModelConfig config);

    /// Fan-in uniform weights, zero log-stds. Deterministic in `seed`.
    void initialize(std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    std::size_t n() const { return config_.n; }
    std::size_t d() const { return config_.d; }

    GaussianPosterior encode_exogenous(const Eigen::VectorXd& x) const;
    GaussianPosterior encode_switch(const Eigen::VectorXd& dx) const;
    Eigen::VectorXd decode(const Eigen::VectorXd& e) const;
    Eigen::VectorXd decode_delta(const Eigen::VectorXd& v) const;

    double loc(std::size_t node, const Eigen::VectorXd& e_rest) const;
    double scale(std::size_t node, const Eigen::VectorXd& e_rest) const;
    double switch_shift(std::size_t node, const Eigen::VectorXd& v) const;
    double prior_mean(std::size_t node, double e_node) const;

    double solution_forward(std::size_t node, double e_tilde_node, const Eigen::VectorXd& e_rest,
                            const Eigen::VectorXd& v, bool include_switch) const;
    double solution_inverse(std::size_t node, double z_tilde_node, const Eigen::VectorXd& e_rest,
                            const Eigen::VectorXd& v, bool include_switch) const;
    /// log |d z~_i / d e~_i| = -log scale_i(e_/i).
    double log_det_jacobian(std::size_t node, const Eigen::VectorXd& e_rest) const;

    /// log p(e~_t | e, v) for the target coordinate; throws ContractError
    /// when the triple breaks the copy constraint.
    double transition_log_prob(const LatentTriple& triple) const;

    /// log N(x; decode(e), exp(obs_log_std)^2 I) and the displacement analogue.
    double observation_log_prob(const Eigen::VectorXd& x, const Eigen::VectorXd& e) const;
    double displacement_log_prob(const Eigen::VectorXd& dx, const Eigen::VectorXd& v) const;

    /// Posterior-mean exogenous values pushed through the pre-intervention
    /// solution functions (switch term dropped).
    Eigen::VectorXd infer_causal_variables(const Eigen::VectorXd& x) const;
    /// Column-wise batch version: (d x N) -> (n x N).
    nn::Matrix infer_causal_variables(const nn::Matrix& xs) const;

    /// Positive link applied to the raw scale network output.
    double scale_link(double raw) const;
    double scale_link_derivative(double raw) const;

    std::vector<nn::ParamView> params();
    void zero_grad();
    std::size_t parameter_count();

    nn::Mlp encoder_e;  // d -> 2n (mean, log_std); shared by x and x~
    nn::Mlp encoder_v;  // d -> 2n
    nn::Mlp decoder_e;  // n -> d
    nn::Mlp decoder_v;  // n -> d
    std::vector<NodeNets> nodes;
    double obs_log_std = 0.0;
    double delta_log_std = 0.0;
    double grad_obs_log_std = 0.0;
    double grad_delta_log_std = 0.0;

private:
    void check_dims(const Eigen::VectorXd& v, std::size_t expected, const char* what) const;

    ModelConfig config_;
};

/// e with coordinate `node` removed.
Eigen::VectorXd drop_coordinate(const Eigen::VectorXd& e, std::size_t node);

/// Checkpoint directory = params.bin + manifest.json. `extra` is merged
/// into the manifest (training config, hashes, ...).
void save_checkpoint(AicmModel& model, const std::filesystem::path& dir, const nlohmann::json& extra = {});
AicmModel load_checkpoint(const std::filesystem::path& dir);
/// Loads into an already constructed model; throws SchemaError when the
/// manifest disagrees with the model's shapes.
void load_checkpoint_into(AicmModel& model, const std::filesystem::path& dir);
nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace icrlsm
