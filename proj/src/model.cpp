// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/model.hpp"

#include <cmath>
#include <cstring>

#include "icrlsm/error.hpp"
#include "icrlsm/io.hpp"
#include "icrlsm/rng.hpp"

namespace icrlsm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// softplus(kScaleOffset) == 1, so a zero raw output means unit scale.
constexpr double kScaleOffset = 0.54132485461291810;
constexpr char kParamsMagic[8] = {'I', 'C', 'R', 'L', 'S', 'M', 'P', '1'};
constexpr int kCheckpointFormat = 1;

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

double standard_normal_log_prob(const Eigen::VectorXd& x) {
    return -0.5 * x.squaredNorm() - static_cast<double>(x.size()) * kLogSqrt2Pi;
}

double scalar(const nn::Mlp& net, const Eigen::VectorXd& input) {
    return net.forward(input)(0, 0);
}

}  // namespace

ModelConfig ModelConfig::linear(std::size_t n, std::size_t d) {
    ModelConfig c;
    c.n = n;
    c.d = d;
    c.encoder_hidden.clear();
    c.node_hidden.clear();
    c.prior_mean_hidden.clear();
    return c;
}

json ModelConfig::to_json() const {
    return {{"n", n},
            {"d", d},
            {"encoder_hidden", encoder_hidden},
            {"node_hidden", node_hidden},
            {"prior_mean_hidden", prior_mean_hidden},
            {"scale_floor", scale_floor}};
}

ModelConfig ModelConfig::from_json(const json& doc) {
    ModelConfig c;
    try {
        c.n = doc.at("n").get<std::size_t>();
        c.d = doc.at("d").get<std::size_t>();
        c.encoder_hidden = doc.at("encoder_hidden").get<std::vector<std::size_t>>();
        c.node_hidden = doc.at("node_hidden").get<std::vector<std::size_t>>();
        c.prior_mean_hidden = doc.at("prior_mean_hidden").get<std::vector<std::size_t>>();
        c.scale_floor = doc.at("scale_floor").get<double>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model config: ") + e.what());
    }
    return c;
}

double GaussianPosterior::log_density(const Eigen::VectorXd& value) const {
    const Eigen::ArrayXd z = (value - mean).array() / log_std.array().exp();
    return -0.5 * z.square().sum() - log_std.sum() - static_cast<double>(mean.size()) * kLogSqrt2Pi;
}

LatentTriple LatentTriple::make(const Eigen::VectorXd& e, const Eigen::VectorXd& e_tilde_raw,
                                const Eigen::VectorXd& v, std::size_t target) {
    if (target >= static_cast<std::size_t>(e.size())) throw InvalidArgument("LatentTriple: target out of range");
    if (e_tilde_raw.size() != e.size()) throw InvalidArgument("LatentTriple: e and e~ differ in length");
    LatentTriple t;
    t.e_ = e;
    t.e_tilde_ = e;
    t.e_tilde_[static_cast<Eigen::Index>(target)] = e_tilde_raw[static_cast<Eigen::Index>(target)];
    t.v_ = v;
    t.target_ = target;
    return t;
}

LatentTriple LatentTriple::unchecked(Eigen::VectorXd e, Eigen::VectorXd e_tilde, Eigen::VectorXd v,
                                     std::size_t target) {
    LatentTriple t;
    t.e_ = std::move(e);
    t.e_tilde_ = std::move(e_tilde);
    t.v_ = std::move(v);
    t.target_ = target;
    return t;
}

bool LatentTriple::satisfies_copy() const {
    if (e_.size() != e_tilde_.size() || target_ >= static_cast<std::size_t>(e_.size())) return false;
    for (Eigen::Index j = 0; j < e_.size(); ++j) {
        if (static_cast<std::size_t>(j) != target_ && e_tilde_[j] != e_[j]) return false;
    }
    return true;
}

double prior_log_prob_e(const Eigen::VectorXd& e) { return standard_normal_log_prob(e); }
double prior_log_prob_v(const Eigen::VectorXd& v) { return standard_normal_log_prob(v); }

Eigen::VectorXd drop_coordinate(const Eigen::VectorXd& e, std::size_t node) {
    const auto i = static_cast<Eigen::Index>(node);
    Eigen::VectorXd rest(e.size() - 1);
    rest << e.head(i), e.tail(e.size() - i - 1);
    return rest;
}

AicmModel::AicmModel(ModelConfig config) : config_(std::move(config)) {
    const std::size_t n = config_.n;
    const std::size_t d = config_.d;
    if (n == 0 || d == 0) throw InvalidArgument("AicmModel: n and d must be positive");
    encoder_e = nn::Mlp(layer_sizes(d, config_.encoder_hidden, 2 * n));
    encoder_v = nn::Mlp(layer_sizes(d, config_.encoder_hidden, 2 * n));
    decoder_e = nn::Mlp(layer_sizes(n, config_.encoder_hidden, d));
    decoder_v = nn::Mlp(layer_sizes(n, config_.encoder_hidden, d));
    for (std::size_t i = 0; i < n; ++i) {
        NodeNets nets;
        nets.loc = nn::Mlp(layer_sizes(n - 1, config_.node_hidden, 1));
        nets.scale_raw = nn::Mlp(layer_sizes(n - 1, config_.node_hidden, 1));
        nets.shift = nn::Mlp(layer_sizes(n, config_.node_hidden, 1));
        nets.prior_mean = nn::Mlp(layer_sizes(1, config_.prior_mean_hidden, 1));
        nodes.push_back(std::move(nets));
    }
}

void AicmModel::initialize(std::uint64_t seed) {
    Rng rng(seed, streams::kModelInit);
    encoder_e.init_fan_in_uniform(rng);
    encoder_v.init_fan_in_uniform(rng);
    decoder_e.init_fan_in_uniform(rng);
    decoder_v.init_fan_in_uniform(rng);
    for (auto& node : nodes) {
        node.loc.init_fan_in_uniform(rng);
        node.scale_raw.init_fan_in_uniform(rng);
        node.shift.init_fan_in_uniform(rng);
        node.prior_mean.init_fan_in_uniform(rng);
    }
    obs_log_std = 0.0;
    delta_log_std = 0.0;
}

void AicmModel::check_dims(const Eigen::VectorXd& v, std::size_t expected, const char* what) const {
    if (static_cast<std::size_t>(v.size()) != expected) {
        throw InvalidArgument(std::string(what) + ": expected length " + std::to_string(expected) + ", got " +
                              std::to_string(v.size()));
    }
}

namespace {

GaussianPosterior split_posterior(const nn::Matrix& out, std::size_t n) {
    const auto ni = static_cast<Eigen::Index>(n);
    return {out.col(0).head(ni), out.col(0).tail(ni)};
}

}  // namespace

GaussianPosterior AicmModel::encode_exogenous(const Eigen::VectorXd& x) const {
    check_dims(x, d(), "encode_exogenous");
    if (!x.allFinite()) throw InvalidArgument("encode_exogenous: non-finite input");
    return split_posterior(encoder_e.forward(x), n());
}

GaussianPosterior AicmModel::encode_switch(const Eigen::VectorXd& dx) const {
    check_dims(dx, d(), "encode_switch");
    if (!dx.allFinite()) throw InvalidArgument("encode_switch: non-finite input");
    return split_posterior(encoder_v.forward(dx), n());
}

Eigen::VectorXd AicmModel::decode(const Eigen::VectorXd& e) const {
    check_dims(e, n(), "decode");
    return decoder_e.forward(e).col(0);
}

Eigen::VectorXd AicmModel::decode_delta(const Eigen::VectorXd& v) const {
    check_dims(v, n(), "decode_delta");
    return decoder_v.forward(v).col(0);
}

double AicmModel::scale_link(double raw) const { return nn::softplus(raw + kScaleOffset) + config_.scale_floor; }
double AicmModel::scale_link_derivative(double raw) const { return nn::sigmoid(raw + kScaleOffset); }

double AicmModel::loc(std::size_t node, const Eigen::VectorXd& e_rest) const {
    check_dims(e_rest, n() - 1, "loc");
    return scalar(nodes.at(node).loc, e_rest);
}

double AicmModel::scale(std::size_t node, const Eigen::VectorXd& e_rest) const {
    check_dims(e_rest, n() - 1, "scale");
    return scale_link(scalar(nodes.at(node).scale_raw, e_rest));
}

double AicmModel::switch_shift(std::size_t node, const Eigen::VectorXd& v) const {
    check_dims(v, n(), "switch_shift");
    return scalar(nodes.at(node).shift, v);
}

double AicmModel::prior_mean(std::size_t node, double e_node) const {
    Eigen::VectorXd in(1);
    in[0] = e_node;
    return scalar(nodes.at(node).prior_mean, in);
}

double AicmModel::solution_forward(std::size_t node, double e_tilde_node, const Eigen::VectorXd& e_rest,
                                   const Eigen::VectorXd& v, bool include_switch) const {
    double shift = loc(node, e_rest);
    if (include_switch) shift += switch_shift(node, v);
    return (e_tilde_node - shift) / scale(node, e_rest);
}

double AicmModel::solution_inverse(std::size_t node, double z_tilde_node, const Eigen::VectorXd& e_rest,
                                   const Eigen::VectorXd& v, bool include_switch) const {
    double out = z_tilde_node * scale(node, e_rest) + loc(node, e_rest);
    if (include_switch) out += switch_shift(node, v);
    return out;
}

double AicmModel::log_det_jacobian(std::size_t node, const Eigen::VectorXd& e_rest) const {
    return -std::log(scale(node, e_rest));
}

double AicmModel::transition_log_prob(const LatentTriple& triple) const {
    if (!triple.satisfies_copy()) {
        throw ContractError("transition_log_prob: e~ differs from e off the intervention target");
    }
    check_dims(triple.e(), n(), "transition_log_prob");
    check_dims(triple.v(), n(), "transition_log_prob");
    const std::size_t t = triple.target();
    const auto ti = static_cast<Eigen::Index>(t);
    const Eigen::VectorXd e_rest = drop_coordinate(triple.e(), t);
    const double z_tilde = solution_forward(t, triple.e_tilde()[ti], e_rest, triple.v(), true);
    const double mean = prior_mean(t, triple.e()[ti]);
    const double r = z_tilde - mean;
    return -0.5 * r * r - kLogSqrt2Pi + log_det_jacobian(t, e_rest);
}

double AicmModel::observation_log_prob(const Eigen::VectorXd& x, const Eigen::VectorXd& e) const {
    const Eigen::VectorXd r = (x - decode(e)) * std::exp(-obs_log_std);
    return -0.5 * r.squaredNorm() - static_cast<double>(d()) * (obs_log_std + kLogSqrt2Pi);
}

double AicmModel::displacement_log_prob(const Eigen::VectorXd& dx, const Eigen::VectorXd& v) const {
    const Eigen::VectorXd r = (dx - decode_delta(v)) * std::exp(-delta_log_std);
    return -0.5 * r.squaredNorm() - static_cast<double>(d()) * (delta_log_std + kLogSqrt2Pi);
}

Eigen::VectorXd AicmModel::infer_causal_variables(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd e = encode_exogenous(x).mean;
    Eigen::VectorXd z(e.size());
    const Eigen::VectorXd unused_v = Eigen::VectorXd::Zero(e.size());
    for (std::size_t i = 0; i < n(); ++i) {
        z[static_cast<Eigen::Index>(i)] =
            solution_forward(i, e[static_cast<Eigen::Index>(i)], drop_coordinate(e, i), unused_v, false);
    }
    return z;
}

nn::Matrix AicmModel::infer_causal_variables(const nn::Matrix& xs) const {
    if (static_cast<std::size_t>(xs.rows()) != d()) throw InvalidArgument("infer_causal_variables: wrong input rows");
    if (!xs.allFinite()) throw InvalidArgument("infer_causal_variables: non-finite input");
    const auto ni = static_cast<Eigen::Index>(n());
    const nn::Matrix e = encoder_e.forward(xs).topRows(ni);
    nn::Matrix z(ni, xs.cols());
    for (Eigen::Index i = 0; i < ni; ++i) {
        nn::Matrix rest(ni - 1, xs.cols());
        rest << e.topRows(i), e.bottomRows(ni - i - 1);
        const nn::Matrix loc_out = nodes[static_cast<std::size_t>(i)].loc.forward(rest);
        const nn::Matrix raw = nodes[static_cast<std::size_t>(i)].scale_raw.forward(rest);
        for (Eigen::Index b = 0; b < xs.cols(); ++b) {
            z(i, b) = (e(i, b) - loc_out(0, b)) / scale_link(raw(0, b));
        }
    }
    return z;
}

std::vector<nn::ParamView> AicmModel::params() {
    std::vector<nn::ParamView> out;
    encoder_e.append_params(out, "encoder_e");
    encoder_v.append_params(out, "encoder_v");
    decoder_e.append_params(out, "decoder_e");
    decoder_v.append_params(out, "decoder_v");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string base = "node" + std::to_string(i);
        nodes[i].loc.append_params(out, base + ".loc");
        nodes[i].scale_raw.append_params(out, base + ".scale");
        nodes[i].shift.append_params(out, base + ".shift");
        nodes[i].prior_mean.append_params(out, base + ".prior_mean");
    }
    out.push_back({"obs_log_std", &obs_log_std, &grad_obs_log_std, 1});
    out.push_back({"delta_log_std", &delta_log_std, &grad_delta_log_std, 1});
    return out;
}

void AicmModel::zero_grad() {
    encoder_e.zero_grad();
    encoder_v.zero_grad();
    decoder_e.zero_grad();
    decoder_v.zero_grad();
    for (auto& node : nodes) {
        node.loc.zero_grad();
        node.scale_raw.zero_grad();
        node.shift.zero_grad();
        node.prior_mean.zero_grad();
    }
    grad_obs_log_std = 0.0;
    grad_delta_log_std = 0.0;
}

std::size_t AicmModel::parameter_count() {
    std::size_t total = 0;
    for (const auto& p : params()) total += p.size;
    return total;
}

void save_checkpoint(AicmModel& model, const fs::path& dir, const json& extra) {
    const auto views = model.params();
    std::string blob(kParamsMagic, sizeof kParamsMagic);
    std::uint64_t count = 0;
    for (const auto& p : views) count += p.size;
    blob.append(reinterpret_cast<const char*>(&count), sizeof count);
    json layout = json::array();
    for (const auto& p : views) {
        blob.append(reinterpret_cast<const char*>(p.value), p.size * sizeof(double));
        layout.push_back({{"name", p.name}, {"size", p.size}});
    }
    json manifest = extra.is_object() ? extra : json::object();
    manifest["checkpoint_format"] = kCheckpointFormat;
    manifest["model"] = model.config().to_json();
    manifest["constants"] = {{"scale_link", "softplus(raw + log(e - 1)) + scale_floor"},
                             {"scale_floor", model.config().scale_floor},
                             {"transition_prior_variance", 1.0},
                             {"observation_noise", "isotropic gaussian, learnable log-std per decoder"},
                             {"exogenous_prior", "standard normal"},
                             {"switch_prior", "standard normal"},
                             {"activation", "relu"}};
    manifest["parameters"] = layout;
    manifest["parameter_count"] = count;
    manifest["params_sha256"] = io::sha256_hex(blob);
    io::write_file_atomic(dir / "params.bin", blob);
    io::write_json(dir / "manifest.json", manifest);
}

json read_manifest(const fs::path& dir) { return io::read_json(dir / "manifest.json"); }

void load_checkpoint_into(AicmModel& model, const fs::path& dir) {
    const json manifest = read_manifest(dir);
    if (!manifest.contains("model") || !manifest.contains("parameters")) {
        throw IoError((dir / "manifest.json").string() + ": missing field 'model' or 'parameters'");
    }
    const ModelConfig stored = ModelConfig::from_json(manifest["model"]);
    if (!(stored == model.config())) {
        throw SchemaError("checkpoint manifest model config " + manifest["model"].dump() +
                          " does not match constructed model " + model.config().to_json().dump());
    }
    const auto views = model.params();
    const json& layout = manifest["parameters"];
    if (layout.size() != views.size()) throw SchemaError("checkpoint parameter layout length mismatch");
    for (std::size_t k = 0; k < views.size(); ++k) {
        if (layout[k].value("name", "") != views[k].name || layout[k].value("size", std::size_t{0}) != views[k].size) {
            throw SchemaError("checkpoint parameter " + std::to_string(k) + " does not match " + views[k].name);
        }
    }
    const std::string blob = io::read_file(dir / "params.bin");
    if (manifest.contains("params_sha256") && manifest["params_sha256"] != io::sha256_hex(blob)) {
        throw IoError((dir / "params.bin").string() + ": checksum mismatch");
    }
    if (blob.size() < sizeof kParamsMagic + sizeof(std::uint64_t) ||
        std::memcmp(blob.data(), kParamsMagic, sizeof kParamsMagic) != 0) {
        throw IoError((dir / "params.bin").string() + ": bad header");
    }
    std::uint64_t count = 0;
    std::memcpy(&count, blob.data() + sizeof kParamsMagic, sizeof count);
    std::size_t expected = 0;
    for (const auto& p : views) expected += p.size;
    if (count != expected || blob.size() != sizeof kParamsMagic + sizeof count + count * sizeof(double)) {
        throw IoError((dir / "params.bin").string() + ": truncated or wrong parameter count");
    }
    const char* cursor = blob.data() + sizeof kParamsMagic + sizeof count;
    for (const auto& p : views) {
        std::memcpy(p.value, cursor, p.size * sizeof(double));
        cursor += p.size * sizeof(double);
    }
}

AicmModel load_checkpoint(const fs::path& dir) {
    const json manifest = read_manifest(dir);
    if (!manifest.contains("model")) throw IoError((dir / "manifest.json").string() + ": missing field 'model'");
    AicmModel model(ModelConfig::from_json(manifest["model"]));
    load_checkpoint_into(model, dir);
    return model;
}

}  // namespace icrlsm
