// SPDX-License-Identifier: Apache-2.0

#include "icrlsm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "icrlsm/error.hpp"
#include "icrlsm/io.hpp"

namespace icrlsm {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Matrix;

void TrainConfig::validate() const {
    if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
    if (!(lr_start > 0.0) || !(lr_end >= 0.0) || lr_end > lr_start) {
        throw InvalidArgument("learning rates must satisfy 0 <= lr_end <= lr_start, lr_start > 0");
    }
    if (consistency_weight < 0.0 || beta_kl < 0.0 || delta_recon_weight < 0.0) {
        throw InvalidArgument("loss weights must be nonnegative");
    }
}

json TrainConfig::to_json() const {
    return {{"batch_size", batch_size},
            {"epochs", epochs},
            {"lr_start", lr_start},
            {"lr_end", lr_end},
            {"schedule", "cosine"},
            {"consistency_weight", consistency_weight},
            {"beta_kl", beta_kl},
            {"delta_recon_weight", delta_recon_weight},
            {"seed", seed},
            {"deterministic", deterministic}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
    TrainConfig c;
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.epochs = doc.value("epochs", c.epochs);
    c.lr_start = doc.value("lr_start", c.lr_start);
    c.lr_end = doc.value("lr_end", c.lr_end);
    c.consistency_weight = doc.value("consistency_weight", c.consistency_weight);
    c.beta_kl = doc.value("beta_kl", c.beta_kl);
    c.delta_recon_weight = doc.value("delta_recon_weight", c.delta_recon_weight);
    c.seed = doc.value("seed", c.seed);
    c.deterministic = doc.value("deterministic", c.deterministic);
    if (doc.contains("schedule") && doc["schedule"] != "cosine") throw InvalidArgument("only the cosine schedule is supported");
    return c;
}

Batch Batch::from_samples(const std::vector<InterventionalSample>& samples, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw InvalidArgument("empty batch");
    const Eigen::Index d = samples.at(indices.front()).x.size();
    Batch b;
    b.x.resize(d, static_cast<Eigen::Index>(indices.size()));
    b.x_tilde.resize(d, static_cast<Eigen::Index>(indices.size()));
    b.targets.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto& s = samples.at(indices[k]);
        b.x.col(static_cast<Eigen::Index>(k)) = s.x;
        b.x_tilde.col(static_cast<Eigen::Index>(k)) = s.x_tilde;
        b.targets.push_back(s.target);
    }
    return b;
}

Batch Batch::from_samples(const std::vector<InterventionalSample>& samples) {
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return from_samples(samples, idx);
}

NoiseDraws NoiseDraws::sample(std::size_t n, std::size_t batch, Rng& rng) {
    const auto rows = static_cast<Eigen::Index>(n);
    const auto cols = static_cast<Eigen::Index>(batch);
    auto draw = [&] { return rng.normal(); };
    NoiseDraws out;
    out.e = Matrix::NullaryExpr(rows, cols, draw);
    out.e_tilde = Matrix::NullaryExpr(rows, cols, draw);
    out.v = Matrix::NullaryExpr(rows, cols, draw);
    return out;
}

double gaussian_kl_standard(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std) {
    return (0.5 * (mean.array().square() + (2.0 * log_std.array()).exp() - 1.0) - log_std.array()).sum();
}

double cosine_lr(double lr_start, double lr_end, std::size_t step, std::size_t total_steps) {
    if (total_steps <= 1) return lr_end;
    const double progress = static_cast<double>(std::min(step, total_steps - 1)) / static_cast<double>(total_steps - 1);
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

void require_finite(double value, const char* term) {
    if (!std::isfinite(value)) {
        throw NumericError(term, std::string("non-finite loss component '") + term + "'");
    }
}

// Rows of `m` except `skip`, restricted to `cols`.
Matrix gather_rest(const Matrix& m, Eigen::Index skip, const std::vector<Eigen::Index>& cols) {
    Matrix out(m.rows() - 1, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        for (Eigen::Index r = 0, o = 0; r < m.rows(); ++r) {
            if (r != skip) out(o++, c) = m(r, cols[k]);
        }
    }
    return out;
}

void scatter_rest_add(Matrix& m, Eigen::Index skip, const std::vector<Eigen::Index>& cols, const Matrix& src) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        for (Eigen::Index r = 0, o = 0; r < m.rows(); ++r) {
            if (r != skip) m(r, cols[k]) += src(o++, c);
        }
    }
}

double gaussian_nll_sum(const Matrix& residual, double log_std) {
    return 0.5 * std::exp(-2.0 * log_std) * residual.squaredNorm() +
           static_cast<double>(residual.size()) * (log_std + kLogSqrt2Pi);
}

}  // namespace

LossBreakdown elbo_loss(AicmModel& model, const Batch& batch, const NoiseDraws& noise, const LossOptions& opt) {
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto d = static_cast<Eigen::Index>(model.d());
    const auto batch_size = static_cast<Eigen::Index>(batch.size());
    if (batch_size == 0) throw InvalidArgument("elbo_loss: empty batch");
    if (batch.x.rows() != d || batch.x_tilde.rows() != d || batch.x.cols() != batch_size ||
        batch.x_tilde.cols() != batch_size) {
        throw InvalidArgument("elbo_loss: batch shape does not match the model");
    }
    if (noise.e.rows() != n || noise.e.cols() != batch_size || noise.e_tilde.rows() != n ||
        noise.e_tilde.cols() != batch_size || noise.v.rows() != n || noise.v.cols() != batch_size) {
        throw InvalidArgument("elbo_loss: noise shape does not match the batch");
    }
    for (std::size_t t : batch.targets) {
        if (t >= model.n()) throw InvalidArgument("elbo_loss: target out of range");
    }

    const LossWeights& w = opt.weights;
    const bool grad = opt.compute_gradients;
    const double g = 1.0 / static_cast<double>(batch_size);
    const double a = w.beta_kl * g;

    // Encoders. q(e|x) and q(e~|x~) share encoder_e.
    nn::MlpTape tape_enc_x, tape_enc_xt, tape_enc_v;
    const Matrix delta = batch.x_tilde - batch.x;
    const Matrix h_e = model.encoder_e.forward(batch.x, &tape_enc_x);
    const Matrix h_t = model.encoder_e.forward(batch.x_tilde, &tape_enc_xt);
    const Matrix h_v = model.encoder_v.forward(delta, &tape_enc_v);

    const Matrix sd_e = h_e.bottomRows(n).array().exp();
    const Matrix sd_v = h_v.bottomRows(n).array().exp();
    const Matrix e = h_e.topRows(n) + sd_e.cwiseProduct(noise.e);
    const Matrix v = h_v.topRows(n) + sd_v.cwiseProduct(noise.v);

    // Copy constraint: e~ equals e except at the target, where it comes from
    // q(e~|x~). Nothing else of that posterior is read.
    Matrix e_tilde = e;
    Eigen::VectorXd et_raw(batch_size), sd_t(batch_size), eps_t(batch_size);
    for (Eigen::Index b = 0; b < batch_size; ++b) {
        const auto t = static_cast<Eigen::Index>(batch.targets[static_cast<std::size_t>(b)]);
        if (opt.on_tilde_read) opt.on_tilde_read(static_cast<std::size_t>(b), static_cast<std::size_t>(t));
        eps_t[b] = noise.e_tilde(t, b);
        sd_t[b] = std::exp(h_t(n + t, b));
        et_raw[b] = h_t(t, b) + sd_t[b] * eps_t[b];
        e_tilde(t, b) = et_raw[b];
    }

    // Reconstruction terms.
    nn::MlpTape tape_dec_x, tape_dec_xt, tape_dec_v;
    const Matrix r_x = batch.x - model.decoder_e.forward(e, &tape_dec_x);
    const Matrix r_xt = batch.x_tilde - model.decoder_e.forward(e_tilde, &tape_dec_xt);
    const Matrix r_v = delta - model.decoder_v.forward(v, &tape_dec_v);

    LossBreakdown out;
    out.nll_x = g * gaussian_nll_sum(r_x, model.obs_log_std);
    out.nll_x_tilde = g * gaussian_nll_sum(r_xt, model.obs_log_std);
    out.nll_delta = g * gaussian_nll_sum(r_v, model.delta_log_std);

    auto kl_sum = [](const Matrix& h, Eigen::Index rows) {
        const auto mean = h.topRows(rows).array();
        const auto log_std = h.bottomRows(rows).array();
        return (0.5 * (mean.square() + (2.0 * log_std).exp() - 1.0) - log_std).sum();
    };
    out.kl_e = g * kl_sum(h_e, n);
    out.kl_v = g * kl_sum(h_v, n);

    Matrix grad_e = Matrix::Zero(n, batch_size);
    Matrix grad_v = Matrix::Zero(n, batch_size);
    Matrix grad_h_e = Matrix::Zero(2 * n, batch_size);
    Matrix grad_h_t = Matrix::Zero(2 * n, batch_size);
    Matrix grad_h_v = Matrix::Zero(2 * n, batch_size);
    Eigen::VectorXd grad_et_raw = Eigen::VectorXd::Zero(batch_size);

    // Transition prior on the target coordinate, one node group at a time:
    //   kl_t = log q(e~_t|x~) - log N(z~_t; prior_mean_t(e_t), 1) + log scale_t(e_/t)
    double kl_t_sum = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        std::vector<Eigen::Index> cols;
        for (Eigen::Index b = 0; b < batch_size; ++b) {
            if (static_cast<Eigen::Index>(batch.targets[static_cast<std::size_t>(b)]) == t) cols.push_back(b);
        }
        if (cols.empty()) continue;
        const auto group = static_cast<Eigen::Index>(cols.size());
        NodeNets& nets = model.nodes[static_cast<std::size_t>(t)];

        const Matrix e_rest = gather_rest(e, t, cols);
        Matrix v_group(n, group), e_self(1, group);
        for (Eigen::Index k = 0; k < group; ++k) {
            v_group.col(k) = v.col(cols[static_cast<std::size_t>(k)]);
            e_self(0, k) = e(t, cols[static_cast<std::size_t>(k)]);
        }
        nn::MlpTape tape_loc, tape_scale, tape_shift, tape_mean;
        const Matrix loc = nets.loc.forward(e_rest, &tape_loc);
        const Matrix raw = nets.scale_raw.forward(e_rest, &tape_scale);
        const Matrix shift = nets.shift.forward(v_group, &tape_shift);
        const Matrix mean = nets.prior_mean.forward(e_self, &tape_mean);

        Matrix d_loc(1, group), d_raw(1, group), d_shift(1, group), d_mean(1, group);
        for (Eigen::Index k = 0; k < group; ++k) {
            const Eigen::Index b = cols[static_cast<std::size_t>(k)];
            const double s = model.scale_link(raw(0, k));
            const double z = (et_raw[b] - loc(0, k) - shift(0, k)) / s;
            const double r = z - mean(0, k);
            const double log_trans = -0.5 * r * r - kLogSqrt2Pi - std::log(s);
            const double log_q = -0.5 * eps_t[b] * eps_t[b] - h_t(n + t, b) - kLogSqrt2Pi;
            kl_t_sum += log_q - log_trans;
            if (!grad) continue;
            const double dz = a * r;
            const double ds = a / s - dz * z / s;
            d_mean(0, k) = -a * r;
            d_loc(0, k) = -dz / s;
            d_shift(0, k) = -dz / s;
            d_raw(0, k) = ds * model.scale_link_derivative(raw(0, k));
            grad_et_raw[b] += dz / s;
            grad_h_t(n + t, b) -= a;  // d log q / d log_std
        }
        if (!grad) continue;
        scatter_rest_add(grad_e, t, cols, nets.loc.backward(tape_loc, d_loc));
        scatter_rest_add(grad_e, t, cols, nets.scale_raw.backward(tape_scale, d_raw));
        const Matrix gv = nets.shift.backward(tape_shift, d_shift);
        const Matrix gm = nets.prior_mean.backward(tape_mean, d_mean);
        for (Eigen::Index k = 0; k < group; ++k) {
            const Eigen::Index b = cols[static_cast<std::size_t>(k)];
            grad_v.col(b) += gv.col(k);
            grad_e(t, b) += gm(0, k);
        }
    }
    out.kl_transition = g * kl_t_sum;

    out.neg_elbo = out.nll_x + out.nll_x_tilde + w.delta_recon_weight * out.nll_delta +
                   w.beta_kl * (out.kl_e + out.kl_v + out.kl_transition);

    // Consistency: reconstructions through the posterior means.
    nn::MlpTape tape_cx, tape_cxt, tape_cv;
    Matrix c_x, c_xt, c_v;
    if (opt.include_consistency) {
        c_x = batch.x - model.decoder_e.forward(h_e.topRows(n), &tape_cx);
        c_xt = batch.x_tilde - model.decoder_e.forward(h_t.topRows(n), &tape_cxt);
        c_v = delta - model.decoder_v.forward(h_v.topRows(n), &tape_cv);
        const double denom = static_cast<double>(d * batch_size);
        out.consistency_x = c_x.squaredNorm() / denom;
        out.consistency_x_tilde = c_xt.squaredNorm() / denom;
        out.consistency_delta = c_v.squaredNorm() / denom;
        out.consistency = out.consistency_x + out.consistency_x_tilde + out.consistency_delta;
    }
    out.total = out.neg_elbo + (opt.include_consistency ? w.consistency_weight * out.consistency : 0.0);

    require_finite(out.nll_x, "nll_x");
    require_finite(out.nll_x_tilde, "nll_x_tilde");
    require_finite(out.nll_delta, "nll_delta");
    require_finite(out.kl_e, "kl_e");
    require_finite(out.kl_v, "kl_v");
    require_finite(out.kl_transition, "kl_transition");
    require_finite(out.consistency, "consistency");
    if (!grad) return out;

    // Decoders.
    const double inv_var_obs = std::exp(-2.0 * model.obs_log_std);
    const double inv_var_delta = std::exp(-2.0 * model.delta_log_std);
    grad_e += model.decoder_e.backward(tape_dec_x, (-g * inv_var_obs) * r_x);
    const Matrix grad_e_tilde = model.decoder_e.backward(tape_dec_xt, (-g * inv_var_obs) * r_xt);
    grad_v += model.decoder_v.backward(tape_dec_v, (-g * w.delta_recon_weight * inv_var_delta) * r_v);
    model.grad_obs_log_std +=
        g * (static_cast<double>(r_x.size() + r_xt.size()) - inv_var_obs * (r_x.squaredNorm() + r_xt.squaredNorm()));
    model.grad_delta_log_std +=
        g * w.delta_recon_weight * (static_cast<double>(r_v.size()) - inv_var_delta * r_v.squaredNorm());

    // e~ routes to e off-target and to the q(e~|x~) sample at the target.
    for (Eigen::Index b = 0; b < batch_size; ++b) {
        const auto t = static_cast<Eigen::Index>(batch.targets[static_cast<std::size_t>(b)]);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == t) {
                grad_et_raw[b] += grad_e_tilde(j, b);
            } else {
                grad_e(j, b) += grad_e_tilde(j, b);
            }
        }
        grad_h_t(t, b) += grad_et_raw[b];
        grad_h_t(n + t, b) += grad_et_raw[b] * sd_t[b] * eps_t[b];
    }

    // Reparameterization and analytic KL for e and v.
    grad_h_e.topRows(n) = grad_e + a * h_e.topRows(n);
    grad_h_e.bottomRows(n) = grad_e.cwiseProduct(sd_e).cwiseProduct(noise.e) + a * (sd_e.array().square() - 1.0).matrix();
    grad_h_v.topRows(n) = grad_v + a * h_v.topRows(n);
    grad_h_v.bottomRows(n) = grad_v.cwiseProduct(sd_v).cwiseProduct(noise.v) + a * (sd_v.array().square() - 1.0).matrix();

    if (opt.include_consistency) {
        const double c = -2.0 * w.consistency_weight / static_cast<double>(d * batch_size);
        grad_h_e.topRows(n) += model.decoder_e.backward(tape_cx, c * c_x);
        grad_h_t.topRows(n) += model.decoder_e.backward(tape_cxt, c * c_xt);
        grad_h_v.topRows(n) += model.decoder_v.backward(tape_cv, c * c_v);
    }

    model.encoder_e.backward(tape_enc_x, grad_h_e);
    model.encoder_e.backward(tape_enc_xt, grad_h_t);
    model.encoder_v.backward(tape_enc_v, grad_h_v);
    return out;
}

LossBreakdown consistency_loss(const AicmModel& model, const Batch& batch) {
    if (batch.size() == 0) throw InvalidArgument("consistency_loss: empty batch");
    const auto n = static_cast<Eigen::Index>(model.n());
    const double denom = static_cast<double>(batch.x.size());
    const Matrix delta = batch.x_tilde - batch.x;
    auto mse = [&](const nn::Mlp& enc, const nn::Mlp& dec, const Matrix& input) {
        const Matrix mean = enc.forward(input).topRows(n);
        return (input - dec.forward(mean)).squaredNorm() / denom;
    };
    LossBreakdown out;
    out.consistency_x = mse(model.encoder_e, model.decoder_e, batch.x);
    out.consistency_x_tilde = mse(model.encoder_e, model.decoder_e, batch.x_tilde);
    out.consistency_delta = mse(model.encoder_v, model.decoder_v, delta);
    out.consistency = out.consistency_x + out.consistency_x_tilde + out.consistency_delta;
    out.total = out.consistency;
    return out;
}

double validation_loss(AicmModel& model, const Dataset& val, std::uint64_t seed, std::size_t batch_size) {
    if (val.samples.empty()) throw InvalidArgument("validation_loss: empty dataset");
    const std::size_t n = model.n();
    LossOptions opt;
    opt.include_consistency = false;
    double sum = 0.0;
    for (std::size_t begin = 0; begin < val.size(); begin += batch_size) {
        const std::size_t end = std::min(val.size(), begin + batch_size);
        std::vector<std::size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Batch batch = Batch::from_samples(val.samples, idx);
        NoiseDraws noise;
        noise.e.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(idx.size()));
        noise.e_tilde.resizeLike(noise.e);
        noise.v.resizeLike(noise.e);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            Rng rng(seed, streams::kValNoise, idx[k]);
            const NoiseDraws one = NoiseDraws::sample(n, 1, rng);
            noise.e.col(static_cast<Eigen::Index>(k)) = one.e;
            noise.e_tilde.col(static_cast<Eigen::Index>(k)) = one.e_tilde;
            noise.v.col(static_cast<Eigen::Index>(k)) = one.v;
        }
        sum += elbo_loss(model, batch, noise, opt).neg_elbo * static_cast<double>(idx.size());
    }
    return sum / static_cast<double>(val.size());
}

json TrainReport::to_json() const {
    json doc;
    json hist = json::array();
    for (const auto& r : history) {
        hist.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"lr", r.lr}});
    }
    doc["history"] = hist;
    doc["best_val_loss"] = best_val_loss ? json(*best_val_loss) : json(nullptr);
    doc["best_epoch"] = best_epoch ? json(*best_epoch) : json(nullptr);
    doc["wall_time_seconds"] = wall_time_seconds;
    return doc;
}

std::string TrainReport::history_csv() const {
    std::string out =
        "epoch,train_loss,val_loss,lr,nll_x,nll_x_tilde,nll_delta,kl_e,kl_v,kl_transition,consistency\n";
    for (const auto& r : history) {
        const auto& c = r.components;
        for (double v : {static_cast<double>(r.epoch), r.train_loss, r.val_loss, r.lr, c.nll_x, c.nll_x_tilde,
                         c.nll_delta, c.kl_e, c.kl_v, c.kl_transition, c.consistency}) {
            out += io::format_double(v);
            out += ',';
        }
        out.back() = '\n';
    }
    return out;
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& x, double weight) {
    acc.nll_x += weight * x.nll_x;
    acc.nll_x_tilde += weight * x.nll_x_tilde;
    acc.nll_delta += weight * x.nll_delta;
    acc.kl_e += weight * x.kl_e;
    acc.kl_v += weight * x.kl_v;
    acc.kl_transition += weight * x.kl_transition;
    acc.consistency += weight * x.consistency;
    acc.consistency_x += weight * x.consistency_x;
    acc.consistency_x_tilde += weight * x.consistency_x_tilde;
    acc.consistency_delta += weight * x.consistency_delta;
    acc.neg_elbo += weight * x.neg_elbo;
    acc.total += weight * x.total;
}

void write_training_outputs(const fs::path& dir, const TrainReport& report, const TrainConfig& config) {
    io::write_file_atomic(dir / "history.csv", report.history_csv());
    json doc = report.to_json();
    doc.erase("wall_time_seconds");
    doc["config"] = config.to_json();
    io::write_json(dir / "report.json", doc);
    // Kept apart so report.json is reproducible byte for byte.
    io::write_json(dir / "timing.json", {{"wall_time_seconds", report.wall_time_seconds}});
}

}  // namespace

TrainResult train(AicmModel model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const TrainOutputs& outputs) {
    config.validate();
    if (train_set.samples.empty() || val_set.samples.empty()) throw InvalidArgument("train: empty dataset");
    for (const Dataset* ds : {&train_set, &val_set}) {
        if (static_cast<std::size_t>(ds->samples.front().x.size()) != model.d()) {
            throw SchemaError("train: dataset observation width differs from model d");
        }
        if (ds->meta.n != 0 && ds->meta.n != model.n()) throw SchemaError("train: dataset n differs from model n");
    }

    const auto start = std::chrono::steady_clock::now();
    const std::size_t count = train_set.size();
    const std::size_t steps_per_epoch = (count + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = steps_per_epoch * config.epochs;

    const json checkpoint_extra = {{"train_config", config.to_json()},
                                   {"train_config_sha256", io::sha256_hex(config.to_json().dump())}};
    std::optional<fs::path> best_dir;
    if (outputs.dir) best_dir = *outputs.dir / "best";

    TrainResult result{model, {}};
    const auto views = model.params();
    nn::Adam adam(views);
    LossOptions opt;
    opt.weights = {config.beta_kl, config.delta_recon_weight, config.consistency_weight};
    opt.compute_gradients = true;

    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;
    std::string last_good;
    if (best_dir) {
        save_checkpoint(model, *best_dir, checkpoint_extra);
        last_good = best_dir->string();
    }

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(config.seed, streams::kShuffle, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        LossBreakdown epoch_sum;
        double lr = config.lr_start;
        for (std::size_t begin = 0; begin < count; begin += config.batch_size, ++step) {
            const std::size_t end = std::min(count, begin + config.batch_size);
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const Batch batch = Batch::from_samples(train_set.samples, idx);
            Rng noise_rng(config.seed, streams::kTrainNoise, step);
            const NoiseDraws noise = NoiseDraws::sample(model.n(), batch.size(), noise_rng);
            model.zero_grad();
            LossBreakdown loss;
            try {
                loss = elbo_loss(model, batch, noise, opt);
            } catch (const NumericError& err) {
                throw NumericError(err.term,
                                   std::string(err.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(step) + (last_good.empty() ? "" : "; last good checkpoint: " + last_good),
                                   last_good);
            }
            accumulate(epoch_sum, loss, static_cast<double>(batch.size()));
            lr = cosine_lr(config.lr_start, config.lr_end, step, total_steps);
            adam.step(views, lr);
        }
        const double inv = 1.0 / static_cast<double>(count);
        LossBreakdown means;
        accumulate(means, epoch_sum, inv);

        const double val = validation_loss(model, val_set, config.seed);
        if (!std::isfinite(val)) {
            throw NumericError("val_loss", "non-finite validation loss at epoch " + std::to_string(epoch) +
                                               (last_good.empty() ? "" : "; last good checkpoint: " + last_good),
                               last_good);
        }
        result.report.history.push_back({epoch, means.total, val, lr, means});
        if (!result.report.best_val_loss || val < *result.report.best_val_loss) {
            result.report.best_val_loss = val;
            result.report.best_epoch = epoch;
            result.model = model;
            if (best_dir) {
                json extra = checkpoint_extra;
                extra["epoch"] = epoch;
                extra["val_loss"] = val;
                save_checkpoint(model, *best_dir, extra);
            }
        }
        if (outputs.verbose) {
            std::cerr << "epoch " << epoch << " train " << means.total << " val " << val << " lr " << lr << "\n";
        }
    }
    result.report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outputs.dir) write_training_outputs(*outputs.dir, result.report, config);
    return result;
}

GradientCheckResult gradient_check(AicmModel& model, const Batch& batch, const NoiseDraws& noise,
                                   const LossWeights& weights, double step) {
    LossOptions opt;
    opt.weights = weights;
    opt.compute_gradients = true;
    model.zero_grad();
    elbo_loss(model, batch, noise, opt);
    opt.compute_gradients = false;

    GradientCheckResult result;
    for (const auto& p : model.params()) {
        for (std::size_t k = 0; k < p.size; ++k) {
            const double analytic = p.grad[k];
            const double saved = p.value[k];
            p.value[k] = saved + step;
            const double plus = elbo_loss(model, batch, noise, opt).total;
            p.value[k] = saved - step;
            const double minus = elbo_loss(model, batch, noise, opt).total;
            p.value[k] = saved;
            const double numeric = (plus - minus) / (2.0 * step);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradientCheckFloor});
            const double err = std::abs(analytic - numeric) / denom;
            ++result.checked;
            if (!(err <= result.max_relative_error)) {
                result.max_relative_error = err;
                result.worst_parameter = p.name + "[" + std::to_string(k) + "]";
            }
        }
    }
    return result;
}

}  // namespace icrlsm
