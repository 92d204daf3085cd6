#include "p2p/ktu/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "p2p/adam.hpp"

namespace p2p::ktu {

LossWeights loss_weights(const KtuConfig& cfg) { return {cfg.alpha_smooth, cfg.beta_night, cfg.epsilon_stab}; }

LossBreakdown loss_and_gradient(const KtuParameters& params, const profiles::WindowedDataset& data,
                                std::span<const std::size_t> indices, Mode mode, std::mt19937_64* rng,
                                std::vector<Eigen::MatrixXd>* grads) {
    if (indices.empty()) throw KtuError("empty batch");
    Tape tape;
    const BoundParameters bound = bind_parameters(tape, params, grads);

    std::vector<HeadVars> heads;
    std::vector<ForecastDistribution> pred;
    std::vector<Eigen::VectorXd> pre_mask, daylight;
    std::vector<Eigen::MatrixXd> targets;
    heads.reserve(indices.size());
    for (const std::size_t i : indices) {
        const HeadVars h = forward_on_tape(tape, bound, params, data.inputs[i], data.exo[i], mode, rng);
        heads.push_back(h);
        pred.push_back({h.mu_load.value().row(0).transpose(), h.var_load.value().row(0).transpose(),
                        h.mu_pv.value().row(0).transpose(), h.var_pv.value().row(0).transpose()});
        pre_mask.push_back(h.pv_pre_mask.value().row(0).transpose());
        daylight.push_back(data.exo[i].col(0));
        targets.push_back(data.targets[i]);
    }

    std::vector<SampleLossGradient> sample_grads;
    const LossBreakdown loss = composite_loss(pred, pre_mask, targets, daylight, loss_weights(params.config()),
                                              grads != nullptr ? &sample_grads : nullptr);
    if (grads != nullptr) {
        for (std::size_t s = 0; s < heads.size(); ++s) {
            heads[s].mu_load.grad() += sample_grads[s].mu_load.transpose();
            heads[s].var_load.grad() += sample_grads[s].var_load.transpose();
            heads[s].mu_pv.grad() += sample_grads[s].mu_pv.transpose();
            heads[s].var_pv.grad() += sample_grads[s].var_pv.transpose();
            heads[s].pv_pre_mask.grad() += sample_grads[s].pv_pre_mask.transpose();
        }
        tape.backward();
    }
    return loss;
}

LossBreakdown evaluate_loss(const KtuParameters& params, const profiles::WindowedDataset& data,
                            std::span<const std::size_t> indices) {
    constexpr std::size_t kChunk = 256;
    LossBreakdown acc;
    if (indices.empty()) return acc;
    const double n = static_cast<double>(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const auto chunk = indices.subspan(start, std::min(kChunk, indices.size() - start));
        const LossBreakdown b = loss_and_gradient(params, data, chunk, Mode::Eval, nullptr, nullptr);
        const double w = static_cast<double>(chunk.size()) / n;
        acc.nll += w * b.nll;
        acc.smoothness += w * b.smoothness;
        acc.night_pv_penalty += w * b.night_pv_penalty;
        acc.total += w * b.total;
    }
    return acc;
}

TrainingResult train(const profiles::WindowedDataset& data, const KtuConfig& cfg) {
    cfg.validate();
    if (data.train.empty()) throw KtuError("training split is empty");
    if (data.window != cfg.window || data.horizon != cfg.horizon)
        throw KtuError("dataset window/horizon do not match the model configuration");
    if (data.feature_dim() != cfg.feature_dim) throw KtuError("dataset feature dimension does not match the model");

    std::mt19937_64 rng(cfg.seed);
    TrainingResult result;
    result.params = KtuParameters::initialize(cfg, cfg.seed);
    KtuParameters params = result.params;
    Adam adam(params.zeros_like(), {.learning_rate = cfg.learning_rate});

    const std::vector<std::size_t>& val = data.validation.empty() ? data.train : data.validation;
    std::vector<std::size_t> order = data.train;
    double best_total = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t used = cfg.samples_per_epoch == 0 ? order.size() : std::min(cfg.samples_per_epoch, order.size());

        double train_nll = 0.0;
        for (std::size_t start = 0; start < used; start += cfg.batch_size) {
            const std::span<const std::size_t> batch(order.data() + start, std::min(cfg.batch_size, used - start));
            std::vector<Eigen::MatrixXd> grads = params.zeros_like();
            const LossBreakdown b = loss_and_gradient(params, data, batch, Mode::Train, &rng, &grads);
            if (!std::isfinite(b.total)) throw KtuError("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
            train_nll += b.nll * static_cast<double>(batch.size()) / static_cast<double>(used);
            adam.step([&params](std::size_t i) -> Eigen::MatrixXd& { return params.tensor(i); }, grads);
        }
        if (!params.all_finite()) throw KtuError("training diverged (non-finite parameters) at epoch " + std::to_string(epoch));

        const LossBreakdown v = evaluate_loss(params, data, val);
        if (!std::isfinite(v.total)) throw KtuError("training diverged (non-finite validation loss) at epoch " + std::to_string(epoch));
        result.log.push_back({epoch, train_nll, v.nll, v.smoothness, v.night_pv_penalty, v.total});

        if (v.total < best_total) {
            best_total = v.total;
            result.params = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience && cfg.patience > 0) {
            break;
        }
    }
    return result;
}

void write_training_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log) {
    std::ofstream out(path);
    if (!out) throw KtuError("cannot write training log '" + path.string() + "'");
    out << "epoch,train_nll,val_nll,smoothness,night_penalty,total\n" << std::setprecision(10);
    for (const auto& e : log)
        out << e.epoch << ',' << e.train_nll << ',' << e.val_nll << ',' << e.smoothness << ',' << e.night_penalty
            << ',' << e.total << '\n';
}

}  // namespace p2p::ktu
