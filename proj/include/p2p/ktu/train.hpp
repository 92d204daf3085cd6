#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "p2p/ktu/loss.hpp"
#include "p2p/ktu/model.hpp"
#include "p2p/profiles.hpp"

namespace p2p::ktu {

LossWeights loss_weights(const KtuConfig& cfg);

/// Forward + composite loss over `indices` of `data`; when `grads` is given it
/// receives d(total)/d(parameter) for every tensor (same order as params).
LossBreakdown loss_and_gradient(const KtuParameters& params, const profiles::WindowedDataset& data,
                                std::span<const std::size_t> indices, Mode mode, std::mt19937_64* rng,
                                std::vector<Eigen::MatrixXd>* grads);

/// Evaluation-mode loss over a subset, computed in fixed-size chunks.
LossBreakdown evaluate_loss(const KtuParameters& params, const profiles::WindowedDataset& data,
                            std::span<const std::size_t> indices);

struct EpochLog {
    std::size_t epoch = 0;
    double train_nll = 0.0;
    double val_nll = 0.0;
    double smoothness = 0.0;
    double night_penalty = 0.0;
    double total = 0.0;  // validation total
};

struct TrainingResult {
    KtuParameters params;  // best validation total
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
};

/// Minibatch Adam on the composite loss with early stopping on validation
/// total. Deterministic given cfg.seed. Throws KtuError naming the epoch if
/// the loss diverges.
TrainingResult train(const profiles::WindowedDataset& data, const KtuConfig& cfg);

void write_training_log_csv(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace p2p::ktu
