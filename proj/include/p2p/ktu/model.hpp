#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "p2p/forecast.hpp"
#include "p2p/ktu/tape.hpp"
#include "p2p/profiles.hpp"

namespace p2p::ktu {

class KtuError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct KtuConfig {
    std::size_t feature_dim = profiles::kFeatureDim;
    std::size_t d_model = 16;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 64;
    double dropout = 0.1;
    std::size_t window = 24;
    std::size_t horizon = 3;
    double alpha_smooth = 0.01;
    double beta_night = 0.1;
    double epsilon_stab = 1e-6;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 20;
    std::size_t patience = 5;
    std::size_t samples_per_epoch = 0;  // 0 = every training sample
    std::uint64_t seed = 0;

    /// The large architecture (128-dim model, 512-dim feedforward).
    static KtuConfig large_scale();

    void validate() const;
    bool operator==(const KtuConfig&) const = default;
};

/// Attention projections of one encoder layer. Head i uses column block
/// [i*d_k, (i+1)*d_k) of wq/wk/wv.
struct AttentionWeights {
    Eigen::MatrixXd wq, wk, wv, wo;  // d_model x d_model
};

/// Trainable tensors in a fixed, named order.
class KtuParameters {
public:
    KtuParameters() = default;
    explicit KtuParameters(const KtuConfig& config);  // zero-initialized, correct shapes

    static KtuParameters initialize(const KtuConfig& config, std::uint64_t seed);

    const KtuConfig& config() const { return config_; }
    std::size_t tensor_count() const { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Eigen::MatrixXd& tensor(std::size_t i) { return tensors_[i]; }
    const Eigen::MatrixXd& tensor(std::size_t i) const { return tensors_[i]; }
    std::size_t index_of(const std::string& name) const;
    Eigen::MatrixXd& operator[](const std::string& name) { return tensors_[index_of(name)]; }
    const Eigen::MatrixXd& operator[](const std::string& name) const { return tensors_[index_of(name)]; }

    AttentionWeights attention(std::size_t layer) const;
    std::size_t scalar_count() const;
    bool all_finite() const;

    /// Zero tensors with matching shapes (gradient accumulators).
    std::vector<Eigen::MatrixXd> zeros_like() const;

private:
    void add(std::string name, Eigen::Index rows, Eigen::Index cols);

    KtuConfig config_;
    std::vector<std::string> names_;
    std::vector<Eigen::MatrixXd> tensors_;
};

/// Scaled dot-product self-attention over the rows of x, heads concatenated
/// and projected by wo.
Eigen::MatrixXd multi_head_attention(const AttentionWeights& w, const Eigen::MatrixXd& x, std::size_t n_heads);

/// softplus(raw) * daylight_flag * norm_daylight, elementwise.
Eigen::VectorXd apply_pv_physics_mask(const Eigen::VectorXd& mu_pv_raw, const Eigen::VectorXd& daylight_flag,
                                      const Eigen::VectorXd& norm_daylight);

enum class Mode { Eval, Train };

/// Head outputs recorded on a tape; every Var is 1 x horizon.
struct HeadVars {
    Var mu_load;
    Var var_load;
    Var pv_pre_mask;  // softplus(raw PV mean) before the daylight mask
    Var mu_pv;
    Var var_pv;
};

/// Parameters bound to a tape as leaves, shared by every sample of a batch.
struct BoundParameters {
    std::vector<Var> vars;
};

BoundParameters bind_parameters(Tape& tape, const KtuParameters& params, std::vector<Eigen::MatrixXd>* grads);

/// Records one sample's forward pass. `exo` is horizon x 2 (daylight_flag,
/// norm_daylight). In Train mode dropout masks are drawn from `rng`.
HeadVars forward_on_tape(Tape& tape, const BoundParameters& bound, const KtuParameters& params,
                         const Eigen::MatrixXd& input, const Eigen::MatrixXd& exo, Mode mode,
                         std::mt19937_64* rng = nullptr);

struct ForwardResult {
    ForecastDistribution distribution;
    Eigen::VectorXd pv_pre_mask;
};

/// Evaluation-mode forward pass for one window.
ForwardResult forward(const KtuParameters& params, const Eigen::MatrixXd& input, const Eigen::MatrixXd& exo);

std::vector<ForwardResult> forward(const KtuParameters& params, std::span<const Eigen::MatrixXd> inputs,
                                   std::span<const Eigen::MatrixXd> exo);

}  // namespace p2p::ktu
