#include "p2p/ktu/model.hpp"

#include <algorithm>
#include <cmath>

namespace p2p::ktu {

namespace {

std::string layer_name(std::size_t layer, const char* suffix) {
    return "layer" + std::to_string(layer) + "." + suffix;
}

constexpr const char* kHeadNames[4] = {"head.mu_load", "head.var_load", "head.mu_pv", "head.var_pv"};

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - p);
    Eigen::MatrixXd m(rows, cols);
    const double scale = 1.0 / (1.0 - p);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = keep(rng) ? scale : 0.0;
    return m;
}

Var attention_on_tape(Tape& tape, Var x, Var wq, Var wk, Var wv, Var wo, std::size_t n_heads) {
    const Eigen::Index d = x.cols();
    if (wq.rows() != d || wq.cols() != d || wk.rows() != d || wk.cols() != d || wv.rows() != d ||
        wv.cols() != d || wo.rows() != d || wo.cols() != d)
        throw KtuError("attention weight dimensions do not match d_model");
    if (n_heads == 0 || d % static_cast<Eigen::Index>(n_heads) != 0)
        throw KtuError("d_model must be divisible by n_heads");
    const Eigen::Index dk = d / static_cast<Eigen::Index>(n_heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    Var q = tape.matmul(x, wq);
    Var k = tape.matmul(x, wk);
    Var v = tape.matmul(x, wv);
    std::vector<Var> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const Eigen::Index start = static_cast<Eigen::Index>(h) * dk;
        Var scores = tape.scale(tape.matmul_transposed(tape.cols(q, start, dk), tape.cols(k, start, dk)), scale);
        heads.push_back(tape.matmul(tape.softmax_rows(scores), tape.cols(v, start, dk)));
    }
    Var concat = n_heads == 1 ? heads.front() : tape.hconcat(heads);
    return tape.matmul(concat, wo);
}

}  // namespace

KtuConfig KtuConfig::large_scale() {
    KtuConfig c;
    c.d_model = 128;
    c.d_ff = 512;
    c.n_heads = 4;
    c.n_layers = 2;
    c.dropout = 0.1;
    return c;
}

void KtuConfig::validate() const {
    if (feature_dim == 0) throw KtuError("feature_dim must be positive");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
        throw KtuError("d_model must be a positive multiple of n_heads");
    if (n_layers == 0 || d_ff == 0) throw KtuError("n_layers and d_ff must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw KtuError("dropout must be in [0, 1)");
    if (window == 0 || horizon == 0) throw KtuError("window and horizon must be positive");
    if (alpha_smooth < 0.0 || beta_night < 0.0) throw KtuError("regularization weights must be non-negative");
    if (!(epsilon_stab > 0.0)) throw KtuError("epsilon_stab must be positive");
    if (learning_rate < 0.0) throw KtuError("learning_rate must be non-negative");
    if (batch_size == 0) throw KtuError("batch_size must be positive");
}

// ---------------------------------------------------------------------------

void KtuParameters::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    names_.push_back(std::move(name));
    tensors_.push_back(Eigen::MatrixXd::Zero(rows, cols));
}

KtuParameters::KtuParameters(const KtuConfig& config) : config_(config) {
    config.validate();
    const auto d = static_cast<Eigen::Index>(config.d_model);
    const auto f = static_cast<Eigen::Index>(config.feature_dim);
    const auto ff = static_cast<Eigen::Index>(config.d_ff);
    const auto h = static_cast<Eigen::Index>(config.horizon);
    add("in.w1", f, d);
    add("in.b1", 1, d);
    add("in.ln1.g", 1, d);
    add("in.ln1.b", 1, d);
    add("in.w2", d, d);
    add("in.b2", 1, d);
    add("in.ln2.g", 1, d);
    add("in.ln2.b", 1, d);
    add("pos", static_cast<Eigen::Index>(config.window), d);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        for (const char* w : {"wq", "wk", "wv", "wo"}) add(layer_name(l, w), d, d);
        add(layer_name(l, "ln1.g"), 1, d);
        add(layer_name(l, "ln1.b"), 1, d);
        add(layer_name(l, "ff.w1"), d, ff);
        add(layer_name(l, "ff.b1"), 1, ff);
        add(layer_name(l, "ff.w2"), ff, d);
        add(layer_name(l, "ff.b2"), 1, d);
        add(layer_name(l, "ln2.g"), 1, d);
        add(layer_name(l, "ln2.b"), 1, d);
    }
    for (const char* head : kHeadNames) {
        add(std::string(head) + ".w", d, h);
        add(std::string(head) + ".b", 1, h);
    }
}

KtuParameters KtuParameters::initialize(const KtuConfig& config, std::uint64_t seed) {
    KtuParameters p(config);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < p.tensors_.size(); ++i) {
        const std::string& n = p.names_[i];
        Eigen::MatrixXd& t = p.tensors_[i];
        const bool is_gain = n.size() >= 2 && n.compare(n.size() - 2, 2, ".g") == 0;
        const bool is_bias = (n.size() >= 2 && n.compare(n.size() - 2, 2, ".b") == 0) ||
                             n.find(".b1") != std::string::npos || n.find(".b2") != std::string::npos;
        if (is_gain) {
            t.setOnes();
        } else if (n == "pos") {
            std::uniform_real_distribution<double> u(-0.02, 0.02);
            for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = u(rng);
        } else if (is_bias) {
            t.setZero();
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = u(rng);
        }
    }
    return p;
}

std::size_t KtuParameters::index_of(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw KtuError("unknown parameter '" + name + "'");
    return static_cast<std::size_t>(it - names_.begin());
}

AttentionWeights KtuParameters::attention(std::size_t layer) const {
    return {(*this)[layer_name(layer, "wq")], (*this)[layer_name(layer, "wk")], (*this)[layer_name(layer, "wv")],
            (*this)[layer_name(layer, "wo")]};
}

std::size_t KtuParameters::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
}

bool KtuParameters::all_finite() const {
    return std::all_of(tensors_.begin(), tensors_.end(), [](const Eigen::MatrixXd& t) { return t.allFinite(); });
}

std::vector<Eigen::MatrixXd> KtuParameters::zeros_like() const {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd multi_head_attention(const AttentionWeights& w, const Eigen::MatrixXd& x, std::size_t n_heads) {
    Tape tape;
    Var out = attention_on_tape(tape, tape.constant(x), tape.constant(w.wq), tape.constant(w.wk),
                                tape.constant(w.wv), tape.constant(w.wo), n_heads);
    return out.value();
}

Eigen::VectorXd apply_pv_physics_mask(const Eigen::VectorXd& mu_pv_raw, const Eigen::VectorXd& daylight_flag,
                                      const Eigen::VectorXd& norm_daylight) {
    if (mu_pv_raw.size() != daylight_flag.size() || mu_pv_raw.size() != norm_daylight.size())
        throw KtuError("physics mask inputs must have equal length");
    Eigen::VectorXd out(mu_pv_raw.size());
    for (Eigen::Index k = 0; k < out.size(); ++k)
        out[k] = softplus(mu_pv_raw[k]) * daylight_flag[k] * norm_daylight[k];
    return out;
}

BoundParameters bind_parameters(Tape& tape, const KtuParameters& params, std::vector<Eigen::MatrixXd>* grads) {
    BoundParameters b;
    b.vars.reserve(params.tensor_count());
    for (std::size_t i = 0; i < params.tensor_count(); ++i)
        b.vars.push_back(tape.parameter(params.tensor(i), grads != nullptr ? &(*grads)[i] : nullptr));
    return b;
}

HeadVars forward_on_tape(Tape& tape, const BoundParameters& bound, const KtuParameters& params,
                         const Eigen::MatrixXd& input, const Eigen::MatrixXd& exo, Mode mode, std::mt19937_64* rng) {
    const KtuConfig& cfg = params.config();
    if (static_cast<std::size_t>(input.rows()) != cfg.window)
        throw KtuError("input window length " + std::to_string(input.rows()) + " does not match positional table " +
                       std::to_string(cfg.window));
    if (static_cast<std::size_t>(input.cols()) != cfg.feature_dim) throw KtuError("input feature dimension mismatch");
    if (static_cast<std::size_t>(exo.rows()) != cfg.horizon || exo.cols() != 2)
        throw KtuError("exogenous daylight features must be horizon x 2");
    const bool dropout = mode == Mode::Train && cfg.dropout > 0.0;
    if (dropout && rng == nullptr) throw KtuError("training mode needs a random generator");

    auto p = [&](const std::string& name) { return bound.vars[params.index_of(name)]; };
    auto maybe_dropout = [&](Var v) {
        return dropout ? tape.hadamard_const(v, dropout_mask(v.rows(), v.cols(), cfg.dropout, *rng)) : v;
    };

    Var x = tape.constant(input);
    Var h = tape.relu(tape.layer_norm_rows(tape.add_row(tape.matmul(x, p("in.w1")), p("in.b1")), p("in.ln1.g"),
                                           p("in.ln1.b")));
    h = tape.layer_norm_rows(tape.add_row(tape.matmul(h, p("in.w2")), p("in.b2")), p("in.ln2.g"), p("in.ln2.b"));
    h = tape.add(h, p("pos"));

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        auto lp = [&](const char* s) { return p(layer_name(l, s)); };
        Var attn = attention_on_tape(tape, h, lp("wq"), lp("wk"), lp("wv"), lp("wo"), cfg.n_heads);
        h = tape.layer_norm_rows(tape.add(h, maybe_dropout(attn)), lp("ln1.g"), lp("ln1.b"));
        Var ff = tape.relu(tape.add_row(tape.matmul(h, lp("ff.w1")), lp("ff.b1")));
        ff = tape.add_row(tape.matmul(ff, lp("ff.w2")), lp("ff.b2"));
        h = tape.layer_norm_rows(tape.add(h, maybe_dropout(ff)), lp("ln2.g"), lp("ln2.b"));
    }

    Var pooled = tape.row(h, h.rows() - 1);
    auto head = [&](const char* name) {
        return tape.add_row(tape.matmul(pooled, p(std::string(name) + ".w")), p(std::string(name) + ".b"));
    };

    HeadVars out;
    out.mu_load = head(kHeadNames[0]);
    out.var_load = tape.add_scalar(tape.softplus(head(kHeadNames[1])), cfg.epsilon_stab);
    out.pv_pre_mask = tape.softplus(head(kHeadNames[2]));
    const Eigen::MatrixXd mask = (exo.col(0).array() * exo.col(1).array()).matrix().transpose();
    out.mu_pv = tape.hadamard_const(out.pv_pre_mask, mask);
    out.var_pv = tape.add_scalar(tape.softplus(head(kHeadNames[3])), cfg.epsilon_stab);
    return out;
}

ForwardResult forward(const KtuParameters& params, const Eigen::MatrixXd& input, const Eigen::MatrixXd& exo) {
    Tape tape;
    const BoundParameters bound = bind_parameters(tape, params, nullptr);
    const HeadVars v = forward_on_tape(tape, bound, params, input, exo, Mode::Eval);
    ForwardResult r;
    r.distribution.mu_load = v.mu_load.value().row(0).transpose();
    r.distribution.var_load = v.var_load.value().row(0).transpose();
    r.distribution.mu_pv = v.mu_pv.value().row(0).transpose();
    r.distribution.var_pv = v.var_pv.value().row(0).transpose();
    r.pv_pre_mask = v.pv_pre_mask.value().row(0).transpose();
    return r;
}

std::vector<ForwardResult> forward(const KtuParameters& params, std::span<const Eigen::MatrixXd> inputs,
                                   std::span<const Eigen::MatrixXd> exo) {
    if (inputs.size() != exo.size()) throw KtuError("inputs and exogenous features differ in count");
    std::vector<ForwardResult> out;
    out.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(forward(params, inputs[i], exo[i]));
    return out;
}

}  // namespace p2p::ktu
