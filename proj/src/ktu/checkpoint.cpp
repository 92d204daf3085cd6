#include "p2p/ktu/checkpoint.hpp"

#include "p2p/binary_io.hpp"

namespace p2p::ktu {

namespace {
constexpr char kMagic[5] = "KTU1";
constexpr std::uint32_t kVersion = 1;
}  // namespace

void to_json(nlohmann::json& j, const KtuConfig& c) {
    j = nlohmann::json{{"feature_dim", c.feature_dim},   {"d_model", c.d_model},
                       {"n_layers", c.n_layers},         {"n_heads", c.n_heads},
                       {"d_ff", c.d_ff},                 {"dropout", c.dropout},
                       {"window", c.window},             {"horizon", c.horizon},
                       {"alpha_smooth", c.alpha_smooth}, {"beta_night", c.beta_night},
                       {"epsilon_stab", c.epsilon_stab}, {"learning_rate", c.learning_rate},
                       {"batch_size", c.batch_size},     {"max_epochs", c.max_epochs},
                       {"patience", c.patience},         {"samples_per_epoch", c.samples_per_epoch},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, KtuConfig& c) {
    KtuConfig d;
    c.feature_dim = j.value("feature_dim", d.feature_dim);
    c.d_model = j.value("d_model", d.d_model);
    c.n_layers = j.value("n_layers", d.n_layers);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.d_ff = j.value("d_ff", d.d_ff);
    c.dropout = j.value("dropout", d.dropout);
    c.window = j.value("window", d.window);
    c.horizon = j.value("horizon", d.horizon);
    c.alpha_smooth = j.value("alpha_smooth", d.alpha_smooth);
    c.beta_night = j.value("beta_night", d.beta_night);
    c.epsilon_stab = j.value("epsilon_stab", d.epsilon_stab);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.patience = j.value("patience", d.patience);
    c.samples_per_epoch = j.value("samples_per_epoch", d.samples_per_epoch);
    c.seed = j.value("seed", d.seed);
}

bool same_architecture(const KtuConfig& a, const KtuConfig& b) {
    return a.feature_dim == b.feature_dim && a.d_model == b.d_model && a.n_layers == b.n_layers &&
           a.n_heads == b.n_heads && a.d_ff == b.d_ff && a.window == b.window && a.horizon == b.horizon &&
           a.epsilon_stab == b.epsilon_stab;
}

void save_checkpoint(const std::filesystem::path& path, const KtuParameters& params) {
    BinaryWriter w(path);
    write_header(w, kMagic, kVersion);
    w.str(nlohmann::json(params.config()).dump());
    w.u64(params.tensor_count());
    for (std::size_t i = 0; i < params.tensor_count(); ++i) {
        w.str(params.name(i));
        w.matrix(params.tensor(i));
    }
    w.close();
}

KtuParameters load_checkpoint(const std::filesystem::path& path, const std::optional<KtuConfig>& expected) {
    BinaryReader r(path);
    read_header(r, kMagic, kVersion);
    KtuConfig cfg;
    try {
        cfg = nlohmann::json::parse(r.str()).get<KtuConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("corrupt embedded config in '" + path.string() + "': " + e.what());
    }
    if (expected && !same_architecture(cfg, *expected))
        throw CheckpointError("checkpoint '" + path.string() + "' was saved with a different model configuration");
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("invalid embedded config: ") + e.what());
    }

    KtuParameters params(cfg);
    if (r.u64() != params.tensor_count()) throw CheckpointError("tensor count mismatch in '" + path.string() + "'");
    for (std::size_t i = 0; i < params.tensor_count(); ++i) {
        const std::string name = r.str();
        if (name != params.name(i)) throw CheckpointError("unexpected tensor '" + name + "', wanted '" + params.name(i) + "'");
        Eigen::MatrixXd m = r.matrix();
        if (m.rows() != params.tensor(i).rows() || m.cols() != params.tensor(i).cols())
            throw CheckpointError("shape mismatch for tensor '" + name + "'");
        params.tensor(i) = std::move(m);
    }
    if (!r.at_end()) throw CheckpointError("trailing bytes in '" + path.string() + "'");
    return params;
}

}  // namespace p2p::ktu
