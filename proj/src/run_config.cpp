#include "p2p/run_config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "p2p/ktu/checkpoint.hpp"

namespace p2p::cli {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += "\n  " + s;
    return out;
}

// Reads typed fields from one JSON object, collecting problems instead of throwing.
class FieldReader {
public:
    FieldReader(const json& j, std::string path, std::vector<std::string>& problems)
        : j_(j), path_(std::move(path)), problems_(problems) {
        if (!j_.is_object()) problems_.push_back(where() + ": expected an object");
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const std::exception& e) {
            problems_.push_back(field(key) + ": " + short_message(e.what()));
        }
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        if (!j_.is_object() || !j_.contains(key)) return nullptr;
        return &j_.at(key);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() {
        if (!j_.is_object()) return;
        for (const auto& [key, value] : j_.items())
            if (!seen_.contains(key)) problems_.push_back(field(key) + ": unknown key");
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }
    static std::string short_message(const std::string& what) {
        const auto pos = what.find("] ");
        return pos == std::string::npos ? what : what.substr(pos + 2);
    }

    const json& j_;
    std::string path_;
    std::vector<std::string>& problems_;
    std::set<std::string> seen_;
};

void read_range(const json* j, const std::string& path, Range& r, std::vector<std::string>& problems) {
    if (j == nullptr) return;
    if (!j->is_array() || j->size() != 2 || !(*j)[0].is_number() || !(*j)[1].is_number()) {
        problems.push_back(path + ": expected [lo, hi]");
        return;
    }
    r.lo = (*j)[0].get<double>();
    r.hi = (*j)[1].get<double>();
}

json prosumer_to_json(const profiles::ProsumerSpec& s) {
    return {{"id", s.id},
            {"kind", profiles::to_string(s.kind)},
            {"annual_load_kwh", s.annual_load_kwh},
            {"pv_capacity_kwp", s.pv_capacity_kwp},
            {"battery_capacity_kwh", s.battery_capacity_kwh}};
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid configuration:" + join(problems)), problems_(std::move(problems)) {}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.base_dir = base_dir;
    std::vector<std::string> problems;
    FieldReader top(j, "", problems);
    top.get("scenario", cfg.scenario);
    top.get("seed", cfg.seed);
    top.get("output_dir", cfg.output_dir);
    top.get("p2p_enabled", cfg.p2p_enabled);

    if (const json* p = top.child("profiles")) {
        FieldReader r(*p, "profiles", problems);
        r.get("csv_path", cfg.profiles.csv_path);
        r.get("agent_count", cfg.profiles.agent_count);
        r.get("hours", cfg.profiles.hours);
        r.get("latitude_deg", cfg.profiles.latitude_deg);
        if (const json* list = r.child("prosumers")) {
            if (!list->is_array()) {
                problems.push_back("profiles.prosumers: expected an array");
            } else {
                for (std::size_t i = 0; i < list->size(); ++i) {
                    profiles::ProsumerSpec s;
                    FieldReader pr((*list)[i], "profiles.prosumers[" + std::to_string(i) + "]", problems);
                    std::string kind = "Household";
                    pr.get("id", s.id);
                    pr.get("kind", kind);
                    pr.get("annual_load_kwh", s.annual_load_kwh);
                    pr.get("pv_capacity_kwp", s.pv_capacity_kwp);
                    pr.get("battery_capacity_kwh", s.battery_capacity_kwh);
                    pr.finish();
                    try {
                        s.kind = profiles::prosumer_kind_from_string(kind);
                    } catch (const std::exception&) {
                        problems.push_back(pr.field("kind") + ": unknown prosumer kind '" + kind + "'");
                    }
                    cfg.profiles.prosumers.push_back(s);
                }
            }
        }
        r.finish();
    }

    if (const json* c = top.child("calendar")) {
        FieldReader r(*c, "calendar", problems);
        std::vector<std::string> periods;
        std::map<std::string, double> prices;
        r.get("period_of_hour", periods);
        r.get("lambda_buy", prices);
        r.get("lambda_sell", cfg.calendar.lambda_sell);
        r.finish();
        if (!periods.empty()) {
            if (periods.size() != 24) problems.push_back("calendar.period_of_hour: expected 24 entries");
            for (std::size_t h = 0; h < std::min<std::size_t>(periods.size(), 24); ++h) {
                try {
                    cfg.calendar.period_of_hour[h] = rewards::tariff_period_from_string(periods[h]);
                } catch (const std::exception&) {
                    problems.push_back("calendar.period_of_hour[" + std::to_string(h) + "]: unknown period '" +
                                       periods[h] + "'");
                }
            }
        }
        for (const auto& [name, price] : prices) {
            try {
                cfg.calendar.lambda_buy_of_period[static_cast<std::size_t>(rewards::tariff_period_from_string(name))] = price;
            } catch (const std::exception&) {
                problems.push_back("calendar.lambda_buy." + name + ": unknown period");
            }
        }
    }

    if (const json* f = top.child("forecaster")) {
        FieldReader r(*f, "forecaster", problems);
        r.get("mode", cfg.forecaster.mode);
        r.get("checkpoint", cfg.forecaster.checkpoint);
        r.get("per_prosumer", cfg.forecaster.per_prosumer);
        r.get("oracle_noise", cfg.forecaster.oracle_noise);
        if (const json* k = r.child("ktu")) {
            FieldReader kr(*k, "forecaster.ktu", problems);
            ktu::KtuConfig& m = cfg.forecaster.ktu;
            kr.get("feature_dim", m.feature_dim);
            kr.get("d_model", m.d_model);
            kr.get("n_layers", m.n_layers);
            kr.get("n_heads", m.n_heads);
            kr.get("d_ff", m.d_ff);
            kr.get("dropout", m.dropout);
            kr.get("window", m.window);
            kr.get("horizon", m.horizon);
            kr.get("alpha_smooth", m.alpha_smooth);
            kr.get("beta_night", m.beta_night);
            kr.get("epsilon_stab", m.epsilon_stab);
            kr.get("learning_rate", m.learning_rate);
            kr.get("batch_size", m.batch_size);
            kr.get("max_epochs", m.max_epochs);
            kr.get("patience", m.patience);
            kr.get("samples_per_epoch", m.samples_per_epoch);
            kr.get("seed", m.seed);
            kr.finish();
        }
        r.finish();
    }

    if (const json* l = top.child("learner")) {
        FieldReader r(*l, "learner", problems);
        agents::LearnerConfig& c = cfg.learner;
        std::string optimizer = c.optimizer == agents::OptimizerKind::Adam ? "adam" : "sgd";
        std::string mode = agents::to_string(c.state_mode);
        r.get("gamma", c.gamma);
        r.get("learning_rate", c.learning_rate);
        r.get("buffer_capacity", c.buffer_capacity);
        r.get("batch_size", c.batch_size);
        r.get("target_sync_period", c.target_sync_period);
        r.get("epsilon_start", c.epsilon_start);
        r.get("epsilon_end", c.epsilon_end);
        r.get("epsilon_decay_steps", c.epsilon_decay_steps);
        r.get("hidden", c.hidden);
        r.get("train_every", c.train_every);
        r.get("learning_starts", c.learning_starts);
        r.get("grad_clip", c.grad_clip);
        r.get("optimizer", optimizer);
        r.get("state_mode", mode);
        r.get("seed", c.seed);
        r.finish();
        if (optimizer == "adam") c.optimizer = agents::OptimizerKind::Adam;
        else if (optimizer == "sgd") c.optimizer = agents::OptimizerKind::Sgd;
        else problems.push_back("learner.optimizer: expected 'adam' or 'sgd'");
        try {
            c.state_mode = agents::state_mode_from_string(mode);
        } catch (const std::exception&) {
            problems.push_back("learner.state_mode: unknown mode '" + mode + "'");
        }
    }

    if (const json* t = top.child("training")) {
        FieldReader r(*t, "training", problems);
        r.get("total_steps", cfg.training.total_steps);
        r.get("episode_hours", cfg.training.episode_hours);
        r.get("random_start", cfg.training.random_start);
        r.get("eval_every", cfg.training.eval_every);
        r.get("variants", cfg.training.variants);
        r.finish();
    }

    if (const json* e = top.child("evaluation")) {
        FieldReader r(*e, "evaluation", problems);
        r.get("episodes", cfg.evaluation.episodes);
        r.get("episode_hours", cfg.evaluation.episode_hours);
        r.get("epsilon", cfg.evaluation.epsilon);
        r.get("policies", cfg.evaluation.policies);
        r.get("checkpoints", cfg.evaluation.checkpoints);
        r.finish();
    }

    if (const json* h = top.child("hp_search")) {
        FieldReader r(*h, "hp_search", problems);
        r.get("trials", cfg.hp_search.trials);
        r.get("max_epochs", cfg.hp_search.max_epochs);
        if (const json* s = r.child("space")) {
            FieldReader sr(*s, "hp_search.space", problems);
            SearchSpace& sp = cfg.hp_search.space;
            read_range(sr.child("learning_rate"), "hp_search.space.learning_rate", sp.learning_rate, problems);
            read_range(sr.child("dropout"), "hp_search.space.dropout", sp.dropout, problems);
            read_range(sr.child("alpha_smooth"), "hp_search.space.alpha_smooth", sp.alpha_smooth, problems);
            read_range(sr.child("beta_night"), "hp_search.space.beta_night", sp.beta_night, problems);
            sr.get("batch_size", sp.batch_size);
            sr.get("d_model", sp.d_model);
            sr.get("n_heads", sp.n_heads);
            sr.finish();
        }
        r.finish();
    }
    top.finish();

    if (problems.empty()) {
        auto semantic = validate(cfg);
        problems.insert(problems.end(), semantic.begin(), semantic.end());
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"config: cannot open '" + path.string() + "'"});
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError({"config: malformed JSON in '" + path.string() + "': " + e.what()});
    }
    // Paths inside the file are relative to its directory.
    return parse_config(j, path.parent_path());
}

nlohmann::json to_json(const RunConfig& cfg) {
    json prosumers = json::array();
    for (const auto& s : cfg.profiles.prosumers) prosumers.push_back(prosumer_to_json(s));
    json periods = json::array();
    for (const auto p : cfg.calendar.period_of_hour) periods.push_back(rewards::to_string(p));
    json prices = json::object();
    for (const auto p : {rewards::TariffPeriod::N, rewards::TariffPeriod::NP, rewards::TariffPeriod::P, rewards::TariffPeriod::D})
        prices[rewards::to_string(p)] = cfg.calendar.lambda_buy(p);
    const SearchSpace& sp = cfg.hp_search.space;
    auto range = [](const Range& r) { return json::array({r.lo, r.hi}); };

    return {{"scenario", cfg.scenario},
            {"seed", cfg.seed},
            {"output_dir", cfg.output_dir},
            {"p2p_enabled", cfg.p2p_enabled},
            {"profiles",
             {{"csv_path", cfg.profiles.csv_path},
              {"prosumers", prosumers},
              {"agent_count", cfg.profiles.agent_count},
              {"hours", cfg.profiles.hours},
              {"latitude_deg", cfg.profiles.latitude_deg}}},
            {"calendar", {{"period_of_hour", periods}, {"lambda_buy", prices}, {"lambda_sell", cfg.calendar.lambda_sell}}},
            {"forecaster",
             {{"mode", cfg.forecaster.mode},
              {"checkpoint", cfg.forecaster.checkpoint},
              {"per_prosumer", cfg.forecaster.per_prosumer},
              {"oracle_noise", cfg.forecaster.oracle_noise},
              {"ktu", json(cfg.forecaster.ktu)}}},
            {"learner", json(cfg.learner)},
            {"training",
             {{"total_steps", cfg.training.total_steps},
              {"episode_hours", cfg.training.episode_hours},
              {"random_start", cfg.training.random_start},
              {"eval_every", cfg.training.eval_every},
              {"variants", cfg.training.variants}}},
            {"evaluation",
             {{"episodes", cfg.evaluation.episodes},
              {"episode_hours", cfg.evaluation.episode_hours},
              {"epsilon", cfg.evaluation.epsilon},
              {"policies", cfg.evaluation.policies},
              {"checkpoints", cfg.evaluation.checkpoints}}},
            {"hp_search",
             {{"trials", cfg.hp_search.trials},
              {"max_epochs", cfg.hp_search.max_epochs},
              {"space",
               {{"learning_rate", range(sp.learning_rate)},
                {"batch_size", sp.batch_size},
                {"d_model", sp.d_model},
                {"n_heads", sp.n_heads},
                {"dropout", range(sp.dropout)},
                {"alpha_smooth", range(sp.alpha_smooth)},
                {"beta_night", range(sp.beta_night)}}}}}};
}

std::string canonical_dump(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::vector<std::string> validate(const RunConfig& cfg) {
    std::vector<std::string> problems;
    auto check = [&problems](bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    };
    check(!cfg.scenario.empty(), "scenario: must not be empty");
    check(!cfg.output_dir.empty(), "output_dir: must not be empty");

    const ProfileSource& p = cfg.profiles;
    if (!p.csv_path.empty()) {
        const auto path = cfg.resolve(p.csv_path);
        check(std::filesystem::exists(path), "profiles.csv_path: file not found: " + path.string());
    }
    check(p.hours >= 48, "profiles.hours: must be at least 48");
    check(std::abs(p.latitude_deg) < 66.5, "profiles.latitude_deg: polar latitudes are not supported");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < p.prosumers.size(); ++i) {
        const auto& s = p.prosumers[i];
        const std::string f = "profiles.prosumers[" + std::to_string(i) + "]";
        check(!s.id.empty(), f + ".id: must not be empty");
        check(ids.insert(s.id).second, f + ".id: duplicate id '" + s.id + "'");
        check(s.annual_load_kwh > 0.0, f + ".annual_load_kwh: must be positive");
        check(s.pv_capacity_kwp >= 0.0, f + ".pv_capacity_kwp: must be non-negative");
        check(s.battery_capacity_kwh >= 0.0, f + ".battery_capacity_kwh: must be non-negative");
    }
    const std::size_t available = p.prosumers.empty() ? profiles::default_community().size() : p.prosumers.size();
    check(p.agent_count <= available, "profiles.agent_count: exceeds the number of prosumers");

    try {
        cfg.calendar.validate();
    } catch (const std::exception& e) {
        problems.push_back(std::string("calendar: ") + e.what());
    }

    const ForecasterSettings& f = cfg.forecaster;
    check(f.mode == "oracle" || f.mode == "ktu", "forecaster.mode: expected 'oracle' or 'ktu'");
    check(f.oracle_noise >= 0.0, "forecaster.oracle_noise: must be non-negative");
    try {
        f.ktu.validate();
    } catch (const std::exception& e) {
        problems.push_back(std::string("forecaster.ktu: ") + e.what());
    }

    try {
        cfg.learner.validate();
    } catch (const std::exception& e) {
        problems.push_back(std::string("learner: ") + e.what());
    }

    check(cfg.training.episode_hours > 0, "training.episode_hours: must be positive");
    for (const auto& v : cfg.training.variants) {
        check(v == "full" || v == "forecast_free" || v == "flattened",
              "training.variants: unknown variant '" + v + "'");
    }

    const EvaluationSettings& e = cfg.evaluation;
    check(e.episodes > 0, "evaluation.episodes: must be positive");
    check(e.episode_hours > 0, "evaluation.episode_hours: must be positive");
    check(e.epsilon >= 0.0 && e.epsilon <= 1.0, "evaluation.epsilon: must be in [0, 1]");
    for (const auto& fam : e.policies) {
        check(fam == "rule_based" || fam == "dqn" || fam == "dqn_forecasting",
              "evaluation.policies: unknown policy family '" + fam + "'");
    }
    for (const auto& [fam, dir] : e.checkpoints) {
        check(fam == "dqn" || fam == "dqn_forecasting", "evaluation.checkpoints." + fam + ": unknown policy family");
    }

    const SearchSpace& sp = cfg.hp_search.space;
    auto check_range = [&](const Range& r, const std::string& name, double min_lo) {
        check(r.lo >= min_lo && r.lo <= r.hi, "hp_search.space." + name + ": expected " + std::to_string(min_lo) +
                                                   " <= lo <= hi");
    };
    check_range(sp.learning_rate, "learning_rate", 1e-12);
    check_range(sp.dropout, "dropout", 0.0);
    check(sp.dropout.hi < 1.0, "hp_search.space.dropout: must stay below 1");
    check_range(sp.alpha_smooth, "alpha_smooth", 0.0);
    check_range(sp.beta_night, "beta_night", 0.0);
    check(!sp.batch_size.empty() && !sp.d_model.empty() && !sp.n_heads.empty(),
          "hp_search.space: empty search space");
    for (std::size_t d : sp.d_model)
        for (std::size_t h : sp.n_heads)
            check(h > 0 && d % h == 0, "hp_search.space: d_model " + std::to_string(d) + " not divisible by n_heads " +
                                           std::to_string(h));
    for (std::size_t b : sp.batch_size) check(b > 0, "hp_search.space.batch_size: must be positive");
    return problems;
}

std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const unsigned char c : canonical_dump(cfg)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace p2p::cli
