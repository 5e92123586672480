#include "uvu/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "uvu/error.hpp"
#include "uvu/rng.hpp"

namespace uvu {

void reject_unknown_keys(const nlohmann::json& j, const nlohmann::json& known, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) throw ValidationError(where + ": unknown key '" + k + "'");
    }
}

namespace {

nlohmann::json chain_json(const ChainEnvConfig& c) {
    return {{"type", "chain"},
            {"n_states", c.n_states},
            {"discount", c.discount},
            {"divergence_state", c.divergence_state},
            {"z_collect", c.z_collect},
            {"n_episodes", c.n_episodes},
            {"z_grid", c.z_grid},
            {"next_action_samples", c.next_action_samples}};
}

nlohmann::json grid_json(const GridEnvConfig& c) {
    return {{"type", "gridworld"},
            {"size", c.size},
            {"episode_len", c.episode_len},
            {"n_steps", c.n_steps},
            {"planner_epsilon", c.planner_epsilon}};
}

int chain_dim(const ChainEnvConfig& c) { return c.n_states + 1 + ChainMdp::n_actions + 1; }

}  // namespace

RunConfig::RunConfig() {
    model.input_dim = chain_dim(env.chain);
    model.widths = {128};
    model.n_heads = 1;
    train.learning_rate = 0.5;
    train.discount = env.chain.discount;
    train.n_steps = 20000;
    practical.arch.encoder_width = 64;
    practical.arch.trunk_depth = 2;
    practical.arch.trunk_width = 64;
    practical.batch_size = 128;
}

void RunConfig::validate() const {
    if (experiment_id.empty() || experiment_id.find('/') != std::string::npos) {
        throw ValidationError("RunConfig: experiment_id must be a non-empty name without '/'");
    }
    if (output_dir.empty()) throw ValidationError("RunConfig: output_dir must not be empty");
    static const std::vector<std::string> methods{"uvu", "ensemble", "bdqnp", "rnd", "rnd_p", "dqn"};
    if (std::find(methods.begin(), methods.end(), method) == methods.end()) {
        throw ValidationError("RunConfig: unknown method '" + method + "'");
    }
    if (ensemble_size < 2) throw ValidationError("RunConfig: ensemble_size must be >= 2");
    if (prior_scale < 0.0) throw ValidationError("RunConfig: prior_scale must be >= 0");
    if (eval.n_episodes < 1) throw ValidationError("RunConfig: eval.n_episodes must be >= 1");
    if (env.type == "chain") {
        const auto& c = env.chain;
        if (c.n_states < 3) throw ValidationError("RunConfig: chain n_states must be >= 3");
        if (!(c.discount >= 0.0 && c.discount < 1.0)) throw ValidationError("RunConfig: chain discount must lie in [0, 1)");
        if (c.divergence_state < 0 || c.divergence_state >= c.n_states - 1) {
            throw ValidationError("RunConfig: divergence_state must be a non-terminal chain state");
        }
        if (!(c.z_collect >= 0.0 && c.z_collect <= 1.0)) throw ValidationError("RunConfig: z_collect must lie in [0, 1]");
        if (c.n_episodes < 1 || c.z_grid < 2 || c.next_action_samples < 1) {
            throw ValidationError("RunConfig: chain n_episodes >= 1, z_grid >= 2 and next_action_samples >= 1 required");
        }
        model.validate();
        if (model.input_dim != chain_dim(c)) {
            throw ValidationError("RunConfig: model.input_dim must be " + std::to_string(chain_dim(c)) + " for this chain");
        }
        train.validate();
        if (train.discount != c.discount) throw ValidationError("RunConfig: train.discount must equal the chain discount");
    } else if (env.type == "gridworld") {
        const auto& g = env.grid;
        if (g.size < 5 || g.size > 10) throw ValidationError("RunConfig: gridworld size must lie in [5, 10]");
        if (g.episode_len < 1 || g.n_steps < 0) throw ValidationError("RunConfig: episode_len >= 1 and n_steps >= 0 required");
        if (!(g.planner_epsilon >= 0.0 && g.planner_epsilon <= 1.0)) {
            throw ValidationError("RunConfig: planner_epsilon must lie in [0, 1]");
        }
        practical.validate();
    } else {
        throw ValidationError("RunConfig: env.type must be 'chain' or 'gridworld'");
    }
}

nlohmann::json RunConfig::to_json() const {
    return {{"experiment_id", experiment_id},
            {"seed", seed},
            {"output_dir", output_dir},
            {"method", method},
            {"env", env.type == "gridworld" ? grid_json(env.grid) : chain_json(env.chain)},
            {"model", model.to_json()},
            {"train", train.to_json()},
            {"practical", practical.to_json()},
            {"ensemble_size", ensemble_size},
            {"prior_scale", prior_scale},
            {"eval", {{"n_episodes", eval.n_episodes}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        reject_unknown_keys(j, c.to_json(), "RunConfig");
        c.experiment_id = j.value("experiment_id", c.experiment_id);
        c.seed = j.value("seed", c.seed);
        c.output_dir = j.value("output_dir", c.output_dir);
        c.method = j.value("method", c.method);
        c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
        c.prior_scale = j.value("prior_scale", c.method == "bdqnp" ? 1.0 : c.prior_scale);
        if (j.contains("env")) {
            const auto& e = j.at("env");
            c.env.type = e.value("type", std::string("chain"));
            if (c.env.type == "chain") {
                reject_unknown_keys(e, chain_json(c.env.chain), "env");
                auto& k = c.env.chain;
                k.n_states = e.value("n_states", k.n_states);
                k.discount = e.value("discount", k.discount);
                k.divergence_state = e.value("divergence_state", k.divergence_state);
                k.z_collect = e.value("z_collect", k.z_collect);
                k.n_episodes = e.value("n_episodes", k.n_episodes);
                k.z_grid = e.value("z_grid", k.z_grid);
                k.next_action_samples = e.value("next_action_samples", k.next_action_samples);
            } else if (c.env.type == "gridworld") {
                reject_unknown_keys(e, grid_json(c.env.grid), "env");
                auto& g = c.env.grid;
                g.size = e.value("size", g.size);
                g.episode_len = e.value("episode_len", g.episode_len);
                g.n_steps = e.value("n_steps", g.n_steps);
                g.planner_epsilon = e.value("planner_epsilon", g.planner_epsilon);
            } else {
                throw ValidationError("RunConfig: env.type must be 'chain' or 'gridworld'");
            }
        }
        // nested sections default from the run-level settings
        nlohmann::json model = c.model.to_json();
        model["input_dim"] = chain_dim(c.env.chain);
        if (j.contains("model")) {
            reject_unknown_keys(j.at("model"), model, "model");
            model.update(j.at("model"));
        }
        c.model = MlpSpec::from_json(model);
        nlohmann::json train = c.train.to_json();
        train["discount"] = c.env.chain.discount;
        train["seed"] = c.seed;
        if (j.contains("train")) {
            reject_unknown_keys(j.at("train"), train, "train");
            train.update(j.at("train"));
        }
        c.train = TrainConfig::from_json(train);
        nlohmann::json practical = c.practical.to_json();
        practical["seed"] = c.seed;
        practical["method"] = c.method;
        if (j.contains("practical")) {
            reject_unknown_keys(j.at("practical"), practical, "practical");
            nlohmann::json arch = practical["arch"];
            if (j.at("practical").contains("arch")) {
                reject_unknown_keys(j.at("practical").at("arch"), arch, "practical.arch");
                arch.update(j.at("practical").at("arch"));
            }
            practical.update(j.at("practical"));
            practical["arch"] = arch;
            if (practical["method"] != c.method) throw ValidationError("RunConfig: practical.method must equal method");
        }
        if (c.method == "bdqnp" && !(j.contains("practical") && j.at("practical").contains("prior_scale"))) {
            practical["prior_scale"] = 1.0;
        }
        practical["ensemble_size"] = j.contains("practical") && j.at("practical").contains("ensemble_size")
                                         ? practical["ensemble_size"]
                                         : nlohmann::json(c.ensemble_size);
        c.practical = PracticalConfig::from_json(practical);
        if (j.contains("eval")) {
            reject_unknown_keys(j.at("eval"), {{"n_episodes", 0}}, "eval");
            c.eval.n_episodes = j.at("eval").value("n_episodes", c.eval.n_episodes);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("RunConfig: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

std::string RunConfig::run_dir() const {
    return (std::filesystem::path(output_dir) / experiment_id / std::to_string(seed)).string();
}

std::uint64_t stream_seed(std::uint64_t seed, Stream s) {
    Rng r = Rng(seed).split(s);
    return r();
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    practical.seed = s;
}

}  // namespace uvu
