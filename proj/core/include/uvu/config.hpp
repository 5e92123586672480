#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "uvu/net.hpp"
#include "uvu/practical_train.hpp"
#include "uvu/train.hpp"

namespace uvu {

struct ChainEnvConfig {
    int n_states = 6;
    double discount = 0.7;
    int divergence_state = 2;
    double z_collect = 1.0;        // behaviour policy of the logged trajectories
    int n_episodes = 1;
    int z_grid = 11;               // policies the data is relabelled for
    int next_action_samples = 8;   // a' draws per transition and policy
};

struct GridEnvConfig {
    int size = 5;
    int episode_len = 50;
    long n_steps = 20000;          // logged transitions
    double planner_epsilon = 0.1;  // exploration of the online agent
};

struct EnvConfig {
    std::string type = "chain";  // chain | gridworld
    ChainEnvConfig chain;
    GridEnvConfig grid;
};

struct EvalConfig {
    int n_episodes = 200;  // task-rejection episodes per seed
};

/// Everything a run needs; unknown keys anywhere are rejected.
struct RunConfig {
    std::string experiment_id = "default";
    std::uint64_t seed = 0;
    std::string output_dir = "runs";
    std::string method = "uvu";  // uvu | ensemble | bdqnp | rnd | rnd_p | dqn
    EnvConfig env;
    MlpSpec model;               // theory-mode network (chain)
    TrainConfig train;           // theory-mode optimiser (chain)
    PracticalConfig practical;   // gridworld agents
    int ensemble_size = 5;
    double prior_scale = 0.0;    // chain ensembles; 1.0 for bdqnp if unset
    EvalConfig eval;

    RunConfig();
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
    /// <output_dir>/<experiment_id>/<seed>
    [[nodiscard]] std::string run_dir() const;
    /// Applies a seed override to every nested seed.
    void set_seed(std::uint64_t s);
};

// Seed streams. Every random quantity of a run is derived from the run seed.
enum Stream : std::uint64_t { kChainRollout = 1, kRelabel = 2, kGridEnv = 3, kGridData = 4, kModel = 5, kEval = 6 };
std::uint64_t stream_seed(std::uint64_t seed, Stream s);

/// Throws ValidationError when `j` has keys absent from `known`.
void reject_unknown_keys(const nlohmann::json& j, const nlohmann::json& known, const std::string& where);

}  // namespace uvu
