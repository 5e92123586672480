#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uvu/env.hpp"
#include "uvu/practical_net.hpp"

namespace uvu {

// Practical (gridworld) pipeline: minibatch DQN-style learners on 32-bit
// floats with Adam and periodically refreshed target networks.

using VecF = Eigen::VectorXf;
using MatF = Eigen::MatrixXf;

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 0.005 / 512.0;
};

class Adam {
public:
    Adam() = default;
    Adam(Eigen::Index n_params, AdamConfig cfg);
    void step(VecF& params, const VecF& grad);
    [[nodiscard]] long steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    VecF m_, v_;
    long t_ = 0;
};

enum class Method { dqn, uvu, ensemble, bdqnp, rnd, rnd_p };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct PracticalConfig {
    Method method = Method::uvu;
    PracticalArchSpec arch;  // n_heads is set per network by the learners
    double learning_rate = 3e-4;      // Q
    double aux_learning_rate = 3e-4;  // UVU / RND / intrinsic Q
    double discount = 0.9;
    long batch_size = 512;
    double adam_epsilon = 0.0;  // 0 selects 0.005 / batch_size
    long n_steps = 10000;
    long target_frequency = 256;
    double target_lambda = 1.0;
    bool double_dqn = true;
    int ensemble_size = 5;
    double prior_scale = 1.0;  // bdqnp only
    int uvu_heads = 32;
    int rnd_heads = 1;
    double divergence_threshold = 1e6;
    std::uint64_t seed = 0;

    void validate() const;
    [[nodiscard]] double effective_adam_epsilon() const {
        return adam_epsilon > 0.0 ? adam_epsilon : 0.005 / static_cast<double>(batch_size);
    }
    [[nodiscard]] nlohmann::json to_json() const;
    static PracticalConfig from_json(const nlohmann::json& j);
};

/// Dataset columns in float, ready for minibatch sampling.
struct OfflineBuffer {
    MatF states, tasks, next_states;
    std::vector<int> actions, next_actions;
    VecF rewards, bootstrap;

    [[nodiscard]] Eigen::Index size() const noexcept { return states.cols(); }
    static OfflineBuffer from_dataset(const Dataset& ds);
};

struct Minibatch {
    std::vector<Eigen::Index> idx;
    MatF s, z, s_next;
    std::vector<int> a;
    VecF r, m;
};
Minibatch sample_minibatch(const OfflineBuffer& buf, long batch_size, Rng& rng);

/// Index of the largest entry, lowest index on ties.
int argmax_action(const MatF& q, Eigen::Index col, int n_actions, int head = 0);

/// Trainable network with Adam state and a lagged target copy.
struct TrainedNet {
    std::shared_ptr<const PracticalNet<float>> net;
    VecF params;
    VecF target;
    Adam opt;

    void refresh_target(double lambda);
};

/// Common interface of the practical agents used by task rejection.
class Agent {
public:
    virtual ~Agent() = default;
    /// One minibatch update; returns the Q loss.
    virtual double train_step(const OfflineBuffer& buf, Rng& rng) = 0;
    /// Q-values, n_actions x batch.
    [[nodiscard]] virtual MatF q_values(const MatF& states, const MatF& tasks) const = 0;
    /// Epistemic uncertainty at (s, a, z) per column; constant for plain DQN.
    [[nodiscard]] virtual Eigen::VectorXd uncertainty(const MatF& states, const MatF& tasks,
                                                      const std::vector<int>& actions) const = 0;
    [[nodiscard]] virtual Method method() const = 0;
    /// Named parameter vectors for checkpointing.
    [[nodiscard]] virtual std::vector<std::pair<std::string, VecF>> checkpoint() const = 0;
    virtual void restore(const std::vector<std::pair<std::string, VecF>>& parts) = 0;

    [[nodiscard]] int greedy_action(const Eigen::VectorXd& s, const Eigen::VectorXd& z) const;
};

/// Builds the agent for cfg.method with parameters drawn from cfg.seed.
std::unique_ptr<Agent> make_agent(const PracticalConfig& cfg);

struct PracticalResult {
    long steps = 0;
    double final_loss = 0.0;
    double seconds = 0.0;
    std::vector<double> loss_trace;  // every 100 steps
};

/// Runs cfg.n_steps updates of `agent` on minibatches of `buf`. Throws
/// ValidationError on an empty buffer and DivergenceError on a non-finite or
/// exploding loss.
PracticalResult practical_train(Agent& agent, const OfflineBuffer& buf, const PracticalConfig& cfg);

/// Offline Double-DQN on the dataset; returns the trained Q-network parameters.
VecF dqn_offline_train(const Dataset& ds, const PracticalConfig& cfg, PracticalResult* info = nullptr);

/// Greedy policy of a practical agent (for evaluation and data collection).
class AgentPolicy : public GridPolicy {
public:
    AgentPolicy(const Agent& agent, double epsilon = 0.0) : agent_(agent), epsilon_(epsilon) {}
    int act(const GridWorld& env, const Eigen::VectorXd& obs, int task, Rng& rng) override;
    [[nodiscard]] std::string id() const override { return "agent(" + to_string(agent_.method()) + ")"; }

private:
    const Agent& agent_;
    double epsilon_;
};

/// Mean greedy return per episode over `n_episodes` random tasks.
double evaluate_greedy_return(const Agent& agent, int grid_size, int n_episodes, std::uint64_t seed);
/// Same for the uniformly random policy.
double evaluate_random_return(int grid_size, int n_episodes, std::uint64_t seed);

}  // namespace uvu
