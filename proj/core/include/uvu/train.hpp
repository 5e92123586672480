#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uvu/env.hpp"
#include "uvu/net.hpp"

namespace uvu {

/// Theory-mode optimisation settings (plain gradient descent).
struct TrainConfig {
    double learning_rate = 1e-2;
    bool full_batch = true;
    long batch_size = 0;  // ignored when full_batch
    long n_steps = 10000;
    double discount = 0.9;
    /// 0 bootstraps from the current parameters (pure semi-gradient); otherwise a
    /// lagged copy is refreshed every `target_update_interval` steps.
    long target_update_interval = 0;
    double target_polyak = 1.0;
    std::uint64_t seed = 0;
    /// Stop once the infinity norm of the full-batch TD residual drops below this.
    double convergence_tol = 1e-8;
    double divergence_threshold = 1e6;
    std::string metrics_path;  // CSV of (step, loss, residual) when non-empty
    long log_every = 100;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Encoded transitions: inputs x = enc(s, a, z), successors x' = enc(s', a', z).
struct TdBatch {
    Eigen::MatrixXd x;
    Eigen::MatrixXd x_next;
    Eigen::VectorXd bootstrap;  // 0 for terminal successors
    Eigen::VectorXd rewards;
    /// Optional: x'_a = enc(s', a, z) for every action a, used for greedy bootstraps.
    std::vector<Eigen::MatrixXd> x_next_actions;

    [[nodiscard]] Eigen::Index size() const noexcept { return x.cols(); }
    [[nodiscard]] TdBatch subset(const std::vector<Eigen::Index>& idx) const;
};

using Encoder = std::function<Eigen::VectorXd(const Eigen::VectorXd& s, int a, const Eigen::VectorXd& z)>;

/// [one-hot state (N + 1), one-hot action (2), z]
Encoder chain_encoder(const ChainMdp& mdp);
int chain_input_dim(const ChainMdp& mdp);

/// Terminal successors are encoded with action 0 and zero bootstrap weight.
/// With n_actions > 0 every successor action is encoded as well.
TdBatch make_td_batch(const Dataset& ds, const Encoder& enc, int n_actions = 0);

struct StepResult {
    double loss = 0.0;
    double residual_inf = 0.0;
};

/// One gradient step on 1/(2N) sum (gamma_i f(x'_i; bootstrap) + r_i - f(x_i; params))^2,
/// differentiating only through f(x_i). `rewards` is n_outputs x N.
StepResult td_step(const FunctionModel& model, Eigen::VectorXd& params, const TdBatch& batch,
                   const Eigen::MatrixXd& rewards, const Eigen::VectorXd& bootstrap_params, const TrainConfig& cfg);

/// Gradient of the semi-gradient TD loss at `params` (same convention as td_step).
Eigen::VectorXd td_gradient(const FunctionModel& model, const Eigen::VectorXd& params, const TdBatch& batch,
                            const Eigen::MatrixXd& rewards, const Eigen::VectorXd& bootstrap_params, double gamma,
                            StepResult* info = nullptr);

/// One gradient step of squared-error regression of f(x) onto `targets`.
StepResult regression_step(const FunctionModel& model, Eigen::VectorXd& params, const Eigen::MatrixXd& x,
                           const Eigen::MatrixXd& targets, double learning_rate);

struct TrainResult {
    long steps = 0;
    double final_loss = 0.0;
    double residual_inf = 0.0;
    bool converged = false;
    bool diverged = false;
    std::string message;
};

/// Semi-gradient TD on fixed rewards (n_outputs x N). Throws DivergenceError
/// when the loss exceeds cfg.divergence_threshold or becomes non-finite.
TrainResult td_train(const FunctionModel& model, Eigen::VectorXd& params, const TdBatch& batch,
                     const Eigen::MatrixXd& rewards, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// UVU

struct UvuModel {
    std::shared_ptr<const FunctionModel> net;  // shared architecture of u and g
    ParamVector online;                        // vartheta
    ParamVector target;                        // psi, frozen
    double gamma = 0.9;

    [[nodiscard]] int n_heads() const { return net->n_outputs(); }
};

/// Independent draws for the online and target parameters.
UvuModel make_uvu_model(std::shared_ptr<const FunctionModel> net, double gamma, std::uint64_t seed);

/// r_g = g(x) - gamma_i g(x'), one row per head.
Eigen::MatrixXd uvu_synthetic_rewards(const UvuModel& model, const TdBatch& batch);

/// TD on the synthetic rewards; cfg.discount must equal model.gamma.
TrainResult uvu_train(UvuModel& model, const TdBatch& batch, const TrainConfig& cfg);

struct UvuErrors {
    Eigen::VectorXd per_head_sq;  // eps_i^2
    double half_mean_sq = 0.0;    // (1 / 2M) sum eps_i^2
};
UvuErrors uvu_error(const UvuModel& model, const Eigen::VectorXd& x);
/// Signed errors u - g, heads x batch.
Eigen::MatrixXd uvu_signed_errors(const UvuModel& model, const Eigen::MatrixXd& xs);
/// (1 / 2M) sum eps_i^2 per column.
Eigen::VectorXd uvu_uncertainty(const UvuModel& model, const Eigen::MatrixXd& xs);

/// Q(x) + eps_k(x): the k-th optimistic Q used for independent bootstrapping.
double uvu_bootstrap_q(const UvuModel& model, const FunctionModel& q_net, const Eigen::VectorXd& q_params,
                       const Eigen::VectorXd& x, int head);

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleModel {
    std::shared_ptr<const FunctionModel> net;
    std::vector<ParamVector> members;  // theta_k
    std::vector<ParamVector> priors;   // frozen psi_k; empty without priors
    double prior_scale = 0.0;

    [[nodiscard]] int size() const { return static_cast<int>(members.size()); }
    /// f(x; theta_k) + prior_scale f(x; psi_k), head 0, as a row vector over xs.
    [[nodiscard]] Eigen::RowVectorXd member_output(int k, const Eigen::MatrixXd& xs) const;
    /// K x batch
    [[nodiscard]] Eigen::MatrixXd outputs(const Eigen::MatrixXd& xs) const;
    /// Unbiased sample variance over members per column.
    [[nodiscard]] Eigen::VectorXd variance(const Eigen::MatrixXd& xs) const;
};

/// K members from independent seeds; prior_scale > 0 adds a frozen prior per member.
EnsembleModel make_ensemble(std::shared_ptr<const FunctionModel> net, int k, std::uint64_t seed,
                            double prior_scale = 0.0);
/// Members with explicitly chosen seeds (identical seeds give identical members).
EnsembleModel make_ensemble(std::shared_ptr<const FunctionModel> net, const std::vector<std::uint64_t>& member_seeds,
                            double prior_scale = 0.0);

/// Trains each member with TD on the batch rewards. With independent_bootstrap
/// member k bootstraps from its own greedy action over batch.x_next_actions.
/// A member that diverges is reported in its TrainResult instead of throwing.
std::vector<TrainResult> ensemble_train(EnsembleModel& ens, const TdBatch& batch, const TrainConfig& cfg,
                                        bool independent_bootstrap = false);

// ---------------------------------------------------------------------------
// RND

struct RndModel {
    std::shared_ptr<const FunctionModel> net;
    ParamVector predictor;
    ParamVector target;  // frozen
    /// Intrinsic Q-function for propagated novelty (optional).
    std::shared_ptr<const FunctionModel> q_net;
    ParamVector intrinsic_q;
    bool intrinsic_prior = false;  // forward pass adds eps_rnd^2 / 2
};

RndModel make_rnd_model(std::shared_ptr<const FunctionModel> net, std::uint64_t seed);

/// Regression of the predictor onto the frozen target at the batch inputs.
/// Uses the same step sequence as uvu_train, so at gamma = 0 the two agree exactly.
TrainResult rnd_train(RndModel& model, const TdBatch& batch, const TrainConfig& cfg);
/// eps_rnd^2 / 2 averaged over heads.
double rnd_error(const RndModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd rnd_errors(const RndModel& model, const Eigen::MatrixXd& xs);

/// Trains an intrinsic Q on rewards eps_rnd^2 / 2 with TD. With `prior` the
/// intrinsic Q used in the forward pass is Q_intr + eps_rnd^2 / 2.
TrainResult rnd_prior_train(RndModel& model, std::shared_ptr<const FunctionModel> q_net, const TdBatch& batch,
                            const TrainConfig& cfg, bool prior = true);
/// Intrinsic value used as the uncertainty signal.
Eigen::VectorXd intrinsic_q(const RndModel& model, const Eigen::MatrixXd& xs);

}  // namespace uvu
